import numpy as np
import pytest

from rppi.errors import DegenerateRowError, DimensionError, ZeroComponentError
from rppi.model import (
    Composition,
    CountDataset,
    ParamVector,
    RPPIParams,
    alr,
    alr_inverse,
    as_matrix,
    dim_from_q,
    pack,
    pair_indices,
    param_labels,
    proportions,
    q_dim,
    unpack,
)


def random_params(rng, p):
    d = p - 1
    B = rng.normal(size=(d, d))
    a_l = (B + B.T) / 2.0
    beta = np.append(rng.uniform(-0.9, 1.0, size=d), 0.0)
    return RPPIParams(a_l=a_l, beta=beta)


def test_q_dim_round_trip():
    for p in range(3, 12):
        assert dim_from_q(q_dim(p)) == p


def test_dim_from_q_rejects_lengths_that_fit_no_p():
    for bad in (1, 2, 3, 4, 6, 7, 8, 10, 13):
        with pytest.raises(DimensionError):
            dim_from_q(bad)


def test_pair_indices_are_lexicographic():
    assert pair_indices(4) == [(0, 1), (0, 2), (1, 2)]
    assert pair_indices(5) == [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]


def test_param_labels_order_matches_packing():
    labels = param_labels(4)
    assert labels == [
        "a_11", "a_22", "a_33",
        "a_12", "a_13", "a_23",
        "beta_1", "beta_2", "beta_3",
    ]
    assert len(param_labels(5)) == q_dim(5)


def test_pack_unpack_round_trip():
    rng = np.random.default_rng(42)
    for p in (3, 4, 5, 6):
        params = random_params(rng, p)
        back = unpack(pack(params).pi, kstar=params.kstar)
        assert np.allclose(back.a_l, params.a_l)
        assert np.allclose(back.beta, params.beta)
        assert back.kstar == params.kstar


def test_unpack_rejects_nonintegrable_vector():
    pi = pack(random_params(np.random.default_rng(0), 3)).pi.copy()
    pi[-1] = -0.25  # 1 + beta_2 <= 0
    with pytest.raises(ValueError):
        unpack(pi)


def test_alr_round_trip_and_stability():
    rng = np.random.default_rng(7)
    for p in (3, 5):
        u = rng.dirichlet(np.full(p, 2.0))
        assert np.allclose(alr_inverse(alr(u)), u)
    # large coordinates must not overflow on the way back
    y = np.array([700.0, -700.0, 350.0])
    u = alr_inverse(y)
    assert np.all(np.isfinite(u)) and abs(u.sum() - 1.0) < 1e-12


def test_alr_rejects_zero_components():
    with pytest.raises(ZeroComponentError):
        alr([0.5, 0.5, 0.0])


def test_composition_renormalizes_and_is_read_only():
    comp = Composition([2.0, 1.0, 1.0])
    assert abs(np.asarray(comp).sum() - 1.0) < 1e-12
    with pytest.raises(ValueError):
        np.asarray(comp)[0] = 0.3


def test_composition_rejects_negatives_and_short_vectors():
    with pytest.raises(ValueError):
        Composition([0.7, 0.5, -0.2])
    with pytest.raises(DimensionError):
        Composition([0.5, 0.5])


def test_as_matrix_accepts_rows_and_normalizes():
    M = as_matrix([[1.0, 1.0, 2.0], [3.0, 1.0, 0.0]])
    assert M.shape == (2, 3)
    assert np.allclose(M.sum(axis=1), 1.0)
    single = as_matrix(Composition([0.2, 0.3, 0.5]))
    assert single.shape == (1, 3)


def test_as_matrix_rejects_bad_shapes():
    with pytest.raises(DimensionError):
        as_matrix(np.ones((2, 2)))
    with pytest.raises(ValueError):
        as_matrix([[0.5, 0.7, -0.2]])


def test_count_dataset_basics():
    data = CountDataset([[3, 0, 7], [1, 1, 0]])
    assert data.n == 2 and data.p == 3
    assert np.array_equal(data.m, [10, 2])
    U = proportions(data)
    assert np.allclose(U.sum(axis=1), 1.0)
    assert U[0, 1] == 0.0


def test_count_dataset_rejects_empty_rows():
    with pytest.raises(DegenerateRowError):
        CountDataset([[1, 2, 3], [0, 0, 0]])


def test_params_symmetrize_within_tolerance_only():
    a = np.array([[-1.0, 0.5 + 1e-14], [0.5, -2.0]])
    params = RPPIParams(a_l=a, beta=[0.0, 0.0, 0.0])
    assert params.a_l[0, 1] == params.a_l[1, 0]
    skewed = np.array([[-1.0, 0.9], [0.1, -2.0]])
    with pytest.raises(ValueError):
        RPPIParams(a_l=skewed, beta=[0.0, 0.0, 0.0])


def test_params_validate_beta_and_kstar():
    with pytest.raises(ValueError):
        RPPIParams(a_l=np.eye(2), beta=[-1.0, 0.0, 0.0])
    params = RPPIParams(a_l=np.eye(2), beta=[0.1, 0.2, 0.0])
    assert params.kstar == params.p - 1  # defaults to the whole L block
    with pytest.raises(DimensionError):
        RPPIParams(a_l=np.eye(2), beta=[0.1, 0.2, 0.0], kstar=5)


def test_params_block_views():
    rng = np.random.default_rng(3)
    params = RPPIParams(a_l=random_params(rng, 5).a_l,
                        beta=[0.0, 0.0, 0.0, 0.0, 0.0], kstar=2)
    assert params.a_kk.shape == (2, 2)
    assert params.a_rr.shape == (2, 2)
    assert params.a_kr.shape == (2, 2)
    assert np.allclose(params.a_kk, params.a_l[:2, :2])


def test_param_vector_validation():
    with pytest.raises(DimensionError):
        ParamVector(np.zeros(6))  # no p gives q=6
    with pytest.raises(ValueError):
        ParamVector(np.full(5, np.nan))
    vec = ParamVector(np.arange(5.0))
    assert vec.p == 3 and vec.q == 5
    assert vec.labels == param_labels(3)
