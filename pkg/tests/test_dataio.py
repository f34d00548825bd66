import numpy as np
import pytest

from rppi.dataio import (
    SCHEMA_VERSION,
    bootstrap_csv_rows,
    bootstrap_to_dict,
    config_from_dict,
    config_to_dict,
    fit_csv_rows,
    fit_from_dict,
    fit_to_dict,
    params_from_dict,
    params_to_dict,
    read_json,
    read_table,
    rmse_csv_rows,
    rmse_to_dict,
    scenario_from_dict,
    scenario_to_dict,
    tune_csv_rows,
    tune_to_dict,
    write_csv_rows,
    write_json,
    write_table,
)
from rppi.errors import ParseError
from rppi.inference import bootstrap_se, tune_c
from rppi.model import RPPIParams, proportions
from rppi.robust import RobustConfig, fit_robust
from rppi.sampling import sample_counts
from rppi.study import preset_scenario, run_study


TEST_PARAMS = RPPIParams(a_l=[[-2.0, 1.0], [1.0, -1.0]],
                         beta=[-0.3, 0.2, 0.0], kstar=2)


def fixture_counts(seed=71):
    return sample_counts(TEST_PARAMS, 300, n=50, seed=np.random.SeedSequence(seed))


def test_table_round_trip_preserves_floats_exactly(tmp_path):
    rng = np.random.default_rng(72)
    M = rng.dirichlet((1.0, 2.0, 3.0), size=17)
    path = tmp_path / "t.csv"
    write_table(path, M, names=("x", "y", "z"))
    back = read_table(path)
    assert back.names == ("x", "y", "z")
    assert not back.is_counts
    assert np.array_equal(back.matrix, M)


def test_integer_tables_are_recognized_as_counts(tmp_path):
    path = tmp_path / "c.csv"
    write_table(path, np.array([[3, 0, 7], [1, 1, 0]]), names=("a", "b", "c"))
    table = read_table(path)
    assert table.is_counts
    data = table.counts
    assert np.array_equal(data.m, [10, 2])


def test_proportion_tables_refuse_to_become_counts(tmp_path):
    path = tmp_path / "p.csv"
    write_table(path, np.array([[0.5, 0.5, 0.0]]))
    with pytest.raises(ParseError):
        read_table(path).counts


def test_parse_errors_carry_line_numbers(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b,c\n1,2,3\n4,oops,6\n")
    with pytest.raises(ParseError) as err:
        read_table(bad)
    assert err.value.line == 3
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("1,2,3\n4,5\n")
    with pytest.raises(ParseError) as err:
        read_table(ragged)
    assert err.value.line == 2
    empty = tmp_path / "empty.csv"
    empty.write_text("\n")
    with pytest.raises(ParseError):
        read_table(empty)


def test_json_round_trip_and_determinism(tmp_path):
    payload = {"b": [1.0, np.inf, np.nan], "a": np.arange(3),
               "flag": np.bool_(True)}
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    write_json(p1, payload)
    write_json(p2, payload)
    assert p1.read_bytes() == p2.read_bytes()
    back = read_json(p1)
    assert back["b"] == [1.0, None, None]  # non-finite becomes null
    assert back["a"] == [0, 1, 2]
    assert back["flag"] is True
    broken = tmp_path / "broken.json"
    broken.write_text("{nope")
    with pytest.raises(ParseError):
        read_json(broken)


def test_params_dict_round_trip():
    payload = params_to_dict(TEST_PARAMS)
    back = params_from_dict(payload)
    assert np.allclose(back.a_l, TEST_PARAMS.a_l)
    assert np.allclose(back.beta, TEST_PARAMS.beta)
    assert back.kstar == TEST_PARAMS.kstar


def test_config_dict_round_trip():
    cfg = RobustConfig(c=0.7, kstar=3, tol=1e-9, max_iter=321)
    assert config_from_dict(config_to_dict(cfg)) == cfg


def test_fit_dict_round_trip_keeps_the_essentials():
    data = fixture_counts()
    fit = fit_robust(proportions(data), RobustConfig(c=0.5, kstar=2))
    payload = fit_to_dict(fit, invocation={"command": "fit"})
    assert payload["schema_version"] == SCHEMA_VERSION
    assert payload["invocation"] == {"command": "fit"}
    back = fit_from_dict(payload)
    assert np.allclose(back.pi_hat.pi, fit.pi_hat.pi)
    assert back.config == fit.config
    assert back.beta_p == fit.beta_p
    rows = fit_csv_rows(fit)
    assert rows[0][0] == "parameter"
    assert len(rows) == 1 + fit.pi_hat.q


def test_report_payloads_carry_schema_and_tables(tmp_path):
    data = fixture_counts()
    fit = fit_robust(proportions(data), RobustConfig(c=0.0, kstar=2))
    boot = bootstrap_se(fit, data, b=6, seed=np.random.SeedSequence(73))
    payload = bootstrap_to_dict(boot)
    assert payload["schema_version"] == SCHEMA_VERSION
    rows = bootstrap_csv_rows(boot)
    assert len(rows) == 1 + len(boot.labels)

    tune = tune_c(data, (0.0, 0.5), kstar=2, sim_size=800,
                  seed=np.random.SeedSequence(74))
    tpayload = tune_to_dict(tune)
    assert tpayload["schema_version"] == SCHEMA_VERSION
    assert len(tune_csv_rows(tune)) == 1 + len(tune.entries)

    table = run_study(preset_scenario("sim5", replicates=2, cs=(0.0,)))
    spayload = rmse_to_dict(table)
    assert spayload["schema_version"] == SCHEMA_VERSION
    srows = rmse_csv_rows(table)
    assert len(srows) == 1 + len(table.labels) + 1  # header + rows + failures
    out = tmp_path / "table.csv"
    write_csv_rows(out, srows)
    assert out.read_text().count("\n") == len(srows)


def test_scenario_dict_round_trip():
    sc = preset_scenario("sim7", replicates=5, cs=(0.0, 0.5))
    back = scenario_from_dict(scenario_to_dict(sc))
    assert back.name == sc.name
    assert back.n == sc.n and back.replicates == sc.replicates
    assert back.data_mode == sc.data_mode
    assert back.contamination == sc.contamination
    assert np.allclose(back.truth.a_l, sc.truth.a_l)
    assert [c for _, c in back.estimators] == [c for _, c in sc.estimators]
