"""Sufficient statistics and their log-ratio derivatives.

The model is an exponential family in the packed parameter vector pi,
with sufficient statistic

    t(u) = (u_1^2, ..., u_{p-1}^2,
            2 u_1 u_2, 2 u_1 u_3, ..., 2 u_{p-2} u_{p-1},
            log u_1, ..., log u_{p-1}),

so that pi' t(u) = u_L' A_L u_L + sum_j (1 + beta_j) log u_j.

Score matching under the additive log-ratio chart y = alr(u) needs the
first and second partial derivatives of t with respect to each y_j.
Using du_i/dy_j = u_i (delta_ij - u_j), both collapse to short closed
forms in u.  ``r_matrix`` stacks the gradients (one column per y_j) and
``s_matrix`` the pure second derivatives; all entries are polynomials
in u, so both stay finite on the closed simplex (zeros included).

Per observation the estimating equations use

    W1(u) = sum_j R[:, j] R[:, j]'      (q x q, positive semidefinite)
    d1(u) = (1 + beta_p) R u_L - sum_j S[:, j],

which :func:`score_blocks` returns; averaging them over data is the
estimator's job.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ZeroComponentError
from .model import as_matrix, pair_indices, q_dim


@lru_cache(maxsize=None)
def _pair_arrays(p: int) -> tuple[np.ndarray, np.ndarray]:
    pairs = pair_indices(p)
    i = np.array([a for a, _ in pairs], dtype=np.intp)
    j = np.array([b for _, b in pairs], dtype=np.intp)
    return i, j


def suff_t_batch(U) -> np.ndarray:
    """Sufficient statistic vectors, shape (n, q).  Needs interior points."""
    U = as_matrix(U)
    if np.any(U[:, :-1] <= 0.0):
        raise ZeroComponentError("log statistics need strictly positive components")
    d = U.shape[1] - 1
    I, J = _pair_arrays(U.shape[1])
    V = U[:, :d]
    return np.concatenate([V * V, 2.0 * V[:, I] * V[:, J], np.log(V)], axis=1)


def suff_t(u) -> np.ndarray:
    """Sufficient statistic of a single composition, shape (q,)."""
    return suff_t_batch(u)[0]


def suff_t_a_batch(U, kstar: int) -> np.ndarray:
    """Polynomial part of t restricted to the leading K block, shape (n, q).

    Log entries are zeroed, and so are the quadratic entries that touch
    any component outside the first ``kstar``, leaving exactly
    t_a(u)' pi = u_K' A_KK u_K.  Being a polynomial, this is defined on
    the whole closed simplex.
    """
    U = as_matrix(U)
    n, p = U.shape
    d = p - 1
    if not 1 <= kstar <= d:
        raise ValueError(f"kstar must be in [1, {d}], got {kstar}")
    I, J = _pair_arrays(p)
    V = U[:, :d]
    quad_diag = np.where(np.arange(d) < kstar, V * V, 0.0)
    quad_off = np.where(J < kstar, 2.0 * V[:, I] * V[:, J], 0.0)
    return np.concatenate([quad_diag, quad_off, np.zeros((n, d))], axis=1)


def suff_t_a(u, kstar: int) -> np.ndarray:
    return suff_t_a_batch(u, kstar)[0]


def r_matrix_batch(U) -> np.ndarray:
    """First log-ratio derivatives of t: shape (n, q, p-1).

    Row blocks follow the packed layout.  With delta the Kronecker
    symbol against the column index:

        diagonal a_ii rows:   2 u_i^2 (delta_i. - u_.)
        pair a_ij rows:       2 u_i u_j (delta_i. + delta_j. - 2 u_.)
        log rows:             delta_i. - u_.
    """
    U = as_matrix(U)
    n, p = U.shape
    d = p - 1
    I, J = _pair_arrays(p)
    V = U[:, :d]
    eye = np.eye(d)
    d_diag = eye[None, :, :] - V[:, None, :]
    d_pair = (eye[I] + eye[J])[None, :, :] - 2.0 * V[:, None, :]
    P = V[:, I] * V[:, J]
    r_a = 2.0 * (V * V)[:, :, None] * d_diag
    r_b = 2.0 * P[:, :, None] * d_pair
    r_c = np.broadcast_to(d_diag, (n, d, d))
    return np.concatenate([r_a, r_b, r_c], axis=1)


def s_matrix_batch(U) -> np.ndarray:
    """Second log-ratio derivatives of t: shape (n, q, p-1).

    Per block, with delta the Kronecker symbol against the column index:

        diagonal a_ii rows: 4 u_i^2 (delta_i. - u_.)^2 - 2 u_i^2 u_.(1 - u_.)
        pair a_ij rows:     2 u_i u_j (delta_i. + delta_j. - 2 u_.)^2
                            - 4 u_i u_j u_.(1 - u_.)
        log rows:           -u_.(1 - u_.)

    The quadratic-in-delta forms expand to the same polynomials case by
    case (column equal to i, equal to j, or neither).
    """
    U = as_matrix(U)
    n, p = U.shape
    d = p - 1
    I, J = _pair_arrays(p)
    V = U[:, :d]
    eye = np.eye(d)
    curv = (V * (1.0 - V))[:, None, :]
    d_diag = eye[None, :, :] - V[:, None, :]
    d_pair = (eye[I] + eye[J])[None, :, :] - 2.0 * V[:, None, :]
    P = V[:, I] * V[:, J]
    s_a = 4.0 * (V * V)[:, :, None] * d_diag ** 2 - 2.0 * (V * V)[:, :, None] * curv
    s_b = 2.0 * P[:, :, None] * d_pair ** 2 - 4.0 * P[:, :, None] * curv
    s_c = np.broadcast_to(-curv, (n, d, d))
    return np.concatenate([s_a, s_b, s_c], axis=1)


def r_matrix(u) -> np.ndarray:
    """R for a single composition, shape (q, p-1)."""
    return r_matrix_batch(u)[0]


def s_matrix(u) -> np.ndarray:
    """S for a single composition, shape (q, p-1)."""
    return s_matrix_batch(u)[0]


@dataclass(frozen=True)
class ScoreBlocks:
    """Per-observation pieces of the score matching normal equations."""

    w1: np.ndarray
    d1: np.ndarray

    @property
    def q(self) -> int:
        return self.d1.size


def score_blocks_batch(U, beta_p: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """W1 and d1 for every row of U: shapes (n, q, q) and (n, q).

    Kept unchunked; the estimator streams over chunks itself when n is
    large.
    """
    U = as_matrix(U)
    d = U.shape[1] - 1
    R = r_matrix_batch(U)
    S = s_matrix_batch(U)
    V = U[:, :d]
    w1 = np.einsum("nqj,nrj->nqr", R, R)
    d1 = (1.0 + beta_p) * np.einsum("nqj,nj->nq", R, V) - S.sum(axis=2)
    return w1, d1


def score_blocks(u, beta_p: float = 0.0) -> ScoreBlocks:
    """Score matching blocks for a single composition."""
    w1, d1 = score_blocks_batch(u, beta_p=beta_p)
    return ScoreBlocks(w1=w1[0], d1=d1[0])


def packed_dim(p: int) -> int:
    """Convenience re-export of the packed parameter dimension."""
    return q_dim(p)
