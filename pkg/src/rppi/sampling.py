"""Exact and approximate samplers for the model, plus data perturbations.

Rejection sampling is exact: proposals come from Dirichlet(beta + 1),
so the target/proposal ratio is exp(u_L' A_L u_L) up to a constant, and
an envelope only needs the maximum M of that quadratic over the closed
unit simplex slice {v >= 0, sum v <= 1}.  The maximum of a quadratic
form over a polytope is attained at a critical point of one of its
faces; enumerating subsets T of active coordinates and solving the
stationarity condition A_TT x proportional to 1 on each sum-one face
gives M exactly (up to roundoff in the small solves), so acceptance
exp(Q - M) never exceeds one.

When the acceptance rate makes rejection impractical, an independence
Metropolis-Hastings chain with the same proposal has acceptance ratio
exp(Q' - Q), which sidesteps the envelope at the price of approximate,
autocorrelated draws.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import DimensionError, LowAcceptanceError
from .model import Composition, CountDataset, RPPIParams, as_matrix

ACCEPT_FLOOR = 1e-6
FEAS_TOL = 1e-9


def rng_from(seed) -> np.random.Generator:
    """Build a Generator from anything reasonable (int, SeedSequence, ...)."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def spawn_seeds(seed, n: int) -> list[np.random.SeedSequence]:
    """n independent child seeds, reproducible for a fixed parent seed."""
    if isinstance(seed, np.random.SeedSequence):
        parent = seed
    else:
        parent = np.random.SeedSequence(seed)
    return parent.spawn(n)


def quad_max_simplex(a_l) -> float:
    """Exact maximum of v' A v over {v >= 0, sum(v) <= 1}.

    Enumerate faces: the origin (value 0), and for every nonempty subset
    T the critical point of the quadratic on the face {sum_T v = 1,
    v_T > 0}, which solves A_TT z = 1 up to scale.  Vertices are covered
    by singletons, whose value is the diagonal entry.  Marginally
    infeasible critical points are kept (tolerance on the inclusive
    side), which can only enlarge the envelope, never undercut it.
    """
    a = np.asarray(a_l, dtype=float)
    d = a.shape[0]
    if a.shape != (d, d):
        raise DimensionError(f"interaction matrix must be square, got {a.shape}")
    best = 0.0
    best = max(best, float(np.max(np.diag(a))))
    ones_cache = [np.ones(k) for k in range(d + 1)]
    for size in range(2, d + 1):
        for subset in combinations(range(d), size):
            idx = np.asarray(subset)
            att = a[np.ix_(idx, idx)]
            try:
                z = np.linalg.solve(att, ones_cache[size])
            except np.linalg.LinAlgError:
                continue
            s = z.sum()
            if s == 0.0 or not np.all(np.isfinite(z)):
                continue
            x = z / s
            if np.all(x >= -FEAS_TOL):
                best = max(best, 1.0 / s)
    return best


@dataclass(frozen=True)
class SamplerReport:
    """Bookkeeping from one sampler run."""

    method: str
    n_requested: int
    n_proposals: int
    acceptance_rate: float
    envelope_constant: float


def _quadratic(V: np.ndarray, a_l: np.ndarray) -> np.ndarray:
    return np.einsum("ni,ij,nj->n", V, a_l, V)


def sample_rppi(params: RPPIParams, n: int, seed=None,
                max_proposals: int = 10_000_000) -> tuple[np.ndarray, SamplerReport]:
    """Draw n exact samples by rejection; returns (U, report).

    Raises LowAcceptanceError once ``max_proposals`` proposals have been
    spent at an acceptance rate below 1e-6.
    """
    if n < 1:
        raise DimensionError(f"need n >= 1 draws, got {n}")
    rng = rng_from(seed)
    p = params.p
    d = p - 1
    alpha = params.beta + 1.0
    envelope = quad_max_simplex(params.a_l)
    kept: list[np.ndarray] = []
    n_acc = 0
    n_prop = 0
    batch = int(min(max(1024, 2 * n), 65536))
    while n_acc < n:
        P = rng.dirichlet(alpha, size=batch)
        logq = _quadratic(P[:, :d], params.a_l) - envelope
        accept = np.log(rng.random(batch)) < logq
        accept &= (P > 0.0).all(axis=1)  # keep draws interior
        got = P[accept]
        if got.shape[0]:
            kept.append(got)
            n_acc += got.shape[0]
        n_prop += batch
        if n_prop >= max_proposals and n_acc < n:
            rate = n_acc / n_prop
            if rate < ACCEPT_FLOOR:
                raise LowAcceptanceError(
                    f"acceptance rate {rate:.2e} after {n_prop} proposals; "
                    "consider the MCMC sampler"
                )
        rate_so_far = max(n_acc / n_prop, 1e-8)
        batch = int(np.clip(1.2 * (n - n_acc) / rate_so_far, 1024, 2_000_000))
    U = np.concatenate(kept, axis=0)[:n]
    report = SamplerReport(
        method="rejection",
        n_requested=n,
        n_proposals=n_prop,
        acceptance_rate=n_acc / n_prop,
        envelope_constant=envelope,
    )
    return U, report


def sample_rppi_mcmc(params: RPPIParams, n: int, seed=None, burn_in: int = 10_000,
                     thin: int = 10) -> tuple[np.ndarray, SamplerReport]:
    """Independence Metropolis-Hastings draws; approximate but unstoppable.

    The chain proposes from Dirichlet(beta + 1) and accepts with
    probability min(1, exp(Q(proposal) - Q(current))).  Returns every
    ``thin``-th state after ``burn_in`` steps.
    """
    if n < 1:
        raise DimensionError(f"need n >= 1 draws, got {n}")
    if burn_in < 0 or thin < 1:
        raise ValueError("burn_in must be >= 0 and thin >= 1")
    rng = rng_from(seed)
    d = params.p - 1
    total = burn_in + n * thin
    P = rng.dirichlet(params.beta + 1.0, size=total)
    Q = _quadratic(P[:, :d], params.a_l)
    logu = np.log(rng.random(total))
    out = np.empty(n, dtype=np.intp)
    cur = 0
    accepted = 0
    filled = 0
    for t in range(total):
        if t > 0 and logu[t] < Q[t] - Q[cur]:
            cur = t
            accepted += 1
        if t >= burn_in and (t - burn_in) % thin == 0:
            out[filled] = cur
            filled += 1
    report = SamplerReport(
        method="independence-mh",
        n_requested=n,
        n_proposals=total,
        acceptance_rate=accepted / max(total - 1, 1),
        envelope_constant=float("nan"),
    )
    return P[out].copy(), report


def sample_counts(params: RPPIParams, m, seed=None, n: int | None = None) -> CountDataset:
    """Latent compositions by rejection, then multinomial counts.

    ``m`` is either a vector of per-row totals or a scalar total (then
    ``n`` must say how many rows).
    """
    m_arr = np.asarray(m)
    if m_arr.ndim == 0:
        if n is None:
            raise DimensionError("scalar m needs an explicit n")
        m_arr = np.full(n, int(m_arr))
    if m_arr.ndim != 1:
        raise DimensionError(f"m must be a vector of totals, got shape {m_arr.shape}")
    if np.any(m_arr < 1):
        raise ValueError("multinomial totals must be >= 1")
    m_arr = m_arr.astype(np.int64)
    latent_seed, count_seed = spawn_seeds(seed, 2)
    U, _ = sample_rppi(params, m_arr.size, seed=latent_seed)
    rng = rng_from(count_seed)
    x = rng.multinomial(m_arr, U)
    return CountDataset(x=x)


def round_proportions(u, m) -> np.ndarray:
    """Snap proportions onto the grid of multiples of 1/m.

    Mimics what observing u through m multinomial trials does to the
    resolution of the data.  The result is a plain array: rows usually
    miss exact sum one by O(p/m), and deliberately stay unnormalized so
    the marginal distortion matches the rounding model.  Ties round
    half-to-even.
    """
    arr = u.u if isinstance(u, Composition) else np.asarray(u, dtype=float)
    m_arr = np.asarray(m, dtype=float)
    if arr.ndim == 2 and m_arr.ndim == 1:
        m_arr = m_arr[:, None]
    if np.any(m_arr < 1):
        raise ValueError("resolution m must be >= 1")
    return np.rint(arr * m_arr) / m_arr


def contaminate(data, fraction: float, outlier, seed=None) -> np.ndarray:
    """Replace round(fraction * n) randomly chosen rows by ``outlier``."""
    U = as_matrix(data)
    n = U.shape[0]
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    z = Composition(np.asarray(outlier, dtype=float)).u
    if z.size != U.shape[1]:
        raise DimensionError("outlier length does not match the data")
    k = int(np.rint(fraction * n))
    out = U.copy()
    if k:
        idx = rng_from(seed).choice(n, size=k, replace=False)
        out[idx] = z
    return out
