"""Tuning, uncertainty, and sensitivity diagnostics around the fit.

Three tools live here:

* ``tune_c`` picks the weighting constant by simulation: refit at each
  candidate c, simulate from the fitted model at the data's counting
  resolution, and compare marginals with a truncated two-sample KS test
  (truncation at the observed 95th percentile keeps the comparison away
  from the upper tail that outliers own).
* ``bootstrap_se`` is a parametric bootstrap at the fitted model and
  the observed multinomial totals.
* ``influence`` evaluates the estimator's influence function at
  arbitrary points (boundary included), from the sensitivity matrix of
  the weighted estimating equations.  With c > 0 the weight decays the
  score contribution, which is what bounds the influence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial
from itertools import combinations

import numpy as np
import scipy.linalg
import scipy.stats

from ._parallel import parallel_map
from .errors import (
    InsufficientDataError,
    BootstrapDegradedError,
    RPPIError,
    SingularGError,
)
from .model import (
    CountDataset,
    ParamVector,
    RPPIParams,
    as_matrix,
    pack,
    param_labels,
    proportions,
    q_dim,
)
from .robust import RobustConfig, RobustFitResult, fit_robust, kk_mask
from .sampling import round_proportions, sample_counts, sample_rppi, spawn_seeds
from .suffstats import r_matrix_batch, s_matrix_batch, suff_t_a_batch

G_COND_MAX = 1e12
_CHUNK = 4096


def ks_truncated(observed, simulated, quantile: float = 0.95) -> tuple[float, float]:
    """Two-sample KS statistic and p-value below the observed quantile.

    Both samples are truncated at the ``quantile`` point of the
    *observed* sample, then compared with the asymptotic two-sample
    test.  Raises InsufficientDataError when fewer than two points
    survive on either side.
    """
    a = np.asarray(observed, dtype=float).ravel()
    b = np.asarray(simulated, dtype=float).ravel()
    if a.size < 2 or b.size < 2:
        raise InsufficientDataError("need at least two points per sample")
    cut = np.quantile(a, quantile)
    at = a[a <= cut]
    bt = b[b <= cut]
    if at.size < 2 or bt.size < 2:
        raise InsufficientDataError("truncation left fewer than two points")
    res = scipy.stats.ks_2samp(at, bt, method="asymp")
    return float(res.statistic), float(res.pvalue)


@dataclass(frozen=True)
class TuneEntry:
    """Diagnostics for one candidate tuning constant."""

    c: float
    converged: bool
    error: str | None
    weight_cv: float
    ks_stats: tuple[float, ...]
    ks_pvalues: tuple[float, ...]

    @property
    def min_pvalue(self) -> float:
        return min(self.ks_pvalues) if self.ks_pvalues else float("nan")


@dataclass(frozen=True)
class TuneReport:
    """Grid search results plus the selected tuning constant."""

    grid: tuple[float, ...]
    entries: tuple[TuneEntry, ...]
    recommended_c: float | None
    components: tuple[int, ...]
    alpha: float = 0.05


def parse_grid(spec: str) -> tuple[float, ...]:
    """Parse 'start:stop:step' (inclusive stop) or a comma list."""
    text = spec.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid must be start:stop:step, got {spec!r}")
        start, stop, step = (float(x) for x in parts)
        if step <= 0 or stop < start:
            raise ValueError(f"bad grid range {spec!r}")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(start + k * step for k in range(count))
    return tuple(float(x) for x in text.split(","))


def tune_c(data: CountDataset, grid, kstar: int, sim_size: int = 10_000,
           seed=None, beta_p: float = 0.0, tol: float = 1e-8,
           max_iter: int = 500, quantile: float = 0.95, alpha: float = 0.05,
           components=None) -> TuneReport:
    """Select the weighting constant by simulated marginal agreement.

    For each c: fit, simulate ``sim_size`` compositions from the fitted
    model, snap them to the data's counting grid (totals recycled when
    sim_size exceeds n), and KS-compare each requested component (all
    non-reference ones by default).  Recommended is the smallest c whose
    p-values all clear ``alpha``; if none does, the c with the largest
    worst-case p-value.
    """
    u_obs = proportions(data)
    n, p = u_obs.shape
    candidates = tuple(sorted(float(c) for c in grid))
    if not candidates:
        raise ValueError("empty tuning grid")
    if components is None:
        components = tuple(range(p - 1))
    else:
        components = tuple(int(j) for j in components)
    seeds = spawn_seeds(seed, len(candidates))
    entries = []
    for c, child in zip(candidates, seeds):
        cfg = RobustConfig(c=c, kstar=kstar, tol=tol, max_iter=max_iter)
        try:
            fit = fit_robust(u_obs, cfg, beta_p=beta_p)
            if fit.params is None:
                raise RPPIError("estimate left the parameter space")
            sim, _ = sample_rppi(fit.params, sim_size, seed=child)
            m_cycle = data.m[np.arange(sim_size) % n]
            snapped = round_proportions(sim, m_cycle)
            stats, pvals = [], []
            for j in components:
                stat, pval = ks_truncated(u_obs[:, j], snapped[:, j], quantile)
                stats.append(stat)
                pvals.append(pval)
            entries.append(TuneEntry(
                c=c, converged=True, error=None, weight_cv=fit.weight_cv,
                ks_stats=tuple(stats), ks_pvalues=tuple(pvals),
            ))
        except RPPIError as exc:
            entries.append(TuneEntry(
                c=c, converged=False, error=f"{type(exc).__name__}: {exc}",
                weight_cv=float("nan"), ks_stats=(), ks_pvalues=(),
            ))
    usable = [e for e in entries if e.error is None]
    recommended = None
    if usable:
        passing = [e for e in usable if e.min_pvalue >= alpha]
        if passing:
            recommended = min(passing, key=lambda e: e.c).c
        else:
            recommended = max(usable, key=lambda e: e.min_pvalue).c
    return TuneReport(
        grid=candidates,
        entries=tuple(entries),
        recommended_c=recommended,
        components=components,
        alpha=alpha,
    )


@dataclass(frozen=True)
class BootstrapReport:
    """Parametric bootstrap spread of the packed estimates."""

    b_requested: int
    n_failed: int
    estimates: np.ndarray
    se: np.ndarray
    point: np.ndarray
    ratio: np.ndarray
    labels: tuple[str, ...]

    @property
    def b_used(self) -> int:
        return self.estimates.shape[0]


def _bootstrap_one(seed, params=None, m=None, config=None, beta_p=0.0):
    try:
        counts = sample_counts(params, m, seed=seed)
        refit = fit_robust(proportions(counts), config, beta_p=beta_p)
        return refit.pi_hat.pi
    except RPPIError:
        return None


def bootstrap_se(fit: RobustFitResult, data: CountDataset, b: int = 200,
                 seed=None, threads: int = 1, replicate_seeds=None,
                 max_failure_frac: float = 0.2) -> BootstrapReport:
    """Parametric bootstrap at the fitted model and observed totals.

    Each replicate simulates counts with the data's row totals, refits
    with the same configuration, and contributes one packed estimate.
    Failed replicates are dropped; more than ``max_failure_frac`` of
    them failing raises BootstrapDegradedError with the partial report
    attached.  ``replicate_seeds`` overrides the per-replicate seeds
    (mostly for tests).
    """
    if b < 2:
        raise ValueError("need at least 2 bootstrap replicates")
    if fit.params is None:
        raise ValueError("point estimate is outside the parameter space; "
                         "cannot simulate from it")
    seeds = list(replicate_seeds) if replicate_seeds is not None else spawn_seeds(seed, b)
    if len(seeds) != b:
        raise ValueError(f"expected {b} replicate seeds, got {len(seeds)}")
    worker = partial(_bootstrap_one, params=fit.params, m=np.asarray(data.m),
                     config=fit.config, beta_p=fit.beta_p)
    results = parallel_map(worker, seeds, threads=threads)
    kept = [r for r in results if r is not None]
    n_failed = b - len(kept)
    estimates = np.array(kept) if kept else np.empty((0, fit.pi_hat.q))
    if estimates.shape[0] >= 2:
        se = np.std(estimates, axis=0, ddof=1)
    else:
        se = np.full(fit.pi_hat.q, np.nan)
    point = fit.pi_hat.pi
    ratio = np.divide(point, se, out=np.full_like(point, np.nan), where=se > 0)
    report = BootstrapReport(
        b_requested=b,
        n_failed=n_failed,
        estimates=estimates,
        se=se,
        point=point.copy(),
        ratio=ratio,
        labels=tuple(param_labels(fit.pi_hat.p)),
    )
    if n_failed > max_failure_frac * b:
        raise BootstrapDegradedError(
            f"{n_failed} of {b} bootstrap replicates failed", report=report)
    return report


@dataclass(frozen=True)
class InfluenceResult:
    """Influence function values and the sensitivity matrix behind them."""

    z: np.ndarray
    value: np.ndarray
    g_matrix: np.ndarray
    c: float
    kstar: int
    n_reference: int

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.value)))


def _score_pieces(U: np.ndarray, h: np.ndarray, pi0: np.ndarray, kstar: int,
                  beta_p: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-row (residual e, masked statistic t_a, W1) for influence work."""
    d = U.shape[1] - 1
    R = r_matrix_batch(U)
    S = s_matrix_batch(U)
    w1 = np.einsum("nqj,nrj->nqr", R, R)
    d1 = (1.0 + beta_p) * np.einsum("nqj,nj->nq", R, U[:, :d]) - S.sum(axis=2)
    e = w1 @ (h * pi0) - d1
    ta = suff_t_a_batch(U, kstar)
    return e, ta, w1


def influence(z, pi0, reference, c: float, kstar: int,
              beta_p: float = 0.0) -> InfluenceResult:
    """Influence function of the weighted estimator at point(s) z.

    ``pi0`` is the parameter (packed vector, ParamVector, or RPPIParams)
    at which sensitivity is linearized; ``reference`` is the sample
    whose empirical measure plays the model distribution in the
    expectation.  Boundary points are fine: every ingredient is
    polynomial.  Raises SingularGError when the sensitivity matrix is
    (numerically) singular.
    """
    if isinstance(pi0, RPPIParams):
        pi_vec = pack(pi0).pi
    elif isinstance(pi0, ParamVector):
        pi_vec = pi0.pi
    else:
        pi_vec = np.asarray(pi0, dtype=float)
    ref = as_matrix(reference)
    n, p = ref.shape
    q = q_dim(p)
    if pi_vec.shape != (q,):
        raise ValueError(f"pi0 must have length {q} for p={p}")
    h = np.where(kk_mask(p, kstar), 1.0 + c, 1.0)

    g = np.zeros((q, q))
    for start in range(0, n, _CHUNK):
        block = ref[start:start + _CHUNK]
        e, ta, w1 = _score_pieces(block, h, pi_vec, kstar, beta_p)
        w = np.exp(c * (ta @ pi_vec))
        g += c * np.einsum("n,nq,nr->qr", w, e, ta)
        g += np.einsum("n,nqr->qr", w, w1 * h[None, None, :])
    g /= n
    if not np.all(np.isfinite(g)):
        raise SingularGError("sensitivity matrix has non-finite entries "
                             "(weight exponent overflow?)")

    # two-sided equilibration before factorizing; the raw scales span
    # many orders of magnitude for vertex-concentrated models
    row = np.max(np.abs(g), axis=1)
    if np.any(row == 0.0):
        raise SingularGError("sensitivity matrix has a zero row")
    dr = 1.0 / row
    g1 = g * dr[:, None]
    col = np.max(np.abs(g1), axis=0)
    if np.any(col == 0.0):
        raise SingularGError("sensitivity matrix has a zero column")
    dc = 1.0 / col
    g_eq = g1 * dc[None, :]
    cond = float(np.linalg.cond(g_eq))
    if not np.isfinite(cond) or cond > G_COND_MAX:
        raise SingularGError(f"sensitivity matrix condition {cond:.3e} "
                             f"exceeds {G_COND_MAX:.0e}")
    lu, piv = scipy.linalg.lu_factor(g_eq)

    Z = as_matrix(z)
    if Z.shape[1] != p:
        raise ValueError("z dimension does not match the reference sample")
    values = np.empty((Z.shape[0], q))
    for start in range(0, Z.shape[0], _CHUNK):
        block = Z[start:start + _CHUNK]
        e, ta, _ = _score_pieces(block, h, pi_vec, kstar, beta_p)
        wz = np.exp(c * (ta @ pi_vec))
        rhs = (wz[:, None] * e) * dr[None, :]
        sol = scipy.linalg.lu_solve((lu, piv), rhs.T)
        values[start:start + _CHUNK] = -(dc[:, None] * sol).T
    return InfluenceResult(
        z=Z, value=values, g_matrix=g, c=float(c), kstar=int(kstar),
        n_reference=n,
    )


def simplex_grid(p: int, resolution: int) -> np.ndarray:
    """All compositions with entries k/resolution; includes the boundary.

    Returns an array with C(resolution + p - 1, p - 1) rows.
    """
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    total = math.comb(resolution + p - 1, p - 1)
    out = np.empty((total, p))
    for row, bars in enumerate(combinations(range(resolution + p - 1), p - 1)):
        edges = (-1,) + bars + (resolution + p - 1,)
        out[row] = [edges[i + 1] - edges[i] - 1 for i in range(p)]
    return out / resolution
