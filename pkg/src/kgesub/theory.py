"""Numerical validation of the weighted-loss construction on closed-form cases.

On a small discrete distribution everything in the training objective can
be summed exactly, which pins down two facts the estimator relies on:

  * the sampled loss is a Monte-Carlo estimate of the exact expected loss,
    with error shrinking like 1 / sqrt(samples), on both the pair-sampling
    axis and the negative-sampling axis;
  * reweighting the observed distribution by A(x,y) = true(x,y)/observed(x,y)
    and B(x) = true(x)/observed(x) reproduces, exactly, the unweighted
    expected loss under the true distribution.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .loss import softplus

SLOPE_BAND = (-0.65, -0.35)  # acceptable log-log error slope for 1/sqrt(n) decay


@dataclass(frozen=True)
class SyntheticDistribution:
    """Discrete (x, y) world small enough for exact summation.

    ``observed`` is the per-cell table emulating the empirical pair
    distribution, ``true`` the underlying one behind it, ``noise`` the
    conditional rows the corruptions are drawn from.
    """

    observed: np.ndarray  # (nx, ny), sums to 1
    true: np.ndarray  # (nx, ny), sums to 1
    noise: np.ndarray  # (nx, ny), each row sums to 1

    def __post_init__(self):
        for name in ("observed", "true", "noise"):
            table = np.asarray(getattr(self, name), dtype=np.float64)
            object.__setattr__(self, name, table)
            if table.shape != self.observed.shape or table.ndim != 2:
                raise ValueError("all tables must share one 2-d shape")
            if np.any(table < 0) or not np.all(np.isfinite(table)):
                raise ValueError(f"{name} table must be finite and non-negative")
        if abs(self.observed.sum() - 1.0) > 1e-12 or abs(self.true.sum() - 1.0) > 1e-12:
            raise ValueError("joint tables must sum to 1 within 1e-12")
        if np.max(np.abs(self.noise.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("noise rows must sum to 1 within 1e-12")

    @property
    def nx(self) -> int:
        return self.observed.shape[0]

    @property
    def ny(self) -> int:
        return self.observed.shape[1]

    @property
    def observed_marginal(self) -> np.ndarray:
        return self.observed.sum(axis=1)

    @property
    def true_marginal(self) -> np.ndarray:
        return self.true.sum(axis=1)

    @staticmethod
    def random(nx: int, ny: int, seed=0) -> "SyntheticDistribution":
        """Random strictly-positive tables (gamma draws, normalized)."""
        rng = np.random.default_rng(seed)

        def joint():
            g = rng.gamma(1.0, 1.0, size=(nx, ny)) + 1e-3
            return g / g.sum()

        observed = joint()
        true = joint()
        noise = rng.gamma(1.0, 1.0, size=(nx, ny)) + 1e-3
        noise = noise / noise.sum(axis=1, keepdims=True)
        return SyntheticDistribution(observed, true, noise)


def _broadcast_weights(dist: SyntheticDistribution, pos_weights, neg_weights):
    a = np.broadcast_to(np.asarray(pos_weights, dtype=np.float64), dist.observed.shape)
    b = np.broadcast_to(np.asarray(neg_weights, dtype=np.float64), (dist.nx,))
    return a, b


def exact_expected_loss(
    dist: SyntheticDistribution,
    scores: np.ndarray,
    gamma: float,
    pos_weights=1.0,
    neg_weights=1.0,
) -> float:
    """Exact double sum of the weighted expected loss over the observed table."""
    s = np.asarray(scores, dtype=np.float64)
    if s.shape != dist.observed.shape:
        raise ValueError("score table must match the distribution support")
    a, b = _broadcast_weights(dist, pos_weights, neg_weights)
    pos = (softplus(-(s + gamma)) * a * dist.observed).sum()
    neg = (dist.observed_marginal * b * (dist.noise * softplus(s + gamma)).sum(axis=1)).sum()
    return float(pos + neg)


def _draw_rows(table_cumsum: np.ndarray, u: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(table_cumsum, u, side="right")
    return np.minimum(idx, table_cumsum.size - 1)


def _draw_conditionals(noise: np.ndarray, xs: np.ndarray, nu: int, rng) -> np.ndarray:
    """Inverse-CDF draws from noise[x] for each sampled x; (len(xs), nu) indices."""
    cdf = np.cumsum(noise, axis=1)
    u = rng.random((xs.size, nu))
    out = np.empty((xs.size, nu), dtype=np.int64)
    for x in np.unique(xs):
        rows = np.nonzero(xs == x)[0]
        idx = np.searchsorted(cdf[x], u[rows], side="right")
        out[rows] = np.minimum(idx, noise.shape[1] - 1)
    return out


def sampled_loss(
    dist: SyntheticDistribution,
    scores: np.ndarray,
    gamma: float,
    pos_weights,
    neg_weights,
    n_samples: int,
    num_negatives: int,
    rng: np.random.Generator,
) -> float:
    """Monte-Carlo estimate: pairs from the observed table, negatives from the noise rows."""
    if n_samples < 1:
        raise ValueError("need at least one sample")
    s = np.asarray(scores, dtype=np.float64)
    a, b = _broadcast_weights(dist, pos_weights, neg_weights)
    flat_cdf = np.cumsum(dist.observed.ravel())
    cells = _draw_rows(flat_cdf, rng.random(n_samples))
    xs, ys = np.divmod(cells, dist.ny)
    neg = _draw_conditionals(dist.noise, xs, num_negatives, rng)
    pos_terms = a[xs, ys] * softplus(-(s[xs, ys] + gamma))
    neg_terms = b[xs] * softplus(s[xs[:, None], neg] + gamma).mean(axis=1)
    return float((pos_terms + neg_terms).mean())


def _inner_sampled_loss(
    dist: SyntheticDistribution,
    scores: np.ndarray,
    gamma: float,
    pos_weights,
    neg_weights,
    num_negatives: int,
    rng: np.random.Generator,
) -> float:
    """Exact outer sums, Monte-Carlo only on the inner corruption average."""
    s = np.asarray(scores, dtype=np.float64)
    a, b = _broadcast_weights(dist, pos_weights, neg_weights)
    pos = (softplus(-(s + gamma)) * a * dist.observed).sum()
    cdf = np.cumsum(dist.noise, axis=1)
    neg = 0.0
    marginal = dist.observed_marginal
    for x in range(dist.nx):
        idx = np.minimum(
            np.searchsorted(cdf[x], rng.random(num_negatives), side="right"), dist.ny - 1
        )
        neg += marginal[x] * b[x] * softplus(s[x, idx] + gamma).mean()
    return float(pos + neg)


@dataclass
class ConvergenceReport:
    axis: str  # "pairs" or "negatives"
    schedule: list[int]
    mean_abs_error: list[float]
    trials: int
    exact: float

    @property
    def slope(self) -> float:
        return float(np.polyfit(np.log(self.schedule), np.log(self.mean_abs_error), 1)[0])

    def within_band(self, band: tuple[float, float] = SLOPE_BAND) -> bool:
        return band[0] <= self.slope <= band[1]

    def to_tsv(self) -> str:
        lines = ["axis\tn\tmean_abs_error"]
        for n, err in zip(self.schedule, self.mean_abs_error):
            lines.append(f"{self.axis}\t{n}\t{err!r}")
        return "\n".join(lines) + "\n"


def convergence_report(
    dist: SyntheticDistribution,
    scores: np.ndarray,
    gamma: float,
    pos_weights,
    neg_weights,
    schedule,
    trials: int = 20,
    num_negatives: int = 4,
    seed: int = 0,
    axis: str = "pairs",
) -> ConvergenceReport:
    """Mean |sampled - exact| at each schedule point, on either sampling axis.

    ``axis="pairs"`` grows the number of sampled pairs (negatives fixed at
    ``num_negatives``); ``axis="negatives"`` grows the per-query corruption
    count with the outer sums exact. Per-trial streams are derived from
    (seed, axis, n, trial), so reports are reproducible and trials are
    independent.
    """
    schedule = [int(n) for n in schedule]
    if len(schedule) < 3:
        raise ValueError("schedule needs at least 3 points to fit a slope")
    if axis not in ("pairs", "negatives"):
        raise ValueError(f"unknown axis {axis!r}")
    exact = exact_expected_loss(dist, scores, gamma, pos_weights, neg_weights)
    axis_code = 0 if axis == "pairs" else 1
    errors = []
    for n in schedule:
        errs = np.empty(trials)
        for trial in range(trials):
            rng = np.random.default_rng((seed, axis_code, n, trial))
            if axis == "pairs":
                est = sampled_loss(
                    dist, scores, gamma, pos_weights, neg_weights, n, num_negatives, rng
                )
            else:
                est = _inner_sampled_loss(dist, scores, gamma, pos_weights, neg_weights, n, rng)
            errs[trial] = abs(est - exact)
        errors.append(float(errs.mean()))
    return ConvergenceReport(axis, schedule, errors, trials, exact)


@dataclass
class RecoveryReport:
    pos_weights: np.ndarray  # recovered A(x, y)
    neg_weights: np.ndarray  # recovered B(x)
    weighted_loss: float  # weighted expected loss under the observed table
    reference_loss: float  # unweighted expected loss under the true table
    abs_difference: float


def weight_recovery_check(
    dist: SyntheticDistribution,
    scores: np.ndarray | None = None,
    gamma: float = 0.0,
    seed: int = 0,
    tol: float = 1e-12,
) -> RecoveryReport:
    """Recover A and B as true/observed ratios and verify the substitution identity.

    The weighted loss under the observed table must equal the unweighted
    loss under the true table; raises if the two differ by more than
    ``tol`` or if a weight is undefined (observed mass 0 where true > 0).
    """
    if scores is None:
        scores = np.random.default_rng((seed, 97)).normal(size=dist.observed.shape)
    if np.any((dist.true > 0) & (dist.observed == 0)):
        raise ValueError("weights undefined: observed table has zero cells where true mass > 0")
    obs_m, true_m = dist.observed_marginal, dist.true_marginal
    if np.any((true_m > 0) & (obs_m == 0)):
        raise ValueError("weights undefined: observed marginal has zeros where true marginal > 0")
    a = np.zeros_like(dist.observed)
    np.divide(dist.true, dist.observed, out=a, where=dist.observed > 0)
    b = np.zeros_like(obs_m)
    np.divide(true_m, obs_m, out=b, where=obs_m > 0)
    weighted = exact_expected_loss(dist, scores, gamma, a, b)
    reference = exact_expected_loss(
        dataclasses.replace(dist, observed=dist.true), scores, gamma
    )
    diff = abs(weighted - reference)
    if diff > tol:
        raise ValueError(f"substitution identity violated: |weighted - reference| = {diff!r} > {tol!r}")
    return RecoveryReport(a, b, weighted, reference, diff)
