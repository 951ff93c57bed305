"""Elicitation tools for the number of borrowed historical subjects.

The count of historical subjects assigned to the shared component has a
beta-binomial distribution a priori when the first mixture weight carries a
beta prior, and a quadrature-friendly integral form for any other prior.
These helpers compute that distribution, answer interval queries against it,
solve for hyperparameters that match a target interval, and summarize the
posterior version from sampler output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import betaln, gammaln, xlogy

from .core import DrawsMatrix, NumericalError, ValidationError


@dataclass(frozen=True)
class SscPmf:
    """Distribution of the borrowed-subject count over ``{0..n0}``."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size < 1:
            raise ValidationError("probs must be a nonempty vector")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-10:
            raise ValidationError("probs must be nonnegative and sum to 1 within 1e-10")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def n0(self) -> int:
        return int(self.probs.size - 1)

    @property
    def mean(self) -> float:
        return float(np.arange(self.probs.size) @ self.probs)

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probs)


def ssc_prior_pmf_beta(n0: int, delta01: float, delta02: float) -> SscPmf:
    """Beta-binomial pmf of the borrowed count under a Beta(delta01, delta02) weight prior."""
    if n0 < 1:
        raise ValidationError("n0 must be >= 1")
    if not (delta01 > 0 and delta02 > 0):
        raise ValidationError("beta shape parameters must be positive")
    j = np.arange(n0 + 1)
    logpmf = (
        gammaln(n0 + 1)
        - gammaln(j + 1)
        - gammaln(n0 - j + 1)
        + betaln(j + delta01, n0 - j + delta02)
        - betaln(delta01, delta02)
    )
    probs = np.exp(logpmf - logpmf.max())
    return SscPmf(probs / probs.sum())


def ssc_prior_pmf_numeric(
    n0: int, log_prior_gamma1, rel_tol: float = 1e-8
) -> SscPmf:
    """Borrowed-count pmf under an arbitrary (possibly unnormalized) weight prior.

    ``log_prior_gamma1`` is the log prior density on (0, 1).  Each mass point
    is an adaptive quadrature of the binomial likelihood against the prior;
    the pmf is normalized afterwards, so the prior itself need not be.
    """
    if n0 < 1:
        raise ValidationError("n0 must be >= 1")
    j_all = np.arange(n0 + 1)
    log_choose = gammaln(n0 + 1) - gammaln(j_all + 1) - gammaln(n0 - j_all + 1)

    # probe the full log integrand so badly scaled priors integrate safely
    probe = np.linspace(0.0, 1.0, 513)[1:-1]
    probe_prior = np.array([log_prior_gamma1(g) for g in probe])
    if not np.any(np.isfinite(probe_prior)):
        raise NumericalError("prior has no mass on (0, 1)")

    log_masses = np.full(n0 + 1, -np.inf)
    for j in range(n0 + 1):
        shift = np.max(xlogy(j, probe) + xlogy(n0 - j, 1.0 - probe) + probe_prior)
        if not np.isfinite(shift):
            continue

        def integrand(g, j=j, shift=shift):
            logval = xlogy(j, g) + xlogy(n0 - j, 1.0 - g) + log_prior_gamma1(g)
            return np.exp(logval - shift)

        val, err = integrate.quad(
            integrand, 0.0, 1.0, epsabs=1e-14, epsrel=rel_tol, limit=400
        )
        if not np.isfinite(val) or (val > 0 and err > 1e-6 * val + 1e-12):
            raise NumericalError(
                f"quadrature for mass point {j} did not converge "
                f"(value {val:.3e}, error estimate {err:.3e})"
            )
        if val > 0:
            log_masses[j] = shift + np.log(val)
    log_probs = log_masses + log_choose
    top = log_probs.max()
    if top == -np.inf:
        raise NumericalError("prior has no mass on (0, 1)")
    probs = np.exp(log_probs - top)
    return SscPmf(probs / probs.sum())


def ssc_interval(pmf: SscPmf, mass: float) -> tuple:
    """Smallest central (equal-tail) interval holding at least ``mass``.

    The lower end is the largest count whose left tail (exclusive) stays
    within half the complement; the upper end is the smallest count whose
    cumulative probability reaches the complementary quantile.
    """
    if not (0.0 < mass < 1.0):
        raise ValidationError("mass must lie in (0, 1)")
    tail = (1.0 - mass) / 2.0
    cdf = pmf.cdf()
    low = 0
    for q in range(pmf.n0, -1, -1):
        left = cdf[q - 1] if q >= 1 else 0.0
        if left <= tail + 1e-12:
            low = q
            break
    high = pmf.n0
    for q in range(pmf.n0 + 1):
        if cdf[q] >= 1.0 - tail - 1e-12:
            high = q
            break
    return (low, high)


def solve_beta_hyperparams(
    n0: int,
    target_low: int,
    target_high: int,
    mass: float = 0.95,
    max_steps: int = 200,
) -> dict:
    """Beta shapes whose borrowed-count interval best matches a target.

    The quantile objective is integer valued and piecewise constant, so this
    uses a log-scale grid followed by coordinate refinement instead of a
    smooth root finder.  Success means the achieved interval endpoints are
    within one count of the target; otherwise the best grid point found is
    returned flagged ``attained=False``.
    """
    if not (0 <= target_low <= target_high <= n0):
        raise ValidationError("need 0 <= target_low <= target_high <= n0")

    def objective(d1, d2):
        lo, hi = ssc_interval(ssc_prior_pmf_beta(n0, d1, d2), mass)
        return (lo - target_low) ** 2 + (hi - target_high) ** 2, (lo, hi)

    seeds = []
    # moment-matched seed: center fixes the mean fraction, width the spread
    center = (target_low + target_high) / 2.0
    frac = min(max(center / n0, 1.0 / (2 * n0)), 1.0 - 1.0 / (2 * n0))
    width = max(target_high - target_low, 1.0)
    var = (width / 3.92) ** 2
    binom_var = n0 * frac * (1 - frac)
    if var > binom_var > 0:
        strength = max((n0 * binom_var - var) / (var - binom_var), 0.05)
        seeds.append((frac * strength, (1 - frac) * strength))

    grid = np.logspace(-2, 3, 26)
    best = None
    for d1 in grid:
        for d2 in grid:
            val, ach = objective(d1, d2)
            if best is None or val < best[0]:
                best = (val, d1, d2, ach)
    for d1, d2 in seeds:
        val, ach = objective(d1, d2)
        if val < best[0]:
            best = (val, d1, d2, ach)

    val, d1, d2, ach = best
    # local log-scale grid refinement with shrinking span; the objective is
    # integer valued and piecewise constant, so smooth root finding is out
    steps = 0
    span = 4.0
    while steps < max_steps and val > 0 and span > 1.01:
        mults = np.exp(np.linspace(-np.log(span), np.log(span), 7))
        for m1 in mults:
            for m2 in mults:
                if m1 == 1.0 and m2 == 1.0:
                    continue
                v, a = objective(d1 * m1, d2 * m2)
                steps += 1
                if v < val:
                    val, d1, d2, ach = v, d1 * m1, d2 * m2, a
        span = np.sqrt(span)

    attained = abs(ach[0] - target_low) <= 1 and abs(ach[1] - target_high) <= 1
    return {
        "delta01": float(d1),
        "delta02": float(d2),
        "achieved": ach,
        "attained": bool(attained),
        "objective": float(val),
    }


def truncation_bound(n_current: int, n0: int) -> float:
    """Upper truncation bound keeping the historical share at most the current size."""
    if n_current < 1 or n0 < 1:
        raise ValidationError("sample sizes must be >= 1")
    return min(n_current / n0, 1.0)


def posterior_ssc_summary(draws: DrawsMatrix) -> tuple:
    """Empirical pmf and mean of the borrowed count across retained draws."""
    if draws.n_draws == 0:
        raise ValidationError("no retained draws")
    if not draws.has_column("n0_1"):
        raise ValidationError("draws carry no class-count column n0_1")
    n01 = draws.column("n0_1").astype(int)
    n0 = int(draws.meta.get("n0", n01.max()))
    counts = np.bincount(n01, minlength=n0 + 1).astype(float)
    return SscPmf(counts / counts.sum()), float(n01.mean())
