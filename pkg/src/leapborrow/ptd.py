"""Dirichlet distribution with the first coordinate truncated to an interval.

The density on the simplex is proportional to ``prod(gamma_k ** (alpha_k - 1))``
restricted to ``a < gamma_1 < b``.  The first coordinate is marginally a
truncated beta, the rescaled tail is an ordinary Dirichlet, and the family is
conjugate to multinomial counts, which is everything a blocked Gibbs update
for mixture weights needs.

All beta/gamma functions are evaluated in log space; interval masses use the
regularized incomplete beta function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import betainc, betaln, gammaln, xlogy

from .core import NumericalError, ValidationError

_MASS_FLOOR = 1e-300
_REJECTION_CAP = 1_000_000


@dataclass(frozen=True)
class PtdParams:
    """Concentration vector plus truncation bounds on the first coordinate."""

    alpha: np.ndarray
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float)
        if alpha.ndim != 1 or alpha.size < 2:
            raise ValidationError("alpha must be a vector of length >= 2")
        if np.any(alpha <= 0) or not np.all(np.isfinite(alpha)):
            raise ValidationError("alpha entries must be positive and finite")
        a, b = float(self.a), float(self.b)
        if not (0.0 <= a < b <= 1.0):
            raise ValidationError(f"truncation requires 0 <= a < b <= 1, got ({a}, {b})")
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        if trunc_beta_log_mass(self.alpha1, self.alpha_rest_sum, a, b) == -np.inf:
            raise ValidationError("truncated beta mass vanishes on (a, b)")

    @property
    def K(self) -> int:
        return int(self.alpha.size)

    @property
    def alpha1(self) -> float:
        return float(self.alpha[0])

    @property
    def alpha_rest_sum(self) -> float:
        return float(self.alpha[1:].sum())


def trunc_beta_log_mass(alpha: float, beta: float, a: float, b: float) -> float:
    """``log P(a < Y < b)`` for ``Y ~ Beta(alpha, beta)``; ``-inf`` if empty."""
    mass = betainc(alpha, beta, b) - betainc(alpha, beta, a)
    if mass <= 0.0:
        return -np.inf
    return float(np.log(mass))


def log_beta_interval(alpha: float, beta: float, a: float, b: float) -> float:
    """Log of the unnormalized beta integral over ``(a, b)``.

    This is ``log B(alpha, beta)`` plus the log interval mass; for
    ``(a, b) = (0, 1)`` it reduces to the complete log beta function.
    """
    return float(betaln(alpha, beta)) + trunc_beta_log_mass(alpha, beta, a, b)


def log_multivariate_beta(alpha: np.ndarray) -> float:
    """Log multivariate beta function; 0 for a length-1 vector."""
    if alpha.size <= 1:
        return 0.0
    return float(gammaln(alpha).sum() - gammaln(alpha.sum()))


def log_norm_const(params: PtdParams) -> float:
    """Log normalizing constant of the truncated-Dirichlet kernel.

    Factorizes as the truncated beta integral for the first coordinate times
    the multivariate beta function of the remaining concentrations.
    """
    lm = trunc_beta_log_mass(params.alpha1, params.alpha_rest_sum, params.a, params.b)
    if lm == -np.inf or np.exp(lm) < _MASS_FLOOR:
        raise NumericalError(
            "degenerate truncation: interval mass below "
            f"{_MASS_FLOOR:g} for Beta({params.alpha1}, {params.alpha_rest_sum}) "
            f"on ({params.a}, {params.b})"
        )
    return (
        float(betaln(params.alpha1, params.alpha_rest_sum))
        + lm
        + log_multivariate_beta(params.alpha[1:])
    )


def log_density(params: PtdParams, gamma, tol: float = 1e-10) -> float:
    """Natural-log density at a point on the simplex.

    Returns ``-inf`` outside the truncation region; raises if ``gamma`` is off
    the simplex by more than ``tol``.
    """
    g = np.asarray(gamma, dtype=float)
    if g.shape != (params.K,):
        raise ValidationError(f"gamma must have length {params.K}")
    if abs(g.sum() - 1.0) > tol:
        raise ValidationError(f"gamma sums to {g.sum()!r}, off the simplex beyond {tol:g}")
    if np.any(g < 0):
        raise ValidationError("gamma has negative entries")
    if not (params.a < g[0] < params.b):
        return -np.inf
    with np.errstate(divide="ignore"):
        # xlogy yields the natural +/-inf limits at zero tail coordinates
        kernel = float(np.sum(xlogy(params.alpha - 1.0, g)))
    return kernel - log_norm_const(params)


def marginal_first(params: PtdParams) -> tuple:
    """Truncated-beta parameters ``(alpha1, sum of tail, a, b)`` of the first coordinate."""
    return (params.alpha1, params.alpha_rest_sum, params.a, params.b)


def moment(params: PtdParams, m) -> float:
    """Closed-form mixed moment ``E[prod(Y_k ** m_k)]``.

    Ratio of shifted to unshifted truncated/ordinary beta integrals; the
    zero-exponent case returns exactly 1.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (params.K,):
        raise ValidationError(f"m must have length {params.K}")
    if np.any(m < 0) or np.any(m != np.round(m)):
        raise ValidationError("m entries must be nonnegative integers")
    if np.all(m == 0):
        return 1.0
    a1, a0 = params.alpha1, params.alpha_rest_sum
    m1, m0 = float(m[0]), float(m[1:].sum())
    num = log_beta_interval(a1 + m1, a0 + m0, params.a, params.b)
    num += log_multivariate_beta(params.alpha[1:] + m[1:])
    den = log_beta_interval(a1, a0, params.a, params.b)
    den += log_multivariate_beta(params.alpha[1:])
    return float(np.exp(num - den))


def posterior_update(params: PtdParams, counts) -> PtdParams:
    """Conjugate update under multinomial counts: add counts, keep truncation."""
    counts = np.asarray(counts, dtype=float)
    if counts.shape != (params.K,):
        raise ValidationError(f"counts must have length {params.K}")
    if np.any(counts < 0) or np.any(counts != np.round(counts)):
        raise ValidationError("counts must be nonnegative integers")
    return PtdParams(params.alpha + counts, params.a, params.b)


def trunc_beta_ppf(u, alpha: float, beta: float, atol: float = 1e-12):
    """Quantile of ``Beta(alpha, beta)`` by bracketed Newton with bisection fallback.

    ``u`` may be a scalar or array of probabilities in ``[0, 1]``.  Newton
    iterates on the regularized incomplete beta CDF with the analytic beta
    density as derivative, clamped to a shrinking bracket; steps that leave
    the bracket or hit a flat density degrade to bisection.
    """
    scalar = np.isscalar(u) or np.ndim(u) == 0
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any((u < 0) | (u > 1)):
        raise ValidationError("probabilities must lie in [0, 1]")
    lo = np.zeros_like(u)
    hi = np.ones_like(u)
    x = np.full_like(u, 0.5)
    lbeta = betaln(alpha, beta)
    done = np.zeros(u.shape, dtype=bool)
    done |= u == 0.0
    x[u == 0.0] = 0.0
    done |= u == 1.0
    x[u == 1.0] = 1.0
    for _ in range(200):
        if done.all():
            break
        act = ~done
        xa = x[act]
        f = betainc(alpha, beta, xa) - u[act]
        lo_a, hi_a = lo[act], hi[act]
        lo_a = np.where(f < 0, xa, lo_a)
        hi_a = np.where(f >= 0, xa, hi_a)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            logpdf = (alpha - 1) * np.log(xa) + (beta - 1) * np.log1p(-xa) - lbeta
            step = f * np.exp(-logpdf)
        x_new = xa - step
        bad = ~np.isfinite(x_new) | (x_new <= lo_a) | (x_new >= hi_a)
        x_new = np.where(bad, 0.5 * (lo_a + hi_a), x_new)
        conv = np.abs(x_new - xa) < atol
        x[act] = x_new
        lo[act] = lo_a
        hi[act] = hi_a
        idx = np.flatnonzero(act)
        done[idx[conv]] = True
    return float(x[0]) if scalar else x


def _sample_trunc_beta(alpha: float, beta: float, a: float, b: float, rng) -> float:
    Fa = float(betainc(alpha, beta, a))
    Fb = float(betainc(alpha, beta, b))
    if Fb - Fa >= 1e-12:
        u = rng.uniform(Fa, Fb)
        return float(trunc_beta_ppf(u, alpha, beta))
    # interval mass too small for the inverse CDF: rejection-sample the
    # untruncated beta, capped, before giving up
    for _ in range(_REJECTION_CAP):
        y = rng.beta(alpha, beta)
        if a < y < b:
            return float(y)
    raise NumericalError(
        f"degenerate truncation: no Beta({alpha}, {beta}) draw landed in "
        f"({a}, {b}) within {_REJECTION_CAP} proposals"
    )


def sample(params: PtdParams, rng: np.random.Generator, size: int | None = None):
    """Exact draw(s): truncated-beta first coordinate, scaled-Dirichlet tail."""
    if size is None:
        g1 = _sample_trunc_beta(
            params.alpha1, params.alpha_rest_sum, params.a, params.b, rng
        )
        tail = rng.dirichlet(params.alpha[1:]) if params.K > 2 else np.ones(1)
        out = np.empty(params.K)
        out[0] = g1
        out[1:] = (1.0 - g1) * tail
        return out
    Fa = float(betainc(params.alpha1, params.alpha_rest_sum, params.a))
    Fb = float(betainc(params.alpha1, params.alpha_rest_sum, params.b))
    if Fb - Fa >= 1e-12:
        u = rng.uniform(Fa, Fb, size=size)
        g1 = np.atleast_1d(trunc_beta_ppf(u, params.alpha1, params.alpha_rest_sum))
    else:
        g1 = np.array(
            [
                _sample_trunc_beta(
                    params.alpha1, params.alpha_rest_sum, params.a, params.b, rng
                )
                for _ in range(size)
            ]
        )
    if params.K > 2:
        tail = rng.dirichlet(params.alpha[1:], size=size)
    else:
        tail = np.ones((size, 1))
    out = np.empty((size, params.K))
    out[:, 0] = g1
    out[:, 1:] = (1.0 - g1)[:, None] * tail
    return out
