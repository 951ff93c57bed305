"""Comparator posteriors: normalized power prior and reference prior.

The power-prior comparator raises the historical likelihood to a weight
``a0`` and treats ``a0`` as unknown.  Instead of running MCMC over ``a0``,
the posterior of ``a0`` is computed exactly on a grid by marginalizing the
outcome parameters in closed form, then parameters are drawn conjugately
given each sampled weight.  That keeps the comparator deterministic, cheap,
and easy to verify against quadrature.

The reference comparator is an independent normal prior on the coefficients
with a half-normal prior on the outcome SD, sampled by exact coefficient
draws alternated with a random-walk Metropolis step on the log SD.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln, xlogy

from .conjugate import NormalGammaPrior, PoissonGammaPrior, chol_pd
from .core import (
    Dataset,
    DrawsMatrix,
    HistoricalDataset,
    NumericalError,
    ValidationError,
)
from .gibbs import chain_rng


@dataclass(frozen=True)
class A0Prior:
    """Prior on the historical-likelihood weight.

    Kinds: ``uniform`` on [0, 1]; ``truncated_uniform`` on [0, bound];
    ``beta`` with two shapes; ``fixed`` at a point (plain power prior).
    """

    kind: str
    bound: float = 1.0
    shape1: float = 1.0
    shape2: float = 1.0
    value: float = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform", "truncated_uniform", "beta", "fixed"):
            raise ValidationError(f"unknown a0 prior kind {self.kind!r}")
        if self.kind == "truncated_uniform" and not (0.0 < self.bound <= 1.0):
            raise ValidationError("truncation bound must lie in (0, 1]")
        if self.kind == "beta" and not (self.shape1 > 0 and self.shape2 > 0):
            raise ValidationError("beta shapes must be positive")
        if self.kind == "fixed" and not (0.0 <= self.value <= 1.0):
            raise ValidationError("fixed a0 must lie in [0, 1]")


@dataclass(frozen=True)
class NppConfig:
    """Normalized power prior configuration for either outcome family."""

    prior: Union[PoissonGammaPrior, NormalGammaPrior]
    a0_prior: A0Prior = A0Prior("uniform")
    a0_grid_size: int = 1001

    def __post_init__(self):
        if self.a0_grid_size < 11:
            raise ValidationError("a0 grid size must be >= 11")
        if isinstance(self.prior, NormalGammaPrior) and not self.prior.is_proper():
            raise ValidationError(
                "power-prior comparator requires a proper initial prior; "
                "use a small positive definite omega0 for a diffuse one"
            )

    @property
    def family(self) -> str:
        return "poisson" if isinstance(self.prior, PoissonGammaPrior) else "normal_linear"


@dataclass(frozen=True)
class ReferencePriorConfig:
    """Independent N(0, coef_sd^2) coefficients, half-normal(sigma_sd) outcome SD."""

    coef_sd: float = 10.0
    sigma_sd: float = 10.0

    def __post_init__(self):
        if not (self.coef_sd > 0 and self.sigma_sd > 0):
            raise ValidationError("prior SDs must be positive")


# ---------------------------------------------------------------------------
# closed-form weighted marginals


def _poisson_log_marginal(prior: PoissonGammaPrior, blocks) -> float:
    """Log of int prod_b L(theta | y_b)^{w_b} dGamma-prior; includes all constants."""
    shape = prior.eta0
    rate = prior.beta0
    const = prior.eta0 * np.log(prior.beta0) - gammaln(prior.eta0)
    for y, w in blocks:
        shape += w * float(y.sum())
        rate += w * y.size
        const -= w * float(gammaln(y + 1).sum())
    return float(const + gammaln(shape) - shape * np.log(rate))


def _ng_weighted_marginal(prior: NormalGammaPrior, blocks) -> float:
    """Log marginal of weighted normal-linear blocks under a proper NG prior."""
    P = prior.omega0.copy()
    h = prior.omega0 @ prior.mu0
    yty = prior.mu0 @ prior.omega0 @ prior.mu0
    n_eff = 0.0
    for X, y, w in blocks:
        P += w * (X.T @ X)
        h += w * (X.T @ y)
        yty += w * float(y @ y)
        n_eff += w * y.size
    L = chol_pd(P)
    m = solve_triangular(
        L.T, solve_triangular(L, h, lower=True, check_finite=False),
        lower=False, check_finite=False,
    )
    shape = (n_eff + prior.delta0) / 2.0
    s2 = prior.xi0 + yty - m @ P @ m
    if s2 <= 0:
        raise NumericalError(f"nonpositive residual scale {s2:.3e} in power-prior update")
    L0 = chol_pd(prior.omega0)
    logdet0 = 2.0 * np.sum(np.log(np.diag(L0)))
    logdet1 = 2.0 * np.sum(np.log(np.diag(L)))
    return float(
        -0.5 * n_eff * np.log(2 * np.pi)
        + 0.5 * logdet0
        - 0.5 * logdet1
        + gammaln(shape)
        - gammaln(prior.delta0 / 2.0)
        + (prior.delta0 / 2.0) * np.log(prior.xi0 / 2.0)
        - shape * np.log(s2 / 2.0)
    )


def _hist_blocks(hist: HistoricalDataset, prior, a0: float):
    if isinstance(prior, PoissonGammaPrior):
        return [(hist.y0, a0)]
    X0 = _aligned_hist_design(hist, prior.p)
    return [(X0, hist.y0, a0)]


def _aligned_hist_design(hist: HistoricalDataset, p: int) -> np.ndarray:
    from .conjugate import hist_design

    return hist_design(hist, p)


def npp_log_norm_const(a0: float, hist: HistoricalDataset, cfg: NppConfig) -> float:
    """Log normalizing constant of the power prior at weight ``a0``.

    Exactly zero at ``a0 = 0`` for a proper initial prior; the full-data
    conjugate log marginal likelihood at ``a0 = 1``.
    """
    if not (0.0 <= a0 <= 1.0):
        raise ValidationError(f"a0 must lie in [0, 1], got {a0}")
    if cfg.family == "poisson":
        return _poisson_log_marginal(cfg.prior, [(hist.y0, a0)])
    return _ng_weighted_marginal(cfg.prior, _hist_blocks(hist, cfg.prior, a0))


def _joint_log_marginal(
    a0: float, data: Dataset, hist: HistoricalDataset, cfg: NppConfig
) -> float:
    if cfg.family == "poisson":
        return _poisson_log_marginal(cfg.prior, [(data.y, 1.0), (hist.y0, a0)])
    X = data.effective_design()
    if X is None:
        raise ValidationError("current design required for the linear comparator")
    if X.shape[1] != cfg.prior.p:
        raise ValidationError(
            f"current design has {X.shape[1]} columns; prior expects {cfg.prior.p}"
        )
    blocks = [(X, data.y, 1.0)] + _hist_blocks(hist, cfg.prior, a0)
    return _ng_weighted_marginal(cfg.prior, blocks)


def _a0_grid(cfg: NppConfig):
    pri = cfg.a0_prior
    G = cfg.a0_grid_size
    if pri.kind == "fixed":
        return np.array([pri.value]), np.zeros(1)
    if pri.kind == "uniform":
        grid = np.linspace(0.0, 1.0, G)
        logp = np.zeros(G)
    elif pri.kind == "truncated_uniform":
        grid = np.linspace(0.0, pri.bound, G)
        logp = np.zeros(G)
    else:  # beta: open grid since the density can diverge at the endpoints
        grid = np.linspace(0.0, 1.0, G + 2)[1:-1]
        logp = xlogy(pri.shape1 - 1.0, grid) + xlogy(pri.shape2 - 1.0, 1.0 - grid)
    return grid, logp


def npp_a0_posterior(
    data: Dataset, hist: HistoricalDataset, cfg: NppConfig
) -> tuple:
    """Grid values and exact normalized posterior pmf of the weight ``a0``."""
    grid, logp = _a0_grid(cfg)
    logw = np.array(
        [
            logp[i] + _joint_log_marginal(a, data, hist, cfg) - npp_log_norm_const(a, hist, cfg)
            for i, a in enumerate(grid)
        ]
    )
    logw -= logw.max()
    w = np.exp(logw)
    return grid, w / w.sum()


def _poisson_conditional(a0, data, hist, prior):
    shape = prior.eta0 + float(data.y.sum()) + a0 * float(hist.y0.sum())
    rate = prior.beta0 + data.n + a0 * hist.n0
    return shape, rate


def _linear_conditional(a0, data, hist, prior):
    X = data.effective_design()
    X0 = _aligned_hist_design(hist, prior.p)
    P = prior.omega0 + X.T @ X + a0 * (X0.T @ X0)
    h = prior.omega0 @ prior.mu0 + X.T @ data.y + a0 * (X0.T @ hist.y0)
    L = chol_pd(P)
    m = solve_triangular(
        L.T, solve_triangular(L, h, lower=True, check_finite=False),
        lower=False, check_finite=False,
    )
    shape = (data.n + a0 * hist.n0 + prior.delta0) / 2.0
    s2 = (
        prior.xi0
        + float(data.y @ data.y)
        + a0 * float(hist.y0 @ hist.y0)
        + prior.mu0 @ prior.omega0 @ prior.mu0
        - m @ P @ m
    )
    if s2 <= 0:
        raise NumericalError(f"nonpositive residual scale {s2:.3e}")
    return m, L, shape, s2 / 2.0


def npp_conditional_posterior(
    a0: float, data: Dataset, hist: HistoricalDataset, cfg: NppConfig
):
    """Conjugate posterior parameters of the outcome model at a fixed ``a0``.

    Poisson: ``(shape, rate)`` of the gamma posterior.  Linear:
    ``(mean, precision_chol, shape, rate)`` of the normal-gamma posterior.
    """
    if not (0.0 <= a0 <= 1.0):
        raise ValidationError(f"a0 must lie in [0, 1], got {a0}")
    if cfg.family == "poisson":
        return _poisson_conditional(a0, data, hist, cfg.prior)
    return _linear_conditional(a0, data, hist, cfg.prior)


def npp_posterior(
    data: Dataset,
    hist: HistoricalDataset,
    cfg: NppConfig,
    n_draws: int = 20_000,
    seed: int = 0,
) -> DrawsMatrix:
    """Joint draws of the outcome parameters and ``a0``.

    ``a0`` indices are sampled from the exact grid pmf; parameters are then
    drawn from the conjugate conditional at each sampled weight, grouped by
    grid index so every distinct weight costs one factorization.
    """
    if n_draws < 1:
        raise ValidationError("n_draws must be >= 1")
    rng = chain_rng(seed)
    grid, pmf = npp_a0_posterior(data, hist, cfg)
    idx = rng.choice(grid.size, size=n_draws, p=pmf)
    a0_draws = grid[idx]

    if cfg.family == "poisson":
        shapes = np.empty(n_draws)
        rates = np.empty(n_draws)
        for u in np.unique(idx):
            sel = idx == u
            sh, ra = _poisson_conditional(grid[u], data, hist, cfg.prior)
            shapes[sel] = sh
            rates[sel] = ra
        theta = rng.gamma(shapes, 1.0 / rates)
        columns = ("theta_1", "a0")
        values = np.column_stack([theta, a0_draws])
        theta1_cols = ["theta_1"]
        kind = "poisson"
    else:
        p = cfg.prior.p
        betas = np.empty((n_draws, p))
        taus = np.empty(n_draws)
        for u in np.unique(idx):
            sel = np.flatnonzero(idx == u)
            m, L, shape, rate = _linear_conditional(grid[u], data, hist, cfg.prior)
            t = rng.gamma(shape, 1.0 / rate, size=sel.size)
            z = rng.standard_normal((sel.size, p))
            dev = solve_triangular(L.T, z.T, lower=False, check_finite=False).T
            betas[sel] = m[None, :] + dev / np.sqrt(t)[:, None]
            taus[sel] = t
        columns = tuple(
            [f"beta_1_{j + 1}" for j in range(p)] + ["tau_1", "sigma_1", "a0"]
        )
        values = np.column_stack([betas, taus, 1.0 / np.sqrt(taus), a0_draws])
        theta1_cols = [f"beta_1_{j + 1}" for j in range(p)] + ["tau_1"]
        kind = "normal_linear"

    meta = {
        "model_kind": kind,
        "seed": seed,
        "n_draws": n_draws,
        "theta1_columns": theta1_cols,
        "sampler": "npp_grid",
        "a0_grid_size": cfg.a0_grid_size,
    }
    return DrawsMatrix(columns=columns, values=values, meta=meta)


# ---------------------------------------------------------------------------
# reference prior sampler


def reference_posterior(
    data: Dataset,
    cfg: ReferencePriorConfig,
    n_draws: int = 22_000,
    seed: int = 0,
    burn_in: int = 2_000,
    thin: int = 1,
) -> DrawsMatrix:
    """Linear-model posterior under the reference prior.

    Coefficients given the SD are drawn exactly from their normal
    conditional; the log SD moves by random-walk Metropolis with step size
    adapted toward 40 percent acceptance during burn-in only, so retained
    draws come from a fixed kernel.  Deterministic given the seed.
    """
    X = data.effective_design()
    if X is None:
        raise ValidationError("reference prior requires a linear-model design")
    from .core import design_rank_ok

    if not design_rank_ok(X):
        raise ValidationError("reference prior requires a full-rank design")
    if not (0 <= burn_in <= n_draws):
        raise ValidationError("burn_in must lie in [0, n_draws]")
    rng = chain_rng(seed)
    n, p = X.shape
    XtX = X.T @ X
    Xty = X.T @ data.y
    prior_prec = np.eye(p) / cfg.coef_sd**2

    resid_var = float(np.var(data.y)) or 1.0
    log_sigma = 0.5 * np.log(resid_var)
    beta = np.zeros(p)
    step = 0.5
    accepted = 0
    proposed = 0

    def log_target(ls: float, ssr: float) -> float:
        sigma2 = np.exp(2.0 * ls)
        # jacobian of sigma -> log sigma adds +ls
        return -n * ls - 0.5 * ssr / sigma2 - sigma2 / (2.0 * cfg.sigma_sd**2) + ls

    n_retained = len(range(burn_in, n_draws, thin))
    values = np.empty((n_retained, p + 2))
    kept = 0
    for t in range(n_draws):
        tau = np.exp(-2.0 * log_sigma)
        P = tau * XtX + prior_prec
        L = chol_pd(P)
        m = solve_triangular(
            L.T, solve_triangular(L, tau * Xty, lower=True, check_finite=False),
            lower=False, check_finite=False,
        )
        z = rng.standard_normal(p)
        beta = m + solve_triangular(L.T, z, lower=False, check_finite=False)

        resid = data.y - X @ beta
        ssr = float(resid @ resid)
        prop = log_sigma + step * rng.standard_normal()
        proposed += 1
        if np.log(rng.random()) < log_target(prop, ssr) - log_target(log_sigma, ssr):
            log_sigma = prop
            accepted += 1
        if t < burn_in and (t + 1) % 100 == 0:
            rate = accepted / proposed
            step *= np.exp(rate - 0.4)
            accepted = 0
            proposed = 0
        if t >= burn_in and (t - burn_in) % thin == 0:
            sigma = np.exp(log_sigma)
            values[kept, :p] = beta
            values[kept, p] = sigma
            values[kept, p + 1] = 1.0 / sigma**2
            kept += 1

    accept_rate = accepted / proposed if proposed else 0.0
    if n_draws > burn_in and not (0.05 <= accept_rate <= 0.95):
        warnings.warn(
            f"reference sampler acceptance rate {accept_rate:.2f} outside [0.05, 0.95]; "
            "inspect traces",
            RuntimeWarning,
            stacklevel=2,
        )
    columns = tuple([f"beta_1_{j + 1}" for j in range(p)] + ["sigma_1", "tau_1"])
    meta = {
        "model_kind": "normal_linear",
        "seed": seed,
        "n_draws": n_draws,
        "burn_in": burn_in,
        "thin": thin,
        "theta1_columns": [f"beta_1_{j + 1}" for j in range(p)] + ["tau_1"],
        "sampler": "reference_mwg",
        "accept_rate": float(accept_rate),
        "step_size": float(step),
    }
    return DrawsMatrix(columns=columns, values=values, meta=meta)
