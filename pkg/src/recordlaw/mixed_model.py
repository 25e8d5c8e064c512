"""Maximum-likelihood linear mixed-effects model with random intercept and slope.

Model: for group c with regressor x (log t or t),

    y_ct = alpha_c + beta_c * x_ct + eps_ct,   eps_ct ~ N(0, sigma2) iid,
    (alpha_c, beta_c) ~ N(mu, G) independently across groups.

Marginally y_c ~ N(X_c mu, sigma2 * W_c) with W_c = X_c D X_c' + I and
D = G / sigma2.  Estimation profiles mu (GLS) and sigma2 (closed form) out
of the likelihood at every step and runs a quasi-Newton (BFGS) search over
the free covariance parameters only, with analytic gradients obtained from
the envelope theorem.  D is parametrized by its log-Cholesky factor when
fully free and by log standard deviations when the covariance is masked.

Masking pins selected entries of G near zero: masked variances are held at
``variance_floor`` (a tiny value keeps the reported covariance comparable
with optimizers that cannot represent exact zeros), the masked covariance
at exactly zero.  A masked variance forces the covariance to zero as well,
since a free covariance against a pinned variance has no positive
semidefinite headroom.

Everything is computed from per-group sufficient statistics (X'X, X'y,
y'y), so objective and gradient cost O(groups) regardless of group sizes.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import optimize, stats

from .errors import DomainError, EstimationError
from .ingest import SeriesKind
from .transform import ImprovementSample, ModelForm, regressor

FIT_FORMAT_VERSION = 1

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class CovarianceMask:
    """Flags pinning entries of the random-effect covariance near zero."""

    fix_var_alpha: bool = False
    fix_var_beta: bool = False
    fix_cov: bool = False

    @property
    def cov_free(self) -> bool:
        # A pinned variance leaves no PSD room for a free covariance.
        return not (self.fix_cov or self.fix_var_alpha or self.fix_var_beta)


SPEEDRUN_MASK = CovarianceMask(fix_cov=True)
ML_MASK = CovarianceMask(fix_var_beta=True, fix_cov=True)


@dataclass(frozen=True)
class MixedModelSpec:
    model_form: ModelForm = ModelForm.POWER_LAW
    mask: CovarianceMask = CovarianceMask()
    variance_floor: float = 1e-6

    def __post_init__(self):
        if self.variance_floor <= 0:
            raise ValueError("variance_floor must be > 0")


def default_spec(kind: SeriesKind, model_form: ModelForm = ModelForm.POWER_LAW) -> MixedModelSpec:
    mask = SPEEDRUN_MASK if kind is SeriesKind.SPEEDRUN else ML_MASK
    return MixedModelSpec(model_form=model_form, mask=mask)


@dataclass(frozen=True)
class ModelParams:
    """Point in parameter space, as consumed by the likelihood oracle."""

    mean_alpha: float
    mean_beta: float
    var_alpha: float
    var_beta: float
    cov_ab: float
    scale: float  # residual variance sigma2

    @property
    def mu(self) -> np.ndarray:
        return np.array([self.mean_alpha, self.mean_beta])

    @property
    def G(self) -> np.ndarray:
        return np.array([[self.var_alpha, self.cov_ab], [self.cov_ab, self.var_beta]])


@dataclass(frozen=True)
class MixedModelFit:
    mean_alpha: float
    mean_beta: float
    var_alpha: float
    var_beta: float
    cov_ab: float
    scale: float
    loglik: float
    se_mean_alpha: float
    se_mean_beta: float
    group_effects: Mapping[str, tuple[float, float]]
    converged: bool
    n_obs: int
    n_groups: int
    n_iterations: int
    spec: MixedModelSpec
    theta: tuple[float, ...] = field(repr=False, default=())
    mask_sigma2_ref: float = field(repr=False, default=1.0)

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.mean_alpha, self.mean_beta, self.var_alpha,
                           self.var_beta, self.cov_ab, self.scale)


@dataclass(frozen=True)
class ForecastDistribution:
    """Point forecast plus quantiles in the requested space."""

    median: float
    mean: float
    quantiles: Mapping[float, float]
    space: str  # transformed | relative_improvement | raw_value
    point: float  # median or mean, per the requested mode


# ---------------------------------------------------------------------------
# sufficient statistics
# ---------------------------------------------------------------------------


class _GroupStats:
    """Stacked per-group sufficient statistics for the marginal likelihood."""

    def __init__(self, samples: Sequence[ImprovementSample]):
        groups: dict[str, list[ImprovementSample]] = {}
        for s in samples:
            groups.setdefault(s.series_id, []).append(s)
        self.ids = list(groups)
        self.n_groups = len(self.ids)
        self.n_obs = len(samples)
        sxx = np.empty((self.n_groups, 2, 2))
        sxy = np.empty((self.n_groups, 2))
        syy = np.empty(self.n_groups)
        sizes = np.empty(self.n_groups)
        xs, ys = [], []
        for g, sid in enumerate(self.ids):
            rows = groups[sid]
            X = np.column_stack([np.ones(len(rows)), [r.regressor for r in rows]])
            y = np.array([r.response for r in rows])
            if not np.all(np.isfinite(X)):
                raise ValueError(f"non-finite regressor in group {sid!r}")
            sxx[g] = X.T @ X
            sxy[g] = X.T @ y
            syy[g] = y @ y
            sizes[g] = len(rows)
            xs.append(X)
            ys.append(y)
        self.sxx, self.sxy, self.syy, self.sizes = sxx, sxy, syy, sizes
        self.X, self.y = xs, ys

    def pooled_ols(self) -> tuple[np.ndarray, float]:
        """Pooled OLS coefficients and ML residual variance (the start point)."""
        X = np.vstack(self.X)
        y = np.concatenate(self.y)
        coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
        if rank < 2:
            raise EstimationError("pooled design matrix is singular")
        resid = y - X @ coef
        return coef, float(resid @ resid / len(y))


# ---------------------------------------------------------------------------
# covariance parametrization
# ---------------------------------------------------------------------------


class _CovParam:
    """Map free parameters theta to D = G/sigma2 plus derivatives.

    Fully free: log-Cholesky, theta = (log l11, log l22, l21).
    Covariance masked: D diagonal, one log-sd per free variance; masked
    variances sit at ``mask_value`` (variance_floor rescaled to D space).
    """

    def __init__(self, mask: CovarianceMask):
        self.mask = mask
        if mask.cov_free:
            self.n_theta = 3
        else:
            self.n_theta = (not mask.fix_var_alpha) + (not mask.fix_var_beta)

    def start(self) -> np.ndarray:
        # G ~ 0.1 * sigma2 * I, i.e. D = 0.1 I, safely inside the space.
        if self.mask.cov_free:
            return np.array([0.5 * math.log(0.1), 0.5 * math.log(0.1), 0.0])
        return np.full(self.n_theta, 0.5 * math.log(0.1))

    def build(self, theta: np.ndarray, mask_value: float):
        """Return (D, factor A with D = A A', list of dD/dtheta_k)."""
        if self.mask.cov_free:
            t0, t1, t2 = theta
            L = np.array([[math.exp(t0), 0.0], [t2, math.exp(t1)]])
            D = L @ L.T
            grads = []
            for dL in (
                np.array([[L[0, 0], 0.0], [0.0, 0.0]]),
                np.array([[0.0, 0.0], [0.0, L[1, 1]]]),
                np.array([[0.0, 0.0], [1.0, 0.0]]),
            ):
                grads.append(dL @ L.T + L @ dL.T)
            return D, L, grads
        free = iter(theta)
        v = np.empty(2)
        v[0] = mask_value if self.mask.fix_var_alpha else math.exp(2.0 * next(free))
        v[1] = mask_value if self.mask.fix_var_beta else math.exp(2.0 * next(free))
        D = np.diag(v)
        A = np.diag(np.sqrt(v))
        grads = []
        if not self.mask.fix_var_alpha:
            grads.append(np.diag([2.0 * v[0], 0.0]))
        if not self.mask.fix_var_beta:
            grads.append(np.diag([0.0, 2.0 * v[1]]))
        return D, A, grads


# ---------------------------------------------------------------------------
# profiled likelihood
# ---------------------------------------------------------------------------


def _batched_inv2(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inverse and determinant of a stack of 2x2 matrices."""
    det = M[:, 0, 0] * M[:, 1, 1] - M[:, 0, 1] * M[:, 1, 0]
    inv = np.empty_like(M)
    inv[:, 0, 0] = M[:, 1, 1]
    inv[:, 1, 1] = M[:, 0, 0]
    inv[:, 0, 1] = -M[:, 0, 1]
    inv[:, 1, 0] = -M[:, 1, 0]
    return inv / det[:, None, None], det


class _Problem:
    def __init__(self, data: _GroupStats, spec: MixedModelSpec):
        self.data = data
        self.spec = spec
        self.param = _CovParam(spec.mask)

    def _whitened_stats(self, D: np.ndarray, A: np.ndarray):
        """Per-group X'W^-1 X, X'W^-1 y, y'W^-1 y and logdet W via Woodbury.

        W = X D X' + I, so W^-1 = I - X A M^-1 A' X' with M = I + A' X'X A,
        and det W = det M.  Only 2x2 algebra per group is required.
        """
        d = self.data
        B = np.einsum("ij,gjk,kl->gil", A.T, d.sxx, A)
        M = B + np.eye(2)
        Minv, detM = _batched_inv2(M)
        K = np.einsum("ij,gjk,kl->gil", A, Minv, A.T)
        sxx_K = np.einsum("gij,gjk->gik", d.sxx, K)
        xwx = d.sxx - np.einsum("gij,gjk->gik", sxx_K, d.sxx)
        xwy = d.sxy - np.einsum("gij,gj->gi", sxx_K, d.sxy)
        ywy = d.syy - np.einsum("gi,gij,gj->g", d.sxy, K, d.sxy)
        return xwx, xwy, ywy, np.log(detM)

    def loglik_and_grad(
        self,
        theta: np.ndarray,
        mask_value: float,
        fixed_mu: np.ndarray | None = None,
    ) -> tuple[float, np.ndarray, np.ndarray, float]:
        """Profiled log-likelihood, its gradient in theta, mu-hat, sigma2-hat.

        mu and sigma2 are profiled out in closed form; the gradient follows
        from the envelope theorem, so only the partial derivative through D
        survives:  dl/dD = sum_c [-X'W^-1X/2 + (X'W^-1 r)(X'W^-1 r)'/(2 s2)].
        """
        n = self.data.n_obs
        D, A, dDs = self.param.build(theta, mask_value)
        xwx, xwy, ywy, logdetw = self._whitened_stats(D, A)
        Asum = xwx.sum(axis=0)
        bsum = xwy.sum(axis=0)
        if fixed_mu is None:
            try:
                mu = np.linalg.solve(Asum, bsum)
            except np.linalg.LinAlgError:
                raise EstimationError("GLS system is singular; no identifiable fixed effects") from None
            rss = float(ywy.sum() - bsum @ mu)
        else:
            mu = fixed_mu
            rss = float(ywy.sum() - 2.0 * bsum @ mu + mu @ Asum @ mu)
        sigma2 = max(rss / n, 1e-300)
        ll = -0.5 * (n * _LOG_2PI + n * math.log(sigma2) + logdetw.sum() + n)

        u = xwy - np.einsum("gij,j->gi", xwx, mu)
        dl_dD = -0.5 * xwx.sum(axis=0) + (0.5 / sigma2) * np.einsum("gi,gj->ij", u, u)
        grad = np.array([float(np.sum(dl_dD * dD)) for dD in dDs])
        return ll, grad, mu, sigma2

    def conditional_modes(self, D: np.ndarray, mu: np.ndarray) -> np.ndarray:
        """Posterior means of the group effects: mu + D X'W^-1 (y - X mu)."""
        A = _psd_factor(D)
        xwx, xwy, _, _ = self._whitened_stats(D, A)
        u = xwy - np.einsum("gij,j->gi", xwx, mu)
        return mu + np.einsum("ij,gj->gi", D, u)


def _psd_factor(D: np.ndarray) -> np.ndarray:
    """A with A A' = D for a (possibly singular) PSD 2x2 matrix."""
    w, V = np.linalg.eigh(D)
    w = np.clip(w, 0.0, None)
    return V * np.sqrt(w)


def profiled_loglik(
    samples: Sequence[ImprovementSample],
    spec: MixedModelSpec,
    theta: Sequence[float],
    sigma2_ref: float | None = None,
) -> tuple[float, np.ndarray]:
    """Diagnostic: profiled log-likelihood and gradient at free parameters theta.

    ``sigma2_ref`` must match the fit's ``mask_sigma2_ref`` to reproduce its
    objective exactly when variances are masked.
    """
    data = _GroupStats(samples)
    problem = _Problem(data, spec)
    if sigma2_ref is None:
        _, sigma2_ref = data.pooled_ols()
    ll, grad, _, _ = problem.loglik_and_grad(np.asarray(theta, dtype=float), spec.variance_floor / sigma2_ref)
    return ll, grad


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------


def fit(samples: Sequence[ImprovementSample], spec: MixedModelSpec) -> MixedModelFit:
    """Maximize the marginal likelihood; deterministic, no RNG.

    Returns the best-found parameters with ``converged=False`` if the
    quasi-Newton search stalls before reaching a stationary point.
    """
    data = _GroupStats(samples)
    if data.n_groups < 2:
        raise ValueError(f"need >= 2 groups, got {data.n_groups}")
    problem = _Problem(data, spec)
    n_free = 3 + problem.param.n_theta
    if data.n_obs <= n_free:
        raise ValueError(f"{data.n_obs} samples cannot identify {n_free} free parameters")

    _, sigma2_start = data.pooled_ols()
    sigma2_ref = max(sigma2_start, spec.variance_floor)
    theta = problem.param.start()
    has_masked_var = spec.mask.fix_var_alpha or spec.mask.fix_var_beta

    result = None
    n_iter = 0
    # Masked variances are pinned at variance_floor in G space.  The floor in
    # D = G/sigma2 space therefore depends on the profiled sigma2, which is
    # only known after optimizing: iterate the (fast-contracting) fixed point.
    for _ in range(4):
        mask_value = spec.variance_floor / sigma2_ref

        def objective(t, mv=mask_value):
            ll, grad, _, _ = problem.loglik_and_grad(t, mv)
            if not math.isfinite(ll):
                return 1e15, np.zeros_like(grad)
            return -ll, -grad

        if problem.param.n_theta:
            result = optimize.minimize(
                objective, theta, jac=True, method="BFGS",
                options={"gtol": 1e-7, "maxiter": 500},
            )
            theta = result.x
            n_iter += result.nit
            if not result.success:
                # BFGS can report precision loss at a flat boundary optimum;
                # a short simplex polish confirms or improves the point.
                polish = optimize.minimize(
                    lambda t: objective(t)[0], theta, method="Nelder-Mead",
                    options={"maxiter": 200 * problem.param.n_theta, "fatol": 1e-12, "xatol": 1e-10},
                )
                if polish.fun < result.fun:
                    theta = polish.x
        ll, grad, mu, sigma2 = problem.loglik_and_grad(theta, mask_value)
        if not has_masked_var or abs(sigma2 - sigma2_ref) <= 1e-9 * sigma2_ref:
            break
        sigma2_ref = sigma2

    converged = bool(
        (result is None or result.success or np.max(np.abs(grad)) < 5e-5)
        and math.isfinite(ll)
    )

    mask_value = spec.variance_floor / sigma2_ref
    D, _, _ = problem.param.build(theta, mask_value)
    G = sigma2 * D
    mask = spec.mask
    var_alpha = spec.variance_floor if mask.fix_var_alpha else float(G[0, 0])
    var_beta = spec.variance_floor if mask.fix_var_beta else float(G[1, 1])
    cov_ab = 0.0 if not mask.cov_free else float(G[0, 1])

    modes = problem.conditional_modes(D, mu)
    group_effects = {sid: (float(a), float(b)) for sid, (a, b) in zip(data.ids, modes)}

    se = _profile_standard_errors(problem, theta, mu, mask_value)

    return MixedModelFit(
        mean_alpha=float(mu[0]),
        mean_beta=float(mu[1]),
        var_alpha=var_alpha,
        var_beta=var_beta,
        cov_ab=cov_ab,
        scale=float(sigma2),
        loglik=float(ll),
        se_mean_alpha=float(se[0]),
        se_mean_beta=float(se[1]),
        group_effects=group_effects,
        converged=converged,
        n_obs=data.n_obs,
        n_groups=data.n_groups,
        n_iterations=n_iter,
        spec=spec,
        theta=tuple(float(t) for t in theta),
        mask_sigma2_ref=float(sigma2_ref),
    )


def _profile_standard_errors(
    problem: _Problem, theta_hat: np.ndarray, mu_hat: np.ndarray, mask_value: float
) -> np.ndarray:
    """Fixed-effect standard errors from the observed information of the
    profile likelihood in mu (finite-difference Hessian, nuisance parameters
    re-optimized at every stencil point)."""

    def profile_at(mu: np.ndarray) -> float:
        if problem.param.n_theta == 0:
            ll, _, _, _ = problem.loglik_and_grad(np.empty(0), mask_value, fixed_mu=mu)
            return ll

        def obj(t):
            ll, grad, _, _ = problem.loglik_and_grad(t, mask_value, fixed_mu=mu)
            if not math.isfinite(ll):
                return 1e15, np.zeros_like(grad)
            return -ll, -grad

        res = optimize.minimize(obj, theta_hat, jac=True, method="BFGS",
                                options={"gtol": 1e-8, "maxiter": 200})
        return -res.fun

    h = 1e-3 * (1.0 + np.abs(mu_hat))
    H = np.empty((2, 2))
    f0 = profile_at(mu_hat)
    for i in range(2):
        ei = np.zeros(2)
        ei[i] = h[i]
        H[i, i] = (profile_at(mu_hat + ei) - 2.0 * f0 + profile_at(mu_hat - ei)) / h[i] ** 2
    e0 = np.array([h[0], 0.0])
    e1 = np.array([0.0, h[1]])
    H[0, 1] = H[1, 0] = (
        profile_at(mu_hat + e0 + e1) - profile_at(mu_hat + e0 - e1)
        - profile_at(mu_hat - e0 + e1) + profile_at(mu_hat - e0 - e1)
    ) / (4.0 * h[0] * h[1])
    info = -H
    try:
        cov = np.linalg.inv(info)
        se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        se = np.full(2, math.nan)
    return se


# ---------------------------------------------------------------------------
# conditional modes and prediction
# ---------------------------------------------------------------------------


def conditional_mode_for_rows(
    params: ModelParams, X: np.ndarray, y: np.ndarray
) -> tuple[float, float]:
    """Posterior mean of one group's coefficients given its rows.

    Empty rows return the population means (the prior).  Exposed separately
    from :func:`conditional_modes` so degenerate groups and hand-built
    designs can be scored directly.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        return params.mean_alpha, params.mean_beta
    r = y - X @ params.mu
    V = X @ params.G @ X.T + params.scale * np.eye(len(y))
    mode = params.mu + params.G @ X.T @ np.linalg.solve(V, r)
    return float(mode[0]), float(mode[1])


def conditional_modes(
    fit_result: MixedModelFit, samples: Sequence[ImprovementSample]
) -> dict[str, tuple[float, float]]:
    """Posterior means of (alpha_c, beta_c) for every group in ``samples``
    under the fitted Gaussian model."""
    data = _GroupStats(samples)
    problem = _Problem(data, fit_result.spec)
    D = fit_result.params.G / fit_result.scale
    modes = problem.conditional_modes(D, fit_result.params.mu)
    return {sid: (float(a), float(b)) for sid, (a, b) in zip(data.ids, modes)}


_SPACES = ("transformed", "relative_improvement", "raw_value")


def predict_improvement(
    fit_result: MixedModelFit,
    series_id: str,
    t: int,
    mode: str = "median",
    *,
    kind: SeriesKind = SeriesKind.SPEEDRUN,
    space: str = "relative_improvement",
    r_t: float | None = None,
    probs: Sequence[float] = (0.025, 0.05, 0.25, 0.5, 0.75, 0.95, 0.975),
    use_group_effects: bool = True,
) -> ForecastDistribution:
    """Forecast the improvement at record index t for one series.

    The linear predictor eta = a_c + b_c * g(t) gives a transformed-space
    N(eta, sigma2) distribution.  Quantiles map through the inverse
    transform of eta + z_q * sigma; the median is the plain inverse of eta;
    the mean applies the lognormal mean correction sigma2/2 to the
    improvement intensity before inverting.
    """
    if t < 1:
        raise ValueError(f"record index must be >= 1, got {t}")
    if space not in _SPACES:
        raise ValueError(f"unknown space {space!r}")
    if mode not in ("median", "mean"):
        raise ValueError(f"unknown mode {mode!r}")
    if use_group_effects:
        a, b = fit_result.group_effects[series_id]  # KeyError for unknown ids
    else:
        a, b = fit_result.mean_alpha, fit_result.mean_beta
    eta = a + b * regressor(fit_result.spec.model_form, t)
    sigma = math.sqrt(fit_result.scale)

    if space == "transformed":
        to_space = lambda y: y
        flip = False
    elif space == "relative_improvement":
        if kind is SeriesKind.SPEEDRUN:
            to_space = lambda y: 1.0 - math.exp(-math.exp(y))
        else:
            to_space = math.exp  # log-odds improvement intensity
        flip = False
    else:
        if r_t is None:
            raise ValueError("raw_value space requires r_t")
        if kind is SeriesKind.SPEEDRUN:
            to_space = lambda y: r_t * math.exp(-math.exp(y))
        else:
            from .transform import invert_ml

            to_space = lambda y: invert_ml(y, r_t)
        flip = True  # larger improvement -> smaller next record

    median = to_space(eta)
    mean = to_space(eta + 0.5 * fit_result.scale) if space != "transformed" else eta
    quantiles = {}
    for p in sorted(probs):
        z = stats.norm.ppf(1.0 - p if flip else p)
        quantiles[p] = to_space(eta + z * sigma)
    return ForecastDistribution(
        median=median,
        mean=mean,
        quantiles=quantiles,
        space=space,
        point=mean if mode == "mean" else median,
    )


# ---------------------------------------------------------------------------
# likelihood oracle
# ---------------------------------------------------------------------------


def loglik_oracle(samples: Sequence[ImprovementSample], params: ModelParams) -> float:
    """Exact marginal log-likelihood by dense per-group Gaussian densities.

    Independent of the fitting path: builds each group's full covariance
    matrix X G X' + sigma2 I and sums multivariate normal log-densities.
    """
    if params.scale <= 0:
        raise DomainError(f"scale must be > 0, got {params.scale}")
    G = params.G
    if np.min(np.linalg.eigvalsh(G)) < -1e-12:
        raise DomainError("random-effect covariance G is not positive semidefinite")
    data = _GroupStats(samples)
    total = 0.0
    for X, y in zip(data.X, data.y):
        V = X @ G @ X.T + params.scale * np.eye(len(y))
        total += float(stats.multivariate_normal.logpdf(y, mean=X @ params.mu, cov=V))
    return total


# ---------------------------------------------------------------------------
# serialization (see docs/fit-format.md)
# ---------------------------------------------------------------------------


def fit_to_dict(fit_result: MixedModelFit) -> dict:
    return {
        "format_version": FIT_FORMAT_VERSION,
        "spec": {
            "model_form": fit_result.spec.model_form.value,
            "mask": {
                "fix_var_alpha": fit_result.spec.mask.fix_var_alpha,
                "fix_var_beta": fit_result.spec.mask.fix_var_beta,
                "fix_cov": fit_result.spec.mask.fix_cov,
            },
            "variance_floor": fit_result.spec.variance_floor,
        },
        "mean_alpha": fit_result.mean_alpha,
        "mean_beta": fit_result.mean_beta,
        "var_alpha": fit_result.var_alpha,
        "var_beta": fit_result.var_beta,
        "cov_ab": fit_result.cov_ab,
        "scale": fit_result.scale,
        "loglik": fit_result.loglik,
        "se_mean_alpha": fit_result.se_mean_alpha,
        "se_mean_beta": fit_result.se_mean_beta,
        "converged": fit_result.converged,
        "n_obs": fit_result.n_obs,
        "n_groups": fit_result.n_groups,
        "n_iterations": fit_result.n_iterations,
        "group_effects": {sid: list(ab) for sid, ab in sorted(fit_result.group_effects.items())},
    }


def fit_to_json(fit_result: MixedModelFit) -> str:
    return json.dumps(fit_to_dict(fit_result), indent=2, sort_keys=True)


def fit_from_dict(doc: dict) -> MixedModelFit:
    if doc.get("format_version") != FIT_FORMAT_VERSION:
        raise ValueError(f"unsupported fit format version {doc.get('format_version')!r}")
    spec = MixedModelSpec(
        model_form=ModelForm(doc["spec"]["model_form"]),
        mask=CovarianceMask(**doc["spec"]["mask"]),
        variance_floor=doc["spec"]["variance_floor"],
    )
    return MixedModelFit(
        mean_alpha=doc["mean_alpha"],
        mean_beta=doc["mean_beta"],
        var_alpha=doc["var_alpha"],
        var_beta=doc["var_beta"],
        cov_ab=doc["cov_ab"],
        scale=doc["scale"],
        loglik=doc["loglik"],
        se_mean_alpha=doc["se_mean_alpha"],
        se_mean_beta=doc["se_mean_beta"],
        group_effects={sid: tuple(ab) for sid, ab in doc["group_effects"].items()},
        converged=doc["converged"],
        n_obs=doc["n_obs"],
        n_groups=doc["n_groups"],
        n_iterations=doc["n_iterations"],
        spec=spec,
    )


def fit_from_json(text: str) -> MixedModelFit:
    return fit_from_dict(json.loads(text))
