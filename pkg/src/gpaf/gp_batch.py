"""Batch Gaussian process regression with type-II maximum likelihood.

All posterior quantities are computed through Cholesky factorisations of the
noisy Gram matrix C = K + a3*I; the covariance matrix is never inverted
explicitly.  Hyperparameters are optimised in the log domain by gradient
ascent on the log marginal likelihood with a backtracking line search and
random restarts.

Also provides Bayesian linear regression with a Gaussian weight prior, which
is the weight-space view of a GP with a purely linear kernel (a2 = prior
weight variance); the function-space/weight-space agreement is exercised by
the check suites.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .kernels import (
    KernelSpec,
    cross_gram,
    gram,
    gram_gradients,
    kernel_eval,
    kernel_vector,
)
from .linalg import IllConditionedError, chol_solve, chol_with_jitter, inv_from_chol


@dataclass(frozen=True)
class Dataset:
    """Regression data: inputs X of shape (n, d) and targets y of shape (n,)."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.ndim != 2:
            raise ValueError("X must be 2-D of shape (n, d)")
        if y.shape[0] != X.shape[0]:
            raise ValueError("X and y must have the same number of rows")
        if X.size and not np.all(np.isfinite(X)):
            raise ValueError("X must be finite")
        if y.size and not np.all(np.isfinite(y)):
            raise ValueError("y must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class PredictiveDistribution:
    """Gaussian predictive marginal at one query point.

    ``var_latent`` is the variance of the noise-free function value;
    ``var_output`` adds the observation-noise variance on top.
    """

    mean: float
    var_latent: float
    var_output: float


@dataclass(frozen=True)
class BatchGPModel:
    """Fitted batch GP: training data, kernel, Cholesky factor and weights."""

    data: Dataset
    spec: KernelSpec
    chol_C: np.ndarray
    weights: np.ndarray  # C^{-1} y


def fit(data: Dataset, spec: KernelSpec) -> BatchGPModel:
    """Fit the batch GP (factorise C and precompute C^{-1} y).

    An empty dataset is valid and yields the prior.
    """
    if data.n and data.d != spec.input_dim:
        raise ValueError("data dimension does not match kernel dimension")
    C = gram(spec, data.X, include_noise=True)
    L, _ = chol_with_jitter(C)
    w = chol_solve(L, data.y) if data.n else np.zeros(0)
    return BatchGPModel(data=data, spec=spec, chol_C=L, weights=w)


def predict(model: BatchGPModel, x) -> PredictiveDistribution:
    """Posterior predictive at a single query point.

    mean      = k*^T C^{-1} y
    var_latent = k(x, x) - k*^T C^{-1} k*   (clamped at 0)
    var_output = var_latent + a3
    """
    spec = model.spec
    kxx = kernel_eval(spec, x, x, same_point=False)
    if model.data.n == 0:
        mean, var_latent = 0.0, kxx
    else:
        kk = kernel_vector(spec, model.data.X, x)
        mean = float(kk @ model.weights)
        v = solve_triangular(model.chol_C, kk, lower=True)
        var_latent = max(kxx - float(v @ v), 0.0)
    return PredictiveDistribution(
        mean=mean,
        var_latent=var_latent,
        var_output=var_latent + spec.params.alpha3,
    )


def predict_joint(model: BatchGPModel, Xq) -> tuple[np.ndarray, np.ndarray]:
    """Joint latent posterior (mean vector, covariance matrix) on query inputs.

    Used for drawing posterior sample paths; the covariance carries no
    observation noise.
    """
    spec = model.spec
    Xq = np.asarray(Xq, dtype=float)
    Kqq = gram(spec, Xq, include_noise=False)
    if model.data.n == 0:
        return np.zeros(Xq.shape[0]), Kqq
    Kqx = cross_gram(spec, Xq, model.data.X)
    mean = Kqx @ model.weights
    V = solve_triangular(model.chol_C, Kqx.T, lower=True)
    cov = Kqq - V.T @ V
    cov = 0.5 * (cov + cov.T)
    return mean, cov


def log_marginal_likelihood(data: Dataset, spec: KernelSpec) -> float:
    """Log evidence of the targets under the GP prior.

    -1/2 y^T C^{-1} y - 1/2 log det C - n/2 log(2 pi), computed from the
    Cholesky factor of C.
    """
    if data.n < 1:
        raise ValueError("log marginal likelihood requires n >= 1")
    C = gram(spec, data.X, include_noise=True)
    L, _ = chol_with_jitter(C)
    alpha = chol_solve(L, data.y)
    return float(
        -0.5 * data.y @ alpha
        - np.sum(np.log(np.diag(L)))
        - 0.5 * data.n * np.log(2.0 * np.pi)
    )


def lml_gradient(data: Dataset, spec: KernelSpec) -> np.ndarray:
    """Gradient of the log marginal likelihood w.r.t. the active log params.

    Uses d(lml)/d(theta_j) = 1/2 tr[(aa^T - C^{-1}) dC/dtheta_j] with
    a = C^{-1} y; C^{-1} is formed once from the Cholesky factor and each
    trace is an elementwise product.
    """
    if data.n < 1:
        raise ValueError("gradient requires n >= 1")
    C = gram(spec, data.X, include_noise=True)
    L, _ = chol_with_jitter(C)
    alpha = chol_solve(L, data.y)
    Cinv = inv_from_chol(L)
    grads = gram_gradients(spec, data.X)
    out = np.empty(len(grads))
    for j, G in enumerate(grads):
        out[j] = 0.5 * (alpha @ G @ alpha - float(np.sum(Cinv * G)))
    return out


# -- type-II maximum likelihood ---------------------------------------------


@dataclass(frozen=True)
class RestartTrace:
    """Per-restart optimisation record: LML after each accepted step."""

    start: np.ndarray
    lml_path: np.ndarray
    final_params: np.ndarray
    final_lml: float


def _safe_value(value_fn, vec: np.ndarray) -> float:
    try:
        return value_fn(vec)
    except (IllConditionedError, FloatingPointError):
        return -np.inf


def _ascend(value_fn, grad_fn, theta0, max_iters, tol):
    """Gradient ascent with Armijo backtracking; returns (theta, lml, path)."""
    theta = np.asarray(theta0, dtype=float).copy()
    f = _safe_value(value_fn, theta)
    path = [f]
    if not np.isfinite(f):
        return theta, f, np.asarray(path)
    g = grad_fn(theta)
    step = 0.1
    for _ in range(max_iters):
        if np.max(np.abs(g)) < 1e-5:
            break
        gg = float(g @ g)
        s = step
        accepted = False
        while s >= 1e-12:
            cand = theta + s * g
            fc = _safe_value(value_fn, cand)
            if fc >= f + 1e-4 * s * gg:  # sufficient increase
                f_prev, f, theta = f, fc, cand
                g = grad_fn(theta)
                step = min(2.0 * s, 100.0)
                accepted = True
                break
            s *= 0.5
        if not accepted:
            break
        path.append(f)
        if abs(f - f_prev) < tol * (1.0 + abs(f)):
            break
    return theta, f, np.asarray(path)


def _tying_maps(spec0: KernelSpec):
    """Reduced <-> full packing maps that share one length-scale across dims.

    Returns (expand, reduce_point, reduce_grad, reduced_size); the gradient
    of a shared parameter is the sum of the tied coordinates' gradients.
    """
    d = spec0.input_dim
    names = spec0.param_names()
    g_lo = names.index("log_gamma[0]")
    g_hi = g_lo + d
    size = len(names) - d + 1

    def expand(v):
        v = np.asarray(v, dtype=float)
        return np.concatenate([v[:g_lo], np.repeat(v[g_lo], d), v[g_lo + 1 :]])

    def reduce_point(full):
        full = np.asarray(full, dtype=float)
        shared = float(np.mean(full[g_lo:g_hi]))
        return np.concatenate([full[:g_lo], [shared], full[g_hi:]])

    def reduce_grad(gfull):
        return np.concatenate(
            [gfull[:g_lo], [float(np.sum(gfull[g_lo:g_hi]))], gfull[g_hi:]]
        )

    return expand, reduce_point, reduce_grad, size


def optimize_hyperparams_traced(
    data: Dataset,
    spec0: KernelSpec,
    *,
    max_iters: int = 100,
    tol: float = 1e-6,
    restarts: int = 5,
    seed: int = 0,
    tie_lengthscales: bool = False,
) -> tuple[KernelSpec, list[RestartTrace]]:
    """Multi-restart gradient ascent on the log marginal likelihood.

    ``restarts`` counts the total number of ascent runs: the first starts
    from ``spec0``, the rest from log-domain draws uniform on [-4, 2].
    With ``tie_lengthscales`` one shared log length-scale is optimised for
    all input dimensions (useful when the target function class is
    permutation-symmetric).  Returns the best spec found together with
    per-restart traces; if nothing improves on ``spec0`` a warning is
    emitted and ``spec0`` is returned.
    """
    if data.n < 2:
        raise ValueError("hyperparameter optimisation requires n >= 2")
    if max_iters < 0:
        raise ValueError("max_iters must be non-negative")
    if restarts < 1:
        raise ValueError("restarts must be at least 1")

    tie = tie_lengthscales and spec0.mode != "linear_only"
    if tie:
        expand, reduce_point, reduce_grad, p = _tying_maps(spec0)
    else:
        expand = reduce_point = lambda v: np.asarray(v, dtype=float)
        reduce_grad = lambda g: g
        p = len(spec0.param_names())

    def value_fn(v):
        return log_marginal_likelihood(data, spec0.with_packed_params(expand(v)))

    def grad_fn(v):
        return reduce_grad(lml_gradient(data, spec0.with_packed_params(expand(v))))

    rng = np.random.default_rng(np.random.SeedSequence([int(seed)]))
    starts = [reduce_point(spec0.pack_params())]
    for _ in range(restarts - 1):
        starts.append(rng.uniform(-4.0, 2.0, size=p))

    f0 = _safe_value(value_fn, starts[0])
    best_theta, best_f = starts[0], f0
    traces: list[RestartTrace] = []
    if max_iters == 0:
        return spec0, traces
    for theta0 in starts:
        theta, f, path = _ascend(value_fn, grad_fn, theta0, max_iters, tol)
        traces.append(
            RestartTrace(
                start=expand(theta0),
                lml_path=path,
                final_params=expand(theta),
                final_lml=f,
            )
        )
        if f > best_f:
            best_theta, best_f = theta, f
    if not best_f > f0:
        warnings.warn(
            "hyperparameter search did not improve on the initial spec",
            RuntimeWarning,
        )
        return spec0, traces
    return spec0.with_packed_params(expand(best_theta)), traces


def optimize_hyperparams(
    data: Dataset,
    spec0: KernelSpec,
    *,
    max_iters: int = 100,
    tol: float = 1e-6,
    restarts: int = 5,
    seed: int = 0,
    tie_lengthscales: bool = False,
) -> KernelSpec:
    """As :func:`optimize_hyperparams_traced`, returning only the best spec."""
    best, _ = optimize_hyperparams_traced(
        data,
        spec0,
        max_iters=max_iters,
        tol=tol,
        restarts=restarts,
        seed=seed,
        tie_lengthscales=tie_lengthscales,
    )
    return best


# -- Bayesian linear regression ---------------------------------------------


@dataclass(frozen=True)
class BayesLinearModel:
    """Gaussian posterior over linear weights: w ~ N(mu_w, Sigma_w)."""

    mu_w: np.ndarray
    Sigma_w: np.ndarray
    sigma_w2: float
    sigma_nu2: float


def blr_fit(data: Dataset, sigma_w2: float, sigma_nu2: float) -> BayesLinearModel:
    """Posterior over weights with prior w ~ N(0, sigma_w2 I).

    Sigma_w = (X^T X / sigma_nu2 + I / sigma_w2)^{-1}
    mu_w    = Sigma_w X^T y / sigma_nu2
    """
    if sigma_w2 <= 0 or sigma_nu2 <= 0:
        raise ValueError("prior and noise variances must be positive")
    X, y, d = data.X, data.y, data.d
    A = X.T @ X / sigma_nu2 + np.eye(d) / sigma_w2
    L, _ = chol_with_jitter(A)
    Sigma_w = inv_from_chol(L)
    Sigma_w = 0.5 * (Sigma_w + Sigma_w.T)
    mu_w = chol_solve(L, X.T @ y / sigma_nu2) if data.n else np.zeros(d)
    return BayesLinearModel(
        mu_w=mu_w, Sigma_w=Sigma_w, sigma_w2=float(sigma_w2), sigma_nu2=float(sigma_nu2)
    )


def blr_predict(model: BayesLinearModel, x) -> PredictiveDistribution:
    """Predictive distribution of the linear model at one input."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != model.mu_w.shape[0]:
        raise ValueError("query dimension does not match the fitted weights")
    mean = float(x @ model.mu_w)
    var_latent = max(float(x @ model.Sigma_w @ x), 0.0)
    return PredictiveDistribution(
        mean=mean, var_latent=var_latent, var_output=var_latent + model.sigma_nu2
    )
