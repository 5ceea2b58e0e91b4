"""Covariance functions for GP regression and kernel adaptive filtering.

The composite kernel is a sum of an anisotropic RBF term, a linear term and
white observation noise,

    k(x, x') = a1 * exp(-sum_l g_l * (x_l - x'_l)^2) + a2 * x.x' + a3 * delta,

where ``delta`` is 1 only when x and x' refer to the *same observation*
(index identity, never value identity).  All hyperparameters are stored in
the log domain so that gradient-based optimisation is unconstrained.

``rbf_only`` and ``linear_only`` modes keep the same parameter container but
deactivate the unused terms; the active-parameter packing used by the
marginal-likelihood optimiser changes accordingly.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

COMPOSITE = "composite"
RBF_ONLY = "rbf_only"
LINEAR_ONLY = "linear_only"

MODES = (COMPOSITE, RBF_ONLY, LINEAR_ONLY)


@dataclass(frozen=True)
class HyperParams:
    """Log-domain kernel hyperparameters.

    Parameters
    ----------
    log_alpha1 : float
        Log amplitude of the RBF term.
    log_gamma : array_like, shape (d,)
        Log inverse squared length-scales, one per input dimension.
    log_alpha2 : float
        Log amplitude of the linear term.
    log_alpha3 : float
        Log observation-noise variance.
    """

    log_alpha1: float
    log_gamma: np.ndarray
    log_alpha2: float
    log_alpha3: float

    def __post_init__(self):
        lg = np.atleast_1d(np.asarray(self.log_gamma, dtype=float))
        if lg.ndim != 1:
            raise ValueError("log_gamma must be one-dimensional")
        if not np.all(np.isfinite(lg)):
            raise ValueError("log_gamma must be finite")
        lg = lg.copy()
        lg.flags.writeable = False
        object.__setattr__(self, "log_gamma", lg)
        for name in ("log_alpha1", "log_alpha2", "log_alpha3"):
            v = float(getattr(self, name))
            if not np.isfinite(v):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, v)

    @staticmethod
    def from_values(alpha1: float, gamma, alpha2: float, alpha3: float) -> "HyperParams":
        """Build from natural-domain (positive) values."""
        gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
        if alpha1 <= 0 or alpha2 <= 0 or alpha3 <= 0 or np.any(gamma <= 0):
            raise ValueError("natural-domain hyperparameters must be positive")
        return HyperParams(
            log_alpha1=float(np.log(alpha1)),
            log_gamma=np.log(gamma),
            log_alpha2=float(np.log(alpha2)),
            log_alpha3=float(np.log(alpha3)),
        )

    @property
    def alpha1(self) -> float:
        return float(np.exp(self.log_alpha1))

    @property
    def gamma(self) -> np.ndarray:
        return np.exp(self.log_gamma)

    @property
    def alpha2(self) -> float:
        return float(np.exp(self.log_alpha2))

    @property
    def alpha3(self) -> float:
        return float(np.exp(self.log_alpha3))


@dataclass(frozen=True)
class KernelSpec:
    """A kernel mode plus its hyperparameters.

    ``temporal_lambda`` (in (0, 1]) is only consulted by the spatio-temporal
    Gram matrix and by forgetting-equivalence checks; plain spatial
    evaluation ignores it.
    """

    mode: str
    params: HyperParams
    temporal_lambda: float | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown kernel mode {self.mode!r}")
        if self.temporal_lambda is not None:
            lam = float(self.temporal_lambda)
            if not 0.0 < lam <= 1.0:
                raise ValueError("temporal_lambda must lie in (0, 1]")
            object.__setattr__(self, "temporal_lambda", lam)

    @property
    def input_dim(self) -> int:
        return self.params.log_gamma.shape[0]

    @property
    def noise_variance(self) -> float:
        return self.params.alpha3

    # -- active-parameter packing (log domain) ------------------------------

    def param_names(self) -> list[str]:
        d = self.input_dim
        gammas = [f"log_gamma[{l}]" for l in range(d)]
        if self.mode == COMPOSITE:
            return ["log_alpha1", *gammas, "log_alpha2", "log_alpha3"]
        if self.mode == RBF_ONLY:
            return ["log_alpha1", *gammas, "log_alpha3"]
        return ["log_alpha2", "log_alpha3"]

    def pack_params(self) -> np.ndarray:
        p = self.params
        if self.mode == COMPOSITE:
            return np.concatenate(
                [[p.log_alpha1], p.log_gamma, [p.log_alpha2], [p.log_alpha3]]
            )
        if self.mode == RBF_ONLY:
            return np.concatenate([[p.log_alpha1], p.log_gamma, [p.log_alpha3]])
        return np.array([p.log_alpha2, p.log_alpha3])

    def with_packed_params(self, vec) -> "KernelSpec":
        """Return a copy with the active parameters replaced by ``vec``."""
        vec = np.asarray(vec, dtype=float)
        d = self.input_dim
        if vec.shape != (len(self.param_names()),):
            raise ValueError("packed parameter vector has the wrong length")
        p = self.params
        if self.mode == COMPOSITE:
            new = HyperParams(vec[0], vec[1 : 1 + d], vec[1 + d], vec[2 + d])
        elif self.mode == RBF_ONLY:
            new = HyperParams(vec[0], vec[1 : 1 + d], p.log_alpha2, vec[1 + d])
        else:
            new = HyperParams(p.log_alpha1, p.log_gamma, vec[0], vec[1])
        return dataclasses.replace(self, params=new)


def _check_inputs(spec: KernelSpec, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("inputs must be a 2-D array of shape (n, d)")
    if X.shape[1] != spec.input_dim:
        raise ValueError(
            f"input dimension {X.shape[1]} does not match kernel dimension "
            f"{spec.input_dim}"
        )
    return X


def kernel_eval(spec: KernelSpec, x, xp, same_point: bool = False) -> float:
    """Evaluate k(x, x') for a single pair of inputs.

    ``same_point=True`` adds the noise variance a3, i.e. the two arguments
    are the same *observation* (not merely equal values).
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    xp = np.asarray(xp, dtype=float).reshape(-1)
    if x.shape != xp.shape or x.shape[0] != spec.input_dim:
        raise ValueError("kernel arguments must both have the kernel's input dimension")
    p = spec.params
    val = 0.0
    if spec.mode in (COMPOSITE, RBF_ONLY):
        diff = x - xp
        val += p.alpha1 * float(np.exp(-np.dot(p.gamma, diff * diff)))
    if spec.mode in (COMPOSITE, LINEAR_ONLY):
        val += p.alpha2 * float(np.dot(x, xp))
    if same_point:
        val += p.alpha3
    return val


def cross_gram(spec: KernelSpec, A, B) -> np.ndarray:
    """Noise-free cross-covariance matrix between two input sets.

    Returns the (n_a, n_b) matrix of k(a_i, b_j); no noise term is added
    because distinct sets never share an observation index.
    """
    A = _check_inputs(spec, A)
    B = _check_inputs(spec, B)
    p = spec.params
    out = np.zeros((A.shape[0], B.shape[0]))
    if spec.mode in (COMPOSITE, RBF_ONLY):
        diff = A[:, None, :] - B[None, :, :]
        out += p.alpha1 * np.exp(-np.einsum("ijl,l->ij", diff * diff, p.gamma))
    if spec.mode in (COMPOSITE, LINEAR_ONLY):
        out += p.alpha2 * (A @ B.T)
    return out


def kernel_vector(spec: KernelSpec, X, x) -> np.ndarray:
    """Cross-covariances k(x_i, x) between stored inputs and one query."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return cross_gram(spec, X, x)[:, 0]


def _sq_diffs(X: np.ndarray) -> np.ndarray:
    # per-dimension squared differences, shape (n, n, d); exactly symmetric
    diff = X[:, None, :] - X[None, :, :]
    return diff * diff


def _rbf_part(spec: KernelSpec, X: np.ndarray, sq=None) -> np.ndarray:
    p = spec.params
    if sq is None:
        sq = _sq_diffs(X)
    return p.alpha1 * np.exp(-np.einsum("ijl,l->ij", sq, p.gamma))


def _linear_part(spec: KernelSpec, X: np.ndarray) -> np.ndarray:
    G = spec.params.alpha2 * (X @ X.T)
    # force exact symmetry (BLAS results can differ across the diagonal by 1 ulp)
    return np.triu(G) + np.triu(G, 1).T


def gram(spec: KernelSpec, X, include_noise: bool = True) -> np.ndarray:
    """Gram matrix of the kernel on inputs ``X``.

    Parameters
    ----------
    spec : KernelSpec
    X : array_like, shape (n, d)
        n may be 0, which yields an empty (0, 0) matrix.
    include_noise : bool
        If True, add a3 * I (each row is its own observation).

    Returns
    -------
    K : ndarray, shape (n, n)
        Exactly symmetric; positive semi-definite (definite when noise is
        included, since a3 > 0).
    """
    X = _check_inputs(spec, X)
    n = X.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    K = np.zeros((n, n))
    if spec.mode in (COMPOSITE, RBF_ONLY):
        K += _rbf_part(spec, X)
    if spec.mode in (COMPOSITE, LINEAR_ONLY):
        K += _linear_part(spec, X)
    if include_noise:
        K[np.diag_indices(n)] += spec.params.alpha3
    return K


def gram_gradients(spec: KernelSpec, X) -> list[np.ndarray]:
    """Derivatives of the noisy Gram matrix w.r.t. each active log parameter.

    The list order matches ``spec.param_names()`` / ``spec.pack_params()``.
    Because parameters live in the log domain, each entry is
    theta_j * dK/dtheta_j.
    """
    X = _check_inputs(spec, X)
    n = X.shape[0]
    p = spec.params
    grads: list[np.ndarray] = []
    if spec.mode in (COMPOSITE, RBF_ONLY):
        sq = _sq_diffs(X)
        R = _rbf_part(spec, X, sq)
        grads.append(R)  # d/d log a1
        for l in range(spec.input_dim):
            grads.append(-p.gamma[l] * sq[:, :, l] * R)  # d/d log g_l
    if spec.mode in (COMPOSITE, LINEAR_ONLY):
        grads.append(_linear_part(spec, X))  # d/d log a2
    grads.append(p.alpha3 * np.eye(n))  # d/d log a3
    return grads


def temporal_factor(lam: float, t: float, tp: float) -> float:
    """Temporal decay lam^(|t - t'| / 2) of the separable forgetting kernel."""
    lam = float(lam)
    if not 0.0 < lam <= 1.0:
        raise ValueError("temporal lambda must lie in (0, 1]")
    return float(lam ** (abs(float(t) - float(tp)) / 2.0))


def st_gram(spec: KernelSpec, X, timestamps) -> np.ndarray:
    """Spatio-temporal Gram matrix: temporal decay times spatial kernel.

    Entry (i, j) is lam^(|t_i - t_j|/2) * k_s(x_i, x_j) + a3 * delta_ij,
    where k_s is the noise-free spatial kernel.  The noise term stays
    outside the product: observation noise does not decay.  Requires
    ``spec.temporal_lambda`` to be set.
    """
    if spec.temporal_lambda is None:
        raise ValueError("st_gram requires spec.temporal_lambda")
    X = _check_inputs(spec, X)
    t = np.asarray(timestamps, dtype=float).reshape(-1)
    if t.shape[0] != X.shape[0]:
        raise ValueError("timestamps must have one entry per input row")
    n = X.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    lam = spec.temporal_lambda
    T = lam ** (np.abs(t[:, None] - t[None, :]) / 2.0)
    K = T * gram(spec, X, include_noise=False)
    K[np.diag_indices(n)] += spec.params.alpha3
    return K
