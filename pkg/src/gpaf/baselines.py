"""Classical adaptive-filter baselines: NLMS, extended RLS and QKLMS.

Each filter is a small immutable state plus a pure step function that
returns ``(new_state, prediction)``; the prediction is made before the
update, so step outputs line up with the tracking harness convention.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NlmsState:
    """Normalized LMS: weights w, step size mu in (0, 2), regularizer eps."""

    w: np.ndarray
    step_size: float
    eps: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.step_size < 2.0:
            raise ValueError("NLMS step size must lie in (0, 2)")
        if self.eps <= 0.0:
            raise ValueError("NLMS regularizer must be positive")
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float).reshape(-1))


def nlms_init(dim: int, step_size: float, eps: float = 1e-6) -> NlmsState:
    return NlmsState(w=np.zeros(dim), step_size=step_size, eps=eps)


def nlms_step(state: NlmsState, x, y) -> tuple[NlmsState, float]:
    # w <- w + mu * e * x / (eps + ||x||^2)
    x = np.asarray(x, dtype=float).reshape(-1)
    pred = float(state.w @ x)
    e = float(y) - pred
    w = state.w + state.step_size * e * x / (state.eps + float(x @ x))
    return dataclasses.replace(state, w=w), pred


@dataclass(frozen=True)
class ExRlsState:
    """Exponentially-weighted RLS with random-walk state noise.

    beta in (0, 1] is the forgetting factor; q >= 0 inflates the weight
    covariance each step (q = 0, beta = 1 is ordinary RLS).
    """

    w: np.ndarray
    P: np.ndarray
    beta: float
    q: float

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("EX-RLS forgetting factor must lie in (0, 1]")
        if self.q < 0.0:
            raise ValueError("EX-RLS state-noise level must be non-negative")
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float).reshape(-1))
        object.__setattr__(self, "P", np.asarray(self.P, dtype=float))


def exrls_init(dim: int, beta: float, q: float, p0: float = 1.0) -> ExRlsState:
    return ExRlsState(w=np.zeros(dim), P=p0 * np.eye(dim), beta=beta, q=q)


def exrls_step(state: ExRlsState, x, y) -> tuple[ExRlsState, float]:
    # g  = P x / (beta + x^T P x)
    # w <- w + g e
    # P <- (P - g (x^T P)) / beta + q I
    x = np.asarray(x, dtype=float).reshape(-1)
    pred = float(state.w @ x)
    e = float(y) - pred
    Px = state.P @ x
    denom = state.beta + float(x @ Px)
    g = Px / denom
    w = state.w + g * e
    P = (state.P - np.outer(g, Px)) / state.beta
    if state.q:
        P = P + state.q * np.eye(P.shape[0])
    P = 0.5 * (P + P.T)
    return dataclasses.replace(state, w=w, P=P), pred


@dataclass(frozen=True)
class QklmsState:
    """Quantized kernel LMS with a Gaussian kernel exp(-gamma ||x - c||^2).

    A new input becomes a centre unless it falls within ``quant_eps``
    (Euclidean) of an existing centre, in which case the nearest centre's
    coefficient absorbs the update.  quant_eps = 0 appends every step
    (plain KLMS); quant_eps = inf never grows past the first centre.
    """

    centers: np.ndarray
    coeffs: np.ndarray
    step_size: float
    quant_eps: float
    gamma: float

    def __post_init__(self):
        if self.step_size <= 0.0:
            raise ValueError("QKLMS step size must be positive")
        if self.quant_eps < 0.0:
            raise ValueError("QKLMS quantization radius must be non-negative")
        if self.gamma <= 0.0:
            raise ValueError("QKLMS kernel width must be positive")
        object.__setattr__(self, "centers", np.asarray(self.centers, dtype=float))
        object.__setattr__(
            self, "coeffs", np.asarray(self.coeffs, dtype=float).reshape(-1)
        )


def qklms_init(dim: int, step_size: float, quant_eps: float, gamma: float) -> QklmsState:
    return QklmsState(
        centers=np.zeros((0, dim)),
        coeffs=np.zeros(0),
        step_size=step_size,
        quant_eps=quant_eps,
        gamma=gamma,
    )


def qklms_step(state: QklmsState, x, y) -> tuple[QklmsState, float]:
    x = np.asarray(x, dtype=float).reshape(-1)
    y = float(y)
    if state.centers.shape[0] == 0:
        pred = 0.0
        e = y
        centers = x[None, :].copy()
        coeffs = np.array([state.step_size * e])
        return dataclasses.replace(state, centers=centers, coeffs=coeffs), pred
    diff = state.centers - x[None, :]
    d2 = np.einsum("ij,ij->i", diff, diff)
    pred = float(state.coeffs @ np.exp(-state.gamma * d2))
    e = y - pred
    j = int(np.argmin(d2))
    if float(np.sqrt(d2[j])) <= state.quant_eps:
        coeffs = state.coeffs.copy()
        coeffs[j] += state.step_size * e
        return dataclasses.replace(state, coeffs=coeffs), pred
    centers = np.vstack([state.centers, x[None, :]])
    coeffs = np.concatenate([state.coeffs, [state.step_size * e]])
    return dataclasses.replace(state, centers=centers, coeffs=coeffs), pred
