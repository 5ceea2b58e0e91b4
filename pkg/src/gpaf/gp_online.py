"""Recursive Gaussian process regression with forgetting and a basis budget.

The state keeps a posterior N(mu, Sigma) over the latent function values at
the current basis inputs, together with Q, the inverse of the *noise-free*
basis Gram matrix.  One observation is absorbed per call by Gaussian
conditioning on the partitioned joint; the result is algebraically identical
to refitting the batch GP on all data seen so far (while the basis is not
truncated).

Forgetting blends the posterior back towards the prior,

    mu <- sqrt(lam) * mu,    Sigma <- lam * Sigma + (1 - lam) * K,

which is exactly inference under a separable spatio-temporal kernel whose
temporal factor is lam^(|t - t'|/2): the exponential temporal profile is
Markov, so discounting the running posterior once per elapsed time unit
reproduces the full batch computation.

When the basis exceeds the budget, the entry with the smallest contribution
(Q mu)_i^2 / Q_ii is marginalised out and Q is downdated by a rank-one
Schur-complement step.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .gp_batch import PredictiveDistribution
from .kernels import KernelSpec, kernel_eval, kernel_vector

# A new observation whose prior conditional variance (Schur complement
# against the basis) falls below this times k(x, x) lies in the span of the
# basis; it is folded into the existing posterior instead of growing it.
DUPLICATE_REL_TOL = 1e-12


@dataclass(frozen=True)
class OnlineGPState:
    """Posterior over latent values at the basis, plus cached kernel algebra.

    Attributes
    ----------
    basis_X : (m, d) inputs retained as the basis.
    basis_t : (m,) arrival timestamps (used for pruning tie-breaks).
    mu, Sigma : posterior mean / covariance of the latent values.
    Q : inverse of the noise-free basis Gram matrix.
    K : the noise-free basis Gram matrix itself (kept for forgetting).
    budget : maximum basis size, or None for unbounded.
    last_t : last timestamp absorbed (None before the first update).
    diag_clips : how many negative posterior variances were clipped to 0.
    """

    spec: KernelSpec
    basis_X: np.ndarray
    basis_t: np.ndarray
    mu: np.ndarray
    Sigma: np.ndarray
    Q: np.ndarray
    K: np.ndarray
    budget: int | None = None
    last_t: float | None = None
    diag_clips: int = 0

    @property
    def size(self) -> int:
        return self.mu.shape[0]


def init(spec: KernelSpec, budget: int | None = None) -> OnlineGPState:
    """Fresh empty state. ``budget=None`` disables pruning."""
    if budget is not None:
        budget = int(budget)
        if budget < 1:
            raise ValueError("budget must be at least 1")
    d = spec.input_dim
    z = np.zeros
    return OnlineGPState(
        spec=spec,
        basis_X=z((0, d)),
        basis_t=z(0),
        mu=z(0),
        Sigma=z((0, 0)),
        Q=z((0, 0)),
        K=z((0, 0)),
        budget=budget,
    )


def _clip_diag(Sigma: np.ndarray, clips: int) -> tuple[np.ndarray, int]:
    d = np.diag(Sigma)
    neg = d < 0.0
    if np.any(neg):
        Sigma = Sigma.copy()
        Sigma[np.diag_indices_from(Sigma)] = np.where(neg, 0.0, d)
        clips += int(np.count_nonzero(neg))
    return Sigma, clips


def predict(state: OnlineGPState, x) -> PredictiveDistribution:
    """Predictive marginal at ``x`` from the current basis posterior.

    q = Q k*;  mean = q^T mu;  var_latent = k(x,x) - k*^T q + q^T Sigma q.
    """
    spec = state.spec
    kxx = kernel_eval(spec, x, x, same_point=False)
    if state.size == 0:
        mean, var_latent = 0.0, kxx
    else:
        kk = kernel_vector(spec, state.basis_X, x)
        q = state.Q @ kk
        mean = float(q @ state.mu)
        var_latent = kxx - float(kk @ q) + float(q @ (state.Sigma @ q))
        var_latent = max(var_latent, 0.0)
    return PredictiveDistribution(
        mean=mean,
        var_latent=var_latent,
        var_output=var_latent + spec.params.alpha3,
    )


def update(state: OnlineGPState, x, y, t) -> OnlineGPState:
    """Absorb one observation (x, y) arriving at time ``t``.

    Grows the basis by one, unless the new input lies in the span of the
    basis under the prior (Schur complement ~ 0), in which case the
    observation is folded into the existing posterior without growth; at an
    exact duplicate the fold is algebraically exact.
    """
    t = float(t)
    y = float(y)
    if state.last_t is not None and t < state.last_t:
        raise ValueError("timestamps must be non-decreasing")
    spec = state.spec
    a3 = spec.params.alpha3
    m = state.size
    kxx = kernel_eval(spec, x, x, same_point=False)
    x = np.asarray(x, dtype=float).reshape(-1)

    if m == 0:
        if kxx <= 1e-15 * a3:
            # zero prior variance at this input (e.g. linear kernel at the
            # origin): the observation carries no information about f
            return dataclasses.replace(state, last_t=t)
        sy2 = kxx + a3
        mu = np.array([y * kxx / sy2])
        Sigma = np.array([[kxx - kxx * kxx / sy2]])
        return OnlineGPState(
            spec=spec,
            basis_X=x[None, :].copy(),
            basis_t=np.array([t]),
            mu=mu,
            Sigma=Sigma,
            Q=np.array([[1.0 / kxx]]),
            K=np.array([[kxx]]),
            budget=state.budget,
            last_t=t,
            diag_clips=state.diag_clips,
        )

    kk = kernel_vector(spec, state.basis_X, x)
    q = state.Q @ kk
    gamma = kxx - float(kk @ q)  # prior conditional (Schur) variance
    h = state.Sigma @ q
    sf2 = max(gamma, 0.0) + float(q @ h)
    sf2 = max(sf2, 0.0)
    sy2 = sf2 + a3
    mu_f = float(q @ state.mu)
    err = mu_f - y

    if gamma < DUPLICATE_REL_TOL * kxx:
        # in-span observation: condition without growing the basis
        mu = state.mu - (err / sy2) * h
        Sigma = state.Sigma - np.outer(h, h) / sy2
        Sigma = 0.5 * (Sigma + Sigma.T)
        Sigma, clips = _clip_diag(Sigma, state.diag_clips)
        return dataclasses.replace(
            state, mu=mu, Sigma=Sigma, last_t=t, diag_clips=clips
        )

    p = np.concatenate([h, [sf2]])
    mu = np.concatenate([state.mu, [mu_f]]) - (err / sy2) * p
    Sigma = np.empty((m + 1, m + 1))
    Sigma[:m, :m] = state.Sigma
    Sigma[:m, m] = h
    Sigma[m, :m] = h
    Sigma[m, m] = sf2
    Sigma -= np.outer(p, p) / sy2
    Sigma = 0.5 * (Sigma + Sigma.T)
    Sigma, clips = _clip_diag(Sigma, state.diag_clips)

    qext = np.concatenate([q, [-1.0]])
    Q = np.zeros((m + 1, m + 1))
    Q[:m, :m] = state.Q
    Q += np.outer(qext, qext) / gamma

    K = np.empty((m + 1, m + 1))
    K[:m, :m] = state.K
    K[:m, m] = kk
    K[m, :m] = kk
    K[m, m] = kxx

    return OnlineGPState(
        spec=spec,
        basis_X=np.vstack([state.basis_X, x[None, :]]),
        basis_t=np.concatenate([state.basis_t, [t]]),
        mu=mu,
        Sigma=Sigma,
        Q=Q,
        K=K,
        budget=state.budget,
        last_t=t,
        diag_clips=clips,
    )


def forget(state: OnlineGPState, lam: float) -> OnlineGPState:
    """Blend the posterior towards the prior by factor ``lam``.

    lam = 1 leaves the state untouched; lam = 0 resets to the prior over the
    basis (the contract is lam in (0, 1], but the boundary reset is allowed
    as the limiting case).  The prior covariance K is untouched, so the
    trace identity tr(Sigma') = lam tr(Sigma) + (1-lam) tr(K) holds exactly.
    """
    lam = float(lam)
    if not 0.0 <= lam <= 1.0:
        raise ValueError("forgetting factor must lie in [0, 1]")
    if lam == 1.0 or state.size == 0:
        return state
    mu = np.sqrt(lam) * state.mu
    Sigma = lam * state.Sigma + (1.0 - lam) * state.K
    Sigma = 0.5 * (Sigma + Sigma.T)
    Sigma, clips = _clip_diag(Sigma, state.diag_clips)
    return dataclasses.replace(state, mu=mu, Sigma=Sigma, diag_clips=clips)


def _removal_index(d: np.ndarray, basis_t: np.ndarray) -> int:
    """Index of the entry to prune: smallest score, ties to oldest timestamp."""
    dmin = d.min()
    cand = np.flatnonzero(d == dmin)
    if cand.shape[0] == 1:
        return int(cand[0])
    return int(cand[np.argmin(basis_t[cand])])


def prune_to_budget(state: OnlineGPState) -> OnlineGPState:
    """Marginalise out the lowest-contribution basis entry.

    The score d_i = (Q mu)_i^2 / Q_ii measures how much predictive mean mass
    the entry carries; the posterior over the survivors is the exact
    marginal (rows/columns of mu and Sigma dropped) and Q is downdated by
    the Schur complement of the removed entry.  Predictions at the surviving
    basis points are unchanged.
    """
    m = state.size
    if m < 2:
        raise ValueError("pruning requires at least two basis entries")
    Qmu = state.Q @ state.mu
    d = Qmu * Qmu / np.diag(state.Q)
    r = _removal_index(d, state.basis_t)
    keep = np.arange(m) != r
    Qs = state.Q[keep][:, keep]
    qr = state.Q[keep, r]
    Q = Qs - np.outer(qr, qr) / state.Q[r, r]
    Q = 0.5 * (Q + Q.T)
    return dataclasses.replace(
        state,
        basis_X=state.basis_X[keep].copy(),
        basis_t=state.basis_t[keep].copy(),
        mu=state.mu[keep].copy(),
        Sigma=state.Sigma[keep][:, keep].copy(),
        Q=Q,
        K=state.K[keep][:, keep].copy(),
    )


def step(
    state: OnlineGPState, x, y, t, lam: float = 1.0
) -> tuple[OnlineGPState, PredictiveDistribution]:
    """One filtering step: forget, predict (before seeing y), update, prune.

    The forgetting factor is applied as lam^(t - last_t), so unit-spaced
    timestamps discount once per step and gaps discount accordingly.  The
    returned prediction is computed after forgetting but before the update,
    i.e. it is the model's forecast of y at the current time from data
    strictly in the past.
    """
    lam = float(lam)
    if not 0.0 < lam <= 1.0:
        raise ValueError("forgetting factor must lie in (0, 1]")
    t = float(t)
    if state.last_t is not None:
        dt = t - state.last_t
        if dt < 0:
            raise ValueError("timestamps must be non-decreasing")
        if lam < 1.0 and dt > 0:
            state = forget(state, lam**dt)
    pred = predict(state, x)
    state = update(state, x, y, t)
    if state.budget is not None and state.size > state.budget:
        state = prune_to_budget(state)
    return state, pred
