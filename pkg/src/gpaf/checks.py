"""Cross-module oracle suites and invariant checks behind ``gpaf check``.

Each suite replays one of the library's exact-equivalence claims (or an
invariant) on randomized-but-seeded instances and reports its worst observed
error against a fixed tolerance.  The suites are the runtime release gate;
the unit tests exercise the same identities with independent oracles.

``inject_fault="lambda_squared"`` deliberately misapplies the forgetting
factor as its square inside the forgetting-equivalence suite, which must
flag the suite as failed — a self-test that the gate can actually fail.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from . import baselines, gp_batch, gp_online
from .channel_sim import ChannelConfig, make_stream, run_tracking
from .kernels import (
    HyperParams,
    KernelSpec,
    kernel_eval,
    kernel_vector,
    st_gram,
    temporal_factor,
)
from .linalg import chol_solve, chol_with_jitter


@dataclass(frozen=True)
class SuiteResult:
    suite: str
    max_error: float
    tolerance: float
    passed: bool


def _random_spec(rng, d: int, mode: str | None = None, lam: float | None = None) -> KernelSpec:
    # One-dimensional smooth-kernel Gram matrices are by far the worst
    # conditioned; keep their length-scales short enough that exact
    # identities remain observable at 1e-8 in floating point.
    g_lo = -0.3 if d == 1 else -1.5
    modes = ("composite", "rbf_only", "linear_only")
    mode = mode or modes[rng.integers(len(modes))]
    params = HyperParams(
        log_alpha1=float(rng.uniform(-1.5, 0.5)),
        log_gamma=rng.uniform(g_lo, 0.5, size=d),
        log_alpha2=float(rng.uniform(-2.0, 0.0)),
        log_alpha3=float(rng.uniform(-4.0, -1.0)),
    )
    return KernelSpec(mode, params, temporal_lambda=lam)


_MAX_POINTS_PER_DIM = {1: 10, 2: 30, 3: 50, 4: 50}


def _spread_inputs(rng, n: int, d: int, sep: float = 0.4) -> np.ndarray:
    """Random inputs with a minimum pairwise separation (keeps Q well posed).

    n is capped by what [-3, 3]^d can hold at the requested separation; in
    one dimension a jittered grid is used (rejection sampling saturates).
    """
    n = min(n, _MAX_POINTS_PER_DIM.get(d, 50))
    if d == 1:
        spacing = 6.0 / n
        cells = -3.0 + (np.arange(n) + 0.5) * spacing
        return (cells + rng.uniform(-0.2, 0.2, size=n) * spacing)[:, None]
    X = np.empty((n, d))
    k = 0
    while k < n:
        cand = rng.uniform(-3.0, 3.0, size=d)
        if k == 0 or np.min(np.linalg.norm(X[:k] - cand, axis=1)) > sep:
            X[k] = cand
            k += 1
    return X


def suite_online_vs_batch(seed: int = 0, n_streams: int = 12) -> SuiteResult:
    """Recursive GP (lam=1, no budget) equals batch GPR predictions."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 11]))
    worst = 0.0
    for _ in range(n_streams):
        d = int(rng.integers(1, 5))
        n = int(rng.integers(5, 41))
        spec = _random_spec(rng, d)
        X = _spread_inputs(rng, n, d)
        n = X.shape[0]
        y = rng.standard_normal(n)
        state = gp_online.init(spec)
        for i in range(n):
            state, _ = gp_online.step(state, X[i], y[i], t=i)
        model = gp_batch.fit(gp_batch.Dataset(X, y), spec)
        queries = np.vstack([rng.uniform(-3, 3, size=(6, d)), X[:3]])
        for xq in queries:
            po = gp_online.predict(state, xq)
            pb = gp_batch.predict(model, xq)
            worst = max(
                worst,
                abs(po.mean - pb.mean),
                abs(po.var_latent - pb.var_latent),
                abs(po.var_output - pb.var_output),
            )
    return SuiteResult("online_vs_batch", worst, 1e-8, worst < 1e-8)


def suite_blr_vs_linear_gp(seed: int = 0, n_instances: int = 25) -> SuiteResult:
    """Weight-space Bayesian linear regression equals linear-kernel GPR."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 12]))
    worst = 0.0
    for _ in range(n_instances):
        d = int(rng.integers(1, 6))
        n = int(rng.integers(1, 31))
        sigma_w2 = float(np.exp(rng.uniform(-2, 1)))
        sigma_nu2 = float(np.exp(rng.uniform(-4, -1)))
        X = rng.standard_normal((n, d))
        y = rng.standard_normal(n)
        blr = gp_batch.blr_fit(gp_batch.Dataset(X, y), sigma_w2, sigma_nu2)
        spec = KernelSpec(
            "linear_only",
            HyperParams(
                log_alpha1=0.0,
                log_gamma=np.zeros(d),
                log_alpha2=float(np.log(sigma_w2)),
                log_alpha3=float(np.log(sigma_nu2)),
            ),
        )
        gp = gp_batch.fit(gp_batch.Dataset(X, y), spec)
        for xq in rng.standard_normal((6, d)):
            pa = gp_batch.blr_predict(blr, xq)
            pb = gp_batch.predict(gp, xq)
            worst = max(
                worst,
                abs(pa.mean - pb.mean),
                abs(pa.var_latent - pb.var_latent),
                abs(pa.var_output - pb.var_output),
            )
    return SuiteResult("blr_vs_linear_gp", worst, 1e-8, worst < 1e-8)


def _st_batch_predict(spec, X, y, ts, xq, tq):
    """Batch GP prediction under the spatio-temporal kernel at time tq."""
    C = st_gram(spec, X, ts)
    L, _ = chol_with_jitter(C)
    w = chol_solve(L, y)
    lam = spec.temporal_lambda
    decay = np.array([temporal_factor(lam, tq, t) for t in ts])
    kk = decay * kernel_vector(spec, X, xq)
    v = solve_triangular(L, kk, lower=True)
    var_latent = max(kernel_eval(spec, xq, xq) - float(v @ v), 0.0)
    return float(kk @ w), var_latent


def suite_forgetting_vs_spatiotemporal(seed: int = 0, inject_fault: str | None = None) -> SuiteResult:
    """Per-step forgetting equals batch inference with the temporal kernel."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 13]))
    worst = 0.0
    for rep in range(8):
        d = int(rng.integers(1, 4))
        n = int(rng.integers(6, 16))
        lam = float(rng.uniform(0.85, 0.999))
        spec = _random_spec(rng, d, lam=lam)
        X = _spread_inputs(rng, n, d)
        n = X.shape[0]
        y = rng.standard_normal(n)
        if rep % 2:
            ts = np.cumsum(rng.integers(1, 4, size=n)).astype(float)
        else:
            ts = np.arange(n, dtype=float)
        lam_applied = lam**2 if inject_fault == "lambda_squared" else lam
        state = gp_online.init(spec)
        for i in range(n):
            state, pred = gp_online.step(state, X[i], y[i], t=ts[i], lam=lam_applied)
            if i >= 1:
                m_b, v_b = _st_batch_predict(spec, X[:i], y[:i], ts[:i], X[i], ts[i])
                worst = max(worst, abs(pred.mean - m_b), abs(pred.var_latent - v_b))
        xq = rng.uniform(-3, 3, size=d)
        m_b, v_b = _st_batch_predict(spec, X, y, ts, xq, ts[-1])
        po = gp_online.predict(state, xq)
        worst = max(worst, abs(po.mean - m_b), abs(po.var_latent - v_b))
    return SuiteResult("forgetting_vs_spatiotemporal", worst, 1e-6, worst < 1e-6)


def suite_variance_bounds(seed: int = 0) -> SuiteResult:
    """0 <= var_latent <= prior k(x,x); var_output - var_latent == a3."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 14]))
    worst = 0.0
    for _ in range(6):
        d = int(rng.integers(1, 4))
        spec = _random_spec(rng, d)
        a3 = spec.params.alpha3
        state = gp_online.init(spec, budget=12)
        lam = float(rng.uniform(0.9, 1.0))
        for i in range(25):
            x = rng.uniform(-3, 3, size=d)
            state, _ = gp_online.step(state, x, float(rng.standard_normal()), t=i, lam=lam)
        for xq in rng.uniform(-3, 3, size=(10, d)):
            p = gp_online.predict(state, xq)
            prior = kernel_eval(spec, xq, xq)
            worst = max(
                worst,
                -p.var_latent,  # negativity
                p.var_latent - prior,  # exceeding the prior
                abs(p.var_output - p.var_latent - a3),
            )
    return SuiteResult("variance_bounds", worst, 1e-9, worst < 1e-9)


def suite_forgetting_trace_identity(seed: int = 0) -> SuiteResult:
    """tr(Sigma') = lam tr(Sigma) + (1 - lam) tr(K) after each forget call."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 15]))
    worst = 0.0
    for _ in range(6):
        d = int(rng.integers(1, 4))
        spec = _random_spec(rng, d)
        state = gp_online.init(spec)
        for i in range(12):
            state = gp_online.update(state, rng.uniform(-3, 3, size=d), float(rng.standard_normal()), t=i)
        for lam in (0.0, 0.3, 0.77, 1.0):
            before = np.trace(state.Sigma)
            target = lam * before + (1.0 - lam) * np.trace(state.K)
            after = np.trace(gp_online.forget(state, lam).Sigma)
            scale = max(1.0, abs(target))
            worst = max(worst, abs(after - target) / scale)
    return SuiteResult("forgetting_trace_identity", worst, 1e-10, worst < 1e-10)


def suite_qklms_center_separation(seed: int = 0) -> SuiteResult:
    """QKLMS centres stay pairwise farther apart than the quantization radius."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 16]))
    worst = 0.0
    for _ in range(5):
        d = int(rng.integers(1, 5))
        eps = float(rng.uniform(0.3, 1.5))
        st = baselines.qklms_init(d, 0.5, eps, 0.5)
        for _ in range(200):
            st, _ = baselines.qklms_step(
                st, rng.uniform(-2, 2, size=d), float(rng.standard_normal())
            )
        C = st.centers
        if C.shape[0] >= 2:
            D = np.linalg.norm(C[:, None, :] - C[None, :, :], axis=-1)
            np.fill_diagonal(D, np.inf)
            worst = max(worst, eps - float(D.min()))
    return SuiteResult("qklms_center_separation", worst, 1e-12, worst < 1e-12)


def suite_determinism(seed: int = 0) -> SuiteResult:
    """Identical seeds give bit-identical streams and learning curves."""
    cfg = ChannelConfig(fdt=1e-3, n_steps=400, seed=seed + 21)
    _, s1 = make_stream(cfg)
    _, s2 = make_stream(cfg)
    eq_stream = (
        np.array_equal(s1.X, s2.X)
        and np.array_equal(s1.y, s2.y)
        and np.array_equal(s1.clean, s2.clean)
    )
    c1 = run_tracking(s1, "exrls", {"beta": 0.97, "q": 1e-6})
    c2 = run_tracking(s2, "exrls", {"beta": 0.97, "q": 1e-6})
    eq_curve = np.array_equal(c1.nmse_db, c2.nmse_db)
    err = 0.0 if (eq_stream and eq_curve) else 1.0
    return SuiteResult("determinism", err, 0.5, err < 0.5)


def run_all(seed: int = 0, inject_fault: str | None = None) -> list[SuiteResult]:
    """Run every suite; ``inject_fault`` is forwarded where it applies."""
    if inject_fault not in (None, "lambda_squared"):
        raise ValueError(f"unknown fault {inject_fault!r}")
    return [
        suite_online_vs_batch(seed),
        suite_blr_vs_linear_gp(seed),
        suite_forgetting_vs_spatiotemporal(seed, inject_fault=inject_fault),
        suite_variance_bounds(seed),
        suite_forgetting_trace_identity(seed),
        suite_qklms_center_separation(seed),
        suite_determinism(seed),
    ]
