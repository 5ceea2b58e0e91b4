"""Time-varying nonlinear channel simulation and the tracking loop.

The channel is a memoryless saturation (tanh) followed by a multipath FIR
filter whose taps are independent Rayleigh-fading processes with a Jakes
Doppler spectrum, plus additive white Gaussian noise.  Each tap is built by
a sum of sinusoids whose frequencies follow the arcsine Doppler density
(f = fdT cos(psi), psi stratified-uniform on [0, pi)), which gives the Jakes
autocorrelation J0(2 pi fdT dt) in expectation.

``run_tracking`` replays a stream through one of the supported algorithms
in a strict prequential fashion: each output is predicted from data strictly
in the past, then revealed for training.  Accuracy is reported as a running
NMSE learning curve in dB over a trailing window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import baselines, gp_online
from .kernels import KernelSpec

NMSE_WINDOW = 500

# sub-stream tags for seed derivation
_TAPS, _SOURCE, _NOISE = 0, 1, 2

ALGORITHMS = ("krlst", "nlms", "exrls", "qklms")


@dataclass(frozen=True)
class ChannelConfig:
    """Scenario parameters for one simulated stream.

    fdt is the normalized Doppler frequency (cycles per sample); snr_db may
    be ``math.inf`` to disable observation noise.
    """

    fdt: float
    n_steps: int
    seed: int
    n_taps: int = 5
    snr_db: float = 30.0
    source: str = "gaussian_unit"
    n_sinusoids: int = 64

    def __post_init__(self):
        if self.n_taps < 1:
            raise ValueError("n_taps must be at least 1")
        if self.fdt <= 0.0:
            raise ValueError("fdt must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")
        if self.n_sinusoids < 1:
            raise ValueError("n_sinusoids must be at least 1")
        if self.source != "gaussian_unit":
            raise ValueError(f"unknown source model {self.source!r}")


@dataclass
class ChannelRealization:
    """One draw of the fading process: taps[t, j] plus the calibrated noise sigma."""

    taps: np.ndarray
    noise_sigma: float = 0.0


@dataclass(frozen=True)
class Stream:
    """Regression view of the simulated channel.

    X[i] is the sliding window (s_i, s_{i-1}, ..., s_{i-n_taps+1}) of source
    samples (zero-padded before the start); y[i] is the noisy channel output
    and clean[i] the noise-free one.
    """

    X: np.ndarray
    y: np.ndarray
    clean: np.ndarray


@dataclass(frozen=True)
class LearningCurve:
    """Running NMSE (dB) of one algorithm on one stream."""

    step: np.ndarray
    nmse_db: np.ndarray
    algo: str
    replicate: int = 0

    def __post_init__(self):
        if self.step.shape != self.nmse_db.shape:
            raise ValueError("step and nmse_db must have equal length")


def gen_fading_taps(cfg: ChannelConfig) -> ChannelRealization:
    """Draw the Rayleigh-fading tap trajectories for one realization.

    Each tap is sqrt(2/N) * sum_k cos(2 pi f_k t + phi_k) scaled so the
    expected total channel power over all taps is 1; frequencies are
    stratified over the arcsine Doppler density and phases are i.i.d.
    uniform.
    """
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _TAPS]))
    n, big_n = cfg.n_steps, cfg.n_sinusoids
    t = np.arange(n)
    taps = np.empty((n, cfg.n_taps))
    amp = math.sqrt(2.0 / big_n) / math.sqrt(cfg.n_taps)
    for j in range(cfg.n_taps):
        psi = (np.arange(big_n) + rng.uniform(size=big_n)) * (np.pi / big_n)
        freqs = cfg.fdt * np.cos(psi)
        phases = rng.uniform(0.0, 2.0 * np.pi, size=big_n)
        taps[:, j] = amp * np.cos(
            2.0 * np.pi * t[:, None] * freqs[None, :] + phases[None, :]
        ).sum(axis=1)
    return ChannelRealization(taps=taps)


def synthesize_stream(cfg: ChannelConfig, realization: ChannelRealization) -> Stream:
    """Push a unit-Gaussian source through tanh, the fading FIR and AWGN.

    The noise standard deviation is calibrated against the empirical power
    of the clean output so the realized SNR matches ``cfg.snr_db``; the
    value used is recorded on ``realization.noise_sigma``.
    """
    if realization.taps.shape != (cfg.n_steps, cfg.n_taps):
        raise ValueError("realization does not match the channel config")
    n, d = cfg.n_steps, cfg.n_taps
    src_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _SOURCE]))
    s = src_rng.standard_normal(n)
    u = np.tanh(s)

    # lagged source windows, zero-padded before the start of the stream
    X = np.zeros((n, d))
    U = np.zeros((n, d))
    for j in range(d):
        X[j:, j] = s[: n - j]
        U[j:, j] = u[: n - j]
    clean = np.einsum("ij,ij->i", realization.taps, U)

    if math.isinf(cfg.snr_db):
        sigma = 0.0
        y = clean.copy()
    else:
        power = float(np.mean(clean**2))
        sigma = math.sqrt(power / (10.0 ** (cfg.snr_db / 10.0)))
        noise_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _NOISE]))
        y = clean + sigma * noise_rng.standard_normal(n)
    realization.noise_sigma = sigma
    return Stream(X=X, y=y, clean=clean)


def nmse_curve(errors: np.ndarray, targets: np.ndarray, window: int = NMSE_WINDOW) -> np.ndarray:
    """Trailing-window NMSE in dB: 10 log10(sum e^2 / sum y^2) over the
    last ``window`` steps (fewer near the start)."""
    e2 = np.concatenate([[0.0], np.cumsum(errors**2)])
    y2 = np.concatenate([[0.0], np.cumsum(targets**2)])
    n = errors.shape[0]
    idx = np.arange(1, n + 1)
    lo = np.maximum(idx - window, 0)
    num = e2[idx] - e2[lo]
    den = y2[idx] - y2[lo]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 10.0 * np.log10(num / den)
    return out


def steady_state_nmse(curve: LearningCurve, last: int = NMSE_WINDOW) -> float:
    """Mean of the last ``last`` entries of the learning curve."""
    return float(np.mean(curve.nmse_db[-last:]))


def run_tracking(stream: Stream, algo: str, params: dict) -> LearningCurve:
    """Prequential tracking of one stream by one algorithm.

    ``params`` carries the tuned algorithm settings; for ``krlst`` it must
    contain a fitted ``spec`` (KernelSpec), ``lam`` and ``budget``.
    The optional key ``replicate`` only labels the returned curve.
    """
    if algo not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algo!r}")
    X, y = stream.X, stream.y
    n, d = X.shape
    preds = np.empty(n)

    if algo == "krlst":
        spec: KernelSpec = params["spec"]
        lam = float(params.get("lam", 1.0))
        budget = params.get("budget")
        state = gp_online.init(spec, budget=budget)
        for i in range(n):
            state, p = gp_online.step(state, X[i], y[i], t=i, lam=lam)
            preds[i] = p.mean
    elif algo == "nlms":
        st = baselines.nlms_init(
            d, params["step_size"], eps=params.get("eps", 1e-6)
        )
        for i in range(n):
            st, preds[i] = baselines.nlms_step(st, X[i], y[i])
    elif algo == "exrls":
        st = baselines.exrls_init(
            d, params["beta"], params["q"], p0=params.get("p0", 1.0)
        )
        for i in range(n):
            st, preds[i] = baselines.exrls_step(st, X[i], y[i])
    else:  # qklms
        st = baselines.qklms_init(
            d, params["step_size"], params["quant_eps"], params["gamma"]
        )
        for i in range(n):
            st, preds[i] = baselines.qklms_step(st, X[i], y[i])

    errors = y - preds
    return LearningCurve(
        step=np.arange(n),
        nmse_db=nmse_curve(errors, y),
        algo=algo,
        replicate=int(params.get("replicate", 0)),
    )


def make_stream(cfg: ChannelConfig) -> tuple[ChannelRealization, Stream]:
    """Convenience: draw a realization and synthesize its stream."""
    realization = gen_fading_taps(cfg)
    stream = synthesize_stream(cfg, realization)
    return realization, stream
