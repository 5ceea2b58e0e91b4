"""Command-line front end: demos, experiments and the release gate.

Commands
--------
``gpaf fig2 --out DIR``
    One-dimensional GP regression demo: posterior mean, +-2 sigma band and
    five posterior sample paths on a grid, plus the training set, as CSV.
``gpaf track --config FILE --out DIR [--seed N] [--replicates R]``
    The fading-channel tracking experiment: per-replicate learning curves,
    tuned parameters, and a summary table of steady-state NMSE.
``gpaf hyperopt --config FILE``
    Marginal-likelihood optimisation demo on synthetic GP data; writes
    per-restart LML traces and the recovered hyperparameters.
``gpaf check``
    Runs the cross-module equivalence and invariant suites; exit 0 iff all
    pass.

Config files are TOML; command-line flags override file values, and the
``GPAF_SEED`` environment variable is the seed fallback.  All numeric CSV
cells carry 17 significant digits.  Exit codes: 0 success, 1 oracle/suite
failure, 2 I/O or config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import checks, gp_batch
from .channel_sim import NMSE_WINDOW
from .experiments import (
    NumericalFailure,
    Scenario,
    TrackSettings,
    run_tracking_experiment,
)
from .kernels import HyperParams, KernelSpec, gram
from .linalg import IllConditionedError, chol_with_jitter

SCENARIOS = ("fig2_demo", "tracking_sim", "hyperopt_demo", "equivalence_suite")

EXIT_OK = 0
EXIT_SUITE_FAILURE = 1
EXIT_IO = 2
EXIT_NUMERICAL = 3


class ConfigError(ValueError):
    """Bad or missing configuration value."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Parsed experiment description (one per CLI invocation)."""

    scenario: str
    output_dir: str = "."
    seed: int = 0
    replicates: int = 10
    algos: tuple[str, ...] = ("krlst", "qklms", "nlms", "exrls")
    channel: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)  # per-algo overrides
    hyperopt: dict = field(default_factory=dict)
    workers: int = 0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.replicates < 1:
            raise ConfigError("replicates must be at least 1")


def _default_seed() -> int:
    env = os.environ.get("GPAF_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError as exc:
        raise ConfigError(f"GPAF_SEED must be an integer, got {env!r}") from exc


def load_config(path: str, scenario_fallback: str) -> ExperimentConfig:
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid config {path}: {exc}") from exc
    known = {
        "scenario",
        "output_dir",
        "seed",
        "replicates",
        "algos",
        "channel",
        "params",
        "hyperopt",
        "workers",
    }
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    raw.setdefault("scenario", scenario_fallback)
    raw.setdefault("seed", _default_seed())
    if "algos" in raw:
        raw["algos"] = tuple(raw["algos"])
    return ExperimentConfig(**raw)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


# -- fig2 ---------------------------------------------------------------------

FIG2_SPEC = KernelSpec("rbf_only", HyperParams.from_values(1.0, [2.0], 1.0, 0.01))
FIG2_GRID = np.linspace(-3.0, 4.0, 281)


def fig2_training_set(seed: int) -> tuple[np.ndarray, np.ndarray]:
    """20 noisy observations of a function drawn from the demo prior.

    Two isolated points sit on the left, a dense cluster covers the middle,
    and the region x > 3 is left empty so the posterior falls back to the
    prior there.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 31]))
    left = np.array([-2.6, -2.35])
    spacing = 2.5 / 18
    dense = -1.0 + (np.arange(18) + 0.5) * spacing + rng.uniform(-0.3, 0.3, 18) * spacing
    x = np.sort(np.concatenate([left, dense]))[:, None]
    K = gram(FIG2_SPEC, x, include_noise=False)
    L, _ = chol_with_jitter(K)
    f = L @ rng.standard_normal(x.shape[0])
    y = f + math.sqrt(FIG2_SPEC.params.alpha3) * rng.standard_normal(x.shape[0])
    return x, y


def fig2_table(seed: int) -> tuple[np.ndarray, np.ndarray, dict[str, np.ndarray]]:
    """Training set plus the posterior summary columns on the demo grid."""
    x, y = fig2_training_set(seed)
    model = gp_batch.fit(gp_batch.Dataset(x, y), FIG2_SPEC)
    mean, cov = gp_batch.predict_joint(model, FIG2_GRID[:, None])
    sigma_y = np.sqrt(np.clip(np.diag(cov), 0.0, None) + FIG2_SPEC.params.alpha3)
    Ls, _ = chol_with_jitter(cov + 1e-10 * np.eye(cov.shape[0]))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 32]))
    samples = mean[:, None] + Ls @ rng.standard_normal((cov.shape[0], 5))
    cols = {
        "x": FIG2_GRID,
        "mean": mean,
        "lower": mean - 2.0 * sigma_y,
        "upper": mean + 2.0 * sigma_y,
    }
    for j in range(5):
        cols[f"sample_{j + 1}"] = samples[:, j]
    return x, y, cols


def cmd_fig2(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    os.makedirs(args.out, exist_ok=True)
    x, y, cols = fig2_table(seed)
    header = list(cols)
    write_csv(
        os.path.join(args.out, "fig2_posterior.csv"),
        header,
        zip(*(cols[h] for h in header)),
    )
    write_csv(
        os.path.join(args.out, "fig2_train.csv"),
        ["x", "y"],
        zip(x[:, 0], y),
    )
    print(f"wrote fig2_posterior.csv and fig2_train.csv to {args.out}")
    return EXIT_OK


# -- track --------------------------------------------------------------------


def _scenario_name(fdt: float) -> str:
    return f"fdt{fdt:.0e}".replace("e-0", "e-")


def settings_from_config(cfg: ExperimentConfig) -> TrackSettings:
    channel = dict(cfg.channel)
    fdt = channel.pop("fdt", [1e-4, 1e-3])
    if np.ndim(fdt) == 0:
        fdt = [float(fdt)]
    scenarios = tuple(Scenario(name=_scenario_name(f), fdt=float(f)) for f in fdt)
    known = {"n_taps", "snr_db", "n_steps", "budget"}
    unknown = set(channel) - known
    if unknown:
        raise ConfigError(f"unknown channel keys: {sorted(unknown)}")
    return TrackSettings(
        scenarios=scenarios,
        algos=cfg.algos,
        n_steps=int(channel.get("n_steps", 10_000)),
        replicates=cfg.replicates,
        seed=cfg.seed,
        budget=int(channel.get("budget", 100)),
        n_taps=int(channel.get("n_taps", 5)),
        snr_db=float(channel.get("snr_db", 30.0)),
        workers=cfg.workers,
    )


def _tuned_rows(tuned: dict) -> list[tuple[str, str, str, str]]:
    rows = []
    for scen in sorted(tuned):
        for algo in sorted(tuned[scen]):
            for key, val in sorted(tuned[scen][algo].items()):
                if isinstance(val, KernelSpec):
                    rows.append((scen, algo, "kernel_mode", val.mode))
                    for name, v in zip(val.param_names(), val.pack_params()):
                        rows.append((scen, algo, f"kernel_{name}", _fmt(v)))
                else:
                    rows.append((scen, algo, key, _fmt(val)))
    return rows


def cmd_track(args) -> int:
    cfg = load_config(args.config, "tracking_sim")
    if args.seed is not None:
        cfg = ExperimentConfig(**{**cfg.__dict__, "seed": args.seed})
    if args.replicates is not None:
        cfg = ExperimentConfig(**{**cfg.__dict__, "replicates": args.replicates})
    out = args.out or cfg.output_dir
    os.makedirs(out, exist_ok=True)
    settings = settings_from_config(cfg)
    result = run_tracking_experiment(settings, overrides=cfg.params)
    for (scen, algo, rep), curve in zip(result.curve_keys, result.curves):
        write_csv(
            os.path.join(out, f"curve_{scen}_{algo}_rep{rep}.csv"),
            ["step", "nmse_db"],
            zip(curve.step, curve.nmse_db),
        )
    write_csv(
        os.path.join(out, "summary.csv"),
        ["scenario", "algo", "replicates", "nmse_db_mean", "nmse_db_std"],
        (
            (r["scenario"], r["algo"], r["replicates"], r["nmse_db_mean"], r["nmse_db_std"])
            for r in result.summary
        ),
    )
    write_csv(
        os.path.join(out, "tuned.csv"),
        ["scenario", "algo", "param", "value"],
        _tuned_rows(result.tuned),
    )
    for r in result.summary:
        print(
            f"{r['scenario']:>10s} {r['algo']:>6s}: "
            f"{r['nmse_db_mean']:8.2f} dB (std {r['nmse_db_std']:.2f}, "
            f"{r['replicates']} replicates)"
        )
    print(f"wrote curves, tuned.csv and summary.csv to {out}")
    return EXIT_OK


# -- hyperopt -----------------------------------------------------------------


def _hyperopt_demo_data(cfg: dict, seed: int):
    """Synthetic draw from a known GP, for hyperparameter recovery."""
    n = int(cfg.get("n_samples", 200))
    d = int(cfg.get("input_dim", 1))
    gamma = cfg.get("gamma", 2.0)
    if np.ndim(gamma) == 0:
        gamma = [float(gamma)] * d
    true = KernelSpec(
        cfg.get("mode", "rbf_only"),
        HyperParams.from_values(
            cfg.get("alpha1", 1.0), gamma, cfg.get("alpha2", 0.5), cfg.get("alpha3", 0.01)
        ),
    )
    rng = np.random.default_rng(np.random.SeedSequence([seed, 41]))
    X = rng.uniform(-3.0, 3.0, size=(n, d))
    K = gram(true, X, include_noise=False)
    L, _ = chol_with_jitter(K + 1e-12 * np.eye(n))
    f = L @ rng.standard_normal(n)
    y = f + math.sqrt(true.params.alpha3) * rng.standard_normal(n)
    return gp_batch.Dataset(X, y), true


def cmd_hyperopt(args) -> int:
    cfg = load_config(args.config, "hyperopt_demo")
    if args.seed is not None:
        cfg = ExperimentConfig(**{**cfg.__dict__, "seed": args.seed})
    out = args.out or cfg.output_dir
    os.makedirs(out, exist_ok=True)
    hp = dict(cfg.hyperopt)
    restarts = int(hp.get("restarts", 5))
    max_iters = int(hp.get("max_iters", 100))
    data, true = _hyperopt_demo_data(hp, cfg.seed)
    spec0 = KernelSpec(
        true.mode,
        HyperParams(0.0, np.zeros(data.d), 0.0, 0.0),
    )
    best, traces = gp_batch.optimize_hyperparams_traced(
        data, spec0, restarts=restarts, max_iters=max_iters, seed=cfg.seed
    )
    write_csv(
        os.path.join(out, "hyperopt_trace.csv"),
        ["restart", "iteration", "lml"],
        (
            (r, i, v)
            for r, tr in enumerate(traces)
            for i, v in enumerate(tr.lml_path)
        ),
    )
    write_csv(
        os.path.join(out, "hyperopt_result.csv"),
        ["param", "true_log_value", "recovered_log_value"],
        zip(best.param_names(), true.pack_params(), best.pack_params()),
    )
    final = gp_batch.log_marginal_likelihood(data, best)
    print(f"{len(traces)} restarts; best LML {final:.6f}")
    for name, t, r in zip(best.param_names(), true.pack_params(), best.pack_params()):
        print(f"  {name:>14s}: true {t: .4f} recovered {r: .4f}")
    print(f"wrote hyperopt_trace.csv and hyperopt_result.csv to {out}")
    return EXIT_OK


# -- check --------------------------------------------------------------------


def cmd_check(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    results = checks.run_all(seed=seed, inject_fault=args.inject_fault)
    rows = [
        (r.suite, r.max_error, r.tolerance, "pass" if r.passed else "FAIL")
        for r in results
    ]
    for suite, err, tol, status in rows:
        print(f"{suite:32s} max|err| {err:>12.3e}  tol {tol:<8g} {status}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_csv(
            os.path.join(args.out, "check_report.csv"),
            ["suite", "max_abs_error", "tolerance", "status"],
            rows,
        )
    return EXIT_OK if all(r.passed for r in results) else EXIT_SUITE_FAILURE


# -- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gpaf",
        description="GP regression and kernel adaptive filtering experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fig2", help="1-D GP posterior demo (CSV)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_fig2)

    p = sub.add_parser("track", help="fading-channel tracking experiment")
    p.add_argument("--config", required=True, help="TOML experiment config")
    p.add_argument("--out", default=None, help="output directory (overrides config)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--replicates", type=int, default=None)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("hyperopt", help="marginal-likelihood optimisation demo")
    p.add_argument("--config", required=True, help="TOML config")
    p.add_argument("--out", default=None, help="output directory (overrides config)")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_hyperopt)

    p = sub.add_parser("check", help="run equivalence/invariant suites")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="write check_report.csv here")
    p.add_argument(
        "--inject-fault",
        default=None,
        choices=["lambda_squared"],
        help="debug: deliberately break a suite (must exit 1)",
    )
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericalFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ArithmeticError, np.linalg.LinAlgError, IllConditionedError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
