import numpy as np
import pytest

from gpaf.experiments import (
    NumericalFailure,
    Scenario,
    TrackSettings,
    derived_seed,
    run_tracking_experiment,
    tune_scenario,
)
from gpaf.kernels import HyperParams, KernelSpec


class TestDerivedSeed:
    def test_deterministic(self):
        assert derived_seed(0, 1, 2) == derived_seed(0, 1, 2)

    def test_distinct_across_parts(self):
        seeds = {derived_seed(0, i, j) for i in range(4) for j in range(10)}
        assert len(seeds) == 40
        assert derived_seed(0, 1) != derived_seed(1, 0)


class TestNumericalFailure:
    def test_carries_context(self):
        exc = NumericalFailure("fdt1e-4", "krlst", 3, ValueError("boom"))
        assert exc.scenario == "fdt1e-4"
        assert exc.algo == "krlst"
        assert exc.replicate == 3
        msg = str(exc)
        assert "fdt1e-4" in msg and "krlst" in msg and "replicate=3" in msg


def tiny_settings(**kw):
    base = dict(
        scenarios=(Scenario("fdt1e-4", 1e-4),),
        algos=("nlms",),
        n_steps=600,
        replicates=2,
        seed=0,
    )
    base.update(kw)
    return TrackSettings(**base)


class TestTuning:
    def test_override_is_used_verbatim(self):
        settings = tiny_settings()
        tuned = tune_scenario(
            settings, 0, None, overrides={"nlms": {"step_size": 0.321}}
        )
        assert tuned["nlms"]["step_size"] == 0.321

    def test_grid_tuning_picks_from_grid(self):
        from gpaf.experiments import NLMS_GRID

        settings = tiny_settings()
        tuned = tune_scenario(settings, 0, None)
        assert tuned["nlms"]["step_size"] in NLMS_GRID


class TestRunTrackingExperiment:
    def test_krlst_with_pinned_kernel_skips_ml_fit(self):
        # a full krlst override (kernel included) must run without any
        # marginal-likelihood machinery and still produce a sane curve
        overrides = {
            "krlst": {
                "kernel": {
                    "mode": "composite",
                    "alpha1": 0.4,
                    "gamma": 0.15,
                    "alpha2": 0.3,
                    "alpha3": 6e-4,
                },
                "lam": 0.999,
                "budget": 30,
            }
        }
        settings = tiny_settings(algos=("krlst",), n_steps=1200, replicates=1)
        result = run_tracking_experiment(settings, overrides=overrides)
        assert len(result.curves) == 1
        row = result.summary[0]
        assert row["algo"] == "krlst"
        assert row["nmse_db_mean"] < -5.0
        spec = result.tuned["fdt1e-4"]["krlst"]["spec"]
        assert isinstance(spec, KernelSpec)
        assert spec.params.log_gamma.shape == (5,)

    def test_summary_counts_match_replicates(self):
        result = run_tracking_experiment(tiny_settings())
        assert len(result.curves) == 2
        assert result.summary[0]["replicates"] == 2
        assert result.summary[0]["nmse_db_std"] >= 0.0
