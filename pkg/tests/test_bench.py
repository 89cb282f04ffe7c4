import numpy as np
import pytest

from specdrive.bench import WORKLOADS, BenchReport, fps_stats, run_bench
from specdrive.errors import ConfigError, DataError
from specdrive.preprocess import StageTiming


class TestFpsStats:
    def test_reference_example(self):
        s = fps_stats([50.0, 100.0])
        assert s["fps_mean"] == pytest.approx(15.0)   # (20 + 10) / 2
        assert s["fps_median"] == pytest.approx(10.0)  # lower middle
        assert s["fps_min"] == pytest.approx(10.0)
        assert s["fps_max"] == pytest.approx(20.0)

    def test_ms_summary(self):
        s = fps_stats([50.0, 100.0])
        assert s["ms_mean"] == pytest.approx(75.0)
        assert s["ms_median"] == pytest.approx(50.0)

    def test_median_is_lower_middle(self):
        s = fps_stats([10.0, 20.0, 40.0, 80.0])
        fps = sorted(1000.0 / np.array([10, 20, 40, 80]))
        assert s["fps_median"] == pytest.approx(fps[1])

    def test_odd_count_median_is_exact_middle(self):
        s = fps_stats([10.0, 20.0, 40.0])
        assert s["fps_median"] == pytest.approx(50.0)

    def test_ordering_invariant(self, rng):
        times = rng.uniform(1.0, 50.0, 31)
        s = fps_stats(times)
        assert s["fps_min"] <= s["fps_median"] <= s["fps_max"]
        assert s["fps_min"] <= s["fps_mean"] <= s["fps_max"]

    def test_single_sample(self):
        s = fps_stats([25.0])
        assert s["fps_mean"] == s["fps_median"] == pytest.approx(40.0)

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            fps_stats([])

    def test_nonpositive_rejected(self):
        with pytest.raises(DataError):
            fps_stats([10.0, 0.0])
        with pytest.raises(DataError):
            fps_stats([10.0, -5.0])


class TestRunBench:
    def test_workload_names(self):
        assert set(WORKLOADS) == {"preprocess", "unet_float", "unet_quant",
                                  "mlp", "end_to_end"}

    def test_unknown_workload(self):
        with pytest.raises(ConfigError):
            run_bench("fft", iterations=1)

    def test_invalid_iterations(self):
        with pytest.raises(ConfigError):
            run_bench("mlp", iterations=0)
        with pytest.raises(ConfigError):
            run_bench("mlp", iterations=1, warmup=-1)

    def test_callable_workload(self):
        calls = []

        def tick():
            calls.append(1)

        rep = run_bench(tick, iterations=4, warmup=2)
        assert rep.workload == "tick"
        assert rep.iterations == 4
        assert len(rep.times_ms) == 4
        assert len(calls) == 6  # warmup included in call count, not timings
        assert rep.stage_timing is None

    def test_preprocess_reports_stage_breakdown(self):
        rep = run_bench("preprocess", iterations=2, warmup=0, seed=1)
        assert isinstance(rep, BenchReport)
        assert isinstance(rep.stage_timing, StageTiming)
        assert rep.stage_timing.total > 0
        assert rep.stats["fps_mean"] > 0

    def test_mlp_workload_runs(self):
        rep = run_bench("mlp", iterations=2, warmup=1, seed=0)
        assert rep.workload == "mlp"
        assert rep.stage_timing is None
        assert len(rep.times_ms) == 2

    def test_stats_match_times(self):
        rep = run_bench("mlp", iterations=3, warmup=0)
        want = fps_stats(rep.times_ms)
        assert rep.stats == pytest.approx(want)
