import json
import math
import os

import numpy as np
import pytest

from holdertensor import (
    BOUND_TAGS,
    ConfigError,
    ExperimentConfig,
    build_instance,
    load_run,
    lower_bound_evaluate,
    parse_instance_spec,
    read_trace_csv,
    replay_bounds,
    run_batch,
    run_experiment,
    slope_estimate,
    write_summary,
    write_trace_csv,
)
from holdertensor.bench import SCHEMES, SUMMARY_FILE, TRACE_FILE
from holdertensor.schemes import TRACE_COLUMNS, RunTrace

# scheme -> (config, status, iterations, oracle calls, final value)
GOLDEN = {
    "alg1": (dict(instance="quadratic:n=4,cond=10", epsilon=1e-8),
             "converged", 5, 5, -1.4089599936621653),
    "alg2": (dict(instance="power_norm:n=4,degree=3", epsilon=1e-6),
             "converged", 12, 32, 0.00210627244827663),
    "alg3": (dict(instance="quadratic:n=4,phi=l1,weight=0.1", epsilon=1e-8, nu=1.0),
             "converged", 3, 3, -1.1915645580582026),
    "alg4": (dict(instance="power_norm:n=4,degree=3,phi=box,bound=0.5", epsilon=1e-6,
                  nu=1.0), "converged", 13, 26, 0.0465641019634185),
    "alg5": (dict(instance="quadratic:n=4", nu=1.0, max_iters=10),
             "completed", 10, 10, -1.4089579267247065),
    "alg6": (dict(instance="power_norm:n=3,degree=3", epsilon=1e-3, nu=1.0),
             "converged", 1, 750, 5.6176623021725314e-05),
    "algA": (dict(instance="quadratic:n=4", nu=1.0, max_iters=10),
             "completed", 10, 10, -1.4089597660675073),
}


def same_rows(a, b):
    """Row equality treating NaN entries as equal."""
    return len(a) == len(b) and all(
        x == y or (isinstance(x, float) and math.isnan(x) and math.isnan(y))
        for ra, rb in zip(a, b) for x, y in zip(ra, rb))


def golden_config(scheme, out=None, **extra):
    kwargs = dict(GOLDEN[scheme][0], **extra)
    return ExperimentConfig(scheme=scheme, seed=7, out=out, **kwargs)


class TestInstanceSpec:
    def test_parse(self):
        spec = parse_instance_spec("power_norm:degree=4, n=16")
        assert spec.name == "power_norm"
        assert spec.get("n") == "16" and spec.get("degree") == "4"
        assert str(spec) == "power_norm:degree=4,n=16"
        assert parse_instance_spec("hard").params == ()

    @pytest.mark.parametrize("text,path", [("rosen:n=2", "instance.name"),
                                           ("quadratic:k=3", "instance.params.k"),
                                           ("quadratic:n", "instance.params.n")])
    def test_errors(self, text, path):
        with pytest.raises(ConfigError) as info:
            parse_instance_spec(text)
        assert info.value.path == path

    @pytest.mark.parametrize("text,path", [("quadratic:n=0", "instance.params.n"),
                                           ("quadratic:n=x", "instance.params.n"),
                                           ("quadratic:cond=0.5", "instance.params.cond"),
                                           ("quadratic:phi=tv", "instance.params.phi"),
                                           ("quadratic:x0=far", "instance.params.x0"),
                                           ("power_norm:center=e1", "instance.params.center"),
                                           ("power_norm:degree=1.5", "instance.power_norm")])
    def test_build_errors(self, text, path):
        with pytest.raises(ConfigError) as info:
            build_instance(text)
        assert info.value.path == path

    def test_build_quadratic(self):
        f, phi, x0, extra = build_instance("quadratic:n=5,cond=100", seed=3)
        lam = np.linalg.eigvalsh(f.hessian(x0))
        np.testing.assert_allclose([lam[0], lam[-1]], [1.0, 100.0], rtol=1e-12)
        assert phi is None
        assert extra["D0"] >= np.linalg.norm(x0 - f.info["x_star"]) - 1e-12

    def test_build_hard_defaults(self):
        f, _, x0, _ = build_instance("hard:n=10,k=6")
        assert np.all(x0 == 0.0) and f.info["f_star"] == pytest.approx(-4.0)

    def test_build_box_clips_start(self):
        _, phi, x0, extra = build_instance("quadratic:n=6,phi=box,bound=0.1,x0=ones")
        assert np.all(x0 == 0.1) and phi.contains(x0)
        assert extra["composite_optimum_unknown"] and "f_star_lower" in extra

    def test_seeded(self):
        a = build_instance("power_norm:n=4", seed=5)
        b = build_instance("power_norm:n=4", seed=5)
        np.testing.assert_array_equal(a[2], b[2])
        np.testing.assert_array_equal(a[0].info["x_star"], b[0].info["x_star"])


class TestConfig:
    @pytest.mark.parametrize("field,value", [("epsilon", 0.0), ("p", 4), ("nu", 2.0),
                                             ("H0", -1.0), ("theta", -0.1),
                                             ("max_iters", -1), ("seed", -3),
                                             ("fixed_M", 0.0), ("delta", 0.0),
                                             ("R", 0.5), ("S", 0.2)])
    def test_field_paths(self, field, value):
        cfg = ExperimentConfig(instance="quadratic", scheme="alg1", **{field: value})
        with pytest.raises(ConfigError) as info:
            cfg.validate()
        assert info.value.path == f"config.{field}"

    def test_unknown_scheme(self):
        with pytest.raises(ConfigError, match="scheme"):
            ExperimentConfig(instance="quadratic", scheme="alg9").validate()

    def test_fixed_schemes_need_nu(self):
        with pytest.raises(ConfigError) as info:
            ExperimentConfig(instance="quadratic", scheme="alg3").validate()
        assert info.value.path == "config.nu"

    def test_smooth_schemes_reject_phi(self):
        with pytest.raises(ConfigError) as info:
            ExperimentConfig(instance="quadratic:phi=l1", scheme="alg1").validate()
        assert info.value.path == "instance.params.phi"

    def test_incompatible_instance(self):
        with pytest.raises(ConfigError):
            run_experiment(ExperimentConfig(instance="log_sum_exp", scheme="alg3", nu=1.0))

    def test_alg6_without_distance(self):
        cfg = ExperimentConfig(instance="quadratic:phi=l1", scheme="alg6", nu=1.0)
        with pytest.raises(ConfigError) as info:
            run_experiment(cfg)
        assert info.value.path == "config.R"


class TestGolden:
    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_scheme(self, scheme):
        _, status, iters, calls, value = GOLDEN[scheme]
        trace = run_experiment(golden_config(scheme))
        last = trace.rows[-1]
        assert trace.status == status
        assert last[0] == iters and last[6] == calls
        assert last[1] == pytest.approx(value, rel=1e-8, abs=1e-12)
        for report in replay_bounds(trace):
            assert report.skipped or report.satisfied, report.line()

    def test_every_scheme_covered(self):
        assert set(GOLDEN) == set(SCHEMES)


class TestFiles:
    def test_csv_round_trip(self, tmp_path):
        trace = run_experiment(golden_config("alg2"))
        path = tmp_path / "t.csv"
        text = write_trace_csv(trace, path, x_coords=True)
        assert text.splitlines()[0] == ",".join(TRACE_COLUMNS) + ",x_coords"
        back = read_trace_csv(path)
        assert back.rows == trace.rows
        for a, b in zip(back.iterates, trace.iterates):
            np.testing.assert_array_equal(a, b)

    def test_csv_nan_and_no_coords(self, tmp_path):
        trace = run_experiment(golden_config("alg1"))
        text = write_trace_csv(trace, tmp_path / "t.csv")
        assert "nan" in text and "x_coords" not in text
        back = read_trace_csv(tmp_path / "t.csv")
        assert all(math.isnan(r[4]) for r in back.rows)
        assert same_rows(back.rows, trace.rows)

    def test_bad_header(self, tmp_path):
        (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="header"):
            read_trace_csv(tmp_path / "bad.csv")

    def test_deterministic_files(self, tmp_path):
        for name in ("a", "b"):
            run_experiment(golden_config("alg2", out=str(tmp_path / name)))
        assert (tmp_path / "a" / TRACE_FILE).read_bytes() == \
            (tmp_path / "b" / TRACE_FILE).read_bytes()
        summaries = [json.loads((tmp_path / name / SUMMARY_FILE).read_text()) for name in "ab"]
        for s in summaries:
            s["config"].pop("out")
        assert summaries[0] == summaries[1]

    def test_summary(self, tmp_path):
        out = tmp_path / "run"
        trace = run_experiment(golden_config("algA", out=str(out)))
        summary = json.loads((out / SUMMARY_FILE).read_text())
        assert summary["schema_version"] == 1
        assert summary["scheme"] == "algA" and summary["status"] == "completed"
        assert summary["iterations"] == 10 and summary["oracle_calls"] == 10
        assert summary["min_grad_norm"] == trace.min_gradient()
        assert len(summary["series"]["A"]) == 10
        assert summary["config"]["seed"] == 7

    def test_summary_in_memory(self):
        trace = RunTrace("alg1", {"x": np.arange(2.0), "bad": math.inf})
        trace.append(0, 1.0, 2.0, 1.0, math.nan, 0, 0, "start")
        data = json.loads(write_summary(trace))
        assert data["meta"] == {"bad": None, "x": [0.0, 1.0]}

    def test_load_run(self, tmp_path):
        out = tmp_path / "run"
        trace = run_experiment(golden_config("alg1", out=str(out)))
        loaded = load_run(str(out))
        assert loaded.scheme == "alg1" and loaded.status == "converged"
        assert same_rows(loaded.rows, trace.rows)
        for a, b in zip(replay_bounds(loaded), replay_bounds(trace)):
            assert a.line() == b.line()

    def test_load_rejects_schema(self, tmp_path):
        out = tmp_path / "run"
        run_experiment(golden_config("alg1", out=str(out)))
        data = json.loads((out / SUMMARY_FILE).read_text())
        data["schema_version"] = 99
        (out / SUMMARY_FILE).write_text(json.dumps(data))
        with pytest.raises(ValueError, match="schema_version"):
            load_run(str(out))

    def test_batch(self, tmp_path):
        configs = [golden_config(s, out=str(tmp_path / s)) for s in ("alg1", "alg3")]
        configs.append(ExperimentConfig(instance="quadratic", scheme="alg3",
                                        out=str(tmp_path / "bad")))
        results = run_batch(configs, max_workers=2)
        assert [r[0] for r in results] == ["converged", "converged", "error"]
        assert "config.nu" in results[2][1]
        assert os.path.exists(tmp_path / "alg1" / TRACE_FILE)

    def test_batch_needs_distinct_outputs(self, tmp_path):
        cfg = golden_config("alg1", out=str(tmp_path))
        with pytest.raises(ConfigError):
            run_batch([cfg, cfg])


class TestReplay:
    def test_unknown_tag(self):
        trace = run_experiment(golden_config("alg1"))
        with pytest.raises(ValueError, match="unknown bound"):
            replay_bounds(trace, tags=["6.1"])

    def test_large_epsilon_skipped(self):
        trace = run_experiment(golden_config("alg2", epsilon=2.0))
        (report,) = replay_bounds(trace, tags=["5.8"])
        assert report.skipped and "ε ∈ (0,1)" in report.skipped_reason
        assert not report.satisfied

    def test_missing_metadata_skipped(self):
        trace = run_experiment(golden_config("algA"))
        meta = {k: v for k, v in trace.meta.items() if k != "x_star"}
        (report,) = replay_bounds(trace, meta=meta, tags=["B9"])
        assert report.skipped and not report.satisfied

    def test_other_scheme_skipped(self):
        trace = run_experiment(golden_config("alg1"))
        (report,) = replay_bounds(trace, tags=["B19"])
        assert report.skipped and "alg1" in report.skipped_reason

    def test_all_tags_known(self):
        assert set(BOUND_TAGS) >= {"3.10", "3.12", "june4.13", "5.8", "ale5.12", "ale5.16",
                                   "5.23", "B9", "B19"}

    def test_violation_detected(self):
        trace = run_experiment(golden_config("alg1"))
        fake = RunTrace("alg1", dict(trace.meta))
        for row in trace.rows:
            fake.rows.append(row[:6] + (row[6] + 1000,) + row[7:])
            fake.iterates.append(None)
        (report,) = replay_bounds(fake, tags=["3.10"])
        assert not report.skipped and not report.satisfied
        assert report.worst_margin < 0 and "VIOLATED" in report.line()


class TestSlope:
    def test_exact_power_law(self):
        t = np.arange(1, 200, dtype=float)
        g = np.concatenate([[1.0], t ** -2.0])
        assert slope_estimate(g, (1, 199)) == pytest.approx(-2.0, abs=1e-9)

    def test_envelope_used(self):
        g = np.array([1.0, 0.5, 2.0, 0.25, 3.0])
        # envelope 0.5, 0.5, 0.25, 0.25 on iterations 1..4
        s = slope_estimate(g, (1, 4))
        ref = np.polyfit(np.log([1, 2, 3, 4]), np.log([0.5, 0.5, 0.25, 0.25]), 1)[0]
        assert s == pytest.approx(ref, rel=1e-12)

    @pytest.mark.parametrize("window", [(0, 3), (3, 3), (1, 50)])
    def test_degenerate_window(self, window):
        with pytest.raises(ValueError):
            slope_estimate(np.ones(10), window)

    def test_zero_gradient(self):
        with pytest.raises(ValueError, match="positive"):
            slope_estimate(np.array([1.0, 0.5, 0.0, 0.0]), (1, 3))


class TestLowerBound:
    def test_distance_exponent_first_order(self):
        a = lower_bound_evaluate(1, 1.0, 9, "distance")
        b = lower_bound_evaluate(1, 1.0, 19, "distance")
        assert math.log(b / a) / math.log(2.0) == pytest.approx(2.0, rel=1e-12)

    def test_residual_exponent(self):
        a = lower_bound_evaluate(2, 1.0, 10, "residual")
        b = lower_bound_evaluate(2, 1.0, 20, "residual")
        assert math.log(b / a) / math.log(2.0) == pytest.approx(7.0 / 6.0, rel=1e-12)

    def test_constants(self):
        D = (4 * math.sqrt(2.0)) ** (1 / 3) * (2 / 3) ** (2 / 3)
        assert lower_bound_evaluate(2, 1.0, 2, "residual") == pytest.approx(D * 2 ** (7 / 6))
        L = 2 ** 1.5 / 3.0 * 3.0 * 2.0
        assert lower_bound_evaluate(2, 1.0, 2, "distance") == pytest.approx(L * 3 ** 3.5)

    @pytest.mark.parametrize("mode", ["residual", "distance"])
    def test_monotone(self, mode):
        vals = [lower_bound_evaluate(3, 0.5, t, mode) for t in range(2, 40)]
        assert np.all(np.diff(vals) > 0)

    @pytest.mark.parametrize("args", [(2, 1.0, 1, "residual"), (2, 1.5, 3, "residual"),
                                      (0, 1.0, 3, "distance"), (2, 1.0, 3, "other")])
    def test_errors(self, args):
        with pytest.raises(ValueError):
            lower_bound_evaluate(*args)
