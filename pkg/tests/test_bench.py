"""Tests for the experiment CLI and sweep harness."""

import os

import numpy as np
import pytest

from pdsaddle import bench, imgio, pdcore
from pdsaddle.bench import (ExperimentConfig, center_crop, main,
                            run_experiment, sweep, toy_rate_run)
from pdsaddle.errors import ConfigurationError

FIXTURE = os.path.join(os.path.dirname(__file__), "fixtures", "camera64.pgm")


def small_cfg(**kw):
    base = dict(image=FIXTURE, crop=8, hsize=3, noise=0.2, seed=0, mu=0.1,
                max_outer=5)
    base.update(kw)
    return ExperimentConfig(**base)


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------

def test_resolved_fills_derived_defaults():
    cfg = small_cfg().resolved()
    assert cfg.gamma1 == pytest.approx(0.05)
    assert cfg.r1 == pytest.approx(0.99 / cfg.s1)
    assert cfg.r2 == pytest.approx(0.99 / cfg.s2)


@pytest.mark.parametrize("bad", [
    dict(algo="adam"), dict(mu=-1.0), dict(gamma1=0.2),
    dict(noise=2.0), dict(hsize=4), dict(max_outer=-1),
    dict(alpha=0.0), dict(tol=-1.0), dict(f_star=0.0), dict(s1=0.0),
])
def test_validate_rejects_bad_configs(bad):
    with pytest.raises(ConfigurationError):
        small_cfg(**bad).resolved().validate()


def test_center_crop():
    img = np.arange(36.0).reshape(6, 6)
    crop = center_crop(img, 2)
    assert np.array_equal(crop, img[2:4, 2:4])
    with pytest.raises(ConfigurationError):
        center_crop(img, 7)


# ---------------------------------------------------------------------------
# experiment pipeline
# ---------------------------------------------------------------------------

def test_run_experiment_writes_log_and_image(tmp_path):
    log = str(tmp_path / "run.csv")
    out = str(tmp_path / "restored.pgm")
    record, restored, P = run_experiment(small_cfg(log=log, out=out))
    assert record.outer_iterations == 5
    assert restored.shape == (8, 8)
    assert restored.min() >= 0.0 and restored.max() <= 1.0
    lines = open(log).read().strip().split("\n")
    assert lines[0] == pdcore.CSV_HEADER
    assert len(lines) == 6
    assert imgio.load_image(out).shape == (8, 8)


def test_zero_outer_iterations_emits_header_only_log(tmp_path):
    log = str(tmp_path / "empty.csv")
    record, restored, P = run_experiment(small_cfg(max_outer=0, log=log))
    assert record.outer_iterations == 0
    assert open(log).read().strip() == pdcore.CSV_HEADER
    # without a run, the "restored" image is the degraded input
    assert np.array_equal(restored, P.observed)


def test_runs_are_deterministic_modulo_wall_time():
    rec1, res1, _ = run_experiment(small_cfg())
    rec2, res2, _ = run_experiment(small_cfg())
    assert np.array_equal(res1, res2)
    for name in ("objective", "eps", "delta", "inner_iters"):
        assert np.array_equal(rec1.column(name), rec2.column(name))


def test_single_value_sweep_matches_run_experiment(tmp_path):
    cfg = small_cfg()
    result = sweep(cfg, "alpha", [1.0])
    record, _, _ = run_experiment(cfg)
    assert len(result.rows) == 1
    knob, value, outer, inner, wall_ms, rel_err = result.rows[0]
    assert (knob, value) == ("alpha", 1.0)
    assert outer == record.outer_iterations
    assert inner == record.inner_iterations
    assert np.isnan(rel_err)          # no reference optimum supplied


def test_sweep_sorts_values_and_records_failures(tmp_path):
    path = str(tmp_path / "sweep.csv")
    # with r1 pinned at 0.99, the step condition 1/r1 > s1 fails for
    # s1 = 200 but not for s1 <= 1; the sweep must record and continue
    cfg = small_cfg(r1=0.99)
    result = sweep(cfg, "s1", [0.9, 200.0, 0.5], summary_path=path)
    values = [row[1] for row in result.rows]
    assert values == sorted(values)
    assert [v for v, _ in result.errors] == [200.0]
    lines = open(path).read().strip().split("\n")
    assert lines[0] == bench.SWEEP_HEADER
    assert len(lines) == 4


def test_sweep_rejects_unknown_knob():
    with pytest.raises(ConfigurationError):
        sweep(small_cfg(), "hsize", [3.0])


def test_toy_rate_run_reports_negative_slope():
    record, slope, violations = toy_rate_run(1.0, 1.0, 1.0, 300)
    assert record.outer_iterations == 300
    assert slope < 0.0
    assert violations == 0


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def test_cli_solve_smoke(tmp_path, capsys):
    log = str(tmp_path / "cli.csv")
    rc = main(["solve", "--image", FIXTURE, "--crop", "8", "--hsize", "3",
               "--mu", "0.1", "--max-outer", "3", "--log", log])
    assert rc == 0
    out = capsys.readouterr().out
    assert "algorithm=ipdl" in out and "outer=3" in out
    assert os.path.exists(log)


def test_cli_algo_dashes_map_to_tags(tmp_path, capsys):
    rc = main(["solve", "--image", FIXTURE, "--crop", "8", "--hsize", "3",
               "--mu", "0.1", "--max-outer", "2", "--algo", "pd-exact"])
    assert rc == 0
    assert "algorithm=pd_exact" in capsys.readouterr().out


def test_cli_configuration_error_exits_2(capsys):
    rc = main(["solve", "--image", FIXTURE, "--crop", "8", "--mu", "-1"])
    assert rc == 2
    assert "configuration error" in capsys.readouterr().err


def test_cli_divergence_exits_3(monkeypatch, capsys):
    from pdsaddle.errors import DivergenceError

    def boom(cfg):
        raise DivergenceError("objective blew up")

    monkeypatch.setattr(bench, "run_experiment", boom)
    rc = main(["solve", "--image", FIXTURE, "--crop", "8"])
    assert rc == 3
    assert "divergence" in capsys.readouterr().err


def test_cli_sweep_and_rates(tmp_path, capsys):
    summary = str(tmp_path / "summary.csv")
    rc = main(["sweep", "--image", FIXTURE, "--crop", "8", "--hsize", "3",
               "--mu", "0.1", "--max-outer", "2", "--knob", "alpha",
               "--values", "0.5,1.0", "--summary", summary])
    assert rc == 0
    assert len(open(summary).read().strip().split("\n")) == 3
    rc = main(["rates", "--iters", "120"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "slope=" in out and "violations=0" in out
