import json
from pathlib import Path

import numpy as np
import pytest

import core.gan.trainer as trainer
from core.errors import InvalidParameterError
from core.gan.checkpoint import load_checkpoint
from core.model.schema import MetricsRow, SweepGrid, config_hash, load_experiment_config, load_sweep_grid
from pipelines.findings import build_findings, variant_medians
from pipelines.flows import (
    CHECKPOINT_FILE,
    CONFIG_FILE,
    METRICS_FILE,
    PROGRESS_FILE,
    RUN_LOG_FILE,
    apply_overrides,
    evaluate_checkpoint,
    expand_grid,
    run_experiment,
    sweep,
)
from utils.csvlog import read_rows


PROFILES = Path(__file__).resolve().parents[1] / "profiles"


def _nan_input(x, state, rng):
    return np.full(np.shape(x), np.nan)


# --- single run ---

def test_zero_iteration_run_writes_all_outputs(make_config, tmp_path):
    out = tmp_path / "run"
    outcome = run_experiment(make_config(iterations=0), out)
    assert outcome.ok and outcome.runtime_seconds > 0
    header, rows = read_rows(out / METRICS_FILE)
    assert header == MetricsRow.columns()
    assert len(rows) == 1 and rows[0]["iteration"] == 0
    cfg = load_experiment_config(out / CONFIG_FILE)
    assert cfg.queue.decay_rate == 0.0 and cfg.out_dir == str(out)
    assert load_checkpoint(out / CHECKPOINT_FILE).iteration == 0
    assert (out / RUN_LOG_FILE).read_text(encoding="utf-8").strip()


def test_runs_are_byte_reproducible(make_config, tmp_path):
    cfg = make_config(iterations=4)
    first, second = run_experiment(cfg, tmp_path / "a"), run_experiment(cfg, tmp_path / "b")
    assert (tmp_path / "a" / METRICS_FILE).read_bytes() == (tmp_path / "b" / METRICS_FILE).read_bytes()
    assert first.config_hash == second.config_hash
    _, rows = read_rows(tmp_path / "a" / METRICS_FILE)
    assert rows == [r.model_dump() for r in first.rows]


def test_abort_keeps_the_partial_csv(make_config, tmp_path, monkeypatch):
    monkeypatch.setattr(trainer, "_adversarial_input", _nan_input)
    out = tmp_path / "run"
    outcome = run_experiment(make_config(iterations=3), out)
    assert outcome.status == "aborted" and "d_step" in outcome.error
    _, rows = read_rows(out / METRICS_FILE)
    assert [r["iteration"] for r in rows] == [0]
    assert not (out / CHECKPOINT_FILE).exists()


# --- grid expansion ---

def test_grid_cardinality_and_seeds(make_config):
    grid = SweepGrid(overrides={"strategy.variant": ["fakeclr", "baseline"], "contrastive.tau": [0.1, 0.2]},
                     seeds=[0, 1, 2])
    points = expand_grid(make_config(), grid)
    assert len(points) == 12
    assert sorted({cfg.seed for _, cfg in points}) == [0, 1, 2]
    assert {(o["strategy.variant"], o["contrastive.tau"]) for o, _ in points} == {
        ("fakeclr", 0.1), ("fakeclr", 0.2), ("baseline", 0.1), ("baseline", 0.2)}
    assert all("seed" not in o for o, _ in points)


def test_grid_without_seeds_uses_the_base_seed(make_config):
    points = expand_grid(make_config(seed=9), SweepGrid(overrides={"contrastive.tau": [0.1]}))
    assert [cfg.seed for _, cfg in points] == [9]


def test_variant_override_resets_ablation_flags(make_config):
    base = make_config(strategy={"variant": "instance_fake", "forgetting": True, "diversity_queue": True})
    moved = apply_overrides(base, {"strategy.variant": "instance_perturbation"})
    assert moved.strategy.variant == "instance_perturbation"
    assert not (moved.strategy.forgetting or moved.strategy.diversity_queue or moved.strategy.noise_related)
    kept = apply_overrides(base, {"strategy.variant": "instance_fake", "strategy.forgetting": True})
    assert kept.strategy.forgetting and not kept.strategy.diversity_queue
    # the fakeclr variant always carries its three components
    full = apply_overrides(make_config(strategy={"variant": "baseline"}), {"strategy.variant": "fakeclr"})
    assert full.strategy.noise_related and full.strategy.forgetting and full.strategy.diversity_queue


def test_bad_overrides(make_config):
    for overrides in ({"network.depth": 3}, {"nope.tau": 1}, {"seed.x": 1}):
        with pytest.raises(InvalidParameterError):
            apply_overrides(make_config(), overrides)
    with pytest.raises(InvalidParameterError):
        apply_overrides(make_config(), {"contrastive.tau": -1.0})
    with pytest.raises(InvalidParameterError):
        expand_grid(make_config(), SweepGrid(overrides={"contrastive.tau": []}))


def test_shipped_grids_expand_on_the_desk_profile():
    base = load_experiment_config(PROFILES / "ring100_fakeclr.json")
    assert base.optimizer.lr == 1e-3 and base.optimizer.beta1 == 0.5
    sizes = expand_grid(base, load_sweep_grid(PROFILES / "grid_queue_sizes.json"))
    assert {cfg.queue.initial_size for _, cfg in sizes} == {100, 500, 1000, 2000}

    points = expand_grid(base, load_sweep_grid(PROFILES / "grid_real_in_queue.json"))
    assert len(points) == 12
    # without real keys the start iteration is irrelevant, so those points coincide
    assert len({config_hash(cfg) for _, cfg in points}) == 9
    late = [cfg for o, cfg in points
            if o["strategy.real_in_fake_queue"] == 1.0 and o["strategy.real_in_fake_queue_start"] == 1000]
    assert len(late) == 3
    assert all(cfg.resolved().strategy.real_in_fake_queue_start == 1000 for cfg in late)


# --- sweep ---

def _progress_lines(out):
    return (out / PROGRESS_FILE).read_text(encoding="utf-8").splitlines()


def test_sweep_summarizes_and_resumes(make_config, tmp_path):
    base = make_config(iterations=2)
    grid = SweepGrid(overrides={"strategy.variant": ["fakeclr", "baseline"]})
    out = tmp_path / "sweep"
    result = sweep(base, grid, out)
    assert [r["status"] for r in result.rows] == ["done", "done"]
    assert {r["variant"] for r in result.rows} == {"fakeclr", "baseline"}
    lines = _progress_lines(out)
    assert len(lines) == 4

    header, rows = read_rows(result.summary_path, text_columns=("config_hash", "overrides"))
    assert len(rows) == 2 and "runtime_seconds" in header
    assert json.loads(rows[0]["overrides"]) == {"strategy.variant": "fakeclr"}
    findings = json.loads(result.findings_path.read_text(encoding="utf-8"))
    assert set(findings["medians"]["ring-100"]) == {"fakeclr", "baseline"}
    assert findings["failed_runs"] == []

    again = sweep(base, grid, out)
    assert _progress_lines(out) == lines
    assert [r["status"] for r in again.rows] == ["done", "done"]


def test_single_point_sweep_matches_a_plain_run(make_config, tmp_path):
    cfg = make_config(iterations=3)
    single = run_experiment(cfg, tmp_path / "single")
    result = sweep(cfg, SweepGrid(overrides={"seed": [cfg.seed]}), tmp_path / "sweep")
    assert [r["config_hash"] for r in result.rows] == [single.config_hash]
    run_dir = tmp_path / "sweep" / "runs" / single.config_hash
    assert (run_dir / METRICS_FILE).read_bytes() == (tmp_path / "single" / METRICS_FILE).read_bytes()


def test_duplicate_points_run_once(make_config, tmp_path):
    # fakeclr sets its flags itself, so both grid values give the same run
    grid = SweepGrid(overrides={"strategy.forgetting": [True, False]})
    result = sweep(make_config(iterations=1), grid, tmp_path / "sweep")
    assert len(result.rows) == 1


def test_parallel_sweep_matches_serial(make_config, tmp_path):
    base = make_config(iterations=2)
    grid = SweepGrid(overrides={"strategy.variant": ["fakeclr", "instance_fake"]})
    serial = sweep(base, grid, tmp_path / "serial", jobs=1)
    parallel = sweep(base, grid, tmp_path / "parallel", jobs=2)
    strip = lambda rows: [{k: v for k, v in r.items() if k != "runtime_seconds"} for r in rows]
    assert strip(serial.rows) == strip(parallel.rows)
    for row in serial.rows:
        h = row["config_hash"]
        assert ((tmp_path / "serial" / "runs" / h / METRICS_FILE).read_bytes()
                == (tmp_path / "parallel" / "runs" / h / METRICS_FILE).read_bytes())


def test_aborted_runs_are_recorded_and_not_retried(make_config, tmp_path, monkeypatch):
    monkeypatch.setattr(trainer, "_adversarial_input", _nan_input)
    grid = SweepGrid(overrides={"strategy.variant": ["baseline"]})
    out = tmp_path / "sweep"
    result = sweep(make_config(iterations=2), grid, out)
    assert result.rows[0]["status"] == "aborted"
    assert result.findings["failed_runs"] == [result.rows[0]["config_hash"]]
    lines = _progress_lines(out)
    sweep(make_config(iterations=2), grid, out)
    assert _progress_lines(out) == lines


# --- findings ---

def _row(dataset, variant, fid, ppl_mean=1.0, ppl_std=1.0, status="done", h="h"):
    return {"config_hash": h, "dataset": dataset, "variant": variant, "status": status, "seed": 0,
            "toy_fid": fid, "ppl_w_mean": ppl_mean, "ppl_w_std": ppl_std}


def test_findings_checks():
    rows = [
        _row("ring-100", "fakeclr", 0.1, 0.5, 0.2, h="a"),
        _row("ring-100", "fakeclr", 0.3, 0.7, 0.4, h="b"),
        _row("ring-100", "instance_fake", 0.5, h="c"),
        _row("ring-100", "baseline", 0.9, h="d"),
        _row("ring-100", "instance_real", 0.4, h="e"),
        _row("ring-100", "baseline", 0.0, status="aborted", h="f"),
    ]
    findings = build_findings(rows)
    med = findings["medians"]["ring-100"]
    assert med["fakeclr"]["toy_fid"] == pytest.approx(0.2) and med["fakeclr"]["runs"] == 2
    checks = {c["check"]: c for c in findings["checks"]}
    assert checks["strategy_ordering"]["holds"]
    assert checks["strategy_ordering"]["order"] == ["fakeclr", "instance_fake", "baseline"]
    assert checks["w_path_length"]["holds"]
    assert not checks["instance_real_no_gain"]["holds"]
    assert findings["best_toy_fid"]["config_hash"] == "a"
    assert findings["failed_runs"] == ["f"]


def test_findings_ordering_violation():
    rows = [_row("grid-100", "fakeclr", 0.5), _row("grid-100", "baseline", 0.5)]
    checks = build_findings(rows)["checks"]
    assert [c["check"] for c in checks] == ["strategy_ordering", "w_path_length"]
    assert not any(c["holds"] for c in checks)
    assert variant_medians([_row("x", "baseline", 1.0, status="error")]) == {}


# --- checkpoint re-evaluation ---

def test_evaluate_checkpoint(make_config, tmp_path):
    run_experiment(make_config(iterations=2), tmp_path / "run")
    ckpt = tmp_path / "run" / CHECKPOINT_FILE
    scores = evaluate_checkpoint(ckpt, "ring:100")
    assert scores["iteration"] == 2 and scores["dataset"] == "ring-100" and scores["variant"] == "fakeclr"
    for key in ("toy_fid", "toy_kid", "ppl_z_mean", "ppl_w_mean", "ppl_w_std", "nn_min_dist",
                "coverage_within_delta", "coverage_mean_dist", "inversion_residual", "interp_max_gap_ratio"):
        assert np.isfinite(scores[key])
    assert scores == evaluate_checkpoint(ckpt, "ring:100")
    assert evaluate_checkpoint(ckpt, "ring:100", seed=5)["toy_fid"] != scores["toy_fid"]
