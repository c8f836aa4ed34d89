# coding: utf-8
"""
Experiment flows: single run, grid sweep and checkpoint re-evaluation.
main.py から呼び出される関数群です。

- run_experiment:      train -> metrics.csv / config.json / final.ckpt / run.log
- sweep:               grid x seeds -> runs/<hash>/ + summary.csv + findings.json (resumable)
- evaluate_checkpoint: final.ckpt + dataset spec -> metric dict
"""
from __future__ import annotations
import itertools
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import ValidationError
from tqdm import tqdm

# main.py が src をパスに追加することを前提とします
from core.data.datasets import load_dataset
from core.errors import AbortRunError, InvalidParameterError
from core.gan.checkpoint import load_checkpoint, save_checkpoint
from core.gan.trainer import train
from core.metrics.evaluation import EvaluationContext, evaluate_generator, sample_generator
from core.metrics.latent import interpolation_gaps, invert
from core.metrics.neighbors import reverse_neighbor_report
from core.model.schema import DatasetSpec, ExperimentConfig, MetricsRow, SweepGrid, config_hash
from core.numerics.rng import Rng
from pipelines.findings import build_findings
from utils.config import progress_enabled
from utils.csvlog import CsvLog, write_rows
from utils.fs import ensure_dir, write_text
from utils.progress_jsonl import JsonlProgress

# --- Constants ---
METRICS_FILE = "metrics.csv"
CONFIG_FILE = "config.json"
CHECKPOINT_FILE = "final.ckpt"
RUN_LOG_FILE = "run.log"
SUMMARY_FILE = "summary.csv"
FINDINGS_FILE = "findings.json"
PROGRESS_FILE = "progress.jsonl"
SWEEP_KEY = "sweep"

# variant を上書きするときにリセットするアブレーション用フラグ
ABLATION_FLAGS = ("noise_related", "forgetting", "diversity_queue")

SUMMARY_COLUMNS: List[str] = (
    ["config_hash", "dataset", "variant", "seed", "overrides", "status"]
    + MetricsRow.columns()
    + ["runtime_seconds", "error"]
)

logger = logging.getLogger(__name__)


@dataclass
class RunOutcome:
    config_hash: str
    out_dir: Path
    status: str                     # "done" | "aborted"
    rows: List[MetricsRow] = field(default_factory=list)
    error: Optional[str] = None
    runtime_seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == "done"

    @property
    def final(self) -> Optional[MetricsRow]:
        return self.rows[-1] if self.rows else None


# --- Helper Functions ---

def _attach_run_log(path: Path) -> logging.Handler:
    handler = logging.FileHandler(path, mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter('%(asctime)s - %(name)s(%(lineno)d) - %(levelname)s - %(message)s'))
    handler.setLevel(logging.DEBUG)
    root = logging.getLogger()
    root.addHandler(handler)
    if root.level > logging.DEBUG or root.level == logging.NOTSET:
        root.setLevel(logging.DEBUG)
    return handler


def _detach_run_log(handler: logging.Handler) -> None:
    logging.getLogger().removeHandler(handler)
    handler.close()


def with_seed(cfg: ExperimentConfig, seed: Optional[int]) -> ExperimentConfig:
    return cfg if seed is None else cfg.model_copy(update={"seed": int(seed)})


# --- Single run ---

def run_experiment(cfg: ExperimentConfig, out_dir: Optional[Union[str, Path]] = None) -> RunOutcome:
    """
    Train ``cfg`` and write ``metrics.csv`` (one row per evaluation, flushed as
    produced), ``config.json`` (resolved config) and ``final.ckpt`` into the
    output directory. A training abort keeps the partial CSV and returns
    status ``aborted`` instead of raising.
    """
    resolved = cfg.resolved()
    run_hash = config_hash(resolved)
    out = Path(out_dir or resolved.out_dir or Path("runs") / run_hash)
    ensure_dir(out)
    resolved = resolved.model_copy(update={"out_dir": str(out)})

    handler = _attach_run_log(out / RUN_LOG_FILE)
    started = time.perf_counter()
    outcome = RunOutcome(run_hash, out, "done")
    try:
        logger.info(f"--- Starting run {run_hash}: {resolved.strategy.variant} on {resolved.dataset.label} -> {out} ---")
        write_text(out / CONFIG_FILE, resolved.to_json() + "\n")
        with CsvLog(out / METRICS_FILE, MetricsRow.columns()) as csv_log:
            def _on_row(row: MetricsRow) -> None:
                csv_log.write(row.model_dump())
                outcome.rows.append(row)

            try:
                result = train(resolved, callback=_on_row)
            except AbortRunError as e:
                logger.error(f"Run {run_hash} aborted at iteration {e.iteration} ({e.phase}): {e}")
                outcome.status = "aborted"
                outcome.error = str(e)
                return outcome
        save_checkpoint(out / CHECKPOINT_FILE, resolved, result.model, result.state.queues, result.state.iteration)
        final = outcome.final
        if final is not None:
            logger.info(f"Run {run_hash} finished: toy_fid={final.toy_fid:.5f} ppl_w={final.ppl_w_mean:.5f}")
        return outcome
    finally:
        outcome.runtime_seconds = time.perf_counter() - started
        _detach_run_log(handler)


# --- Sweep ---

def _set_dotted(data: Dict[str, Any], path: str, value: Any) -> None:
    node = data
    keys = path.split(".")
    for key in keys[:-1]:
        if not isinstance(node.get(key), dict):
            raise InvalidParameterError(f"unknown config path in grid: {path!r}")
        node = node[key]
    if keys[-1] not in node:
        raise InvalidParameterError(f"unknown config path in grid: {path!r}")
    node[keys[-1]] = value


def apply_overrides(base: ExperimentConfig, overrides: Dict[str, Any]) -> ExperimentConfig:
    """
    Dotted-path overrides on top of ``base``. Overriding ``strategy.variant``
    resets the ablation flags to their defaults unless the same override set
    names them.
    """
    data = base.model_dump()
    if "strategy.variant" in overrides:
        for flag in ABLATION_FLAGS:
            if f"strategy.{flag}" not in overrides:
                data["strategy"][flag] = False
    for path, value in overrides.items():
        _set_dotted(data, path, value)
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise InvalidParameterError(f"grid point {overrides} gives an invalid config: {e}") from e


def expand_grid(base: ExperimentConfig, grid: SweepGrid) -> List[Tuple[Dict[str, Any], ExperimentConfig]]:
    """Cartesian product of the override lists, replicated over ``grid.seeds`` (default: base seed)."""
    keys = list(grid.overrides.keys())
    for k in keys:
        if not grid.overrides[k]:
            raise InvalidParameterError(f"grid axis {k!r} has no values")
    seeds = grid.seeds or [base.seed]
    points: List[Tuple[Dict[str, Any], ExperimentConfig]] = []
    for combo in itertools.product(*(grid.overrides[k] for k in keys)):
        overrides = dict(zip(keys, combo))
        for seed in seeds:
            cfg = apply_overrides(base, {**overrides, "seed": seed})
            points.append((overrides, cfg))
    return points


def _run_child(cfg_json: str, run_dir: str) -> Dict[str, Any]:
    """Worker entry: one run, result as a plain dict (picklable)."""
    cfg = ExperimentConfig.model_validate_json(cfg_json)
    try:
        outcome = run_experiment(cfg, run_dir)
    except Exception as e:
        logger.error(f"Run in {run_dir} failed: {e}", exc_info=True)
        return {"status": "error", "error": repr(e), "final": None, "runtime_seconds": 0.0}
    final = outcome.final.model_dump() if outcome.final is not None else None
    return {"status": outcome.status, "error": outcome.error, "final": final,
            "runtime_seconds": outcome.runtime_seconds}


@dataclass
class SweepOutcome:
    out_dir: Path
    summary_path: Path
    findings_path: Path
    rows: List[Dict[str, Any]]
    findings: Dict[str, Any]


def sweep(base: ExperimentConfig, grid: SweepGrid, out_dir: Union[str, Path], jobs: int = 1) -> SweepOutcome:
    """
    Run every grid point under ``out_dir/runs/<hash>/``; runs already recorded
    as done in ``progress.jsonl`` are skipped. Child failures are recorded and
    the sweep continues.
    """
    out = ensure_dir(out_dir)
    points = expand_grid(base, grid)
    by_hash: Dict[str, Tuple[Dict[str, Any], ExperimentConfig]] = {}
    for overrides, cfg in points:
        h = config_hash(cfg)
        if h in by_hash:
            logger.warning(f"Grid point {overrides} (seed={cfg.seed}) duplicates run {h}; skipped.")
            continue
        by_hash[h] = (overrides, cfg)
    logger.info(f"Sweep: {len(by_hash)} runs -> {out}")

    progress = JsonlProgress(out / PROGRESS_FILE)
    remaining = list(progress.remaining_runs((SWEEP_KEY, h) for h in by_hash))
    pending = [run for _, run, _ in remaining]
    tries = {run: tried for _, run, tried in remaining}
    logger.info(f"{len(by_hash) - len(pending)} runs already done, {len(pending)} to go.")

    def _record(h: str, res: Dict[str, Any]) -> None:
        progress.append(SWEEP_KEY, h, res["status"], try_count=tries.get(h, 0) + 1, err=res.get("error"),
                        final=res.get("final"), runtime_seconds=res.get("runtime_seconds"))
        if res["status"] != "done":
            logger.error(f"Run {h} ended with status {res['status']}: {res.get('error')}")

    jobs = max(1, int(jobs))
    bar = tqdm(total=len(pending), desc="sweep", disable=not progress_enabled())
    try:
        if jobs == 1:
            for h in pending:
                progress.append(SWEEP_KEY, h, "running", try_count=tries.get(h, 0))
                _record(h, _run_child(by_hash[h][1].model_dump_json(), str(out / "runs" / h)))
                bar.update(1)
        else:
            with ProcessPoolExecutor(max_workers=jobs) as ex:
                futs = {ex.submit(_run_child, by_hash[h][1].model_dump_json(), str(out / "runs" / h)): h
                        for h in pending}
                for f in as_completed(futs):
                    h = futs[f]
                    try:
                        res = f.result()
                    except Exception as e:
                        logger.error(f"Worker for run {h} crashed: {e}", exc_info=True)
                        res = {"status": "error", "error": repr(e), "final": None, "runtime_seconds": 0.0}
                    _record(h, res)
                    bar.update(1)
    finally:
        bar.close()

    snapshot = progress.snapshot()
    rows: List[Dict[str, Any]] = []
    for h, (overrides, cfg) in by_hash.items():
        rec = snapshot.get((SWEEP_KEY, h), {})
        row: Dict[str, Any] = {
            "config_hash": h,
            "dataset": cfg.dataset.label,
            "variant": cfg.strategy.variant,
            "seed": cfg.seed,
            "overrides": json.dumps(overrides, sort_keys=True),
            "status": rec.get("status", "missing"),
            "runtime_seconds": rec.get("runtime_seconds"),
            "error": rec.get("err"),
        }
        row.update(rec.get("final") or {})
        rows.append(row)

    summary_path = out / SUMMARY_FILE
    write_rows(summary_path, SUMMARY_COLUMNS, rows)
    findings = build_findings(rows)
    findings_path = out / FINDINGS_FILE
    write_text(findings_path, json.dumps(findings, indent=2, sort_keys=True) + "\n")
    done = sum(1 for r in rows if r["status"] == "done")
    logger.info(f"Sweep finished: {done}/{len(rows)} runs done. Summary: {summary_path}")
    return SweepOutcome(out, summary_path, findings_path, rows, findings)


# --- Checkpoint re-evaluation ---

def evaluate_checkpoint(ckpt_path: Union[str, Path], dataset: Union[str, DatasetSpec],
                        seed: Optional[int] = None) -> Dict[str, Any]:
    """
    Rebuild the model from ``ckpt_path`` and evaluate it against ``dataset``
    (e.g. ``ring:1000``). Adds the reverse nearest-neighbour coverage of the
    training points, and the inversion residual of two training points with
    the gap profile of the latent path between them.
    """
    ckpt = load_checkpoint(ckpt_path)
    spec = DatasetSpec.parse(dataset) if isinstance(dataset, str) else dataset
    data = load_dataset(spec)
    ctx = EvaluationContext.build(data, spec)
    cfg = ckpt.cfg
    rng = Rng(cfg.seed if seed is None else seed).stream("eval", ckpt.iteration)
    G = ckpt.model.generator
    scores = evaluate_generator(G, ctx, cfg.metrics, rng)
    generated = sample_generator(G, cfg.metrics.nn_samples, rng.stream("coverage"))
    coverage = reverse_neighbor_report(data, generated, k=1, delta=cfg.metrics.nn_delta)
    pair = data[rng.stream("inversion").choice(len(data), size=2, replace=False)]
    inverted = invert(G, pair, cfg.metrics.inversion_steps, cfg.metrics.inversion_lr, rng.stream("inversion_init"))
    gaps = interpolation_gaps(G, inverted.z[0], inverted.z[1], cfg.metrics.gap_points)
    logger.info(f"Evaluated {Path(ckpt_path).name} (iteration {ckpt.iteration}) on {spec.label}")
    return {
        "checkpoint": str(ckpt_path),
        "dataset": spec.label,
        "iteration": ckpt.iteration,
        "variant": cfg.strategy.variant,
        "queue_size": len(ckpt.queues.real if cfg.strategy.variant == "instance_real" else ckpt.queues.fake),
        **scores,
        "coverage_within_delta": coverage.within_delta,
        "coverage_mean_dist": coverage.mean_min_distance,
        "inversion_residual": inverted.residual,
        "interp_max_gap_ratio": gaps.max_ratio,
    }
