from __future__ import annotations
import argparse
import sys
import os
import logging
import json
from dotenv import load_dotenv
from typing import Any, Dict, List, Optional
from pathlib import Path

load_dotenv(override=True)  # .env ファイルの環境変数をロード

# プロジェクトルート/src を import パスに追加
ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from core.errors import FakeclrError
from core.model.schema import ExperimentConfig, load_experiment_config, load_sweep_grid
from pipelines.flows import evaluate_checkpoint, run_experiment, sweep, with_seed
from pipelines.selftest import run_selftest
from utils.config import env_seed, log_dir, log_level

# このモジュール用のロガーをセットアップ
logger = logging.getLogger(__name__)


def setup_logging():
    """Setup root logger with console and file handlers."""
    log_level_name = log_level()
    level = getattr(logging, log_level_name, logging.INFO)

    # ルートロガーを取得
    root_logger = logging.getLogger()
    root_logger.setLevel(logging.DEBUG)  # ルートは最も低いレベルに設定

    # 既存のハンドラをクリア
    if root_logger.hasHandlers():
        root_logger.handlers.clear()

    # コンソールハンドラ（stderr: stdout は metrics の JSON 出力に使う）
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(logging.Formatter('%(asctime)s - %(levelname)s - %(message)s'))
    console_handler.setLevel(level)
    root_logger.addHandler(console_handler)

    # ファイルハンドラ
    log_file_path = log_dir() / "app.log"
    log_file_path.parent.mkdir(parents=True, exist_ok=True)
    file_handler = logging.FileHandler(log_file_path, encoding="utf-8")
    file_handler.setFormatter(logging.Formatter(
        '%(asctime)s - %(name)s(%(lineno)d) - %(levelname)s - %(message)s'))
    file_handler.setLevel(logging.DEBUG)  # ファイルにはDEBUG以上を記録
    root_logger.addHandler(file_handler)

    logger.debug(f"Log level set to {log_level_name} for console.")


def _resolve_seed(cfg: ExperimentConfig, cli_seed: Optional[int]) -> ExperimentConfig:
    """--seed > FAKECLR_SEED > config file."""
    if cli_seed is not None:
        return with_seed(cfg, cli_seed)
    return with_seed(cfg, env_seed())


def _load_profiles(path: Path) -> Dict[str, Any]:
    obj = json.loads(path.read_text(encoding="utf-8"))
    if isinstance(obj, dict) and "profiles" in obj:
        profiles = obj["profiles"]
    elif isinstance(obj, list):
        profiles = obj
    else:
        raise ValueError(
            "profiles JSON must be an array or an object with 'profiles' array")
    indexed: Dict[str, Any] = {}
    for p in profiles:
        name = p.get("name") or f"profile_{len(indexed)+1}"
        indexed[name] = p
    return indexed


def _exec_profile(p: Dict[str, Any]):
    """
    プロファイル辞書を実行します。
    type: "run" | "sweep" | "metrics" | "selftest"
    """
    ptype = p.get("type", "")
    if ptype == "run":
        _handle_run(argparse.Namespace(config=Path(p["config"]), out=Path(p["out"]), seed=p.get("seed")))
    elif ptype == "sweep":
        _handle_sweep(argparse.Namespace(config=Path(p["config"]), grid=Path(p["grid"]), out=Path(p["out"]),
                                         jobs=int(p.get("jobs", 1)), seed=p.get("seed")))
    elif ptype == "metrics":
        _handle_metrics(argparse.Namespace(ckpt=Path(p["ckpt"]), dataset=p["dataset"], seed=p.get("seed")))
    elif ptype == "selftest":
        _handle_selftest(argparse.Namespace(instances=int(p.get("instances", 1000))))
    else:
        raise ValueError(f"Unknown profile type: {ptype}")


# --- サブコマンドのハンドラ ---


def _handle_run(args):
    logging.info(f"Executing run: config={args.config}, out={args.out}")
    try:
        cfg = _resolve_seed(load_experiment_config(args.config), args.seed)
        outcome = run_experiment(cfg, args.out)
    except FakeclrError as e:
        logging.error(f"run failed: {e}")
        sys.exit(1)
    except Exception as e:
        logging.error(f"run failed: {e}", exc_info=True)
        sys.exit(1)
    if not outcome.ok:
        logging.error(f"run aborted: {outcome.error} (partial metrics in {outcome.out_dir})")
        sys.exit(1)
    logging.info(f"run completed in {outcome.runtime_seconds:.1f}s -> {outcome.out_dir}")


def _handle_sweep(args):
    logging.info(f"Executing sweep: config={args.config}, grid={args.grid}, out={args.out}, jobs={args.jobs}")
    try:
        base = _resolve_seed(load_experiment_config(args.config), getattr(args, "seed", None))
        result = sweep(base, load_sweep_grid(args.grid), args.out, jobs=args.jobs)
    except FakeclrError as e:
        logging.error(f"sweep failed: {e}")
        sys.exit(1)
    except Exception as e:
        logging.error(f"sweep failed: {e}", exc_info=True)
        sys.exit(1)
    logging.info(f"sweep completed: {result.summary_path}")


def _handle_metrics(args):
    try:
        scores = evaluate_checkpoint(args.ckpt, args.dataset, seed=getattr(args, "seed", None))
    except FakeclrError as e:
        logging.error(f"metrics failed: {e}")
        sys.exit(1)
    except Exception as e:
        logging.error(f"metrics failed: {e}", exc_info=True)
        sys.exit(1)
    print(json.dumps(scores, indent=2, sort_keys=True))


def _handle_selftest(args):
    results = run_selftest(instances=args.instances)
    failed = [r.name for r in results if not r.ok]
    if failed:
        logging.error(f"selftest failed: {', '.join(failed)}")
        sys.exit(1)
    logging.info(f"selftest passed ({len(results)} checks).")


def _handle_run_profile(args, parser):  # parser を受け取る
    prof_file = args.profiles
    try:
        profs = _load_profiles(Path(prof_file))
    except FileNotFoundError:
        logging.error(f"Profile file not found: {prof_file}")
        sys.exit(1)
    except Exception as e:
        logging.error(
            f"Failed to load profiles from {prof_file}: {e}", exc_info=True)
        sys.exit(1)

    name = args.name or os.environ.get("PROFILE")
    if not name:
        names = list(profs.keys())
        logging.error(
            f"Profile name not specified. Use --name or set PROFILE env. Available: {', '.join(names)}")
        sys.exit(2)

    if name not in profs:
        logging.error(f"Profile '{name}' not found in {prof_file}")
        sys.exit(1)

    logging.info(f"--- Running profile: {name} ---")
    try:
        _exec_profile(profs[name])
    except (KeyError, ValueError) as e:
        logging.error(f"Profile '{name}' is invalid: {e}")
        sys.exit(2)
    logging.info(f"--- Profile finished: {name} ---")


# --- 引数パーサ ---


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fakeclr", description="Contrastive data-efficient GAN experiments on 2-D toy data")
    sub = parser.add_subparsers(dest="cmd", required=False, help="Sub-commands")

    p_run = sub.add_parser("run", help="Train one configuration",
                           formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p_run.add_argument("--config", required=True, type=Path, help="Experiment config JSON")
    p_run.add_argument("--out", required=True, type=Path, help="Output directory")
    p_run.add_argument("--seed", type=int, default=None, help="Override the config seed (beats FAKECLR_SEED)")
    p_run.set_defaults(func=_handle_run)

    p_sweep = sub.add_parser("sweep", help="Run a grid of overrides (resumable)",
                             formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p_sweep.add_argument("--config", required=True, type=Path, help="Base experiment config JSON")
    p_sweep.add_argument("--grid", required=True, type=Path, help="Grid JSON: {overrides: {path: [values]}, seeds: [...]}")
    p_sweep.add_argument("--out", required=True, type=Path, help="Sweep output directory")
    p_sweep.add_argument("--jobs", type=int, default=1, help="Worker processes")
    p_sweep.set_defaults(func=_handle_sweep)

    p_metrics = sub.add_parser("metrics", help="Re-evaluate a checkpoint",
                               formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p_metrics.add_argument("--ckpt", required=True, type=Path, help="Checkpoint file (final.ckpt)")
    p_metrics.add_argument("--dataset", required=True, help="Dataset spec kind[:n[:seed]], e.g. ring:100")
    p_metrics.add_argument("--seed", type=int, default=None, help="Evaluation seed (default: run seed)")
    p_metrics.set_defaults(func=_handle_metrics)

    p_self = sub.add_parser("selftest", help="Run the oracle / gradient suite",
                            formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p_self.add_argument("--instances", type=int, default=1000, help="Random gradient instances")
    p_self.set_defaults(func=_handle_selftest)

    p_prof = sub.add_parser("run-profile", help="Run a named profile from a JSON file",
                            formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p_prof.add_argument("--profiles", default="profiles/profiles.json", help="Path to profiles JSON file")
    p_prof.add_argument("--name", "-n", default=None, help="Profile name to run")
    p_prof.set_defaults(func=lambda args: _handle_run_profile(args, parser))
    return parser


def main(argv: Optional[List[str]] = None):
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging()

    if hasattr(args, 'func'):
        args.func(args)
    else:
        logging.warning("No command specified.")
        parser.print_help()
        sys.exit(2)


if __name__ == "__main__":
    main()
