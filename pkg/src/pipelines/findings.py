# coding: utf-8
"""
Directional reading of a sweep summary.

Medians of the final metrics per (dataset, variant) over completed runs, and
three ordering checks; a failed check is a finding (logged as a warning), not
an error:

- strategy_ordering:  toy_fid  fakeclr < instance_perturbation <= instance_fake <= baseline
- w_path_length:      ppl_w_mean and ppl_w_std  fakeclr < baseline
- instance_real_no_gain: toy_fid  instance_real >= baseline
"""
from __future__ import annotations
import logging
from collections import defaultdict
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

MEDIAN_FIELDS = ("toy_fid", "toy_kid", "ppl_z_mean", "ppl_w_mean", "ppl_w_std", "nn_min_dist")
STRATEGY_ORDER = ("fakeclr", "instance_perturbation", "instance_fake", "baseline")


def variant_medians(rows: Sequence[Mapping[str, Any]]) -> Dict[str, Dict[str, Dict[str, float]]]:
    """{dataset: {variant: {field: median, "runs": n}}} over rows with status ``done``."""
    groups: Dict[tuple, List[Mapping[str, Any]]] = defaultdict(list)
    for row in rows:
        if row.get("status") == "done":
            groups[(row["dataset"], row["variant"])].append(row)
    out: Dict[str, Dict[str, Dict[str, float]]] = defaultdict(dict)
    for (dataset, variant), members in sorted(groups.items()):
        stats: Dict[str, float] = {"runs": len(members)}
        for name in MEDIAN_FIELDS:
            values = [float(m[name]) for m in members if m.get(name) is not None]
            if values:
                stats[name] = float(np.median(values))
        out[dataset][variant] = stats
    return dict(out)


def _strategy_ordering(dataset: str, med: Dict[str, Dict[str, float]]) -> Optional[Dict[str, Any]]:
    present = [v for v in STRATEGY_ORDER if v in med and "toy_fid" in med[v]]
    if len(present) < 2:
        return None
    fids = [med[v]["toy_fid"] for v in present]
    holds = True
    for i, (a, b) in enumerate(zip(fids[:-1], fids[1:])):
        # 先頭（fakeclr）だけ厳密に小さいこと
        strict = present[i] == "fakeclr"
        holds = holds and (a < b if strict else a <= b)
    return {"check": "strategy_ordering", "dataset": dataset, "holds": holds,
            "order": present, "toy_fid": dict(zip(present, fids))}


def _w_path_length(dataset: str, med: Dict[str, Dict[str, float]]) -> Optional[Dict[str, Any]]:
    if "fakeclr" not in med or "baseline" not in med:
        return None
    f, b = med["fakeclr"], med["baseline"]
    if not all(k in f and k in b for k in ("ppl_w_mean", "ppl_w_std")):
        return None
    holds = f["ppl_w_mean"] < b["ppl_w_mean"] and f["ppl_w_std"] < b["ppl_w_std"]
    return {"check": "w_path_length", "dataset": dataset, "holds": holds,
            "fakeclr": {"mean": f["ppl_w_mean"], "std": f["ppl_w_std"]},
            "baseline": {"mean": b["ppl_w_mean"], "std": b["ppl_w_std"]}}


def _instance_real_no_gain(dataset: str, med: Dict[str, Dict[str, float]]) -> Optional[Dict[str, Any]]:
    if "instance_real" not in med or "baseline" not in med:
        return None
    r, b = med["instance_real"].get("toy_fid"), med["baseline"].get("toy_fid")
    if r is None or b is None:
        return None
    return {"check": "instance_real_no_gain", "dataset": dataset, "holds": r >= b,
            "toy_fid": {"instance_real": r, "baseline": b}}


def build_findings(rows: Sequence[Mapping[str, Any]]) -> Dict[str, Any]:
    medians = variant_medians(rows)
    checks: List[Dict[str, Any]] = []
    for dataset, med in medians.items():
        for check in (_strategy_ordering, _w_path_length, _instance_real_no_gain):
            result = check(dataset, med)
            if result is None:
                continue
            checks.append(result)
            if not result["holds"]:
                logger.warning(f"Finding: {result['check']} does not hold on {dataset}: {result}")
    best = None
    done = [r for r in rows if r.get("status") == "done" and r.get("toy_fid") is not None]
    if done:
        top = min(done, key=lambda r: float(r["toy_fid"]))
        best = {"config_hash": top["config_hash"], "overrides": top.get("overrides"),
                "seed": top.get("seed"), "toy_fid": float(top["toy_fid"])}
    failed = [r["config_hash"] for r in rows if r.get("status") not in ("done",)]
    return {"medians": medians, "checks": checks, "best_toy_fid": best, "failed_runs": failed}
