# coding: utf-8
"""
Oracle / gradient suite run by ``fakeclr selftest``.

Each check returns a ``CheckResult``; the suite never raises on a failed
check so every result is reported.
"""
from __future__ import annotations
import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np
from tqdm import tqdm

from core.contrastive.losses import forgetting_factors, info_nce, iteration_info_nce, iteration_info_nce_grads
from core.contrastive.queue import NegativeQueue, QueueSchedule
from core.gan.losses import adversarial_losses
from core.metrics.distribution import GaussianSummary, frechet_distance, mmd_poly, polynomial_kernel
from core.numerics.functional import grad_check, l2_normalize, softmax
from core.numerics.rng import Rng
from core.numerics.tensor import Tensor
from utils.config import progress_enabled

logger = logging.getLogger(__name__)

# 負例行列は最大 64x16 なので、有限差分はランダムな座標だけ調べる
NEGATIVE_FD_COORDS = 8


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str
    seconds: float = 0.0


def _unit_rows(rng: Rng, n: int, p: int) -> np.ndarray:
    return l2_normalize(rng.normal(size=(n, p)))


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b)))) if np.size(a) else 0.0


def check_softmax() -> Tuple[bool, str]:
    v = np.array([0.0, 1 / 3, 2 / 3, 1.0])
    direct = np.exp(v) / np.exp(v).sum()
    err = float(np.max(np.abs(softmax(v, 1.0) - direct)))
    limit = softmax(np.array([0.0, 10.0]), 0.001)[1]
    ok = err < 1e-12 and limit >= 1 - 1e-9 and np.allclose(softmax(np.full(3, 2.5), 0.3), 1 / 3, atol=1e-15)
    return ok, f"max err {err:.2e}, tau->0 mass {limit:.12f}"


def check_closed_form_losses() -> Tuple[bool, str]:
    worst = 0.0
    e1 = np.eye(4)[0]
    for n in range(1, 101):
        negs = np.tile(e1, (n, 1))
        value = info_nce(e1, e1, negs, 1.0).item()
        worst = max(worst, abs(value - math.log(n + 1)))
    l_d, l_g = adversarial_losses(np.zeros(8), np.zeros(8))
    adv = max(abs(l_d.item() - 2 * math.log(2)), abs(l_g.item() - math.log(2)))
    return worst < 1e-12 and adv < 1e-12, f"ln(N+1) err {worst:.2e}, adversarial err {adv:.2e}"


def check_gradients(instances: int = 1000, seed: int = 0) -> Tuple[bool, str]:
    """Closed-form gradients vs reverse mode (1e-10) and vs central differences (1e-4)."""
    rng = Rng(seed).stream("selftest_grads")
    worst_closed = worst_fd = 0.0
    for i in tqdm(range(instances), desc="gradients", disable=not progress_enabled(), leave=False):
        r = rng.stream("instance", i)
        p = int(r.integers(2, 17))
        n = int(r.integers(1, 65))
        tau = float(r.uniform(0.05, 1.0))
        q, k = _unit_rows(r.stream("q"), 1, p)[0], _unit_rows(r.stream("k"), 1, p)[0]
        negs = _unit_rows(r.stream("negs"), n, p)
        m = forgetting_factors(r.integers(0, 1000, size=n), float(r.uniform(0.01, 1.0)))

        qt, kt, nt = Tensor(q, requires_grad=True), Tensor(k, requires_grad=True), Tensor(negs, requires_grad=True)
        iteration_info_nce(qt, kt, nt, m, tau).backward()
        gq, gk, gn = iteration_info_nce_grads(q, k, negs, m, tau)
        worst_closed = max(worst_closed, _rel(qt.grad.reshape(-1), gq), _rel(kt.grad.reshape(-1), gk),
                           _rel(nt.grad, gn))

        # 中心差分は q, k+, 負例 (座標の一部) の 3 経路すべてで取る
        fd_q = grad_check(lambda x: iteration_info_nce(x, k, negs, m, tau, validate=False), q, eps=1e-5)
        fd_k = grad_check(lambda x: iteration_info_nce(q, x, negs, m, tau, validate=False), k, eps=1e-5)
        fd_n = grad_check(lambda x: iteration_info_nce(q, k, x, m, tau, validate=False), negs, eps=1e-5,
                          max_coords=NEGATIVE_FD_COORDS, rng=r.stream("fd_coords"))
        worst_fd = max(worst_fd, fd_q, fd_k, fd_n)
    ok = worst_closed < 1e-10 and worst_fd < 1e-4
    return ok, f"{instances} instances: closed-form vs reverse {worst_closed:.2e}, finite differences {worst_fd:.2e}"


def check_forgetting_limits() -> Tuple[bool, str]:
    labels = np.array([1, 2, 3, 4])
    hot = forgetting_factors(labels, 1e3)
    cold = forgetting_factors(labels, 1e-6)
    flat = forgetting_factors(np.full(5, 7), 0.01)
    ok = (np.allclose(hot, 0.25, atol=1e-3) and cold[-1] >= 1 - 1e-9
          and np.allclose(flat, 0.2, atol=1e-15) and abs(hot.sum() - 1) < 1e-12)
    return ok, f"tau_m=1e3 spread {np.ptp(hot):.2e}, tau_m=1e-6 newest {cold[-1]:.12f}"


def check_queue_replay(schedules: int = 1000, seed: int = 0) -> Tuple[bool, str]:
    rng = Rng(seed).stream("selftest_queue")
    for s in range(schedules):
        r = rng.stream("schedule", s)
        n0 = int(r.integers(1, 60))
        sched = QueueSchedule(n0, float(r.uniform(0.0, 2.0)), int(r.integers(1, n0 + 1)))
        queue = NegativeQueue(3, sched)
        ref: List[Tuple[Tuple[float, ...], int]] = []
        t = 0
        for step in range(int(r.integers(1, 40))):
            t += int(r.integers(0, 3))
            keys = _unit_rows(r.stream("keys", step), int(r.integers(0, 8)), 3)
            queue.push(keys, t)
            ref.extend((tuple(k), t) for k in keys)
            cap = max(sched.min_size, min(sched.initial_size, int(round(sched.initial_size - sched.decay_rate * t))))
            del ref[:max(0, len(ref) - cap)]
            got = [(tuple(e.embedding), e.iteration_label) for e in queue]
            if got != ref:
                return False, f"schedule {s} diverged at push {step}"
    return True, f"{schedules} schedules replayed"


def check_metric_oracles(seed: int = 0) -> Tuple[bool, str]:
    a = GaussianSummary(np.zeros(2), np.eye(2))
    b = GaussianSummary(np.array([3.0, 4.0]), np.eye(2))
    fd = frechet_distance(a, b)
    rng = Rng(seed).stream("selftest_mmd")
    x, y = rng.normal(size=(4, 2)), rng.normal(size=(4, 2)) + 0.5
    brute = 0.0
    for i in range(4):
        for j in range(4):
            if i != j:
                brute += (polynomial_kernel(x[i:i + 1], x[j:j + 1])[0, 0]
                          + polynomial_kernel(y[i:i + 1], y[j:j + 1])[0, 0]) / 12.0
            brute -= 2.0 * polynomial_kernel(x[i:i + 1], y[j:j + 1])[0, 0] / 16.0
    mmd_err = abs(mmd_poly(x, y) - brute)
    ok = abs(fd - 25.0) < 1e-12 and mmd_err < 1e-12
    return ok, f"frechet {fd!r} (expect 25), mmd err {mmd_err:.2e}"


def run_selftest(instances: int = 1000) -> List[CheckResult]:
    suite: List[Tuple[str, Callable[[], Tuple[bool, str]]]] = [
        ("softmax", check_softmax),
        ("closed_form_losses", check_closed_form_losses),
        ("gradients", lambda: check_gradients(instances)),
        ("forgetting_limits", check_forgetting_limits),
        ("queue_replay", check_queue_replay),
        ("metric_oracles", check_metric_oracles),
    ]
    results: List[CheckResult] = []
    for name, fn in suite:
        started = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as e:
            logger.error(f"selftest {name} raised: {e}", exc_info=True)
            ok, detail = False, repr(e)
        res = CheckResult(name, bool(ok), detail, time.perf_counter() - started)
        (logger.info if res.ok else logger.error)(f"[{'PASS' if res.ok else 'FAIL'}] {name}: {detail} ({res.seconds:.2f}s)")
        results.append(res)
    return results
