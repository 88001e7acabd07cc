"""Acceptance checks shared by ``litematte selftest`` and the test suite.

Each check returns a :class:`CheckResult`; none of them raise on a failed
comparison, so a runner can report every line before deciding the exit code.
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import reference as R
from . import tensor as T
from .attention import (EnaConfig, attention_shapes, ena, longrange_attention, merge_partition,
                        nonlocal_dense, sample_partition, shortrange_attention)
from .compositing import composite_image, make_tgt
from .costmodel import flops_ena, flops_ena_min, flops_nonlocal, gflops, ledger, optimal_k
from .formats import to_bytes
from .losses import cross_entropy, loss_grad, loss_l1_weighted, loss_sn, weighted_total
from .network import NetConfig, build_params, class_maps, model_forward
from .octave import OctConvWeights, OctFeature, octconv

CALIBRATION_PARAMS = 344_830
SMOKE_CONFIG = NetConfig(input_size=64, sn_widths=(8, 8, 16, 16), mrn_widths=(8, 8, 16, 16),
                         sn_blocks=(1, 2, 2, 2), mrn_blocks=(2, 2, 2, 2))


@dataclass(frozen=True)
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number:2d} {self.name}: {self.detail}"


def _max_err(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a, np.float64) - np.asarray(b, np.float64))))


def check_cost_model() -> tuple[bool, str]:
    small, large = flops_nonlocal(80, 64, 64).total, flops_nonlocal(80, 128, 128).total
    g_small, g_large = gflops(small), gflops(large)
    rel = abs(float(g_small) - 2.06) / 2.06
    ok = (small == 2_065_694_720 and large == 32_421_969_920
          and rel <= 0.005 and g_large == "32.42")
    return ok, (f"C(80,64,64)={small} ({g_small} G, {rel:.3%} from 2.06); "
                f"C(80,128,128)={large} ({g_large} G)")


def _sweep_argmin(n: int) -> int:
    # minimise (n + k^2) / k over integers by cross-multiplication
    best = 1
    for k in range(2, n + 1):
        if (n + k * k) * best < (n + best * best) * k:
            best = k
    return best


def check_optimum_k(channels: int = 80) -> tuple[bool, str]:
    start = time.perf_counter()
    bad = []
    for side in range(1, 65):
        n = side * side
        if _sweep_argmin(n) != side or any(optimal_k(h, n // h) != side
                                            for h in (1, side) if n % h == 0):
            bad.append(n)
        floor = flops_ena_min(channels, side, side).total
        if any(flops_ena(channels, side, side, k).total < floor for k in range(1, n + 1)):
            bad.append((n, "min"))
    elapsed = time.perf_counter() - start
    ok = not bad and elapsed < 1.0
    return ok, f"64 perfect squares, {len(bad)} mismatches, {elapsed:.2f} s"


def check_ena_oracle(cases: int = 100, seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst_long = worst_short = 0.0
    for _ in range(cases):
        n_img, c = int(rng.integers(1, 3)), int(rng.integers(1, 9))
        h = int(rng.integers(1, 9))
        w = int(rng.integers(1, 64 // h + 1))
        q, k, v = (rng.standard_normal((n_img, c, h, w)).astype(np.float32) for _ in range(3))
        flat = lambda a: a.reshape(n_img, c, -1).transpose(0, 2, 1)
        dense = nonlocal_dense(flat(q), flat(k), flat(v)).transpose(0, 2, 1).reshape(q.shape)
        worst_long = max(worst_long, _max_err(longrange_attention(q, k, v, 1), dense))

        side = int(rng.integers(1, 9))
        q, k, v = (rng.standard_normal((n_img, c, side, side)).astype(np.float32) for _ in range(3))
        dense = nonlocal_dense(flat(q), flat(k), flat(v)).transpose(0, 2, 1).reshape(q.shape)
        worst_short = max(worst_short, _max_err(shortrange_attention(q, k, v, side * side), dense))
    ok = worst_long <= 1e-6 and worst_short <= 1e-6
    return ok, f"{cases} cases each; long k=1 err {worst_long:.1e}, short k=n err {worst_short:.1e}"


def _random_weights(rng, channels):
    out = {}
    for name, shape in attention_shapes(channels).items():
        out[name] = rng.uniform(-1, 1, shape).astype(np.float32)
    return out


def check_ena_brute_force(seeds: int = 20) -> tuple[bool, str]:
    worst = 0.0
    for seed in range(seeds):
        rng = np.random.default_rng(1000 + seed)
        xq, xk, xv = (rng.standard_normal((1, 8, 8, 8)).astype(np.float32) for _ in range(3))
        u = rng.uniform(0, 1, (1, 1, 8, 8)).astype(np.float32)
        weights = _random_weights(rng, 8)
        for k in (4, 16):
            got = ena(xq, xk, xv, u, EnaConfig(k, weights))
            worst = max(worst, _max_err(got, R.ena(xq, xk, xv, u, weights, k)))
    return worst <= 1e-5, f"{seeds} seeds x k in (4, 16), max err {worst:.1e}"


def check_partition_laws() -> tuple[bool, str]:
    combos = 0
    bad = []
    for h in range(1, 17):
        for w in range(1, 17):
            for s in range(1, min(h, w) + 1):
                if h % s or w % s:
                    continue
                combos += 1
                x = np.arange(2 * 3 * h * w, dtype=np.float32).reshape(2, 3, h, w)
                parts = sample_partition(x, s * s)
                back = merge_partition(parts, s * s, h, w)
                seen = np.sort(np.concatenate([p[0, :, 0] for p in parts]))
                if not np.array_equal(back, x) or not np.array_equal(seen, x[0, 0].ravel()):
                    bad.append((h, w, s))
    return not bad, f"{combos} (H, W, sqrt k) triples, {len(bad)} failures"


def _conv_case(rng):
    n, c, o = (int(v) for v in rng.integers(1, 4, 3))
    k = int(rng.choice([1, 3]))
    stride, pad = int(rng.integers(1, 3)), int(rng.integers(0, 2))
    h = int(rng.integers(k, 8))
    w = int(rng.integers(k, 8))
    x = rng.standard_normal((n, c, h, w)).astype(np.float32)
    wt = rng.standard_normal((o, c, k, k)).astype(np.float32)
    b = rng.standard_normal(o).astype(np.float32)
    return x, wt, b, stride, pad


def check_kernels(cases: int = 200, seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = {"conv2d": 0.0, "depthwise": 0.0, "matmul": 0.0, "softmax": 0.0}
    for _ in range(cases):
        x, wt, b, stride, pad = _conv_case(rng)
        worst["conv2d"] = max(worst["conv2d"], _max_err(
            T.conv2d(x, wt, b, stride, pad), R.conv2d(x, wt, b, stride, pad)))

        c = x.shape[1]
        dw = rng.standard_normal((c, 1, 3, 3)).astype(np.float32)
        db = rng.standard_normal(c).astype(np.float32)
        xd = rng.standard_normal((x.shape[0], c, x.shape[2] + 2, x.shape[3] + 2)).astype(np.float32)
        worst["depthwise"] = max(worst["depthwise"], _max_err(
            T.depthwise_conv2d(xd, dw, db, stride, pad), R.depthwise_conv2d(xd, dw, db, stride, pad)))

        bt, m, kk, nn = (int(v) for v in rng.integers(1, 7, 4))
        a = rng.standard_normal((bt, m, kk)).astype(np.float32)
        bm = rng.standard_normal((bt, kk, nn)).astype(np.float32)
        loops = np.stack([R.matmul(a[i], bm[i]) for i in range(bt)])
        worst["matmul"] = max(worst["matmul"], _max_err(T.matmul(a, bm), loops))

        rows = (rng.standard_normal((m, nn)) * 5).astype(np.float32)
        worst["softmax"] = max(worst["softmax"], _max_err(T.softmax_rows(rows), R.softmax_rows(rows)))
    ok = all(v <= 1e-5 for v in worst.values())
    return ok, f"{cases} cases each; " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())


def check_octave_degeneracy(cases: int = 50, seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        x, wt, b, stride, pad = _conv_case(rng)
        w = OctConvWeights(hh=wt, bias_h=b, alpha_oct=0.0)
        got = octconv(OctFeature(x), w, stride, pad)
        worst = max(worst, _max_err(got.high, T.conv2d(x, wt, b, stride, pad)))
        if got.low is not None:
            worst = math.inf
    return worst <= 1e-6, f"{cases} cases, max err {worst:.1e}"


def check_losses() -> tuple[bool, str]:
    t_gt = np.zeros((1, 1, 8, 8))
    t_gt[0, 0, :4] = 1
    t_gt[0, 0, 6:] = 2
    levels = [np.zeros((1, 3, s, s), np.float32) for s in (2, 4, 8)]
    per_level = [cross_entropy(np.zeros((1, 3, 8, 8), np.float32), t_gt)]
    ce_err = max(abs(v - math.log(3)) for v in per_level)
    total_err = abs(loss_sn(levels, t_gt) - 3 * math.log(3))
    l1_in = loss_l1_weighted(np.full((1, 1, 1, 1), 0.5), np.full((1, 1, 1, 1), 0.7))
    l1_edge = loss_l1_weighted(np.full((1, 1, 1, 1), 0.8), np.full((1, 1, 1, 1), 1.0))
    # dyadic values keep the offset pair exactly representable
    g = np.random.default_rng(0).integers(0, 64, (1, 1, 8, 8)) / 128.0
    offset = loss_grad(g + 0.125, g)
    combo = weighted_total(3.296, 0.2, 0.1)
    ok = (ce_err <= 1e-6 and total_err <= 3e-6 and abs(l1_in - 0.2) <= 1e-12
          and abs(l1_edge - 0.02) <= 1e-12 and offset == 0.0 and abs(combo - 4.346) <= 1e-6)
    return ok, (f"CE err {ce_err:.1e}, L1 {l1_in:.12g}/{l1_edge:.12g}, offset grad {offset}, "
                f"combination {combo:.9g}")


def check_compositing(seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    fg_b = rng.integers(0, 256, (1, 3, 16, 16), dtype=np.uint8)
    bg_b = rng.integers(0, 256, (1, 3, 16, 16), dtype=np.uint8)
    fg, bg = fg_b / np.float32(255), bg_b / np.float32(255)
    ones, zeros = np.ones((1, 1, 16, 16), np.float32), np.zeros((1, 1, 16, 16), np.float32)
    endpoints = (np.array_equal(to_bytes(composite_image(fg, bg, ones)), fg_b)
                 and np.array_equal(to_bytes(composite_image(fg, bg, zeros)), bg_b))
    alpha = rng.uniform(0, 1, (1, 1, 32, 32)).astype(np.float32)
    alpha[..., :4] = 0
    alpha[..., -4:] = 1
    expect = np.where(alpha == 0, 0, np.where(alpha == 1, 1, 2))
    table = (np.array_equal(make_tgt(alpha), expect)
             and make_tgt(np.array([0.0, 1.0, 0.37], np.float32)).tolist() == [0, 1, 2])
    logits = rng.integers(-2, 3, (4, 3, 16, 16)).astype(np.float32)  # many ties
    b, f, u = class_maps(logits)
    partition = np.array_equal(b + f + u, np.ones_like(b))
    ok = endpoints and table and partition
    return ok, f"endpoints {endpoints}, label table {table}, F+U+B partition {partition}"


def _checksum(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()[:16]


def check_end_to_end(config: NetConfig = SMOKE_CONFIG) -> tuple[bool, str]:
    start = time.perf_counter()
    size = config.input_size
    image = np.random.default_rng(7).uniform(0, 1, (1, 3, size, size)).astype(np.float32)
    sums = []
    for _ in range(2):
        params = build_params(config, seed=config.seed)
        alpha, seg = model_forward(image, params, config)
        sums.append(_checksum(alpha, seg.t))
    elapsed = time.perf_counter() - start
    shapes = (alpha.shape == (1, 1, size, size) and seg.t.shape == (1, 3, size, size)
              and [l.shape[2] for l in seg.levels] == [size // 4, size // 2, size])
    in_range = bool(np.all((alpha >= 0) & (alpha <= 1)))
    ok = shapes and in_range and sums[0] == sums[1] and elapsed < 60
    return ok, f"S={size}, shapes {shapes}, alpha in [0,1] {in_range}, checksum {sums[0]} x2, {elapsed:.1f} s"


def check_ablation_ordering(config: NetConfig = NetConfig()) -> tuple[bool, str]:
    fast = ledger(config)
    dense = ledger(NetConfig(**{**config.__dict__, "attention": "nonlocal"}))
    ordered = (dense.total_params > fast.total_params and dense.total_flops > fast.total_flops)
    drift = (fast.total_params - CALIBRATION_PARAMS) / CALIBRATION_PARAMS
    ok = ordered and abs(drift) <= 0.25
    return ok, (f"ENA {fast.total_params} params / {gflops(fast.total_flops)} G, "
                f"dense {dense.total_params} / {gflops(dense.total_flops)} G; "
                f"calibration {drift:+.1%} vs 344.83K (soft band 25%)")


def check_decomposition() -> tuple[bool, str]:
    small, large = flops_ena(80, 64, 64, 16), flops_ena(80, 128, 128, 16)
    ok = (small.projection == 104_857_600 and large.projection == 419_430_400
          and gflops(small.projection, 3) == "0.105" and gflops(large.projection, 3) == "0.419")
    return ok, (f"64x64: projection {gflops(small.projection, 3)} G + interaction "
                f"{gflops(small.interaction, 3)} G; 128x128: projection {gflops(large.projection, 3)} G "
                f"+ interaction {gflops(large.interaction, 3)} G")


CHECKS: list[tuple[int, str, Callable[[], tuple[bool, str]]]] = [
    (1, "cost model fidelity", check_cost_model),
    (2, "optimum k", check_optimum_k),
    (3, "ENA oracle equivalence", check_ena_oracle),
    (4, "blocked attention brute force", check_ena_brute_force),
    (5, "partition permutation laws", check_partition_laws),
    (6, "kernel oracles", check_kernels),
    (7, "octave degeneracy", check_octave_degeneracy),
    (8, "loss fixtures", check_losses),
    (9, "compositing and trimap identities", check_compositing),
    (10, "end-to-end determinism", check_end_to_end),
    (11, "dense vs ENA ordering", check_ablation_ordering),
    (12, "ENA cost decomposition", check_decomposition),
]


def run_check(number: int) -> CheckResult:
    for num, name, fn in CHECKS:
        if num == number:
            try:
                passed, detail = fn()
            except Exception as exc:  # a crash is a failure, reported like one
                passed, detail = False, f"raised {type(exc).__name__}: {exc}"
            return CheckResult(num, name, passed, detail)
    raise KeyError(number)


def run_all() -> list[CheckResult]:
    return [run_check(num) for num, _, _ in CHECKS]
