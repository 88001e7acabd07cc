"""Command-line entry point.

Exit codes: 0 on success, 1 for I/O or validation failures, 2 for usage
errors (argparse's own convention).
"""

from __future__ import annotations

import argparse
import sys
from decimal import ROUND_DOWN

import numpy as np

from . import checks
from .compositing import composite_image, trimap_from_alpha
from .costmodel import flops_ena, flops_nonlocal, format_count, gflops, ledger
from .formats import read_image, read_trimap, read_weights, write_image
from .metrics import metric_suite
from .network import (BACKGROUND, FOREGROUND, NetConfig, build_params, check_params, load_config,
                      model_forward)

TRIMAP_VALUES = {BACKGROUND: 0.0, FOREGROUND: 1.0}
DEFAULT_K = NetConfig.ena_k


def _cmd_flops(args) -> int:
    if args.attention == "nonlocal":
        cost = flops_nonlocal(args.c, args.h, args.w)
        print(f"attention=nonlocal c={args.c} h={args.h} w={args.w}")
    else:
        cost = flops_ena(args.c, args.h, args.w, args.k)
        print(f"attention=ena c={args.c} h={args.h} w={args.w} k={args.k}")
    print(f"projection={format_count(cost.projection)}")
    print(f"interaction={format_count(cost.interaction)}")
    print(f"total={format_count(cost.total)}")
    shown = gflops(cost.total)
    print(f"{shown} GFLOPs")
    truncated = gflops(cost.total, rounding=ROUND_DOWN)
    if truncated != shown:
        print(f"note: {shown} is rounded half-up; truncating to two decimals gives {truncated}")
    if args.attention == "ena":
        print(f"note: projection term alone is {gflops(cost.projection, 3)} GFLOPs; "
              f"interaction adds {gflops(cost.interaction, 3)} GFLOPs")
    return 0


def _cmd_params(args) -> int:
    sys.stdout.write(ledger(load_config(args.config)).to_csv())
    return 0


def _cmd_forward(args) -> int:
    config = load_config(args.config)
    image = read_image(args.image)
    if args.weights:
        params = read_weights(args.weights)
        check_params(params, config)
    else:
        params = build_params(config, seed=args.seed)
    alpha, seg = model_forward(image, params, config)
    labels = np.argmax(seg.t, axis=1)[:, None]
    trimap = np.full(labels.shape, 0.5, dtype=np.float32)
    for label, value in TRIMAP_VALUES.items():
        trimap[labels == label] = value
    write_image(args.out_alpha, alpha)
    write_image(args.out_trimap, trimap)
    return 0


def _cmd_composite(args) -> int:
    fg, bg, alpha = read_image(args.fg), read_image(args.bg), read_image(args.alpha)
    if alpha.shape[1] != 1:
        raise ValueError(f"{args.alpha}: alpha must be a single-channel PGM")
    write_image(args.out, composite_image(fg, bg, alpha))
    return 0


def _cmd_metrics(args) -> int:
    pred, gt = read_image(args.pred), read_image(args.gt)
    if pred.shape[1] != 1 or gt.shape[1] != 1:
        raise ValueError("metrics expects single-channel PGM alphas")
    mask = None if args.mask is None else read_trimap(args.mask) == 0.5
    for name, value in metric_suite(pred, gt, mask).items():
        print(f"{name}={value:.10g}")
    return 0


def _cmd_trimap(args) -> int:
    alpha = read_image(args.alpha)
    if alpha.shape[1] != 1:
        raise ValueError(f"{args.alpha}: alpha must be a single-channel PGM")
    write_image(args.out, trimap_from_alpha(alpha, args.dilate))
    return 0


def _cmd_selftest(args) -> int:
    results = checks.run_all()
    for r in results:
        print(r.line(), flush=True)
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="litematte", description="Lightweight matting engine tools.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("flops", help="closed-form attention cost")
    p.add_argument("--attention", choices=("nonlocal", "ena"), required=True)
    p.add_argument("--c", type=int, required=True)
    p.add_argument("--h", type=int, required=True)
    p.add_argument("--w", type=int, required=True)
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.set_defaults(func=_cmd_flops)

    p = sub.add_parser("params", help="per-layer parameter/FLOPs ledger as CSV")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_params)

    p = sub.add_parser("forward", help="predict alpha and trimap for one image")
    p.add_argument("--config", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out-alpha", required=True)
    p.add_argument("--out-trimap", required=True)
    p.add_argument("--weights")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_forward)

    p = sub.add_parser("composite", help="I = alpha * F + (1 - alpha) * B")
    for flag in ("--fg", "--bg", "--alpha", "--out"):
        p.add_argument(flag, required=True)
    p.set_defaults(func=_cmd_composite)

    p = sub.add_parser("metrics", help="SAD / MSE / Grad / Conn")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--mask", help="trimap PGM; only its unknown region is scored")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("trimap", help="evaluation trimap from a ground-truth alpha")
    p.add_argument("--alpha", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dilate", type=int, default=25)
    p.set_defaults(func=_cmd_trimap)

    p = sub.add_parser("selftest", help="run the oracle and property checks")
    p.set_defaults(func=_cmd_selftest)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"litematte {args.command}: error: {exc}", file=sys.stderr)
        return 1
