"""Closed-form attention costs and a per-layer parameter/FLOPs ledger.

One multiply-accumulate counts as one FLOP throughout.  All counts are exact
``Fraction``/``int`` values; rounding happens only in :func:`gflops`.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction

from .network import Layer, NetConfig, plan


@dataclass(frozen=True)
class AttentionCost:
    projection: Fraction
    interaction: Fraction
    exact: bool = True

    @property
    def total(self) -> Fraction:
        return self.projection + self.interaction


def _positive(**kw):
    for k, v in kw.items():
        if not isinstance(v, int) or v <= 0:
            raise ValueError(f"{k}={v!r} must be a positive integer")


def flops_nonlocal(c: int, h: int, w: int) -> AttentionCost:
    """2C^2*HW projections + 3/2*C*(HW)^2 for the two attention products."""
    _positive(c=c, h=h, w=w)
    n = h * w
    return AttentionCost(Fraction(2 * c * c * n), Fraction(3, 2) * c * n * n)


def flops_ena(c: int, h: int, w: int, k: int) -> AttentionCost:
    """4C^2*HW + 3/2*C*(HW)^2*(1/k + k/HW)."""
    _positive(c=c, h=h, w=w, k=k)
    n = h * w
    if k > n:
        raise ValueError(f"k={k} exceeds HW={n}")
    # 3/2 C n^2 (1/k + k/n) == 3 C n (n + k^2) / 2k
    interaction = Fraction(3 * c * n * (n + k * k), 2 * k)
    return AttentionCost(Fraction(4 * c * c * n), interaction)


def flops_ena_min(c: int, h: int, w: int) -> AttentionCost:
    """4C^2*HW + 3C*(HW)^(3/2); ``exact`` is False when HW is not a perfect square."""
    _positive(c=c, h=h, w=w)
    n = h * w
    root = math.isqrt(n)
    if root * root == n:
        return AttentionCost(Fraction(4 * c * c * n), Fraction(3 * c * n * root))
    return AttentionCost(Fraction(4 * c * c * n), Fraction(3 * c * n ** 1.5), exact=False)


def optimal_k(h: int, w: int) -> int:
    """Integer k in [1, HW] minimising 1/k + k/HW; ties go to the smaller k."""
    _positive(h=h, w=w)
    n = h * w
    root = math.isqrt(n)
    # (1/k + k/n) is convex in k, so the optimum is floor or ceil of sqrt(n)
    candidates = [k for k in (root, root + 1) if 1 <= k <= n]
    return min(candidates, key=lambda k: (Fraction(1, k) + Fraction(k, n), k))


def gflops(count, places: int = 2, rounding: str = ROUND_HALF_UP) -> str:
    """Render a FLOP count in G, rounding half away from zero by default."""
    q = Decimal(1).scaleb(-places)
    count = Fraction(count)
    value = Decimal(count.numerator) / Decimal(count.denominator) / Decimal(10**9)
    return str(value.quantize(q, rounding=rounding))


def format_count(value) -> str:
    value = Fraction(value)
    return str(value.numerator) if value.denominator == 1 else f"{value.numerator}/{value.denominator}"


# ledger -------------------------------------------------------------------

@dataclass
class LedgerRow:
    layer: str
    params: int
    flops: Fraction
    attention: AttentionCost | None = None


@dataclass
class CostReport:
    rows: list[LedgerRow] = field(default_factory=list)

    @property
    def total_params(self) -> int:
        return sum(r.params for r in self.rows)

    @property
    def total_flops(self) -> Fraction:
        return sum((r.flops for r in self.rows), Fraction(0))

    def to_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["layer", "params", "flops"])
        for r in self.rows:
            out.writerow([r.layer, r.params, format_count(r.flops)])
        out.writerow(["total", self.total_params, format_count(self.total_flops)])
        return buf.getvalue()


def layer_flops(layer: Layer, input_size: int) -> tuple[Fraction, AttentionCost | None]:
    side = input_size // layer.div
    sites = side * side
    if layer.kind in ("conv", "dwconv"):
        (shape,) = [s for n, s in layer.shapes.items() if n.endswith(".weight")]
        return Fraction(sites * math.prod(shape)), None
    if layer.kind == "bn":
        (c,) = {s[0] for s in layer.shapes.values()}
        return Fraction(sites * c), None
    if layer.kind == "linear":
        return Fraction(sum(math.prod(s) for n, s in layer.shapes.items()
                            if n.endswith(".weight"))), None
    if layer.kind == "ena":
        cost = flops_ena(layer.channels, side, side, layer.k)
        return cost.total, cost
    if layer.kind == "nonlocal":
        cost = flops_nonlocal(layer.channels, side, side)
        return cost.total, cost
    raise ValueError(f"{layer.name}: unknown layer kind {layer.kind!r}")


def ledger(config: NetConfig, input_size: int | None = None) -> CostReport:
    """Parameter and FLOP count per layer for one image at ``input_size``."""
    size = config.input_size if input_size is None else input_size
    if size <= 0 or size % 16:
        raise ValueError(f"input_size={size} must be a positive multiple of 16")
    report = CostReport()
    for layer in plan(config):
        flops, att = layer_flops(layer, size)
        report.rows.append(LedgerRow(layer.name, layer.learnable, flops, att))
    return report


def count_params(config: NetConfig) -> CostReport:
    return ledger(config)


def count_flops(config: NetConfig, input_size: int) -> CostReport:
    return ledger(config, input_size)
