"""Octave convolution and the OCBlock family.

An :class:`OctFeature` carries a full-resolution high-frequency group and a
half-resolution low-frequency group.  OCBlocks are inverted residuals whose
middle stage is a depthwise octave convolution, so information crosses
between the two resolutions through pooling and bilinear upsampling.

Block parameters are looked up by local name in a mapping::

    expand.hh.weight   expand.ll.weight        1x1, per frequency
    octave.{hh,hl,lh,ll}.weight                3x3 depthwise
    project.hh.weight  project.ll.weight       1x1, per frequency
    <stage>.bn_h.{gamma,beta,mean,var}         one BN per stage and frequency
    <stage>.bn_l.{gamma,beta,mean,var}

Which paths are present decides the wiring: no ``expand.ll`` means the block
has a single-scale input, no ``project.ll`` means a single-scale output.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from . import tensor as T

EXPANSION = 2
BN_EPS = 1e-5


@dataclass(frozen=True)
class OctFeature:
    high: Optional[np.ndarray]
    low: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.high is None and self.low is None:
            raise ValueError("OctFeature needs at least one frequency part")
        if self.high is not None and self.low is not None:
            h, l = self.high.shape, self.low.shape
            if h[0] != l[0] or h[2] != 2 * l[2] or h[3] != 2 * l[3]:
                raise T.ShapeError(f"OctFeature: low {l} is not half of high {h}")

    @property
    def parts(self):
        return self.high, self.low


def split_channels(channels: int, alpha_oct: float) -> tuple[int, int]:
    """(high, low) channel counts for a total width and low-frequency fraction."""
    if not 0.0 <= alpha_oct <= 1.0:
        raise ValueError(f"alpha_oct={alpha_oct} outside [0, 1]")
    low = int(alpha_oct * channels)
    return channels - low, low


@dataclass(frozen=True)
class OctConvWeights:
    """Kernels for the four frequency paths; absent paths are ``None``.

    For ``depthwise=True`` every kernel is C x 1 x kH x kW and all present
    paths must share the same channel count.
    """

    hh: Optional[np.ndarray] = None
    hl: Optional[np.ndarray] = None
    lh: Optional[np.ndarray] = None
    ll: Optional[np.ndarray] = None
    bias_h: Optional[np.ndarray] = None
    bias_l: Optional[np.ndarray] = None
    alpha_oct: float = 0.5
    depthwise: bool = False

    def __post_init__(self):
        if self.alpha_oct == 0 and any(p is not None for p in (self.hl, self.lh, self.ll)):
            raise ValueError("alpha_oct=0 admits only the high->high path")
        paths = {k: v for k, v in self.paths().items() if v is not None}
        if not paths:
            raise ValueError("OctConvWeights: no paths")
        if self.depthwise:
            widths = {k: v.shape[0] for k, v in paths.items()}
            if len(set(widths.values())) != 1:
                raise T.ShapeError(f"depthwise octave paths disagree on channels: {widths}")
            return
        # outputs: hh/lh -> high, hl/ll -> low; inputs: hh/hl <- high, lh/ll <- low
        for a, b, axis, what in (("hh", "lh", 0, "high output"), ("hl", "ll", 0, "low output"),
                                 ("hh", "hl", 1, "high input"), ("lh", "ll", 1, "low input")):
            if a in paths and b in paths and paths[a].shape[axis] != paths[b].shape[axis]:
                raise T.ShapeError(
                    f"inconsistent {what} channels: {a}{paths[a].shape} vs {b}{paths[b].shape}")

    def paths(self):
        return {"hh": self.hh, "hl": self.hl, "lh": self.lh, "ll": self.ll}


def _conv(x, w, stride, pad, depthwise):
    if depthwise:
        return T.depthwise_conv2d(x, w, stride=stride, pad=pad)
    return T.conv2d(x, w, stride=stride, pad=pad)


def _sum(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return T.add(a, b)


def octconv(x: OctFeature, w: OctConvWeights, stride: int = 1, pad: int = 0) -> OctFeature:
    """Four-path octave convolution.

    high' = conv(high, hh) + up(conv(low, lh))
    low'  = conv(pool(high), hl) + conv(low, ll)

    Paths whose input part or kernel is missing contribute nothing; an output
    part is produced only if some path feeds it.
    """
    xh, xl = x.parts
    if xh is not None and w.hl is not None and (xh.shape[2] % 2 or xh.shape[3] % 2):
        raise T.ShapeError(f"octconv: high part {xh.shape} must have even extents")
    yh = yl = None
    if xh is not None and w.hh is not None:
        yh = _conv(xh, w.hh, stride, pad, w.depthwise)
    if xl is not None and w.lh is not None:
        yh = _sum(yh, T.upsample_bilinear2(_conv(xl, w.lh, stride, pad, w.depthwise)))
    if xh is not None and w.hl is not None:
        yl = _conv(T.avg_pool2(xh), w.hl, stride, pad, w.depthwise)
    if xl is not None and w.ll is not None:
        yl = _sum(yl, _conv(xl, w.ll, stride, pad, w.depthwise))
    if yh is not None and w.bias_h is not None:
        yh = T.add(yh, np.asarray(w.bias_h, dtype=T.DTYPE).reshape(1, -1, 1, 1))
    if yl is not None and w.bias_l is not None:
        yl = T.add(yl, np.asarray(w.bias_l, dtype=T.DTYPE).reshape(1, -1, 1, 1))
    if yh is None and yl is None:
        raise T.ShapeError("octconv: no path connects the given input parts")
    return OctFeature(yh, yl)


def _bn(x, params, prefix):
    return T.batchnorm_infer(x, params[prefix + ".gamma"], params[prefix + ".beta"],
                             params[prefix + ".mean"], params[prefix + ".var"], BN_EPS)


def _get(params: Mapping, name: str):
    return params[name] if name in params else None


def _stage(x: OctFeature, params: Mapping, stage: str, depthwise: bool, pad: int,
           activate: bool) -> OctFeature:
    w = OctConvWeights(
        hh=params[f"{stage}.hh.weight"],  # present in every block variant
        hl=_get(params, f"{stage}.hl.weight"),
        lh=_get(params, f"{stage}.lh.weight"),
        ll=_get(params, f"{stage}.ll.weight"),
        depthwise=depthwise,
    )
    y = octconv(x, w, pad=pad)
    yh, yl = y.parts
    if yh is not None:
        yh = _bn(yh, params, f"{stage}.bn_h")
        if activate:
            yh = T.relu(yh)
    if yl is not None:
        yl = _bn(yl, params, f"{stage}.bn_l")
        if activate:
            yl = T.relu(yl)
    return OctFeature(yh, yl)


def _check_parts(x: OctFeature, params: Mapping):
    for part, path in ((x.high, "hh"), (x.low, "ll")):
        name = f"expand.{path}.weight"
        if part is not None and name in params and params[name].shape[1] != part.shape[1]:
            raise T.ShapeError(
                f"ocblock: {name} expects {params[name].shape[1]} channels, got {part.shape}")


def ocblock(x: OctFeature, params: Mapping) -> OctFeature:
    """Inverted residual: 1x1 expand, 3x3 octave depthwise, 1x1 project.

    BN follows each stage, ReLU follows the first two.  The input is added
    back per frequency when both parts match the output shapes exactly.
    """
    _check_parts(x, params)
    h = _stage(x, params, "expand", depthwise=False, pad=0, activate=True)
    h = _stage(h, params, "octave", depthwise=True, pad=1, activate=True)
    y = _stage(h, params, "project", depthwise=False, pad=0, activate=False)
    if _same_layout(x, y):
        yh = None if y.high is None else T.add(y.high, x.high)
        yl = None if y.low is None else T.add(y.low, x.low)
        y = OctFeature(yh, yl)
    return y


def _same_layout(x: OctFeature, y: OctFeature) -> bool:
    for a, b in ((x.high, y.high), (x.low, y.low)):
        if (a is None) != (b is None):
            return False
        if a is not None and a.shape != b.shape:
            return False
    return True


def ocblock_general(x: OctFeature, params: Mapping) -> OctFeature:
    return ocblock(x, params)


def ocblock_split(x: np.ndarray, params: Mapping) -> OctFeature:
    """Single-scale input, two-scale output (high only when alpha_oct is 0)."""
    if "expand.ll.weight" in params:
        raise ValueError("ocblock_split: parameters expect a low-frequency input")
    return ocblock(OctFeature(np.asarray(x, dtype=T.DTYPE)), params)


def ocblock_merge(x: OctFeature, params: Mapping) -> np.ndarray:
    """Two-scale input fused into a single full-resolution output."""
    if "project.ll.weight" in params:
        raise ValueError("ocblock_merge: parameters produce a low-frequency output")
    return ocblock(x, params).high


# parameter layout ---------------------------------------------------------

def block_shapes(c_in: int, c_out: int, in_low: bool, out_low: bool,
                 alpha_oct: float) -> dict[str, tuple[int, ...]]:
    """Local parameter names and shapes of one OCBlock.

    ``in_low``/``out_low`` select whether the input/output carry a
    low-frequency part; a two-scale width is split by ``alpha_oct``.
    """
    ch_in, cl_in = split_channels(c_in, alpha_oct) if in_low else (c_in, 0)
    ch_out, cl_out = split_channels(c_out, alpha_oct) if out_low else (c_out, 0)
    hidden = EXPANSION * ch_in
    has_low_in = cl_in > 0
    has_low_out = cl_out > 0
    # the hidden low group exists whenever either side has a low part
    hidden_low = (has_low_in or has_low_out) and alpha_oct > 0

    shapes: dict[str, tuple[int, ...]] = {}

    def bn(prefix, c):
        for p in ("gamma", "beta", "mean", "var"):
            shapes[f"{prefix}.{p}"] = (c,)

    shapes["expand.hh.weight"] = (hidden, ch_in, 1, 1)
    bn("expand.bn_h", hidden)
    if has_low_in:
        shapes["expand.ll.weight"] = (hidden, cl_in, 1, 1)
        bn("expand.bn_l", hidden)

    shapes["octave.hh.weight"] = (hidden, 1, 3, 3)
    if hidden_low:
        if has_low_in:
            shapes["octave.lh.weight"] = (hidden, 1, 3, 3)
        if has_low_out:
            shapes["octave.hl.weight"] = (hidden, 1, 3, 3)
            if has_low_in:
                shapes["octave.ll.weight"] = (hidden, 1, 3, 3)
    bn("octave.bn_h", hidden)
    if has_low_out:
        bn("octave.bn_l", hidden)

    shapes["project.hh.weight"] = (ch_out, hidden, 1, 1)
    bn("project.bn_h", ch_out)
    if has_low_out:
        shapes["project.ll.weight"] = (cl_out, hidden, 1, 1)
        bn("project.bn_l", cl_out)
    return shapes
