"""Two-stage trimap-free matting network: SN (segmentation) and MRN (refinement).

The architecture is described once as a flat list of :class:`Layer` records
by :func:`plan`.  :func:`build_params` initialises weights from that plan,
the cost ledger prices it, and the forward functions read parameters by the
same hierarchical names (``sn.en2.block0.expand.hh.weight`` ...).
"""

from __future__ import annotations

import contextlib
import math
import zlib
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .attention import EnaConfig, attention_shapes, ena, nonlocal_block
from .fusion import cfm, cfm_shapes
from .octave import (OctFeature, block_shapes, ocblock, ocblock_general, ocblock_merge,
                     ocblock_split, split_channels)

ParamSet = dict  # ordered name -> float32 array

BACKGROUND, FOREGROUND, UNKNOWN = 0, 1, 2
ATTENTION_KINDS = ("ena", "nonlocal", "none")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class NetConfig:
    input_size: int = 512
    sn_widths: tuple[int, ...] = (16, 32, 48, 80)
    mrn_widths: tuple[int, ...] = (16, 32, 80, 80)
    alpha_oct: float = 0.5
    ena_k: int = 16
    ena_level: int = 3
    seed: int = 0
    sn_blocks: tuple[int, ...] = (3, 4, 6, 4)
    mrn_blocks: tuple[int, ...] = (2, 2, 2, 2)
    attention: str = "ena"
    use_cfm: bool = True

    def __post_init__(self):
        object.__setattr__(self, "sn_widths", tuple(int(w) for w in self.sn_widths))
        object.__setattr__(self, "mrn_widths", tuple(int(w) for w in self.mrn_widths))
        object.__setattr__(self, "sn_blocks", tuple(int(b) for b in self.sn_blocks))
        object.__setattr__(self, "mrn_blocks", tuple(int(b) for b in self.mrn_blocks))
        self.validate()

    def validate(self) -> None:
        if self.input_size <= 0 or self.input_size % 16:
            raise ConfigError("input_size", f"{self.input_size} must be a positive multiple of 16")
        for key in ("sn_widths", "mrn_widths"):
            widths = getattr(self, key)
            if len(widths) != 4 or min(widths) < 2:
                raise ConfigError(key, f"need 4 widths >= 2, got {widths}")
        if not 0.0 <= self.alpha_oct <= 1.0:
            raise ConfigError("alpha_oct", f"{self.alpha_oct} outside [0, 1]")
        if len(self.sn_blocks) != 4 or self.sn_blocks[0] < 1 or min(self.sn_blocks[1:]) < 2:
            raise ConfigError("sn_blocks", f"{self.sn_blocks}: levels 2-4 need >= 2 blocks")
        if len(self.mrn_blocks) != 4 or min(self.mrn_blocks) < 2:
            raise ConfigError("mrn_blocks", f"{self.mrn_blocks}: every level needs >= 2 blocks")
        if self.ena_level not in (1, 2, 3, 4):
            raise ConfigError("ena_level", f"{self.ena_level} not in 1..4")
        side = math.isqrt(self.ena_k) if self.ena_k > 0 else 0
        if side < 1 or side * side != self.ena_k:
            raise ConfigError("ena_k", f"{self.ena_k} is not a positive perfect square")
        res = self.input_size // level_div(self.ena_level)
        if res % side:
            raise ConfigError("ena_k", f"sqrt(k)={side} does not divide the level-{self.ena_level} "
                                       f"resolution {res}")
        if self.attention not in ATTENTION_KINDS:
            raise ConfigError("attention", f"{self.attention!r} not in {ATTENTION_KINDS}")


CONFIG_KEYS = ("input_size", "sn_widths", "mrn_widths", "alpha_oct", "ena_k", "ena_level", "seed")


def parse_config(text: str) -> NetConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(key, f"unknown key on line {lineno}")
        if key in values:
            raise ConfigError(key, f"duplicate key on line {lineno}")
        try:
            if key in ("sn_widths", "mrn_widths"):
                values[key] = tuple(int(v) for v in value.split(","))
            elif key == "alpha_oct":
                values[key] = float(value)
            else:
                values[key] = int(value)
        except ValueError:
            raise ConfigError(key, f"cannot parse {value!r}") from None
    return NetConfig(**values)


def load_config(path) -> NetConfig:
    return parse_config(Path(path).read_text())


def format_config(config: NetConfig) -> str:
    lines = []
    for key in CONFIG_KEYS:
        v = getattr(config, key)
        lines.append(f"{key} = {','.join(map(str, v)) if isinstance(v, tuple) else v}")
    return "\n".join(lines) + "\n"


def level_div(level: int) -> int:
    """Spatial divisor of encoder level ``level`` (1-based) relative to the input."""
    return 2 ** (level - 1)


# plan ---------------------------------------------------------------------

@dataclass
class Layer:
    """One priced unit of the network.

    ``kind`` is conv, dwconv, bn, linear (per-image matmul), ena or nonlocal;
    ``div`` is the spatial divisor of the layer's output grid; ``channels``
    is the feature width seen by attention layers.
    """

    name: str
    kind: str
    shapes: dict[str, tuple[int, ...]]
    div: int = 1
    channels: int = 0
    k: int = 0

    @property
    def learnable(self) -> int:
        return sum(math.prod(s) for n, s in self.shapes.items()
                   if not n.endswith((".mean", ".var")))


def _path_div(local: str, div: int) -> int:
    """High-frequency paths run at ``div``; anything touching the low group at 2*div."""
    path = local.split(".")[1]
    if path in ("hh", "bn_h"):
        return div
    return 2 * div


def _block_layers(prefix: str, shapes: dict, div: int) -> list[Layer]:
    layers: dict[str, Layer] = {}
    for local, shape in shapes.items():
        stage, path = local.split(".")[:2]
        key = f"{prefix}.{stage}.{path}"
        if key not in layers:
            if path.startswith("bn"):
                kind = "bn"
            else:
                kind = "dwconv" if stage == "octave" else "conv"
            layers[key] = Layer(key, kind, {}, _path_div(local, div))
        layers[key].shapes[f"{prefix}.{local}"] = shape
    return list(layers.values())


def _conv_layer(name: str, c_in: int, c_out: int, ksize: int, div: int, bias=True) -> Layer:
    shapes = {f"{name}.weight": (c_out, c_in, ksize, ksize)}
    if bias:
        shapes[f"{name}.bias"] = (c_out,)
    return Layer(name, "conv", shapes, div)


def _encoder_level(prefix: str, c_in: int, c: int, blocks: int, div: int, alpha: float,
                   first_split: bool, last_merge: bool):
    """Block specs for one encoder level: (name, c_in, c_out, in_low, out_low)."""
    specs = []
    for i in range(blocks):
        in_low = not (first_split and i == 0)
        out_low = not (last_merge and i == blocks - 1)
        specs.append((f"{prefix}.block{i}", c_in if i == 0 else c, c, in_low, out_low))
    layers = []
    for name, ci, co, il, ol in specs:
        layers += _block_layers(name, block_shapes(ci, co, il, ol, alpha), div)
    return layers


def _single_block(name: str, c_in: int, c_out: int, div: int, alpha: float) -> list[Layer]:
    return _block_layers(name, block_shapes(c_in, c_out, False, False, alpha), div)


def sn_plan(config: NetConfig) -> list[Layer]:
    w1, w2, w3, w4 = config.sn_widths
    a = config.alpha_oct
    layers = _block_layers("sn.stem", block_shapes(3, w1, False, True, a), 1)
    layers += _encoder_level("sn.en1", w1, w1, config.sn_blocks[0], 1, a,
                             first_split=False, last_merge=False)
    # en2 sees only the high part of en1
    widths = (split_channels(w1, a)[0],) + config.sn_widths[1:]
    for level in (2, 3, 4):
        layers += _encoder_level(f"sn.en{level}", widths[level - 2], widths[level - 1],
                                 config.sn_blocks[level - 1], level_div(level), a,
                                 first_split=True, last_merge=True)
    if config.use_cfm:
        cf = cfm_shapes(w2, w4)
        layers.append(Layer("sn.cfm.gate", "linear",
                            {f"sn.cfm.{n}": s for n, s in cf.items() if not n.startswith("proj")},
                            level_div(4)))
        layers.append(Layer("sn.cfm.proj", "conv", {"sn.cfm.proj.weight": cf["proj.weight"]},
                            level_div(2)))
    dec_out = {4: w3, 3: w2, 2: w2}
    dec_in = {4: w4, 3: w3, 2: w2}
    for level in (4, 3, 2):
        layers += _single_block(f"sn.de{level}", dec_in[level], dec_out[level], level_div(level), a)
        layers.append(_conv_layer(f"sn.head{level}", dec_out[level], 3, 3, level_div(level) // 2))
    return layers


def mrn_plan(config: NetConfig) -> list[Layer]:
    m = config.mrn_widths
    a = config.alpha_oct
    layers = _block_layers("mrn.stem", block_shapes(6, m[0], False, True, a), 1)
    layers += _encoder_level("mrn.en1", m[0], m[0], config.mrn_blocks[0], 1, a,
                             first_split=False, last_merge=True)
    for level in (2, 3, 4):
        layers += _encoder_level(f"mrn.en{level}", m[level - 2], m[level - 1],
                                 config.mrn_blocks[level - 1], level_div(level), a,
                                 first_split=True, last_merge=True)
    if config.attention != "none":
        lvl = config.ena_level
        c = m[lvl - 1]
        div = level_div(lvl)
        layers += _block_layers("mrn.img.block0", block_shapes(3, c, False, True, a), div)
        layers += _block_layers("mrn.img.block1", block_shapes(c, c, True, False, a), div)
        dense = config.attention == "nonlocal"
        for side in ("enc", "dec"):
            name = f"mrn.att_{side}"
            shapes = {f"{name}.{n}": s for n, s in attention_shapes(c, dense=dense).items()}
            layers.append(Layer(name, config.attention, shapes, div, channels=c, k=config.ena_k))
    for level in (4, 3, 2, 1):
        c_in = m[level - 1]
        c_out = m[level - 2] if level > 1 else m[0]
        layers += _single_block(f"mrn.de{level}", c_in, c_out, level_div(level), a)
    layers.append(_conv_layer("mrn.head", m[0], 1, 3, 1))
    return layers


def plan(config: NetConfig) -> list[Layer]:
    return sn_plan(config) + mrn_plan(config)


def param_shapes(config: NetConfig) -> dict[str, tuple[int, ...]]:
    shapes = {}
    for layer in plan(config):
        shapes.update(layer.shapes)
    return shapes


def build_params(config: NetConfig, seed: int | None = None) -> ParamSet:
    """Deterministic init keyed by (seed, parameter name).

    Convolution weights and biases are uniform in +-1/sqrt(fan_in); batch
    norms start as the identity (gamma=1, beta=0, mean=0, var=1).
    """
    seed = config.seed if seed is None else seed
    if seed < 0:
        raise ConfigError("seed", f"{seed} must be non-negative")
    shapes = param_shapes(config)
    params: ParamSet = {}
    for name, shape in shapes.items():
        leaf = name.rsplit(".", 1)[1]
        if leaf in ("gamma", "var"):
            params[name] = np.ones(shape, dtype=T.DTYPE)
        elif leaf in ("beta", "mean"):
            params[name] = np.zeros(shape, dtype=T.DTYPE)
        else:
            wshape = shapes[name[: -len(leaf)] + "weight"]
            bound = 1.0 / math.sqrt(math.prod(wshape[1:]))
            rng = np.random.default_rng([seed, zlib.crc32(name.encode())])
            params[name] = rng.uniform(-bound, bound, size=shape).astype(T.DTYPE)
    return params


def check_params(params: Mapping, config: NetConfig) -> None:
    for name, shape in param_shapes(config).items():
        if name not in params:
            raise ConfigError(name, "missing parameter")
        if tuple(params[name].shape) != shape:
            raise ConfigError(name, f"shape {tuple(params[name].shape)}, expected {shape}")


# forward ------------------------------------------------------------------

class Scope(Mapping):
    """Read-only view of the parameters below ``prefix``."""

    def __init__(self, params: Mapping, prefix: str):
        self._params = params
        self._prefix = prefix + "."

    def __getitem__(self, key):
        return self._params[self._prefix + key]

    def __contains__(self, key):
        return (self._prefix + key) in self._params

    def __iter__(self):
        n = len(self._prefix)
        return (k[n:] for k in self._params if k.startswith(self._prefix))

    def __len__(self):
        return sum(1 for _ in self)


@contextlib.contextmanager
def _stage(name: str):
    try:
        yield
    except (T.ShapeError, KeyError) as exc:
        raise T.ShapeError(f"stage {name}: {exc}") from exc


@dataclass
class SegLogits:
    t: np.ndarray
    aux: list[np.ndarray] = field(default_factory=list)

    @property
    def levels(self) -> list[np.ndarray]:
        """All supervised logits, coarsest first."""
        return [*self.aux, self.t]


def _encode(x: np.ndarray, params: Mapping, prefix: str, blocks: int,
            first_split: bool, last_merge: bool):
    f = x
    for i in range(blocks):
        name = f"{prefix}.block{i}"
        with _stage(name):
            p = Scope(params, name)
            if first_split and i == 0:
                f = ocblock_split(f, p)
            elif last_merge and i == blocks - 1:
                f = ocblock_merge(f, p)
            else:
                f = ocblock_general(f, p)
    return f


def _single(x: np.ndarray, params: Mapping, name: str) -> np.ndarray:
    with _stage(name):
        return ocblock(OctFeature(x), Scope(params, name)).high


def _head(x: np.ndarray, params: Mapping, name: str) -> np.ndarray:
    with _stage(name):
        return T.conv2d(x, params[f"{name}.weight"], params[f"{name}.bias"], pad=1)


def _check_image(image, config: NetConfig, channels: int, what: str) -> np.ndarray:
    image = np.asarray(image, dtype=T.DTYPE)
    s = config.input_size
    if image.ndim != 4 or image.shape[1] != channels or image.shape[2:] != (s, s):
        raise T.ShapeError(f"{what}: expected N x {channels} x {s} x {s}, got {image.shape}")
    return image


def sn_forward(image, params: Mapping, config: NetConfig) -> SegLogits:
    image = _check_image(image, config, 3, "sn image")
    with _stage("sn.stem"):
        f = ocblock_split(image, Scope(params, "sn.stem"))
    f = _encode(f, params, "sn.en1", config.sn_blocks[0], False, False)
    # only the full-resolution part of level 1 feeds level 2
    h = f.high
    feats = {}
    for level in (2, 3, 4):
        h = _encode(T.avg_pool2(h), params, f"sn.en{level}", config.sn_blocks[level - 1],
                    True, True)
        feats[level] = h
    skips = dict(feats)
    if config.use_cfm:
        with _stage("sn.cfm"):
            skips[2] = cfm(feats[2], feats[4], Scope(params, "sn.cfm"))
    logits = []
    d = feats[4]
    for level in (4, 3, 2):
        if level < 4:
            with _stage(f"sn.de{level} skip"):
                d = T.add(skips[level], d)
        d = T.upsample_bilinear2(_single(d, params, f"sn.de{level}"))
        logits.append(_head(d, params, f"sn.head{level}"))
    return SegLogits(t=logits[-1], aux=logits[:-1])


def class_maps(t) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Indicator maps (B, F, U), each N x 1 x H x W, from argmax over 3 logits.

    Ties resolve to the lower channel (background < foreground < unknown).
    """
    t = np.asarray(t)
    if t.ndim != 4 or t.shape[1] != 3:
        raise T.ShapeError(f"expected N x 3 x H x W logits, got {t.shape}")
    label = np.argmax(t, axis=1)[:, None]
    return tuple((label == c).astype(T.DTYPE) for c in (BACKGROUND, FOREGROUND, UNKNOWN))


def _pool_to(x: np.ndarray, div: int) -> np.ndarray:
    while div > 1:
        x = T.avg_pool2(x)
        div //= 2
    return x


def _attend(x, img, u, params, name, config: NetConfig):
    with _stage(name):
        p = Scope(params, name)
        if config.attention == "ena":
            return ena(x, img, img, u, EnaConfig(config.ena_k, p))
        return nonlocal_block(x, img, img, u, p)


def mrn_forward(image, t, params: Mapping, config: NetConfig) -> np.ndarray:
    """Refined alpha in [0, 1], N x 1 x S x S."""
    image = _check_image(image, config, 3, "mrn image")
    t = _check_image(t, config, 3, "mrn logits")
    probs = np.moveaxis(T.softmax_rows(np.moveaxis(t, 1, -1)), -1, 1)
    x = np.concatenate([image, probs], axis=1)
    with _stage("mrn.stem"):
        f = ocblock_split(x, Scope(params, "mrn.stem"))
    enc = {1: _encode(f, params, "mrn.en1", config.mrn_blocks[0], False, True)}
    for level in (2, 3, 4):
        enc[level] = _encode(T.avg_pool2(enc[level - 1]), params, f"mrn.en{level}",
                             config.mrn_blocks[level - 1], True, True)

    lvl = config.ena_level
    attn = config.attention != "none"
    if attn:
        div = level_div(lvl)
        with _stage("mrn.img"):
            small = _pool_to(image, div)
            img_f = ocblock_split(small, Scope(params, "mrn.img.block0"))
            img_f = ocblock_merge(img_f, Scope(params, "mrn.img.block1"))
        u = _pool_to(class_maps(t)[2], div)
        enc[lvl] = _attend(enc[lvl], img_f, u, params, "mrn.att_enc", config)

    d = enc[4]
    for level in (4, 3, 2, 1):
        if level < 4:
            with _stage(f"mrn.de{level} skip"):
                d = T.add(enc[level], d)
        if attn and level == lvl:
            d = _attend(d, img_f, u, params, "mrn.att_dec", config)
        d = _single(d, params, f"mrn.de{level}")
        if level > 1:
            d = T.upsample_bilinear2(d)
    return T.sigmoid(_head(d, params, "mrn.head"))


def compose_alpha(t, alpha_r) -> np.ndarray:
    """alpha = clamp01(F + alpha_r * U) from the segmentation argmax."""
    _, fg, unknown = class_maps(t)
    alpha_r = np.asarray(alpha_r, dtype=T.DTYPE)
    if alpha_r.shape != fg.shape:
        raise T.ShapeError(f"compose_alpha: alpha_r {alpha_r.shape} vs logits {np.shape(t)}")
    return T.clamp01(T.add(fg, T.mul(alpha_r, unknown)))


def model_forward(image, params: Mapping, config: NetConfig):
    """Full pipeline; returns (alpha, SegLogits)."""
    seg = sn_forward(image, params, config)
    alpha_r = mrn_forward(image, seg.t, params, config)
    return compose_alpha(seg.t, alpha_r), seg
