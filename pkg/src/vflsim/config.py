"""Experiment configuration: an INI file with one section per concern.

Example::

    [data]
    source = synthetic        # or a path to a CSV file
    kind = adult              # synthetic generator / built-in schema
    rows = 6250
    seed = 0
    test_fraction = 0.2
    salt = vflsim
    drop_fraction = 0.0       # per-participant row loss before alignment

    [scheme]
    cut_layer = 2

    [channel]
    kind = dp                 # identity | dp | quantize | dp_then_quantize

    [dp]
    enabled = true            # false keeps the block but ignores it
    epsilon = 1.0
    delta = 1e-05
    clip_norm = 1.0

    [train]
    lr = 0.0002
    epochs = 30
    batch_size = 256
    seeds = 0, 1, 2

A ``[dp]`` section is required exactly when the channel uses DP and a
``[quantize]`` section (``n_buckets``, ``approx``) exactly when it
quantizes. CSV data with a non built-in schema adds ``schema = custom``,
``id_column``, ``label_column`` and ``attributes = name:kind, ...``.
"""

from __future__ import annotations

import configparser
import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path

from .channel import ChannelKind, ChannelSpec
from .compression import ApproxKind
from .data import BUILTIN_SCHEMAS, DatasetSchema, Kind
from .errors import ConfigError
from .privacy import DpConfig
from .split import SplitScheme

SECTIONS = {
    "data": {"source", "kind", "rows", "seed", "test_fraction", "salt", "drop_fraction",
             "schema", "id_column", "label_column", "attributes"},
    "scheme": {"cut_layer"},
    "channel": {"kind", "noisy_inference"},
    "dp": {"enabled", "epsilon", "delta", "clip_norm"},
    "quantize": {"n_buckets", "approx"},
    "train": {"lr", "beta1", "beta2", "epochs", "batch_size", "seeds"},
    "output": {"dir"},
}


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"
    kind: str = "adult"
    rows: int = 6250
    seed: int = 0
    test_fraction: float = 0.2
    salt: str = "vflsim"
    drop_fraction: float = 0.0
    schema: str = ""
    id_column: str = "id"
    label_column: str = "label"
    attributes: tuple[tuple[str, str], ...] = ()

    @property
    def synthetic(self) -> bool:
        return self.source == "synthetic"

    def dataset_schema(self) -> DatasetSchema:
        name = self.schema or self.kind
        if name == "custom":
            return DatasetSchema(self.id_column, self.label_column,
                                 tuple((n, Kind(k)) for n, k in self.attributes))
        if name not in BUILTIN_SCHEMAS:
            raise ConfigError(f"unknown schema {name!r}")
        return BUILTIN_SCHEMAS[name]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.0002
    beta1: float = 0.9
    beta2: float = 0.999
    epochs: int = 30
    batch_size: int = 256
    seeds: tuple[int, ...] = (0, 1, 2)


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    cut_layer: int = 2
    channel: ChannelSpec = field(default_factory=ChannelSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    out_dir: str = ""

    @property
    def scheme(self) -> SplitScheme:
        return SplitScheme(self.cut_layer)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


class _Lines:
    """1-based line numbers of section headers and keys in an INI text."""

    def __init__(self, text: str):
        self.sections: dict[str, int] = {}
        self.keys: dict[tuple[str, str], int] = {}
        current = None
        for no, line in enumerate(text.splitlines(), start=1):
            s = line.strip()
            m = re.match(r"^\[([^\]]+)\]", s)
            if m:
                current = m.group(1).strip().lower()
                self.sections.setdefault(current, no)
            elif current and s and s[0] not in "#;":
                key = re.split(r"[=:]", s, maxsplit=1)[0].strip().lower()
                self.keys.setdefault((current, key), no)

    def of(self, section: str, key: str | None = None) -> int | None:
        if key is not None and (section, key) in self.keys:
            return self.keys[(section, key)]
        return self.sections.get(section)


def parse_config(text: str, path: str | None = None) -> ExperimentConfig:
    lines = _Lines(text)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text, source=path or "<config>")
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], getattr(exc, "lineno", None), path) from None

    def fail(msg: str, section: str, key: str | None = None):
        raise ConfigError(msg, lines.of(section, key), path)

    for sec in cp.sections():
        if sec not in SECTIONS:
            fail(f"unknown section [{sec}]", sec)
        for key in cp[sec]:
            if key not in SECTIONS[sec]:
                fail(f"unknown key {key!r} in [{sec}]", sec, key)

    def get(sec, key, conv, default):
        if not cp.has_option(sec, key):
            return default
        raw = cp.get(sec, key)
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            fail(f"bad value {raw!r} for {sec}.{key}: {exc}", sec, key)

    def as_int(s: str) -> int:
        f = float(s)
        if f != int(f):
            raise ValueError("not an integer")
        return int(f)

    def as_bool(s: str) -> bool:
        v = s.strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ValueError("expected true/false")

    def as_attrs(s: str) -> tuple[tuple[str, str], ...]:
        out = []
        for item in filter(None, (p.strip() for p in s.split(","))):
            name, _, kind = item.partition(":")
            out.append((name.strip(), Kind(kind.strip()).value))
        return tuple(out)

    def as_seeds(s: str) -> tuple[int, ...]:
        seeds = tuple(as_int(p) for p in s.split(",") if p.strip())
        if not seeds:
            raise ValueError("at least one seed required")
        return seeds

    d = DataConfig()
    data = DataConfig(
        source=get("data", "source", str, d.source),
        kind=get("data", "kind", str, d.kind),
        rows=get("data", "rows", as_int, d.rows),
        seed=get("data", "seed", as_int, d.seed),
        test_fraction=get("data", "test_fraction", float, d.test_fraction),
        salt=get("data", "salt", str, d.salt),
        drop_fraction=get("data", "drop_fraction", float, d.drop_fraction),
        schema=get("data", "schema", str, d.schema),
        id_column=get("data", "id_column", str, d.id_column),
        label_column=get("data", "label_column", str, d.label_column),
        attributes=get("data", "attributes", as_attrs, d.attributes),
    )
    if data.synthetic and data.kind not in BUILTIN_SCHEMAS:
        fail(f"unknown synthetic kind {data.kind!r}", "data", "kind")
    if not data.synthetic:
        src = Path(data.source)
        if path and not src.is_absolute():
            src = Path(path).parent / src
        if not src.exists():
            fail(f"data file {data.source!r} does not exist", "data", "source")
        data = dataclasses.replace(data, source=str(src.resolve()))
    if not 0.0 < data.test_fraction < 1.0:
        fail("test_fraction must lie in (0, 1)", "data", "test_fraction")
    if not 0.0 <= data.drop_fraction < 1.0:
        fail("drop_fraction must lie in [0, 1)", "data", "drop_fraction")
    if data.rows < 10:
        fail("rows must be at least 10", "data", "rows")
    try:
        data.dataset_schema()
    except (ConfigError, ValueError) as exc:
        fail(str(exc), "data", "schema")

    cut = get("scheme", "cut_layer", as_int, 2)
    if cut not in (1, 2, 3):
        fail(f"cut_layer must be 1, 2 or 3, got {cut}", "scheme", "cut_layer")

    kind_raw = get("channel", "kind", str, "identity")
    try:
        kind = ChannelKind(kind_raw)
    except ValueError:
        fail(f"unknown channel kind {kind_raw!r}", "channel", "kind")
    has_dp, has_q = cp.has_section("dp"), cp.has_section("quantize")
    if has_dp and not get("dp", "enabled", as_bool, True):
        has_dp = False  # a disabled [dp] block is kept for reference only
    if has_dp and has_q and kind is not ChannelKind.DP_THEN_QUANTIZE:
        fail("both [dp] and [quantize] given; stacking requires channel kind dp_then_quantize",
             "quantize")
    wants_dp = kind in (ChannelKind.DP, ChannelKind.DP_THEN_QUANTIZE)
    wants_q = kind in (ChannelKind.QUANTIZE, ChannelKind.DP_THEN_QUANTIZE)
    if has_dp and not wants_dp:
        fail(f"[dp] section given but channel kind is {kind.value}", "dp")
    if has_q and not wants_q:
        fail(f"[quantize] section given but channel kind is {kind.value}", "quantize")
    if wants_dp and not has_dp:
        fail(f"channel kind {kind.value} needs a [dp] section", "channel", "kind")
    if wants_q and not has_q:
        fail(f"channel kind {kind.value} needs a [quantize] section", "channel", "kind")

    dp = None
    if wants_dp:
        try:
            dp = DpConfig(get("dp", "epsilon", float, 1.0), get("dp", "delta", float, 1e-5),
                          get("dp", "clip_norm", float, 1.0))
        except ConfigError as exc:
            fail(str(exc), "dp")
    n_buckets, approx = None, ApproxKind.ADDITION
    if wants_q:
        n_buckets = get("quantize", "n_buckets", as_int, None)
        if n_buckets is None or n_buckets < 2:
            fail("quantize.n_buckets must be an integer >= 2", "quantize", "n_buckets")
        approx_raw = get("quantize", "approx", str, "addition")
        try:
            approx = ApproxKind(approx_raw)
        except ValueError:
            fail(f"unknown approximation {approx_raw!r}", "quantize", "approx")
    channel = ChannelSpec(kind, dp, n_buckets, approx,
                          get("channel", "noisy_inference", as_bool, False))

    t = TrainConfig()
    train = TrainConfig(
        lr=get("train", "lr", float, t.lr),
        beta1=get("train", "beta1", float, t.beta1),
        beta2=get("train", "beta2", float, t.beta2),
        epochs=get("train", "epochs", as_int, t.epochs),
        batch_size=get("train", "batch_size", as_int, t.batch_size),
        seeds=get("train", "seeds", as_seeds, t.seeds),
    )
    if train.lr < 0:
        fail("lr must be >= 0", "train", "lr")
    if train.epochs < 1:
        fail("epochs must be >= 1", "train", "epochs")
    if train.batch_size < 1:
        fail("batch_size must be >= 1", "train", "batch_size")
    if not (0 <= train.beta1 < 1 and 0 <= train.beta2 < 1):
        fail("betas must lie in [0, 1)", "train")

    return ExperimentConfig(data, cut, channel, train, get("output", "dir", str, ""))


def load_config(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", path=str(p)) from None
    return parse_config(text, str(p))


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(cfg: ExperimentConfig) -> str:
    """Render a config so that ``parse_config(dump_config(c)) == c``."""
    d = cfg.data
    out = ["[data]"]
    for key in ("source", "kind", "rows", "seed", "test_fraction", "salt", "drop_fraction"):
        out.append(f"{key} = {_fmt(getattr(d, key))}")
    if d.schema:
        out.append(f"schema = {d.schema}")
    if d.schema == "custom" or d.attributes:
        out.append(f"id_column = {d.id_column}")
        out.append(f"label_column = {d.label_column}")
        out.append("attributes = " + ", ".join(f"{n}:{k}" for n, k in d.attributes))
    out += ["", "[scheme]", f"cut_layer = {cfg.cut_layer}", "", "[channel]",
            f"kind = {cfg.channel.kind.value}",
            f"noisy_inference = {str(cfg.channel.noisy_inference).lower()}"]
    if cfg.channel.uses_dp:
        dp = cfg.channel.dp
        out += ["", "[dp]", "enabled = true", f"epsilon = {_fmt(float(dp.epsilon))}", f"delta = {_fmt(float(dp.delta))}",
                f"clip_norm = {_fmt(float(dp.clip_norm))}"]
    if cfg.channel.uses_quantize:
        out += ["", "[quantize]", f"n_buckets = {cfg.channel.n_buckets}",
                f"approx = {cfg.channel.approx.value}"]
    t = cfg.train
    out += ["", "[train]", f"lr = {_fmt(float(t.lr))}", f"beta1 = {_fmt(float(t.beta1))}",
            f"beta2 = {_fmt(float(t.beta2))}", f"epochs = {t.epochs}", f"batch_size = {t.batch_size}",
            "seeds = " + ", ".join(str(s) for s in t.seeds)]
    if cfg.out_dir:
        out += ["", "[output]", f"dir = {cfg.out_dir}"]
    return "\n".join(out) + "\n"


SWEEP_AXES = ("dp.epsilon", "quantize.n_buckets", "quantize.approx", "scheme.cut_layer")
OFF_VALUES = ("none", "off")


def apply_axis(cfg: ExperimentConfig, axis: str, value: str) -> ExperimentConfig:
    """Return ``cfg`` with one sweep axis set.

    ``dp.epsilon=none`` and ``quantize.n_buckets=none`` switch that channel
    stage off, giving the uncompressed / noise-free baseline of a sweep.
    """
    ch = cfg.channel
    v = str(value).strip()
    try:
        if axis == "scheme.cut_layer":
            cut = int(v)
            SplitScheme(cut)
            return cfg.replace(cut_layer=cut)
        if axis == "dp.epsilon":
            if v.lower() in OFF_VALUES:
                kind = ChannelKind.QUANTIZE if ch.uses_quantize else ChannelKind.IDENTITY
                return cfg.replace(channel=dataclasses.replace(ch, kind=kind, dp=None))
            base = ch.dp or DpConfig()
            dp = DpConfig(float(v), base.delta, base.clip_norm)
            kind = ChannelKind.DP_THEN_QUANTIZE if ch.uses_quantize else ChannelKind.DP
            return cfg.replace(channel=dataclasses.replace(ch, kind=kind, dp=dp))
        if axis == "quantize.n_buckets":
            if v.lower() in OFF_VALUES:
                kind = ChannelKind.DP if ch.uses_dp else ChannelKind.IDENTITY
                return cfg.replace(channel=dataclasses.replace(ch, kind=kind, n_buckets=None))
            kind = ChannelKind.DP_THEN_QUANTIZE if ch.uses_dp else ChannelKind.QUANTIZE
            return cfg.replace(channel=dataclasses.replace(ch, kind=kind, n_buckets=int(v)))
        if axis == "quantize.approx":
            approx = ApproxKind(v)
            if not ch.uses_quantize:
                raise ConfigError("quantize.approx sweep needs a quantizing base channel")
            return cfg.replace(channel=dataclasses.replace(ch, approx=approx))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad value {value!r} for axis {axis}: {exc}") from None
    raise ConfigError(f"unknown sweep axis {axis!r}; choose from {', '.join(SWEEP_AXES)}")
