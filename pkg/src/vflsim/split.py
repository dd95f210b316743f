"""Splitting schemes, bottom/top model construction and cost accounting.

The monolithic network has hidden widths 48, 96 and 196 feeding one sigmoid
unit. Cutting after hidden layer ``k`` gives each of the three guests a
bottom model ending in 16, 32 or 64 units; the host's top model consumes
their concatenation. With a cut after the third layer the host input is
3 x 64 = 192 rather than 196.

FLOP convention: a dense layer costs ``2*in*out`` multiply-adds plus ``out``
bias adds per sample; a backward pass costs twice its forward pass.
Wire values are 32-bit floats.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import ChannelKind, ChannelSpec
from .compression import quantized_size
from .errors import ConfigError, DimensionError
from .tensor import MLP, Activation

FULL_WIDTHS = (48, 96, 196)
PER_GUEST_WIDTHS = (16, 32, 64)
WIRE_FLOAT_BYTES = 4


@dataclass(frozen=True)
class SplitScheme:
    cut_layer: int = 2
    guests: int = 3
    full_widths: tuple[int, ...] = FULL_WIDTHS

    def __post_init__(self) -> None:
        if self.cut_layer not in (1, 2, 3):
            raise ConfigError(f"cut_layer must be 1, 2 or 3, got {self.cut_layer!r}")
        if self.guests < 1:
            raise ConfigError("need at least one guest")

    @property
    def bottom_hidden(self) -> list[int]:
        return list(PER_GUEST_WIDTHS[: self.cut_layer])

    @property
    def per_guest_out(self) -> int:
        return PER_GUEST_WIDTHS[self.cut_layer - 1]

    @property
    def top_input(self) -> int:
        return self.guests * self.per_guest_out

    @property
    def top_widths(self) -> list[int]:
        return [self.top_input, *self.full_widths[self.cut_layer:], 1]


@dataclass
class SplitModels:
    scheme: SplitScheme
    bottoms: list[MLP]
    top: MLP

    def copy(self) -> "SplitModels":
        return SplitModels(self.scheme, [b.copy() for b in self.bottoms], self.top.copy())


def bottom_rng(seed: int, guest: int) -> np.random.Generator:
    return np.random.default_rng([seed, 1000 + guest])


def top_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, 999])


def build_models(scheme: SplitScheme, guest_input_widths: Sequence[int], seed: int) -> SplitModels:
    if len(guest_input_widths) != scheme.guests:
        raise ConfigError(f"{len(guest_input_widths)} input widths for {scheme.guests} guests")
    bottoms = []
    for g, d in enumerate(guest_input_widths):
        if d < 1:
            raise DimensionError(f"guest {g} has no input columns")
        widths = [int(d)] + scheme.bottom_hidden
        bottoms.append(MLP.build(widths, [Activation.RELU] * (len(widths) - 1), bottom_rng(seed, g)))
    tw = scheme.top_widths
    acts = [Activation.RELU] * (len(tw) - 2) + [Activation.SIGMOID]
    top = MLP.build(tw, acts, top_rng(seed))
    return SplitModels(scheme, bottoms, top)


def flops_of(model: MLP, batch: int, pass_: str = "forward") -> int:
    fwd = sum((2 * layer.in_features * layer.out_features + layer.out_features) * batch
              for layer in model.layers)
    if pass_ == "forward":
        return fwd
    if pass_ == "backward":
        return 2 * fwd
    raise ValueError(f"pass must be 'forward' or 'backward', got {pass_!r}")


def transmission_bytes(scheme: SplitScheme, n_samples: int, channel: ChannelSpec,
                       batch_size: int | None = None) -> tuple[int, int]:
    """Per-guest payload bytes ``(forward, backward)`` for one pass over ``n_samples``.

    Quantized payloads depend on how samples are grouped into messages; by
    default all samples travel in one message. Frame headers are excluded.
    """
    width = scheme.per_guest_out
    bwd = n_samples * width * WIRE_FLOAT_BYTES
    if not channel.uses_quantize:
        return bwd, bwd
    bs = n_samples if not batch_size else batch_size
    full, rest = divmod(n_samples, bs) if bs else (0, 0)
    fwd = full * quantized_size(bs * width, channel.n_buckets)
    if rest:
        fwd += quantized_size(rest * width, channel.n_buckets)
    return fwd, bwd


@dataclass
class ParticipantCost:
    flops_forward: int = 0
    flops_backward: int = 0
    bytes_sent: int = 0
    bytes_received: int = 0

    def minus(self, other: "ParticipantCost") -> "ParticipantCost":
        return ParticipantCost(self.flops_forward - other.flops_forward,
                               self.flops_backward - other.flops_backward,
                               self.bytes_sent - other.bytes_sent,
                               self.bytes_received - other.bytes_received)


LEDGER_FIELDS = ("participant", "epoch", "flops_fwd", "flops_bwd", "bytes_sent", "bytes_received")


@dataclass
class CostLedger:
    """Cumulative per-participant FLOPs and serialized bytes."""

    costs: dict[str, ParticipantCost] = field(default_factory=dict)

    def register(self, name: str) -> None:
        self.costs.setdefault(name, ParticipantCost())

    def __getitem__(self, name: str) -> ParticipantCost:
        return self.costs[name]

    def add_flops(self, name: str, forward: int = 0, backward: int = 0) -> None:
        if forward < 0 or backward < 0:
            raise ValueError("FLOP counts cannot be negative")
        c = self.costs.setdefault(name, ParticipantCost())
        c.flops_forward += forward
        c.flops_backward += backward

    def transfer(self, sender: str, receiver: str, nbytes: int) -> None:
        if nbytes < 0:
            raise ValueError("byte counts cannot be negative")
        self.costs.setdefault(sender, ParticipantCost()).bytes_sent += nbytes
        self.costs.setdefault(receiver, ParticipantCost()).bytes_received += nbytes

    def snapshot(self) -> dict[str, ParticipantCost]:
        return {k: ParticipantCost(**vars(v)) for k, v in self.costs.items()}

    def delta(self, since: dict[str, ParticipantCost]) -> dict[str, ParticipantCost]:
        return {k: v.minus(since.get(k, ParticipantCost())) for k, v in self.costs.items()}

    def to_csv(self, epoch_deltas: Sequence[dict[str, ParticipantCost]]) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LEDGER_FIELDS)
        for epoch, deltas in enumerate(epoch_deltas, start=1):
            for name in sorted(deltas):
                c = deltas[name]
                w.writerow([name, epoch, c.flops_forward, c.flops_backward,
                            c.bytes_sent, c.bytes_received])
        return buf.getvalue()


def scheme_costs(scheme: SplitScheme, guest_input_widths: Sequence[int], n_samples: int,
                 channel: ChannelSpec | None = None,
                 batch_size: int | None = None) -> dict[str, dict[str, int]]:
    """Analytic per-epoch cost of one guest (``guest0``) and the host."""
    channel = channel or ChannelSpec(ChannelKind.IDENTITY)
    models = build_models(scheme, guest_input_widths, seed=0)
    fwd_b, bwd_b = transmission_bytes(scheme, n_samples, channel, batch_size)
    guest = models.bottoms[0]
    return {
        "guest0": {"flops_fwd": flops_of(guest, n_samples), "flops_bwd": flops_of(guest, n_samples, "backward"),
                   "bytes_sent": fwd_b, "bytes_received": bwd_b},
        "host": {"flops_fwd": flops_of(models.top, n_samples),
                 "flops_bwd": flops_of(models.top, n_samples, "backward"),
                 "bytes_sent": scheme.guests * bwd_b, "bytes_received": scheme.guests * fwd_b},
    }


__all__ = [
    "FULL_WIDTHS", "PER_GUEST_WIDTHS", "SplitScheme", "SplitModels", "build_models",
    "flops_of", "transmission_bytes", "CostLedger", "ParticipantCost", "scheme_costs",
]
