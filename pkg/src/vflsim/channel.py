"""Guest-side transmission channels for forward outputs."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .compression import ApproxKind
from .errors import ConfigError
from .privacy import DpConfig


class ChannelKind(str, enum.Enum):
    IDENTITY = "identity"
    DP = "dp"
    QUANTIZE = "quantize"
    DP_THEN_QUANTIZE = "dp_then_quantize"


@dataclass(frozen=True)
class ChannelSpec:
    kind: ChannelKind = ChannelKind.IDENTITY
    dp: DpConfig | None = None
    n_buckets: int | None = None
    approx: ApproxKind = ApproxKind.ADDITION
    # noise at evaluation time; off by default
    noisy_inference: bool = field(default=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ChannelKind(self.kind))
        object.__setattr__(self, "approx", ApproxKind(self.approx))
        if self.uses_dp and self.dp is None:
            raise ConfigError(f"channel {self.kind.value} needs a dp configuration")
        if self.uses_quantize:
            if self.n_buckets is None or int(self.n_buckets) < 2:
                raise ConfigError(f"channel {self.kind.value} needs n_buckets >= 2")

    @property
    def uses_dp(self) -> bool:
        return self.kind in (ChannelKind.DP, ChannelKind.DP_THEN_QUANTIZE)

    @property
    def uses_quantize(self) -> bool:
        return self.kind in (ChannelKind.QUANTIZE, ChannelKind.DP_THEN_QUANTIZE)

    @classmethod
    def identity(cls) -> "ChannelSpec":
        return cls()

    @classmethod
    def gaussian(cls, epsilon: float, delta: float = 1e-5, clip_norm: float = 1.0) -> "ChannelSpec":
        return cls(ChannelKind.DP, dp=DpConfig(epsilon, delta, clip_norm))

    @classmethod
    def quantized(cls, n_buckets: int, approx: ApproxKind | str = ApproxKind.ADDITION) -> "ChannelSpec":
        return cls(ChannelKind.QUANTIZE, n_buckets=int(n_buckets), approx=ApproxKind(approx))
