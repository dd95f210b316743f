"""Gaussian-mechanism channel for per-sample forward outputs.

Each row of a forward block is clipped to L2 norm ``clip_norm`` and then
perturbed with isotropic Gaussian noise. The noise scale uses the classic
(epsilon, delta) calibration with the clip norm as L2 sensitivity. Budgets
are per transmission; no composition across rounds or epochs is tracked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError


@dataclass(frozen=True)
class DpConfig:
    epsilon: float = 1.0
    delta: float = 1e-5
    clip_norm: float = 1.0

    def __post_init__(self) -> None:
        gaussian_sigma(self.epsilon, self.delta, self.clip_norm)

    @property
    def sigma(self) -> float:
        return gaussian_sigma(self.epsilon, self.delta, self.clip_norm)


def gaussian_sigma(epsilon: float, delta: float, sensitivity: float) -> float:
    if not (epsilon > 0 and math.isfinite(epsilon)):
        raise ConfigError(f"epsilon must be positive and finite, got {epsilon}")
    if not 0 < delta < 1:
        raise ConfigError(f"delta must lie in (0, 1), got {delta}")
    if not (sensitivity > 0 and math.isfinite(sensitivity)):
        raise ConfigError(f"sensitivity must be positive and finite, got {sensitivity}")
    return sensitivity * math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon


def clip_rows(o, clip_norm: float) -> np.ndarray:
    """Scale every row with L2 norm above ``clip_norm`` down onto the ball."""
    o = np.asarray(o, dtype=np.float64)
    rows = o.reshape(1, -1) if o.ndim == 1 else o
    norms = np.sqrt(np.einsum("ij,ij->i", rows, rows))
    scale = np.minimum(1.0, clip_norm / np.maximum(norms, np.finfo(np.float64).tiny))
    return (rows * scale[:, None]).reshape(o.shape)


def clip_and_perturb(o, cfg: DpConfig, rng: np.random.Generator,
                     sigma: float | None = None) -> np.ndarray:
    """Clip each sample (row) and add fresh ``N(0, sigma^2)`` noise.

    ``sigma`` overrides the calibrated value; tests use ``sigma=0`` to check
    the clipping path alone.
    """
    o = np.asarray(o, dtype=np.float64)
    if not np.all(np.isfinite(o)):
        raise NumericError("non-finite forward output")
    s = cfg.sigma if sigma is None else float(sigma)
    clipped = clip_rows(o, cfg.clip_norm)
    if s == 0.0:
        return clipped
    return clipped + rng.normal(0.0, s, size=clipped.shape)
