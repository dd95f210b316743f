"""Shared builders for protocol-level tests."""

import numpy as np

from vflsim.channel import ChannelSpec
from vflsim.config import DataConfig, ExperimentConfig, TrainConfig
from vflsim.experiment import prepare


def small_config(rows=1000, cut=2, channel=None, epochs=2, seeds=(0,), kind="adult",
                 batch_size=256, lr=0.0002) -> ExperimentConfig:
    return ExperimentConfig(DataConfig(kind=kind, rows=rows, seed=0), cut,
                            channel or ChannelSpec.identity(),
                            TrainConfig(lr=lr, epochs=epochs, batch_size=batch_size, seeds=seeds),
                            "")


_cache = {}


def small_data(rows=1000, kind="adult"):
    key = (rows, kind)
    if key not in _cache:
        _cache[key] = prepare(small_config(rows=rows, kind=kind))
    return _cache[key]


def all_params(models):
    out = []
    for b in models.bottoms:
        out += b.params()
    return out + models.top.params()


def max_param_diff(a, b):
    return max(float(np.max(np.abs(x - y))) for x, y in zip(all_params(a), all_params(b)))
