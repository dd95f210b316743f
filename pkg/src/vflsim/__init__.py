"""Deterministic vertical federated learning simulator."""

from .alignment import hash_ids, intersect
from .channel import ChannelKind, ChannelSpec
from .compression import backward_approx, dequantize, message_bytes, quantize
from .config import ExperimentConfig, load_config
from .privacy import DpConfig, clip_and_perturb, gaussian_sigma
from .protocol import Federation, auc
from .split import SplitScheme, build_models, flops_of, transmission_bytes

__version__ = "0.1.0"

__all__ = [
    "hash_ids", "intersect", "ChannelKind", "ChannelSpec", "backward_approx", "dequantize",
    "message_bytes", "quantize", "ExperimentConfig", "load_config", "DpConfig",
    "clip_and_perturb", "gaussian_sigma", "Federation", "auc", "SplitScheme", "build_models",
    "flops_of", "transmission_bytes",
]
