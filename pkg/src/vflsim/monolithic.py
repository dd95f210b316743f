"""Single-process reference trainer for a split architecture.

Runs the bottoms, the concatenation and the top model in one loop with no
messages, no serialization and no ledger. With ``wire_float32=True`` it
rounds the cut-layer activations and their gradients to float32, which is
exactly what the identity channel's wire encoding does, so a federated run
and this trainer should agree bit for bit.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .split import SplitModels
from .tensor import AdamState, adam_step, bce_loss


def _wire(a: np.ndarray, enabled: bool) -> np.ndarray:
    return a.astype(np.float32).astype(np.float64) if enabled else a


class MonolithicTrainer:
    def __init__(self, models: SplitModels, guest_x: Sequence[np.ndarray], y: np.ndarray,
                 lr: float = 0.0002, betas: tuple[float, float] = (0.9, 0.999),
                 wire_float32: bool = True):
        self.models = models
        self.guest_x = [np.asarray(x, dtype=np.float64) for x in guest_x]
        self.y = np.asarray(y, dtype=np.float64)
        self.wire_float32 = wire_float32
        self.bottom_opt = [AdamState.for_params(b.params(), lr, *betas) for b in models.bottoms]
        self.top_opt = AdamState.for_params(models.top.params(), lr, *betas)

    def step(self, idx) -> float:
        outs, caches = [], []
        for bottom, x in zip(self.models.bottoms, self.guest_x):
            o, c = bottom.forward(x[idx])
            outs.append(_wire(o, self.wire_float32))
            caches.append(c)
        h = np.hstack(outs)
        probs, top_caches = self.models.top.forward(h)
        loss, grad_p = bce_loss(probs[:, 0], self.y[idx])
        grad_h, top_grads = self.models.top.backward(grad_p.reshape(-1, 1), top_caches)
        params, self.top_opt = adam_step(self.models.top.params(), top_grads, self.top_opt)
        self.models.top.set_params(params)
        start = 0
        for g, (bottom, o) in enumerate(zip(self.models.bottoms, outs)):
            w = o.shape[1]
            grad_o = _wire(grad_h[:, start:start + w], self.wire_float32)
            start += w
            _, grads = bottom.backward(grad_o, caches[g])
            params, self.bottom_opt[g] = adam_step(bottom.params(), grads, self.bottom_opt[g])
            bottom.set_params(params)
        return loss

    def train_epoch(self, batches: Sequence[np.ndarray]) -> float:
        total, count = 0.0, 0
        for idx in batches:
            total += self.step(idx) * len(idx)
            count += len(idx)
        return total / max(count, 1)

    def all_params(self) -> list[np.ndarray]:
        out = []
        for b in self.models.bottoms:
            out += b.params()
        return out + self.models.top.params()
