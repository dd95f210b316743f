"""The per-batch guest/host training round and test-time evaluation.

Guests and the host only talk through :class:`Transport`, which serializes
every message to bytes, charges the byte count to the cost ledger and hands
the receiver a freshly decoded copy.

Frame layout (little-endian)::

    u8 type | u16 guest_id | u32 batch_count | payload

``type`` is 0 for a raw forward block, 1 for a quantized forward block and 2
for a backward gradient block. Raw and gradient payloads are
``batch_count * width`` float32 values in row-major order; quantized
payloads use the layout documented in :mod:`vflsim.compression`.
"""

from __future__ import annotations

import struct
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import compression
from .channel import ChannelSpec
from .compression import ApproxParams, QuantizedMessage
from .errors import AlignmentError, CorruptionError, DimensionError, ProtocolError, UndefinedMetricError
from .privacy import clip_and_perturb
from .split import CostLedger, SplitModels, flops_of
from .tensor import MLP, AdamState, adam_step, bce_loss

FRAME = struct.Struct("<BHI")
RAW_FORWARD, QUANTIZED_FORWARD, BACKWARD = 0, 1, 2
HOST = "host"


def guest_name(guest_id: int) -> str:
    return f"guest{guest_id}"


@dataclass(eq=False)
class ForwardMessage:
    guest_id: int
    batch_indices: np.ndarray
    payload: np.ndarray | QuantizedMessage

    @property
    def quantized(self) -> bool:
        return isinstance(self.payload, QuantizedMessage)

    @property
    def batch(self) -> int:
        return len(self.batch_indices)

    def matrix(self) -> np.ndarray:
        if self.quantized:
            values = compression.dequantize(self.payload)
            if self.batch == 0 or values.size % self.batch:
                raise DimensionError(f"{values.size} values do not fill {self.batch} rows")
            return values.reshape(self.batch, -1)
        return np.asarray(self.payload, dtype=np.float64)

    def to_bytes(self) -> bytes:
        if self.quantized:
            head = FRAME.pack(QUANTIZED_FORWARD, self.guest_id, self.batch)
            return head + compression.serialize(self.payload)
        head = FRAME.pack(RAW_FORWARD, self.guest_id, self.batch)
        return head + np.ascontiguousarray(self.payload, dtype="<f4").tobytes()

    @property
    def nbytes(self) -> int:
        return len(self.to_bytes())


@dataclass(eq=False)
class BackwardMessage:
    guest_id: int
    batch_indices: np.ndarray
    grad: np.ndarray

    def to_bytes(self) -> bytes:
        head = FRAME.pack(BACKWARD, self.guest_id, len(self.batch_indices))
        return head + np.ascontiguousarray(self.grad, dtype="<f4").tobytes()

    @property
    def nbytes(self) -> int:
        return len(self.to_bytes())


def decode_frame(buf: bytes, batch_indices: np.ndarray | None = None):
    """Rebuild a message from its bytes.

    Batch indices are not on the wire; every participant derives them from
    the shared batch plan, so the caller supplies them (default ``arange``).
    """
    if len(buf) < FRAME.size:
        raise CorruptionError("truncated frame header")
    kind, gid, batch = FRAME.unpack_from(buf, 0)
    idx = np.arange(batch) if batch_indices is None else np.asarray(batch_indices)
    if len(idx) != batch:
        raise AlignmentError(f"frame carries {batch} rows, batch plan has {len(idx)}")
    body = buf[FRAME.size:]
    if kind == QUANTIZED_FORWARD:
        return ForwardMessage(gid, idx, compression.deserialize(body))
    if kind not in (RAW_FORWARD, BACKWARD):
        raise CorruptionError(f"unknown frame type {kind}")
    if len(body) % 4 or (batch and (len(body) // 4) % batch):
        raise CorruptionError(f"payload of {len(body)} bytes does not fill {batch} rows")
    values = np.frombuffer(body, dtype="<f4").astype(np.float64)
    width = len(values) // batch if batch else 0
    values = values.reshape(batch, width)
    if kind == RAW_FORWARD:
        return ForwardMessage(gid, idx, values)
    return BackwardMessage(gid, idx, values)


@dataclass
class Transport:
    """In-process mailbox with mandatory serialization.

    ``ledger=None`` delivers without charging costs (used for evaluation).
    """

    ledger: CostLedger | None = None
    _boxes: dict[str, deque] = field(default_factory=dict)

    def send(self, sender: str, receiver: str, msg: ForwardMessage | BackwardMessage) -> int:
        frame = msg.to_bytes()
        if self.ledger is not None:
            self.ledger.transfer(sender, receiver, len(frame))
        self._boxes.setdefault(receiver, deque()).append((frame, np.array(msg.batch_indices)))
        return len(frame)

    def receive(self, receiver: str) -> list:
        box = self._boxes.get(receiver, deque())
        out = []
        while box:
            frame, idx = box.popleft()
            out.append(decode_frame(frame, idx))
        return out


def clip_backward(o: np.ndarray, grad: np.ndarray, clip_norm: float) -> np.ndarray:
    """Vector-Jacobian product of per-row L2 clipping."""
    norms = np.sqrt(np.einsum("ij,ij->i", o, o))
    over = norms > clip_norm
    if not np.any(over):
        return grad
    out = grad.copy()
    on, gn, nn = o[over], grad[over], norms[over][:, None]
    radial = np.einsum("ij,ij->i", on, gn)[:, None] / nn**2
    out[over] = (clip_norm / nn) * (gn - radial * on)
    return out


class Guest:
    """Attribute owner: local features, a bottom model, no labels."""

    def __init__(self, guest_id: int, data: dict[str, np.ndarray], model: MLP,
                 channel: ChannelSpec, seed: int, lr: float = 0.0002,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.guest_id = guest_id
        self.name = guest_name(guest_id)
        self._data = data
        self.model = model
        self.channel = channel
        self._opt = AdamState.for_params(model.params(), lr, betas[0], betas[1], eps)
        self._noise_rng = np.random.default_rng([seed, 2000 + guest_id])
        self._inference_rng = np.random.default_rng([seed, 3000 + guest_id])
        self._pending = None
        self.approx_fallbacks = 0

    @property
    def input_width(self) -> int:
        return self._data["train"].shape[1]

    def _encode(self, o: np.ndarray, indices, rng: np.random.Generator) -> tuple[ForwardMessage, dict]:
        state = {"o": o}
        payload = o
        if self.channel.uses_dp:
            payload = clip_and_perturb(payload, self.channel.dp, rng)
        if self.channel.uses_quantize:
            q = compression.quantize(payload, self.channel.n_buckets)
            state["pre_quant"] = payload
            state["approx"] = compression.fit_approx(self.channel.approx, q)
            payload = q
        return ForwardMessage(self.guest_id, np.asarray(indices), payload), state

    def forward(self, indices, ledger: CostLedger | None = None) -> ForwardMessage:
        """Bottom-model forward on the given training rows and channel encoding."""
        x = self._data["train"][indices]
        o, caches = self.model.forward(x)
        if ledger is not None:
            ledger.add_flops(self.name, forward=flops_of(self.model, len(indices)))
        msg, state = self._encode(o, indices, self._noise_rng)
        state["caches"] = caches
        state["indices"] = np.asarray(indices)
        self._pending = state
        return msg

    def backward(self, msg: BackwardMessage, ledger: CostLedger | None = None) -> None:
        st = self._pending
        if st is None:
            raise ProtocolError(f"{self.name} received a gradient without a pending forward")
        if msg.guest_id != self.guest_id:
            raise ProtocolError(f"{self.name} received guest{msg.guest_id}'s gradient")
        if not np.array_equal(msg.batch_indices, st["indices"]):
            raise AlignmentError(f"{self.name}: gradient batch differs from forward batch")
        grad = msg.grad
        if grad.shape != st["o"].shape:
            raise DimensionError(f"gradient {grad.shape} vs forward output {st['o'].shape}")
        if self.channel.uses_quantize:
            params: ApproxParams = st["approx"]
            grad, fallbacks = compression.backward_approx(params, st["pre_quant"], grad)
            self.approx_fallbacks += fallbacks
        if self.channel.uses_dp:
            grad = clip_backward(st["o"], grad, self.channel.dp.clip_norm)
        _, grads = self.model.backward(grad, st["caches"])
        if ledger is not None:
            ledger.add_flops(self.name, backward=flops_of(self.model, len(st["indices"]), "backward"))
        new_params, self._opt = adam_step(self.model.params(), grads, self._opt)
        self.model.set_params(new_params)
        self._pending = None

    def infer(self, split: str = "test") -> ForwardMessage:
        x = self._data[split]
        o, _ = self.model.forward(x)
        idx = np.arange(x.shape[0])
        if self.channel.noisy_inference:
            msg, _ = self._encode(o, idx, self._inference_rng)
            return msg
        return ForwardMessage(self.guest_id, idx, o)


class Host:
    """Label owner: the top model and the labels, no raw features."""

    def __init__(self, labels: dict[str, np.ndarray], model: MLP, n_guests: int,
                 lr: float = 0.0002, betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.name = HOST
        self._labels = labels
        self.model = model
        self.n_guests = n_guests
        self._opt = AdamState.for_params(model.params(), lr, betas[0], betas[1], eps)

    def _concat(self, messages: Sequence[ForwardMessage], indices) -> tuple[np.ndarray, list[int]]:
        by_id = {m.guest_id: m for m in messages}
        if sorted(by_id) != list(range(self.n_guests)) or len(messages) != self.n_guests:
            raise ProtocolError(f"expected one message from each of {self.n_guests} guests, "
                                f"got ids {sorted(m.guest_id for m in messages)}")
        blocks = []
        for g in range(self.n_guests):
            m = by_id[g]
            if indices is not None and not np.array_equal(m.batch_indices, indices):
                raise AlignmentError(f"guest{g} sent a batch that differs from the host's plan")
            blocks.append(m.matrix())
        h = np.hstack(blocks)
        if h.shape[1] != self.model.in_features:
            raise ProtocolError(f"concatenated width {h.shape[1]} != top input {self.model.in_features}")
        return h, [b.shape[1] for b in blocks]

    def train_step(self, messages: Sequence[ForwardMessage], indices,
                   ledger: CostLedger | None = None) -> tuple[float, list[BackwardMessage]]:
        h, widths = self._concat(messages, indices)
        probs, caches = self.model.forward(h)
        loss, grad_p = bce_loss(probs[:, 0], self._labels["train"][indices])
        grad_h, grads = self.model.backward(grad_p.reshape(-1, 1), caches)
        if ledger is not None:
            n = len(indices)
            ledger.add_flops(self.name, forward=flops_of(self.model, n),
                             backward=flops_of(self.model, n, "backward"))
        new_params, self._opt = adam_step(self.model.params(), grads, self._opt)
        self.model.set_params(new_params)
        out, start = [], 0
        for g, w in enumerate(widths):
            out.append(BackwardMessage(g, np.asarray(indices), grad_h[:, start:start + w]))
            start += w
        return loss, out

    def predict(self, messages: Sequence[ForwardMessage]) -> np.ndarray:
        h, _ = self._concat(messages, None)
        probs, _ = self.model.forward(h)
        return probs[:, 0]

    def evaluate(self, messages: Sequence[ForwardMessage], split: str = "test") -> float:
        return auc(self.predict(messages), self._labels[split])


def auc(scores, labels) -> float:
    """Area under the ROC curve via the Mann-Whitney rank sum; ties count 1/2."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.shape != y.shape:
        raise DimensionError(f"{s.size} scores vs {y.size} labels")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = s.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative label")
    order = np.argsort(s, kind="mergesort")
    ranked = s[order]
    ranks = np.empty(s.size, dtype=np.float64)
    # midranks over runs of equal scores
    starts = np.flatnonzero(np.r_[True, ranked[1:] != ranked[:-1]])
    ends = np.r_[starts[1:], s.size]
    mid = (starts + ends + 1) / 2.0
    ranks[order] = np.repeat(mid, ends - starts)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class EpochReport:
    epoch: int
    train_loss: float
    test_auc: float
    ledger_delta: dict


class Federation:
    """All participants of one run plus the transport and ledger between them."""

    def __init__(self, guests: list[Guest], host: Host):
        self.guests = guests
        self.host = host
        self.ledger = CostLedger()
        for g in guests:
            self.ledger.register(g.name)
        self.ledger.register(host.name)
        self.transport = Transport(self.ledger)
        self.epoch = 0

    @classmethod
    def build(cls, models: SplitModels, guest_data: Sequence[dict[str, np.ndarray]],
              labels: dict[str, np.ndarray], channel: ChannelSpec, seed: int,
              lr: float = 0.0002, betas: tuple[float, float] = (0.9, 0.999)) -> "Federation":
        guests = [Guest(g, data, models.bottoms[g], channel, seed, lr, betas)
                  for g, data in enumerate(guest_data)]
        host = Host(labels, models.top, len(guests), lr, betas)
        return cls(guests, host)

    def train_batch(self, indices) -> float:
        indices = np.asarray(indices)
        for g in self.guests:
            self.transport.send(g.name, HOST, g.forward(indices, self.ledger))
        received = self.transport.receive(HOST)
        loss, replies = self.host.train_step(received, indices, self.ledger)
        for msg in replies:
            self.transport.send(HOST, guest_name(msg.guest_id), msg)
        for g in self.guests:
            (reply,) = self.transport.receive(g.name)
            g.backward(reply, self.ledger)
        return loss

    def train_epoch(self, batches: Sequence[np.ndarray], evaluate: bool = True) -> EpochReport:
        self.epoch += 1
        before = self.ledger.snapshot()
        total, count = 0.0, 0
        for idx in batches:
            loss = self.train_batch(idx)
            total += loss * len(idx)
            count += len(idx)
        test_auc = self.evaluate() if evaluate else float("nan")
        return EpochReport(self.epoch, total / max(count, 1), test_auc, self.ledger.delta(before))

    def predict(self, split: str = "test") -> np.ndarray:
        quiet = Transport(None)
        for g in self.guests:
            quiet.send(g.name, HOST, g.infer(split))
        return self.host.predict(quiet.receive(HOST))

    def evaluate(self, split: str = "test") -> float:
        quiet = Transport(None)
        for g in self.guests:
            quiet.send(g.name, HOST, g.infer(split))
        return self.host.evaluate(quiet.receive(HOST), split)
