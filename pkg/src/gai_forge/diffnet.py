"""Small NHWC convolutional classifier with hand-written backward passes.

The reference architecture is a stack of 3x3 stride-2 convolutions (padding 1,
ReLU), an optional ReLU dense hidden layer and a K-way linear output. With no
conv stages and no hidden layer it reduces to multinomial logistic regression,
which the tests use as a closed-form oracle.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .numcore import ContractError, DTYPE, as_tensor, read_tensor, write_tensor

KERNEL = 3
STRIDE = 2
PAD = 1


@dataclass(frozen=True)
class ArchSpec:
    input_shape: tuple[int, int, int] = (16, 16, 3)
    conv_channels: tuple[int, ...] = (8, 16)
    hidden: int = 64
    num_classes: int = 6
    # subtracted from every pixel before the first layer so inputs in [0, 1] are centred
    input_offset: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        object.__setattr__(self, "conv_channels", tuple(int(v) for v in self.conv_channels))
        if len(self.input_shape) != 3 or min(self.input_shape) < 1:
            raise ContractError(f"input shape must be three positive extents, got {self.input_shape}")
        if any(c < 1 for c in self.conv_channels) or self.hidden < 0 or self.num_classes < 2:
            raise ContractError(f"invalid architecture {self}")

    def conv_output_shapes(self) -> list[tuple[int, int, int]]:
        h, w, c = self.input_shape
        shapes = []
        for cout in self.conv_channels:
            h, w, c = (h + 2 * PAD - KERNEL) // STRIDE + 1, (w + 2 * PAD - KERNEL) // STRIDE + 1, cout
            shapes.append((h, w, c))
        return shapes

    @property
    def flat_width(self) -> int:
        shapes = self.conv_output_shapes()
        return int(np.prod(shapes[-1] if shapes else self.input_shape))

    def param_shapes(self) -> list[tuple[int, ...]]:
        shapes: list[tuple[int, ...]] = []
        cin = self.input_shape[2]
        for cout in self.conv_channels:
            shapes += [(KERNEL, KERNEL, cin, cout), (cout,)]
            cin = cout
        width = self.flat_width
        if self.hidden:
            shapes += [(width, self.hidden), (self.hidden,)]
            width = self.hidden
        shapes += [(width, self.num_classes), (self.num_classes,)]
        return shapes

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "ArchSpec":
        return cls(**json.loads(text))


# -- conv helpers --------------------------------------------------------------

def _im2col(x: np.ndarray, ho: int, wo: int) -> np.ndarray:
    b, _, _, c = x.shape
    xp = np.pad(x, ((0, 0), (PAD, PAD), (PAD, PAD), (0, 0)))
    cols = np.empty((b, ho, wo, KERNEL, KERNEL, c), dtype=DTYPE)
    for ki in range(KERNEL):
        for kj in range(KERNEL):
            cols[:, :, :, ki, kj, :] = xp[:, ki:ki + STRIDE * ho:STRIDE, kj:kj + STRIDE * wo:STRIDE, :]
    return cols.reshape(b * ho * wo, KERNEL * KERNEL * c)


def _col2im(dcols: np.ndarray, x_shape: tuple[int, ...], ho: int, wo: int) -> np.ndarray:
    b, h, w, c = x_shape
    dcols = dcols.reshape(b, ho, wo, KERNEL, KERNEL, c)
    dxp = np.zeros((b, h + 2 * PAD, w + 2 * PAD, c), dtype=DTYPE)
    for ki in range(KERNEL):
        for kj in range(KERNEL):
            dxp[:, ki:ki + STRIDE * ho:STRIDE, kj:kj + STRIDE * wo:STRIDE, :] += dcols[:, :, :, ki, kj, :]
    return dxp[:, PAD:PAD + h, PAD:PAD + w, :]


# -- classifier ----------------------------------------------------------------

@dataclass
class Classifier:
    """Parameters plus architecture. Treated as a value by everything except the
    training loop, which owns a private copy while it updates it."""

    arch: ArchSpec
    params: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        expected = self.arch.param_shapes()
        if not self.params:
            self.params = [np.zeros(s, dtype=DTYPE) for s in expected]
        got = [tuple(p.shape) for p in self.params]
        if got != expected:
            raise ContractError(f"parameter shapes {got} do not match architecture {expected}")

    @classmethod
    def init(cls, arch: ArchSpec, rng: np.random.Generator) -> "Classifier":
        """Fan-in scaled uniform weights, zero biases."""
        params = []
        for shape in arch.param_shapes():
            if len(shape) == 1:
                params.append(np.zeros(shape, dtype=DTYPE))
            else:
                fan_in = int(np.prod(shape[:-1]))
                bound = np.sqrt(6.0 / fan_in)
                params.append(rng.uniform(-bound, bound, size=shape))
        return cls(arch, params)

    @property
    def num_classes(self) -> int:
        return self.arch.num_classes

    def copy(self) -> "Classifier":
        return Classifier(self.arch, [p.copy() for p in self.params])

    def checksum(self) -> str:
        h = hashlib.sha256(self.arch.to_json().encode())
        for p in self.params:
            h.update(np.ascontiguousarray(p).tobytes())
        return h.hexdigest()

    # forward / backward

    def _check_batch(self, x: np.ndarray) -> np.ndarray:
        x = as_tensor(x)
        if x.ndim != 4 or tuple(x.shape[1:]) != self.arch.input_shape:
            raise ContractError(f"batch shape {tuple(x.shape)} does not match model input (B, {self.arch.input_shape})")
        return x

    def forward(self, x: np.ndarray, keep_cache: bool = False):
        x = self._check_batch(x)
        b = x.shape[0]
        cache = []
        h = x - self.arch.input_offset if self.arch.input_offset else x
        pi = 0
        for ho, wo, cout in self.arch.conv_output_shapes():
            w, bias = self.params[pi], self.params[pi + 1]
            cols = _im2col(h, ho, wo)
            z = cols @ w.reshape(-1, cout) + bias
            cache.append((h.shape, cols, z))
            h = np.maximum(z, 0.0).reshape(b, ho, wo, cout)
            pi += 2
        h = h.reshape(b, -1)
        if self.arch.hidden:
            w, bias = self.params[pi], self.params[pi + 1]
            z = h @ w + bias
            cache.append((h, z))
            h = np.maximum(z, 0.0)
            pi += 2
        w, bias = self.params[pi], self.params[pi + 1]
        logits = h @ w + bias
        cache.append(h)
        return (logits, cache) if keep_cache else logits

    def backward(self, cache, dlogits: np.ndarray, need_params: bool = True, need_input: bool = False):
        """Backpropagate ``dlogits``; returns (param grads or None, input grad or None)."""
        arch = self.arch
        b = dlogits.shape[0]
        grads: list[np.ndarray | None] = [None] * len(self.params)
        pi = len(self.params) - 2
        h_out = cache[-1]
        if need_params:
            grads[pi], grads[pi + 1] = h_out.T @ dlogits, dlogits.sum(axis=0)
        dh = dlogits @ self.params[pi].T
        ci = len(cache) - 2
        if arch.hidden:
            pi -= 2
            h_in, z = cache[ci]
            dz = dh * (z > 0.0)
            if need_params:
                grads[pi], grads[pi + 1] = h_in.T @ dz, dz.sum(axis=0)
            dh = dz @ self.params[pi].T
            ci -= 1
        conv_shapes = arch.conv_output_shapes()
        if conv_shapes:
            dh = dh.reshape((b,) + conv_shapes[-1])
        else:
            dh = dh.reshape((b,) + arch.input_shape)
        for layer in range(len(conv_shapes) - 1, -1, -1):
            pi -= 2
            ho, wo, cout = conv_shapes[layer]
            in_shape, cols, z = cache[ci]
            ci -= 1
            dz = dh.reshape(-1, cout) * (z > 0.0)
            w = self.params[pi]
            if need_params:
                grads[pi] = (cols.T @ dz).reshape(w.shape)
                grads[pi + 1] = dz.sum(axis=0)
            if layer == 0 and not need_input:
                dh = None
                break
            dh = _col2im(dz @ w.reshape(-1, cout).T, in_shape, ho, wo)
        return (grads if need_params else None), (dh if need_input else None)


# -- losses --------------------------------------------------------------------

def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _targets(labels, batch: int, k: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim == 2:
        if labels.shape != (batch, k):
            raise ContractError(f"target distribution shape {labels.shape} != {(batch, k)}")
        return labels.astype(DTYPE)
    labels = labels.astype(np.int64).ravel()
    if labels.shape != (batch,):
        raise ContractError(f"{labels.shape[0]} labels for a batch of {batch}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ContractError(f"label outside [0, {k})")
    t = np.zeros((batch, k), dtype=DTYPE)
    t[np.arange(batch), labels] = 1.0
    return t


def cross_entropy(logits: np.ndarray, labels) -> float:
    """Mean cross-entropy. ``labels`` is an int vector or a (B, K) target distribution."""
    logits = as_tensor(logits)
    t = _targets(labels, *logits.shape)
    return float(-(t * log_softmax(logits)).sum(axis=1).mean())


def cross_entropy_with_grad(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    b, k = logits.shape
    t = _targets(labels, b, k)
    loss = float(-(t * log_softmax(logits)).sum(axis=1).mean())
    return loss, (softmax(logits) - t) / b


def forward(model: Classifier, batch: np.ndarray) -> np.ndarray:
    return model.forward(batch)


def predict_proba(model: Classifier, batch: np.ndarray, chunk: int = 512) -> np.ndarray:
    batch = as_tensor(batch)
    parts = [softmax(model.forward(batch[i:i + chunk])) for i in range(0, len(batch), chunk)]
    return np.concatenate(parts) if parts else np.zeros((0, model.num_classes))


def grad_params(model: Classifier, batch: np.ndarray, labels) -> tuple[float, list[np.ndarray]]:
    """Mean cross-entropy and its gradient with respect to every parameter tensor."""
    logits, cache = model.forward(batch, keep_cache=True)
    loss, dlogits = cross_entropy_with_grad(logits, labels)
    grads, _ = model.backward(cache, dlogits)
    return loss, grads


# scalar objectives on a single output row, used for input-side gradients
LOSS_KINDS = ("ce", "logit", "prob")


def scalar_output_grad(kind: str, logits: np.ndarray, cls: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-row value and d(value)/d(logits) for cross-entropy to ``cls``,
    the raw logit of ``cls`` or its softmax probability."""
    if not 0 <= cls < logits.shape[1]:
        raise ContractError(f"class {cls} outside [0, {logits.shape[1]})")
    if kind == "ce":
        p = softmax(logits)
        value = -log_softmax(logits)[:, cls]
        d = p.copy()
        d[:, cls] -= 1.0
    elif kind == "logit":
        value = logits[:, cls].copy()
        d = np.zeros_like(logits)
        d[:, cls] = 1.0
    elif kind == "prob":
        p = softmax(logits)
        value = p[:, cls].copy()
        # d p_c / d z_k = p_c (1[k=c] - p_k)
        d = -p * p[:, cls:cls + 1]
        d[:, cls] += p[:, cls]
    else:
        raise ContractError(f"unknown scalar loss kind {kind!r}; expected one of {LOSS_KINDS}")
    return value, d


def grad_input_batch(model: Classifier, kind: str, cls, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample objective values (B,) and their gradients w.r.t. each input (B,H,W,D).

    ``cls`` may be an int or a per-sample int array. Samples are independent,
    so row i of the result is the gradient of sample i's own objective.
    """
    logits, cache = model.forward(x, keep_cache=True)
    cls_arr = np.broadcast_to(np.asarray(cls, dtype=np.int64), (logits.shape[0],))
    values = np.empty(logits.shape[0], dtype=DTYPE)
    d = np.empty_like(logits)
    for c in np.unique(cls_arr):
        rows = cls_arr == c
        values[rows], d[rows] = scalar_output_grad(kind, logits[rows], int(c))
    _, gx = model.backward(cache, d, need_params=False, need_input=True)
    return values, gx


def grad_input(model: Classifier, loss_spec: tuple[str, int], x: np.ndarray) -> np.ndarray:
    """Gradient of a scalar objective on one image ``x`` (H, W, D) w.r.t. ``x``.

    ``loss_spec`` is ``("ce", c)``, ``("logit", c)`` or ``("prob", c)``.
    """
    kind, cls = loss_spec
    x = as_tensor(x)
    if tuple(x.shape) != model.arch.input_shape:
        raise ContractError(f"input shape {tuple(x.shape)} does not match model input {model.arch.input_shape}")
    _, gx = grad_input_batch(model, kind, cls, x[None])
    return gx[0]


# -- checkpoints -----------------------------------------------------------------

def save_checkpoint(model: Classifier, path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(model.arch.to_json().encode() + b"\n")
        for p in model.params:
            write_tensor(fh, p)
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> Classifier:
    with open(path, "rb") as fh:
        arch = ArchSpec.from_json(fh.readline().decode())
        params = [read_tensor(fh) for _ in arch.param_shapes()]
    params = [p.reshape(s) for p, s in zip(params, arch.param_shapes())]
    return Classifier(arch, params)
