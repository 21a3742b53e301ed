"""Dense float64 tensor primitives, seeded random streams and tensor files.

Tensors are plain ``numpy.ndarray`` values of dtype float64 in C order.
Operations here never mutate their inputs.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path
from typing import BinaryIO, Iterable

import numpy as np

DTYPE = np.float64
MAGIC = b"GAIT"


class ContractError(ValueError):
    """Raised when a caller violates an operation's preconditions."""


def as_tensor(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=DTYPE)


def _check_same_shape(*arrays: np.ndarray) -> None:
    shapes = [tuple(a.shape) for a in arrays]
    if any(s != shapes[0] for s in shapes[1:]):
        raise ContractError(f"shape mismatch: {' vs '.join(map(str, shapes))}")


_ELEMENTWISE = {"add": np.add, "sub": np.subtract, "mul": np.multiply}


def elementwise(op: str, a, b) -> np.ndarray:
    """Exact-shape elementwise ``add``, ``sub`` or ``mul``; no broadcasting."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ContractError(f"unknown elementwise op {op!r}") from None
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape(a, b)
    return fn(a, b)


def clamp01(a) -> np.ndarray:
    return np.clip(as_tensor(a), 0.0, 1.0)


def l2_norm(a) -> float:
    a = as_tensor(a).ravel()
    return float(np.sqrt(np.dot(a, a)))


def bernoulli(rng: np.random.Generator, p: float) -> int:
    if not 0.0 <= p <= 1.0:
        raise ContractError(f"bernoulli probability {p} outside [0, 1]")
    return int(rng.random() < p)


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """PCG64 stream for ``seed``; extra ints select an independent child stream.

    ``make_rng(s, i)`` is the same stream no matter how many other children
    were created, so parallel work keyed by index stays reproducible.
    """
    if seed < 0 or seed >= 2**64:
        raise ContractError(f"seed {seed} is not a 64-bit unsigned integer")
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.PCG64(ss))


def child_seed(rng: np.random.Generator) -> int:
    """Draw a fresh 64-bit seed from ``rng`` for handing to a sub-task."""
    return int(rng.integers(0, 2**63, dtype=np.int64))


# -- serialization -----------------------------------------------------------

def write_tensor(fh: BinaryIO, a) -> None:
    a = as_tensor(a)
    fh.write(MAGIC)
    fh.write(struct.pack("<I", a.ndim))
    fh.write(struct.pack(f"<{a.ndim}Q", *a.shape))
    fh.write(a.astype("<f8", copy=False).tobytes(order="C"))


def read_tensor(fh: BinaryIO) -> np.ndarray:
    magic = fh.read(4)
    if magic != MAGIC:
        raise ContractError(f"bad tensor magic {magic!r}")
    (rank,) = struct.unpack("<I", fh.read(4))
    shape = struct.unpack(f"<{rank}Q", fh.read(8 * rank))
    count = int(np.prod(shape, dtype=np.int64))
    payload = fh.read(8 * count)
    if len(payload) != 8 * count:
        raise ContractError(f"truncated tensor payload: expected {8 * count} bytes, got {len(payload)}")
    return np.frombuffer(payload, dtype="<f8").astype(DTYPE).reshape(shape)


def tensors_to_bytes(arrays: Iterable[np.ndarray]) -> bytes:
    buf = io.BytesIO()
    for a in arrays:
        write_tensor(buf, a)
    return buf.getvalue()


def tensors_from_bytes(data: bytes) -> list[np.ndarray]:
    buf = io.BytesIO(data)
    out = []
    while buf.tell() < len(data):
        out.append(read_tensor(buf))
    return out


def save_tensors(path: str | Path, arrays: Iterable[np.ndarray]) -> None:
    Path(path).write_bytes(tensors_to_bytes(arrays))


def load_tensors(path: str | Path) -> list[np.ndarray]:
    return tensors_from_bytes(Path(path).read_bytes())
