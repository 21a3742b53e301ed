"""Procedural stand-ins for real faces and forgery approaches.

A "real" image is a smooth colour field with a soft elliptical face blob and two
eye blobs on a fixed face-aligned template. A forgery family adds one parametric
artifact inside the face mask: ``x + amplitude * artifact(x)``, clipped to
[0, 1], so amplitude 0 reproduces the real image exactly.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..dataset import IMAGE_SHAPE, LabeledSet
from ..numcore import ContractError, DTYPE, make_rng

class ArtifactKind(str, enum.Enum):
    PERIODIC = "periodic-pattern"
    SEAM = "seam-blend"
    CHANNEL_SHIFT = "channel-shift"
    WARP = "local-warp"


@dataclass(frozen=True)
class ForgeryFamilySpec:
    """One synthetic forgery approach.

    ``params`` by kind:
      periodic-pattern: freq (cycles/pixel), angle (degrees), optional per-sample
        angle_spread (degrees) and freq_spread (relative)
      seam-blend: width (mask softness exponent), color (3 weights)
      channel-shift: dx, dy (pixels), channel
      local-warp: strength (pixels), wavelength (pixels)
    Per-sample strength is ``amplitude * U(1 - jitter, 1 + jitter)``.
    """

    family_id: str
    kind: ArtifactKind
    amplitude: float
    params: dict = field(default_factory=dict)
    group: int = 0
    jitter: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ArtifactKind(self.kind))
        if not 0.0 <= self.amplitude <= 1.0:
            raise ContractError(f"family {self.family_id}: amplitude {self.amplitude} outside [0, 1]")
        if not 0.0 <= self.jitter < 1.0:
            raise ContractError(f"family {self.family_id}: jitter {self.jitter} outside [0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ForgeryFamilySpec":
        return cls(**d)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


# -- real content -------------------------------------------------------------------

def _upsample_matrix(n_out: int, n_in: int) -> np.ndarray:
    pos = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
    pos = np.clip(pos, 0, n_in - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    m = np.zeros((n_out, n_in))
    m[np.arange(n_out), lo] += 1 - frac
    m[np.arange(n_out), hi] += frac
    return m


def _ellipse(yy, xx, cy, cx, ry, rx, softness):
    r = np.sqrt(((yy - cy[:, None, None]) / ry[:, None, None]) ** 2 + ((xx - cx[:, None, None]) / rx[:, None, None]) ** 2)
    return 1.0 / (1.0 + np.exp(-(1.0 - r) / softness))


def render_real(rng: np.random.Generator, count: int, shape=IMAGE_SHAPE, noise: float = 0.0,
                geometry_jitter: float = 0.0, shading: float = 0.25, videos: int | None = None):
    """Render ``count`` real images; returns (images, face_masks (N, H, W)).

    With ``videos`` set, frames cycle through that many identities (background
    and skin tone); lighting and eye shading still vary per frame.

    Defaults give aligned crops without iid noise. Either one makes a pixel blend
    of two images trivially detectable (double eyes, halved noise variance), which
    would let a detector learn "interpolated" instead of the forgery artifact.
    """
    h, w, d = shape
    grid = 3
    if videos is not None and videos < 1:
        raise ContractError(f"videos {videos} < 1")
    nid = count if videos is None else videos
    who = np.arange(count) % nid
    low = rng.uniform(0.15, 0.85, size=(nid, grid, grid, d))[who]
    uh, uw = _upsample_matrix(h, grid), _upsample_matrix(w, grid)
    bg = np.einsum("hi,nijd,wj->nhwd", uh, low, uw)
    yy, xx = np.meshgrid(np.arange(h, dtype=DTYPE), np.arange(w, dtype=DTYPE), indexing="ij")
    j = geometry_jitter
    cy = rng.uniform(0.50 - j, 0.50 + j, count) * h
    cx = rng.uniform(0.50 - j, 0.50 + j, count) * w
    ry = rng.uniform(0.32 - j, 0.32 + j, count) * h
    rx = rng.uniform(0.26 - j, 0.26 + j, count) * w
    skin = np.clip(np.array([0.78, 0.58, 0.48]) + rng.normal(0, 0.1, size=(nid, d)), 0.05, 0.95)[who]
    face = _ellipse(yy, xx, cy, cx, ry, rx, 0.08)
    # smooth lighting across the face, so interior variation is normal for real images
    light = 1.0 + shading * np.einsum("hi,nij,wj->nhw", uh, rng.uniform(-1, 1, size=(count, grid, grid)), uw)
    img = bg * (1 - face[..., None]) + (skin[:, None, None, :] * light[..., None]) * face[..., None]
    dark = rng.uniform(0.55, 0.85, count)[:, None, None, None]
    for side in (-1.0, 1.0):
        eye = _ellipse(yy, xx, cy - 0.25 * ry, cx + side * 0.4 * rx, 0.12 * ry, 0.16 * rx, 0.15)
        img = img * (1 - dark * eye[..., None])
    img = img + rng.normal(0, noise, size=img.shape)
    return np.clip(img, 0.0, 1.0), face


# -- artifacts ------------------------------------------------------------------------

def _shift(img, dy, dx):
    """Integer translation with edge replication, (N, H, W) arrays."""
    out = np.roll(img, (dy, dx), axis=(1, 2))
    if dy > 0:
        out[:, :dy] = img[:, :1]
    elif dy < 0:
        out[:, dy:] = img[:, -1:]
    if dx > 0:
        out[:, :, :dx] = img[:, :, :1]
    elif dx < 0:
        out[:, :, dx:] = img[:, :, -1:]
    return out


def _bilinear_sample(img, sy, sx):
    n, h, w, d = img.shape
    sy = np.clip(sy, 0, h - 1)
    sx = np.clip(sx, 0, w - 1)
    y0 = np.floor(sy).astype(int)
    x0 = np.floor(sx).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (sy - y0)[..., None]
    fx = (sx - x0)[..., None]
    b = np.arange(n)[:, None, None]
    return ((1 - fy) * (1 - fx) * img[b, y0, x0] + (1 - fy) * fx * img[b, y0, x1]
            + fy * (1 - fx) * img[b, y1, x0] + fy * fx * img[b, y1, x1])


def artifact_direction(spec: ForgeryFamilySpec, img: np.ndarray, face: np.ndarray,
                       rng: np.random.Generator) -> np.ndarray:
    """The unit-amplitude change a family makes to each image (N, H, W, D)."""
    n, h, w, d = img.shape
    p = spec.params
    yy, xx = np.meshgrid(np.arange(h, dtype=DTYPE), np.arange(w, dtype=DTYPE), indexing="ij")
    m = face[..., None]
    if spec.kind is ArtifactKind.PERIODIC:
        phase = rng.uniform(0, 2 * np.pi, n)
        spread_a, spread_f = p.get("angle_spread", 0.0), p.get("freq_spread", 0.0)
        theta = np.deg2rad(p.get("angle", 0.0) + (rng.uniform(-spread_a, spread_a, n) if spread_a else 0.0))
        freq = p["freq"] * (1.0 + (rng.uniform(-spread_f, spread_f, n) if spread_f else 0.0))
        theta, freq = np.broadcast_to(theta, (n,)), np.broadcast_to(freq, (n,))
        coord = xx[None] * np.cos(theta)[:, None, None] + yy[None] * np.sin(theta)[:, None, None]
        wave = np.sin(2 * np.pi * freq[:, None, None] * coord + phase[:, None, None])
        return m * wave[..., None]
    if spec.kind is ArtifactKind.SEAM:
        ring = (4.0 * face * (1.0 - face)) ** p.get("width", 1.0)
        color = np.asarray(p["color"], dtype=DTYPE)
        return ring[..., None] * color
    if spec.kind is ArtifactKind.CHANNEL_SHIFT:
        c = int(p.get("channel", 0))
        out = np.zeros_like(img)
        out[..., c] = _shift(img[..., c], int(p.get("dy", 0)), int(p.get("dx", 1))) - img[..., c]
        return m * out
    if spec.kind is ArtifactKind.WARP:
        lam = p.get("wavelength", 6.0)
        s = p.get("strength", 1.0)
        phase = rng.uniform(0, 2 * np.pi, (n, 2))
        sy = yy[None] + s * np.sin(2 * np.pi * xx[None] / lam + phase[:, 0, None, None])
        sx = xx[None] + s * np.sin(2 * np.pi * yy[None] / lam + phase[:, 1, None, None])
        return m * (_bilinear_sample(img, sy, sx) - img)
    raise ContractError(f"unknown artifact kind {spec.kind}")


def apply_artifact(spec: ForgeryFamilySpec, img, face, rng) -> np.ndarray:
    direction = artifact_direction(spec, img, face, rng)
    strength = spec.amplitude * rng.uniform(1 - spec.jitter, 1 + spec.jitter, len(img))
    return np.clip(img + strength[:, None, None, None] * direction, 0.0, 1.0)


# -- datasets ---------------------------------------------------------------------------

SPLITS = {"train": 0, "test": 1}
_ID_STRIDE = 10**9


def _identities(source_seed: int, split: str, count: int) -> np.ndarray:
    # content identity: (source, split, index) packed; the split bit keeps train and test disjoint
    base = (source_seed % 4096) * 2 + SPLITS[split]
    return base * _ID_STRIDE + np.arange(count, dtype=np.int64)


def generate_real_dataset(real_source_seed: int, count: int, split: str = "train", label: int = 0,
                          shape=IMAGE_SHAPE) -> LabeledSet:
    if count < 0:
        raise ContractError(f"count {count} < 0")
    img, _ = render_real(make_rng(real_source_seed, SPLITS[split], 0), count, shape)
    return LabeledSet(img, np.full(count, label, dtype=np.int64), _identities(real_source_seed, split, count))


def generate_family_dataset(spec: ForgeryFamilySpec, real_source_seed: int, count: int, split: str = "train",
                            label: int = 1, shape=IMAGE_SHAPE, videos: int | None = None) -> LabeledSet:
    """Real content from ``real_source_seed`` with the family's artifact applied.
    Deterministic per (spec, seed, split, count, videos)."""
    if count < 0:
        raise ContractError(f"count {count} < 0")
    img, face = render_real(make_rng(real_source_seed, SPLITS[split], 0), count, shape, videos=videos)
    art_seed = int(spec.digest(), 16) % (2**63)
    forged = apply_artifact(spec, img, face, make_rng(art_seed, real_source_seed, SPLITS[split]))
    return LabeledSet(forged, np.full(count, label, dtype=np.int64), _identities(real_source_seed, split, count))


def default_roster() -> list[ForgeryFamilySpec]:
    """Six families in three coverage groups of two near-parameter siblings.

    The periodic pair is faint and jittered so that it is the hard, novel
    minority in the default benchmark; seam and channel-shift families form the majority.
    """
    return [
        ForgeryFamilySpec("P1", ArtifactKind.PERIODIC, 0.08, {"freq": 0.30, "angle": 0.0}, group=0, jitter=0.5),
        ForgeryFamilySpec("P2", ArtifactKind.PERIODIC, 0.08, {"freq": 0.32, "angle": 10.0}, group=0, jitter=0.5),
        ForgeryFamilySpec("S1", ArtifactKind.SEAM, 0.15, {"width": 1.0, "color": [1.0, 0.4, -0.2]}, group=1),
        ForgeryFamilySpec("S2", ArtifactKind.SEAM, 0.15, {"width": 1.5, "color": [0.9, 0.5, -0.3]}, group=1),
        # vertical shift: horizontal stripes from a dx shift would read as a periodic artifact
        ForgeryFamilySpec("C1", ArtifactKind.CHANNEL_SHIFT, 1.0, {"dx": 0, "dy": 1, "channel": 2}, group=2),
        ForgeryFamilySpec("C2", ArtifactKind.CHANNEL_SHIFT, 0.7, {"dx": 0, "dy": 1, "channel": 2}, group=2),
    ]
