"""Guided adversarial interpolation and its degenerate variants.

A majority image is pulled toward the minority class by optimizing a per-pixel
mixing tensor ``alpha`` (or, for the perturbation variant, an additive ``delta``)
with normalized gradient steps on

    CE(g(x*), minority) + lam * restrain(f(x*), source) + beta * TV(alpha)

where ``g`` is a frozen teacher and ``f`` the student being trained.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .diffnet import Classifier, grad_input_batch, softmax
from .numcore import ContractError, DTYPE, as_tensor, child_seed, clamp01, l2_norm, make_rng, save_tensors

ZERO_GRAD_EPS = 1e-12


class Variant(str, enum.Enum):
    GAI = "gai"
    GAI_MINUS = "gai_minus"
    NO_TEACHER = "no_teacher"
    MIXUP = "mixup"


@dataclass(frozen=True)
class GaiConfig:
    T: int = 10
    eta: float = 1.0
    lam: float = 0.5
    beta: float = 10.0
    tau: float = 0.5
    p: float = 0.99
    alpha0: float = 0.75
    noise_scale: float = 0.01
    minority_label: int = -1
    # "prob" reads the student's softmax probability of the source class, "logit" its raw logit
    restrain: str = "prob"

    def validate(self) -> "GaiConfig":
        problems = []
        if self.T < 0:
            problems.append(f"T={self.T} < 0")
        if not self.eta > 0:
            problems.append(f"eta={self.eta} must be > 0")
        if self.lam < 0 or self.beta < 0:
            problems.append(f"lam={self.lam}, beta={self.beta} must be >= 0")
        if not 0.0 <= self.tau <= 1.0:
            problems.append(f"tau={self.tau} outside [0, 1]")
        if not 0.0 <= self.p <= 1.0:
            problems.append(f"p={self.p} outside [0, 1]")
        if not 0.0 < self.alpha0 <= 1.0:
            problems.append(f"alpha0={self.alpha0} outside (0, 1]")
        if self.noise_scale < 0 or self.alpha0 - self.noise_scale < 0 or self.alpha0 + self.noise_scale > 1:
            problems.append(f"alpha0 +- noise_scale = {self.alpha0} +- {self.noise_scale} leaves [0, 1]")
        if self.minority_label < 1:
            problems.append(f"minority_label={self.minority_label} must be a forgery class index >= 1")
        if self.restrain not in ("prob", "logit"):
            problems.append(f"restrain={self.restrain!r} must be 'prob' or 'logit'")
        if problems:
            raise ContractError("invalid GaiConfig: " + "; ".join(problems))
        return self

    def with_alpha0(self, alpha0: float) -> "GaiConfig":
        """Copy with a new alpha0, shrinking the noise so the init stays in [0, 1]."""
        return replace(self, alpha0=alpha0, noise_scale=min(self.noise_scale, alpha0, 1.0 - alpha0))


@dataclass
class GenerationOutcome:
    sample: np.ndarray
    accepted: bool
    teacher_confidence: float
    variant: Variant
    coeff: np.ndarray | None = None  # final alpha (GAI) or delta (GAI-)
    skipped_steps: list[int] = field(default_factory=list)
    # per-step (coeff before update, gradient) pairs, only when requested
    trace: list[tuple[np.ndarray, np.ndarray]] | None = None


# -- pieces of the objective -------------------------------------------------------

def interpolate(alpha, x_major, x_minor) -> np.ndarray:
    alpha, x_major, x_minor = as_tensor(alpha), as_tensor(x_major), as_tensor(x_minor)
    if not (alpha.shape == x_major.shape == x_minor.shape):
        raise ContractError(f"shape mismatch: {alpha.shape} vs {x_major.shape} vs {x_minor.shape}")
    return alpha * x_major + (1.0 - alpha) * x_minor


def _tv_divisors(h: int, w: int) -> tuple[float, float]:
    return float(max((h - 1) * w, 1)), float(max(h * (w - 1), 1))


def smoothness_loss(alpha) -> float:
    """Mean squared difference between vertical and horizontal neighbours,
    summed over channels. ``alpha`` is (H, W, D)."""
    alpha = as_tensor(alpha)
    if alpha.ndim != 3:
        raise ContractError(f"smoothness_loss expects (H, W, D), got {alpha.shape}")
    h, w, _ = alpha.shape
    cv, ch = _tv_divisors(h, w)
    dv = alpha[1:] - alpha[:-1]
    dh = alpha[:, 1:] - alpha[:, :-1]
    return float((dv * dv).sum() / cv + (dh * dh).sum() / ch)


def smoothness_grad(alpha: np.ndarray) -> np.ndarray:
    """Gradient of ``smoothness_loss`` for a batch (B, H, W, D) or a single (H, W, D)."""
    a = alpha if alpha.ndim == 4 else alpha[None]
    _, h, w, _ = a.shape
    cv, ch = _tv_divisors(h, w)
    g = np.zeros_like(a)
    dv = (2.0 / cv) * (a[:, 1:] - a[:, :-1])
    g[:, 1:] += dv
    g[:, :-1] -= dv
    dh = (2.0 / ch) * (a[:, :, 1:] - a[:, :, :-1])
    g[:, :, 1:] += dh
    g[:, :, :-1] -= dh
    return g if alpha.ndim == 4 else g[0]


def _restrain_value(f: Classifier, x: np.ndarray, source_class: int, kind: str) -> float:
    logits = f.forward(x[None])[0]
    return float(softmax(logits[None])[0, source_class] if kind == "prob" else logits[source_class])


def objective(x_star, cfg: GaiConfig, g: Classifier, f: Classifier, coeff, source_class: int) -> float:
    """Value of the generation objective at ``x_star``; ``coeff`` is the tensor
    the smoothness term is applied to (alpha, or delta for GAI-)."""
    if source_class == cfg.minority_label:
        raise ContractError(f"source class {source_class} is the minority class")
    x_star = as_tensor(x_star)
    logits = g.forward(x_star[None])
    cls = -np.log(softmax(logits)[0, cfg.minority_label])
    restrain = _restrain_value(f, x_star, source_class, cfg.restrain)
    return float(cls + cfg.lam * restrain + cfg.beta * smoothness_loss(coeff))


# -- batched optimization core --------------------------------------------------------

def _input_gradient(x_star, source, cfg: GaiConfig, g: Classifier, f: Classifier) -> np.ndarray:
    _, gx = grad_input_batch(g, "ce", cfg.minority_label, x_star)
    if cfg.lam:
        _, gr = grad_input_batch(f, cfg.restrain, source, x_star)
        gx = gx + cfg.lam * gr
    return gx


def _optimize(coeff, x_major, x_minor, source, cfg: GaiConfig, g, f, interp: bool, record: bool):
    """Run T normalized steps on a batch. Returns (coeff, skipped, traces)."""
    n = coeff.shape[0]
    skipped: list[list[int]] = [[] for _ in range(n)]
    traces: list[list] | None = [[] for _ in range(n)] if record else None
    span = x_major - x_minor if interp else None
    for step in range(cfg.T):
        x_star = interpolate(coeff, x_major, x_minor) if interp else x_major + coeff
        gx = _input_gradient(x_star, source, cfg, g, f)
        xi = (gx * span if interp else gx) + cfg.beta * smoothness_grad(coeff)
        new = coeff.copy()
        for i in range(n):
            norm = l2_norm(xi[i])
            if record:
                traces[i].append((coeff[i].copy(), xi[i].copy()))
            if norm < ZERO_GRAD_EPS:
                skipped[i].append(step)
                continue
            upd = coeff[i] - cfg.eta * (xi[i] / norm)
            new[i] = clamp01(upd) if interp else upd
        coeff = new
    return coeff, skipped, traces


def _confidences(g: Classifier, x: np.ndarray, minority: int) -> np.ndarray:
    return softmax(g.forward(x))[:, minority]


def init_alpha(shape, cfg: GaiConfig, rng: np.random.Generator) -> np.ndarray:
    alpha = np.full(shape, cfg.alpha0, dtype=DTYPE)
    if cfg.noise_scale > 0:
        alpha = alpha + rng.uniform(-cfg.noise_scale, cfg.noise_scale, size=shape)
    return clamp01(alpha)


def _check_pair(x_major, x_minor, source_class, cfg):
    cfg.validate()
    if source_class == cfg.minority_label:
        raise ContractError(f"source class {source_class} is the minority class")
    if x_minor is not None and x_major.shape != x_minor.shape:
        raise ContractError(f"shape mismatch: {x_major.shape} vs {x_minor.shape}")


def gai_generate(x_major, x_minor, source_class: int, cfg: GaiConfig, g: Classifier, f: Classifier,
                 rng: np.random.Generator, record: bool = False) -> GenerationOutcome:
    x_major, x_minor = as_tensor(x_major), as_tensor(x_minor)
    _check_pair(x_major, x_minor, source_class, cfg)
    alpha0 = init_alpha(x_major.shape, cfg, rng)
    return _gai_batch(alpha0[None], x_major[None], x_minor[None], np.array([source_class]), cfg, g, f, record)[0]


def _gai_batch(alpha, x_major, x_minor, source, cfg, g, f, record=False) -> list[GenerationOutcome]:
    alpha, skipped, traces = _optimize(alpha, x_major, x_minor, source, cfg, g, f, True, record)
    x_adv = interpolate(alpha, x_major, x_minor)
    conf = _confidences(g, x_adv, cfg.minority_label)
    return [
        GenerationOutcome(x_adv[i], bool(conf[i] >= cfg.tau), float(conf[i]), Variant.GAI, alpha[i],
                          skipped[i], traces[i] if record else None)
        for i in range(len(x_adv))
    ]


def gai_minus_generate(x_major, source_class: int, cfg: GaiConfig, g: Classifier, f: Classifier,
                       rng: np.random.Generator | None = None, record: bool = False) -> GenerationOutcome:
    """Additive-perturbation variant; ``rng`` is accepted for signature parity and unused."""
    x_major = as_tensor(x_major)
    _check_pair(x_major, None, source_class, cfg)
    return _gai_minus_batch(x_major[None], np.array([source_class]), cfg, g, f, record)[0]


def _gai_minus_batch(x_major, source, cfg, g, f, record=False) -> list[GenerationOutcome]:
    delta = np.zeros_like(x_major)
    delta, skipped, traces = _optimize(delta, x_major, None, source, cfg, g, f, False, record)
    x_adv = x_major + delta
    conf = _confidences(g, x_adv, cfg.minority_label)
    return [
        GenerationOutcome(x_adv[i], bool(conf[i] >= cfg.tau), float(conf[i]), Variant.GAI_MINUS, delta[i],
                          skipped[i], traces[i] if record else None)
        for i in range(len(x_adv))
    ]


def fixed_interp_generate(x_major, x_minor, alpha0: float, mix_labels: bool,
                          source_class: int, minority_label: int, num_classes: int):
    """Constant-ratio blend. Returns (image, target): the hard minority label, or
    with ``mix_labels`` a distribution with alpha0 on the source class."""
    if not 0.0 <= alpha0 <= 1.0:
        raise ContractError(f"alpha0={alpha0} outside [0, 1]")
    x_major, x_minor = as_tensor(x_major), as_tensor(x_minor)
    if x_major.shape != x_minor.shape:
        raise ContractError(f"shape mismatch: {x_major.shape} vs {x_minor.shape}")
    image = alpha0 * x_major + (1.0 - alpha0) * x_minor
    if not mix_labels:
        return image, minority_label
    target = np.zeros(num_classes, dtype=DTYPE)
    target[source_class] += alpha0
    target[minority_label] += 1.0 - alpha0
    return image, target


# -- sample replacement ------------------------------------------------------------

@dataclass
class ReplaceResult:
    images: np.ndarray
    labels: np.ndarray
    targets: np.ndarray | None  # (k, K) soft targets, mixup only
    replaced: np.ndarray  # bool mask
    outcomes: dict[int, GenerationOutcome]


def replace_batch(images, labels, majority_images, majority_labels, cfg: GaiConfig,
                  g: Classifier | None, f: Classifier | None, rng: np.random.Generator,
                  variant: Variant = Variant.GAI, num_classes: int | None = None) -> ReplaceResult:
    """Replace each minority duplicate, with probability p, by a generated sample.

    Randomness for sample i comes from its own child stream, so the result does
    not depend on how the optimization is batched.
    """
    variant = Variant(variant)
    cfg.validate()
    images, labels = as_tensor(images), np.asarray(labels, dtype=np.int64)
    if np.any(labels != cfg.minority_label):
        raise ContractError("replace_batch expects only minority-labelled samples")
    if len(majority_images) == 0:
        raise ContractError("empty majority pool")
    if variant in (Variant.GAI, Variant.GAI_MINUS) and g is None:
        raise ContractError(f"variant {variant.value} needs a teacher")
    if variant in (Variant.GAI, Variant.GAI_MINUS) and cfg.lam and f is None:
        raise ContractError(f"variant {variant.value} with lam > 0 needs a student")
    k = len(images)
    base = child_seed(rng)
    picks, alphas = [], []
    for i in range(k):
        r = make_rng(base, i)
        if not r.random() < cfg.p:
            continue
        j = int(r.integers(len(majority_images)))
        picks.append((i, j))
        if variant is Variant.GAI:
            alphas.append(init_alpha(images.shape[1:], cfg, r))

    out = images.copy()
    replaced = np.zeros(k, dtype=bool)
    outcomes: dict[int, GenerationOutcome] = {}
    targets = None
    if variant is Variant.MIXUP:
        if num_classes is None:
            num_classes = g.num_classes if g is not None else int(cfg.minority_label) + 1
        targets = np.zeros((k, num_classes), dtype=DTYPE)
        targets[:, cfg.minority_label] = 1.0
    if not picks:
        return ReplaceResult(out, labels.copy(), targets, replaced, outcomes)

    idx = np.array([i for i, _ in picks])
    maj = np.array([j for _, j in picks])
    x_major = as_tensor(majority_images[maj])
    src = np.asarray(majority_labels, dtype=np.int64)[maj]
    if np.any(src == cfg.minority_label):
        raise ContractError("majority pool contains minority-labelled samples")
    x_minor = images[idx]

    if variant is Variant.GAI:
        results = _gai_batch(np.stack(alphas), x_major, x_minor, src, cfg, g, f)
    elif variant is Variant.GAI_MINUS:
        results = _gai_minus_batch(x_major, src, cfg, g, f)
    else:
        results = []
        for n in range(len(idx)):
            img, tgt = fixed_interp_generate(x_major[n], x_minor[n], cfg.alpha0, variant is Variant.MIXUP,
                                             int(src[n]), cfg.minority_label, targets.shape[1] if targets is not None else 0)
            results.append(GenerationOutcome(img, True, float("nan"), variant))
            if targets is not None:
                targets[idx[n]] = tgt
    for n, res in enumerate(results):
        i = int(idx[n])
        outcomes[i] = res
        if res.accepted:
            out[i] = res.sample
            replaced[i] = True
    return ReplaceResult(out, labels.copy(), targets, replaced, outcomes)


def dump_quintuple(path: str | Path, x_major, x_minor, cfg: GaiConfig, outcome: GenerationOutcome) -> None:
    """Write (x_major, x_minor, x*_0, x_adv, alpha) as consecutive tensors."""
    x0 = interpolate(np.full(np.shape(x_major), cfg.alpha0), x_major, x_minor)
    coeff = outcome.coeff if outcome.coeff is not None else np.full(np.shape(x_major), cfg.alpha0)
    save_tensors(path, [x_major, x_minor, x0, outcome.sample, coeff])
