"""Seeded generators with known ground truth, for desk-scale verification.

Two generator families plus a bundled miniature dataset builder:

  - correlated fields: per-pixel bivariate Gaussians with correlation rho,
    so the exact MI is -(C/2) * ln(1 - rho^2) nats;
  - boundary scenes: two constant-mean regions separated by a circular
    boundary, a mixing band along it (per-pixel coin flip between the two
    region distributions), a binary band mask, and a smooth
    distance-decay reference map imitating broad ensemble uncertainty;
  - a miniature 3-section dataset (two decoder layers, softmax outputs,
    a small ensemble, dropout passes, an epoch prediction history, and
    labels) used by the CLI golden tests.

All randomness flows through the counter-based Philox generator, so a
given spec and seed reproduce bit-identical tensors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import SectionDataset
from .exceptions import DegenerateInputError
from .pipeline import UncertaintyMap, align_bilinear

# boundary-scene shape parameters: circle radius as a fraction of the
# short side, and noise levels chosen so the mixing band dominates the
# flat-region MI floor
RADIUS_FRACTION = 0.3
REGION_MEAN = 1.0
FINE_NOISE = 0.3
COARSE_NOISE = 0.5
REFERENCE_SIGMA_PER_BAND = 2.0


@dataclass(frozen=True)
class SyntheticSpec:
    kind: str
    hw: tuple = (80, 80)
    channels: int = 4
    rho: float = 0.8
    band_width: float = 3.0
    seed: int = 42

    def __post_init__(self):
        if self.kind not in ("correlated_field", "boundary_scene"):
            raise DegenerateInputError(f"unknown synthetic kind {self.kind!r}")
        if self.hw[0] < 4 or self.hw[1] < 4:
            raise DegenerateInputError(f"grid {self.hw} too small")
        if self.channels < 1:
            raise DegenerateInputError(f"channels must be >= 1, got {self.channels}")
        if abs(self.rho) >= 1.0:
            raise DegenerateInputError(f"|rho| must be < 1, got {self.rho}")
        if self.band_width < 1.0:
            raise DegenerateInputError(
                f"band_width must be >= 1, got {self.band_width}"
            )


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed))


def gen_correlated_field(spec: SyntheticSpec):
    """(feat_a, feat_b, true_mi): channel-and-pixel-i.i.d. Gaussian pairs
    with correlation rho; true_mi = -(C/2) ln(1 - rho^2) nats."""
    if spec.kind != "correlated_field":
        raise DegenerateInputError(f"spec kind is {spec.kind!r}")
    rng = _rng(spec.seed)
    shape = (spec.channels,) + tuple(spec.hw)
    z1 = rng.standard_normal(shape)
    z2 = rng.standard_normal(shape)
    a = z1
    b = spec.rho * z1 + np.sqrt(1.0 - spec.rho**2) * z2
    true_mi = -(spec.channels / 2.0) * np.log(1.0 - spec.rho**2)
    return a.astype(np.float32), b.astype(np.float32), float(true_mi)


def _boundary_distance(hw) -> np.ndarray:
    """Per-pixel distance to the circular region boundary."""
    h, w = hw
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    radius = RADIUS_FRACTION * min(h, w)
    yy, xx = np.mgrid[0:h, 0:w]
    return np.abs(np.hypot(yy - cy, xx - cx) - radius)


def gen_boundary_scene(spec: SyntheticSpec):
    """(features, band_mask, reference) realizing elevated inter-layer
    coupling along a region boundary.

    features is [coarse, fine]: the fine layer has per-region constant
    channel means plus noise, with band pixels flipping between the two
    region distributions at random; the coarse layer is the bilinear
    downsample of the fine one plus independent noise, so the shared
    band structure couples the two layers there.
    """
    if spec.kind != "boundary_scene":
        raise DegenerateInputError(f"spec kind is {spec.kind!r}")
    h, w = spec.hw
    radius = RADIUS_FRACTION * min(h, w)
    if radius + spec.band_width / 2.0 >= min(h, w) / 2.0:
        raise DegenerateInputError(
            f"band of width {spec.band_width} does not fit a {h}x{w} scene"
        )
    rng = _rng(spec.seed)
    dist = _boundary_distance(spec.hw)
    inside = np.hypot(
        np.mgrid[0:h, 0:w][0] - (h - 1) / 2.0,
        np.mgrid[0:h, 0:w][1] - (w - 1) / 2.0,
    ) <= radius
    band_mask = dist <= spec.band_width / 2.0

    means = np.where(inside, REGION_MEAN, -REGION_MEAN)
    flips = rng.random(spec.hw) < 0.5  # band pixels: mixture of both regions
    means = np.where(band_mask, np.where(flips, REGION_MEAN, -REGION_MEAN), means)

    fine = means[None] + FINE_NOISE * rng.standard_normal((spec.channels, h, w))
    coarse = align_bilinear(fine, (h // 2, w // 2))
    coarse = coarse + COARSE_NOISE * rng.standard_normal(coarse.shape)

    sigma = REFERENCE_SIGMA_PER_BAND * spec.band_width
    reference = UncertaintyMap(
        values=np.exp(-0.5 * (dist / sigma) ** 2), method_tag="reference"
    )
    features = [coarse.astype(np.float32), fine.astype(np.float32)]
    return features, band_mask, reference


# miniature dataset layout constants
MINIATURE_SECTIONS = ("s001", "s002", "s003")
MINIATURE_CLASSES = 4
MINIATURE_COARSE_HW = (16, 16)
MINIATURE_FINE_HW = (32, 32)
MINIATURE_ENSEMBLE = 3
MINIATURE_DROPOUT = 2
MINIATURE_EPOCHS = 5


def _band_logits(hw, phase: float, amplitude: float) -> np.ndarray:
    """K x H x W logits for K horizontal class bands with sinusoidal
    boundaries; uncertainty concentrates where bands meet."""
    h, w = hw
    k = MINIATURE_CLASSES
    yy = np.arange(h)[:, None] * np.ones((1, w))
    wave = amplitude * np.sin(2.0 * np.pi * np.arange(w) / w + phase)
    centers = (np.arange(k) + 0.5) * (h / k)
    logits = np.empty((k, h, w))
    for c in range(k):
        logits[c] = -np.abs(yy + wave - centers[c]) / 2.0
    return logits


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def generate_miniature_section(section_id: str, seed: int) -> SectionDataset:
    """One miniature section: class-band scene with every optional output."""
    rng = _rng(seed)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    logits = _band_logits(MINIATURE_FINE_HW, phase, amplitude=2.0)
    probs = _softmax(logits)

    # decoder features: class signal plus noise; the coarse layer sees the
    # same scene through a downsample so the pair shares structure
    fine = probs + 0.3 * rng.standard_normal((MINIATURE_CLASSES,) + MINIATURE_FINE_HW)
    widened = np.concatenate([probs, probs[:2]], axis=0)  # 6 channels
    coarse = align_bilinear(widened, MINIATURE_COARSE_HW)
    coarse = coarse + 0.25 * rng.standard_normal(coarse.shape)

    ensemble = []
    for _ in range(MINIATURE_ENSEMBLE):
        jitter = rng.uniform(-0.35, 0.35)
        ensemble.append(_softmax(_band_logits(MINIATURE_FINE_HW, phase + jitter, 2.0)))
    dropout = []
    for _ in range(MINIATURE_DROPOUT):
        jitter = rng.uniform(-0.5, 0.5)
        dropout.append(_softmax(_band_logits(MINIATURE_FINE_HW, phase + jitter, 2.0)))

    epoch_preds = []
    for sigma in (1.0, 0.7, 0.45, 0.25, 0.1):  # training converges
        noisy = logits + sigma * rng.standard_normal(logits.shape)
        epoch_preds.append(noisy.argmax(axis=0))
    labels = logits.argmax(axis=0)

    return SectionDataset(
        section_id=section_id,
        decoder_features=[
            coarse.astype(np.float32),
            fine.astype(np.float32),
        ],
        probs=probs.astype(np.float32),
        ensemble_probs=np.stack(ensemble).astype(np.float32),
        dropout_probs=np.stack(dropout).astype(np.float32),
        epoch_preds=np.stack(epoch_preds).astype(np.int32),
        labels=labels.astype(np.int32),
    )


def generate_miniature_dataset(root, seed: int = 7) -> list:
    """Write the bundled miniature dataset under root; returns section ids."""
    from .dataio import save_section

    ids = []
    for i, sid in enumerate(MINIATURE_SECTIONS):
        ds = generate_miniature_section(sid, seed + i)
        save_section(ds, root)
        ids.append(sid)
    return ids
