"""Uncertainty map assembly from decoder feature stacks.

For each consecutive decoder pair the finer feature grid is bilinearly
aligned to the coarser one, a windowed MI map is computed at that
resolution, optionally min-max normalized, bicubically upsampled to the
output resolution, and the per-pair maps are combined by a weighted sum.
Default weights are proportional to each pair's pixel count; uniform
1/(L-1) weighting is the ablation alternative.

Both resamplers use corner-aligned source grids: output index i samples
source coordinate i*(src-1)/(dst-1), so grid corners map to grid corners
and constants are preserved exactly. The bicubic kernel is Catmull-Rom
(a = -0.5) with edge-clamped taps.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dataio import SectionDataset
from .exceptions import DegenerateInputError, ShapeMismatchError
from .mi import MIConfig, MIMap, windowed_mi_map

WEIGHTINGS = ("resolution", "uniform")


@dataclass
class UncertaintyMap:
    """A per-pixel nonnegative uncertainty score grid."""

    values: np.ndarray
    method_tag: str


@dataclass(frozen=True)
class AggregationConfig:
    """How per-pair MI maps combine into one map.

    output_hw of None resolves to the section's network output resolution
    (probs if dumped, else the finest decoder layer).
    """

    weighting: str = "resolution"
    normalize_per_pair: bool = True
    output_hw: tuple | None = None

    def __post_init__(self):
        if self.weighting not in WEIGHTINGS:
            raise ValueError(
                f"weighting must be one of {WEIGHTINGS}, got {self.weighting!r}"
            )


def _corner_coords(src: int, dst: int) -> np.ndarray:
    if dst == 1:
        return np.array([(src - 1) / 2.0])
    # integer product before the divide keeps endpoint coordinates exact
    return np.arange(dst) * (src - 1) / (dst - 1)


def _linear_last_axis(arr: np.ndarray, dst: int) -> np.ndarray:
    src = arr.shape[-1]
    if dst == src:
        return arr.copy()
    coords = _corner_coords(src, dst)
    i0 = np.floor(coords).astype(np.intp)
    t = coords - i0
    i1 = np.minimum(i0 + 1, src - 1)
    x0 = arr[..., i0]
    x1 = arr[..., i1]
    return x0 + t * (x1 - x0)


def _cubic_last_axis(arr: np.ndarray, dst: int) -> np.ndarray:
    src = arr.shape[-1]
    if dst == src:
        return arr.copy()
    coords = _corner_coords(src, dst)
    i0 = np.floor(coords).astype(np.intp)
    t = coords - i0
    taps = [np.clip(i0 + k, 0, src - 1) for k in (-1, 0, 1, 2)]
    x0, x1, x2, x3 = (arr[..., idx] for idx in taps)
    t2 = t * t
    t3 = t2 * t
    w0 = -0.5 * t3 + t2 - 0.5 * t
    w2 = -1.5 * t3 + 2.0 * t2 + 0.5 * t
    w3 = 0.5 * t3 - 0.5 * t2
    # written around x1 so four equal taps reproduce the value exactly
    return x1 + w0 * (x0 - x1) + w2 * (x2 - x1) + w3 * (x3 - x1)


def align_bilinear(fine, coarse_hw) -> np.ndarray:
    """Resample a C x H_f x W_f stack down to H_c x W_c per channel."""
    arr = np.asarray(fine, dtype=np.float64)
    if arr.ndim != 3:
        raise ShapeMismatchError(f"expected C x H x W, got shape {arr.shape}")
    hc, wc = int(coarse_hw[0]), int(coarse_hw[1])
    if hc < 1 or wc < 1:
        raise ShapeMismatchError(f"target must be positive, got {(hc, wc)}")
    if hc > arr.shape[1] or wc > arr.shape[2]:
        raise ShapeMismatchError(
            f"alignment target {(hc, wc)} exceeds source {arr.shape[1:]}"
        )
    out = _linear_last_axis(arr, wc)
    out = np.moveaxis(_linear_last_axis(np.moveaxis(out, 1, 2), hc), 1, 2)
    return out


def upsample_bicubic(values, target_hw) -> np.ndarray:
    """Catmull-Rom upsample of an H x W grid to H' x W' (no downscaling)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"expected H x W grid, got shape {arr.shape}")
    ht, wt = int(target_hw[0]), int(target_hw[1])
    if ht < arr.shape[0] or wt < arr.shape[1]:
        raise ShapeMismatchError(
            f"bicubic target {(ht, wt)} is below source {arr.shape}"
        )
    out = _cubic_last_axis(arr, wt)
    out = _cubic_last_axis(out.T, ht).T
    return out


def resolution_weights(resolutions) -> list:
    """Weights proportional to H*W, normalized to sum to 1."""
    if len(resolutions) == 0:
        raise DegenerateInputError("no resolutions to weight")
    counts = []
    for h, w in resolutions:
        if h < 1 or w < 1:
            raise DegenerateInputError(f"nonpositive resolution ({h}, {w})")
        counts.append(float(h) * float(w))
    total = sum(counts)
    return [c / total for c in counts]


def minmax_normalize(values) -> np.ndarray:
    """Affine rescale to [0, 1]; a constant grid maps to all zeros."""
    arr = np.asarray(values, dtype=np.float64)
    lo = arr.min()
    hi = arr.max()
    if hi == lo:
        return np.zeros_like(arr)
    return (arr - lo) / (hi - lo)


def aggregate(maps, weights, method_tag: str = "aggregate") -> UncertaintyMap:
    """Pixelwise weighted sum of equally shaped maps."""
    if len(maps) == 0 or len(maps) != len(weights):
        raise ShapeMismatchError(
            f"need matching nonempty lists, got {len(maps)} maps, "
            f"{len(weights)} weights"
        )
    total = float(sum(weights))
    if abs(total - 1.0) > 1e-9:
        raise DegenerateInputError(f"weights sum to {total}, expected 1")
    first = np.asarray(maps[0], dtype=np.float64)
    out = np.zeros_like(first)
    for m, w in zip(maps, weights):
        arr = np.asarray(m, dtype=np.float64)
        if arr.shape != first.shape:
            raise ShapeMismatchError(
                f"map shapes differ: {arr.shape} vs {first.shape}"
            )
        out += w * arr
    return UncertaintyMap(values=out, method_tag=method_tag)


def aggregate_mi_maps(mi_maps, cfg: AggregationConfig) -> UncertaintyMap:
    """Normalize, upsample, and weight per-pair MI maps into one map.

    Weights follow each map's stated pair resolution when weighting is
    "resolution", or are uniform over pairs otherwise. Negative bicubic
    overshoot is clamped to 0 in the result.
    """
    if len(mi_maps) == 0:
        raise DegenerateInputError("no MI maps to aggregate")
    if cfg.output_hw is None:
        raise DegenerateInputError("output_hw must be resolved before aggregation")
    if cfg.weighting == "resolution":
        weights = resolution_weights([m.resolution for m in mi_maps])
    else:
        weights = [1.0 / len(mi_maps)] * len(mi_maps)
    upsampled = []
    for m in mi_maps:
        vals = minmax_normalize(m.values) if cfg.normalize_per_pair else m.values
        upsampled.append(upsample_bicubic(vals, cfg.output_hw))
    out = aggregate(upsampled, weights, method_tag="radmi")
    np.maximum(out.values, 0.0, out=out.values)
    return out


def radmi(section: SectionDataset, mi_cfg: MIConfig | None = None,
          agg_cfg: AggregationConfig | None = None,
          mode: str = "fast") -> UncertaintyMap:
    """Full workflow over one section's decoder stack.

    Consecutive feature pairs (coarse, fine) produce MI maps at the
    coarser resolution, which are then combined per agg_cfg.
    """
    if mi_cfg is None:
        mi_cfg = MIConfig()
    if agg_cfg is None:
        agg_cfg = AggregationConfig()
    feats = section.decoder_features
    if len(feats) < 2:
        raise DegenerateInputError(
            f"section {section.section_id}: need at least 2 decoder layers"
        )
    if agg_cfg.output_hw is None:
        agg_cfg = replace(agg_cfg, output_hw=section.output_hw())
    mi_maps = []
    for coarse, fine in zip(feats, feats[1:]):
        aligned = align_bilinear(fine, coarse.shape[1:])
        mi_maps.append(windowed_mi_map(coarse, aligned, mi_cfg, mode=mode))
    return aggregate_mi_maps(mi_maps, agg_cfg)
