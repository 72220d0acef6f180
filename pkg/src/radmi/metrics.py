"""Agreement metrics between two uncertainty maps.

Every metric first min-max normalizes both maps to [0, 1] independently,
because the inputs live on wildly different scales (entropies in nats,
switch counts, MI sums). A constant map cannot be normalized meaningfully:
correlation-family metrics reject it, the rest treat it as all zeros.

Groups, matching the report layout:
  correlation (higher is better): pearson, spearman, cosine
  overlap     (higher is better): miou, dice, hist_intersection
  distance    (lower is better):  kl_div, js_div, l2, chamfer, emd
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import distance_transform_edt
from scipy.stats import rankdata

from .exceptions import DegenerateInputError, ShapeMismatchError
from .pipeline import minmax_normalize

CORRELATION_METRICS = ("pearson", "spearman", "cosine")
OVERLAP_METRICS = ("miou", "dice", "hist_intersection")
DISTANCE_METRICS = ("kl_div", "js_div", "l2", "chamfer", "emd")
ALL_METRICS = CORRELATION_METRICS + OVERLAP_METRICS + DISTANCE_METRICS

DEFAULT_THRESHOLDS = tuple(round(0.1 * k, 1) for k in range(1, 10))


@dataclass(frozen=True)
class MetricConfig:
    bins: int = 64
    thresholds: tuple = DEFAULT_THRESHOLDS
    chamfer_percentile: float = 90.0
    smoothing_eps: float = 1e-12

    def __post_init__(self):
        if self.bins < 2:
            raise DegenerateInputError(f"bins must be >= 2, got {self.bins}")
        if len(self.thresholds) == 0 or not all(0 < t < 1 for t in self.thresholds):
            raise DegenerateInputError(
                f"thresholds must lie in (0, 1), got {self.thresholds}"
            )
        if not 0 < self.chamfer_percentile < 100:
            raise DegenerateInputError(
                f"chamfer percentile must be in (0, 100), got "
                f"{self.chamfer_percentile}"
            )
        if self.smoothing_eps <= 0:
            raise DegenerateInputError(
                f"smoothing_eps must be positive, got {self.smoothing_eps}"
            )


@dataclass
class MetricReport:
    """Per-section metric values plus mean/sample-std aggregates.

    With a single section the std is 0 by convention; section_count lets
    report writers flag that degenerate case.
    """

    per_section: dict
    aggregates: dict
    section_count: int = field(init=False)

    def __post_init__(self):
        self.section_count = len(self.per_section)


def _as_values(x) -> np.ndarray:
    return np.asarray(getattr(x, "values", x), dtype=np.float64)


def _pair(a, b):
    x = _as_values(a)
    y = _as_values(b)
    if x.shape != y.shape:
        raise ShapeMismatchError(f"map shapes differ: {x.shape} vs {y.shape}")
    if x.size == 0:
        raise DegenerateInputError("empty maps")
    return x, y


def _normalized_pair(a, b):
    x, y = _pair(a, b)
    return minmax_normalize(x), minmax_normalize(y)


def _require_nonconstant(x, y):
    if x.max() == x.min() or y.max() == y.min():
        raise DegenerateInputError("constant map has no rank/correlation structure")


def _pearson_flat(x: np.ndarray, y: np.ndarray) -> float:
    xm = x - x.mean()
    ym = y - y.mean()
    denom = np.sqrt((xm * xm).sum()) * np.sqrt((ym * ym).sum())
    if denom == 0.0:
        raise DegenerateInputError("zero variance")
    return float((xm * ym).sum() / denom)


def pearson(a, b) -> float:
    x, y = _pair(a, b)
    _require_nonconstant(x, y)
    return _pearson_flat(x.ravel(), y.ravel())


def spearman(a, b) -> float:
    """Pearson correlation of average-tie ranks."""
    x, y = _pair(a, b)
    _require_nonconstant(x, y)
    return _pearson_flat(rankdata(x.ravel()), rankdata(y.ravel()))


def cosine(a, b) -> float:
    x, y = _normalized_pair(a, b)
    nx = np.sqrt((x * x).sum())
    ny = np.sqrt((y * y).sum())
    if nx == 0.0 or ny == 0.0:
        raise DegenerateInputError("zero-norm map after normalization")
    return float((x * y).sum() / (nx * ny))


def _distribution(values: np.ndarray, eps: float) -> np.ndarray:
    p = values.ravel() + eps
    return p / p.sum()


def kl_div(a, b, cfg: MetricConfig | None = None) -> float:
    """KL(a || b) over epsilon-smoothed pixel distributions, nats."""
    cfg = cfg or MetricConfig()
    x, y = _normalized_pair(a, b)
    p = _distribution(x, cfg.smoothing_eps)
    q = _distribution(y, cfg.smoothing_eps)
    return float((p * np.log(p / q)).sum())


def js_div(a, b, cfg: MetricConfig | None = None) -> float:
    cfg = cfg or MetricConfig()
    x, y = _normalized_pair(a, b)
    p = _distribution(x, cfg.smoothing_eps)
    q = _distribution(y, cfg.smoothing_eps)
    m = 0.5 * (p + q)
    kl_pm = (p * np.log(p / m)).sum()
    kl_qm = (q * np.log(q / m)).sum()
    return float(0.5 * kl_pm + 0.5 * kl_qm)


def rmse(a, b) -> float:
    """Root-mean-square difference with no normalization applied."""
    x, y = _pair(a, b)
    d = x - y
    return float(np.sqrt((d * d).mean()))


def l2_dist(a, b) -> float:
    """RMSE over normalized maps; lands in [0, 1]."""
    x, y = _normalized_pair(a, b)
    return rmse(x, y)


def binarize_top_percentile(values, percentile: float) -> np.ndarray:
    """Mask of pixels strictly above the map's own percentile value."""
    arr = _as_values(values)
    return arr > np.percentile(arr, percentile)


def chamfer_masks(mask_a, mask_b) -> float:
    """Bidirectional Chamfer distance between two binary masks, pixels."""
    ma = np.asarray(mask_a, dtype=bool)
    mb = np.asarray(mask_b, dtype=bool)
    if ma.shape != mb.shape:
        raise ShapeMismatchError(f"mask shapes differ: {ma.shape} vs {mb.shape}")
    if not ma.any() or not mb.any():
        raise DegenerateInputError("empty mask in chamfer computation")
    dist_to_b = distance_transform_edt(~mb)
    dist_to_a = distance_transform_edt(~ma)
    return float(0.5 * (dist_to_b[ma].mean() + dist_to_a[mb].mean()))


def chamfer(a, b, cfg: MetricConfig | None = None) -> float:
    cfg = cfg or MetricConfig()
    x, y = _normalized_pair(a, b)
    return chamfer_masks(
        binarize_top_percentile(x, cfg.chamfer_percentile),
        binarize_top_percentile(y, cfg.chamfer_percentile),
    )


def value_histogram(values, bins: int) -> np.ndarray:
    """Probability histogram (sums to 1) of values over [0, 1]."""
    counts, _ = np.histogram(_as_values(values).ravel(), bins=bins,
                             range=(0.0, 1.0))
    return counts / counts.sum()


def emd_histograms(ha, hb) -> float:
    """1-D EMD between two equal-length probability histograms whose bins
    tile [0, 1]: sum of absolute CDF differences times the bin width."""
    pa = np.asarray(ha, dtype=np.float64)
    pb = np.asarray(hb, dtype=np.float64)
    if pa.shape != pb.shape or pa.ndim != 1:
        raise ShapeMismatchError(
            f"histograms must share a 1-D shape, got {pa.shape} vs {pb.shape}"
        )
    return float(np.abs(np.cumsum(pa) - np.cumsum(pb)).sum() / pa.size)


def emd(a, b, cfg: MetricConfig | None = None) -> float:
    """1-D earth mover's distance between value histograms over [0, 1]."""
    cfg = cfg or MetricConfig()
    x, y = _normalized_pair(a, b)
    return emd_histograms(value_histogram(x, cfg.bins), value_histogram(y, cfg.bins))


def overlap_at_thresholds(a, b, cfg: MetricConfig | None = None) -> list:
    """Per-threshold (t, iou, dice) tuples, skipping empty unions."""
    cfg = cfg or MetricConfig()
    x, y = _normalized_pair(a, b)
    out = []
    for t in cfg.thresholds:
        ma = x > t
        mb = y > t
        union = int(np.logical_or(ma, mb).sum())
        if union == 0:
            continue
        inter = int(np.logical_and(ma, mb).sum())
        iou = inter / union
        dice_val = 2.0 * inter / (int(ma.sum()) + int(mb.sum()))
        out.append((t, iou, dice_val))
    return out


def _mean_overlap(a, b, cfg, index: int) -> float:
    curve = overlap_at_thresholds(a, b, cfg)
    if not curve:
        raise DegenerateInputError("all thresholds give an empty union")
    return float(np.mean([entry[index] for entry in curve]))


def miou(a, b, cfg: MetricConfig | None = None) -> float:
    return _mean_overlap(a, b, cfg or MetricConfig(), 1)


def dice(a, b, cfg: MetricConfig | None = None) -> float:
    return _mean_overlap(a, b, cfg or MetricConfig(), 2)


def intersection_histograms(ha, hb) -> float:
    """Sum of per-bin minima of two probability histograms."""
    pa = np.asarray(ha, dtype=np.float64)
    pb = np.asarray(hb, dtype=np.float64)
    if pa.shape != pb.shape or pa.ndim != 1:
        raise ShapeMismatchError(
            f"histograms must share a 1-D shape, got {pa.shape} vs {pb.shape}"
        )
    return float(np.minimum(pa, pb).sum())


def hist_intersection(a, b, cfg: MetricConfig | None = None) -> float:
    cfg = cfg or MetricConfig()
    x, y = _normalized_pair(a, b)
    return intersection_histograms(
        value_histogram(x, cfg.bins), value_histogram(y, cfg.bins)
    )


def compute_all(a, b, cfg: MetricConfig | None = None) -> dict:
    """All metric values for one map pair, keyed in canonical order."""
    cfg = cfg or MetricConfig()
    return {
        "pearson": pearson(a, b),
        "spearman": spearman(a, b),
        "cosine": cosine(a, b),
        "miou": miou(a, b, cfg),
        "dice": dice(a, b, cfg),
        "hist_intersection": hist_intersection(a, b, cfg),
        "kl_div": kl_div(a, b, cfg),
        "js_div": js_div(a, b, cfg),
        "l2": l2_dist(a, b),
        "chamfer": chamfer(a, b, cfg),
        "emd": emd(a, b, cfg),
    }


def aggregate_sections(per_section) -> MetricReport:
    """Mean and sample std (1/(n-1)) of each metric across sections.

    Sections are processed in sorted-id order; one section yields std 0.
    Accepts either a {section_id: metrics} mapping or (id, metrics) pairs.
    """
    if isinstance(per_section, dict):
        per_section = per_section.items()
    entries = sorted(per_section, key=lambda item: item[0])
    if not entries:
        raise DegenerateInputError("no sections to aggregate")
    keys = list(entries[0][1].keys())
    for sid, values in entries:
        if list(values.keys()) != keys:
            raise DegenerateInputError(
                f"section {sid} has metric keys {sorted(values)}, "
                f"expected {sorted(keys)}"
            )
    aggregates = {}
    for key in keys:
        vals = np.array([values[key] for _, values in entries], dtype=np.float64)
        mean = float(vals.mean())
        std = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        aggregates[key] = (mean, std)
    return MetricReport(
        per_section={sid: dict(values) for sid, values in entries},
        aggregates=aggregates,
    )
