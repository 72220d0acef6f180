"""Gaussian mutual information between two feature blocks.

For jointly Gaussian vectors the MI has a closed form in terms of log
determinants of the joint covariance and its two marginal blocks,

    I(a; b) = 1/2 * (logdet(S_a) + logdet(S_b) - logdet(S)),

in nats. A dense per-pixel map is produced by sliding a p x p window over
a pair of aligned feature grids, treating the p^2 pixels inside the window
as samples of the concatenated channel vector [a; b].

Two evaluation paths compute the same map: a naive one that re-estimates
each window from scratch (simple, slow, used as the reference in tests)
and a fast one built on summed-area tables of channel sums and channel
pair products. All accumulation is double precision regardless of input
dtype; single-precision box differencing loses too many digits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import (
    DegenerateInputError,
    InvalidPatchError,
    ShapeMismatchError,
    SingularCovarianceError,
)

# round-off window below zero that is forgiven and clamped to exactly 0
_CLAMP_TOL = 1e-9

# fixed Philox keys for the optional channel projection (a-block, b-block);
# constants keep repeated calls on equal shapes bit-identical
_PROJECTION_KEYS = (7919, 7927)


@dataclass(frozen=True)
class MIConfig:
    """Window estimator settings.

    patch: odd window side p >= 3.
    stride: output grid step s >= 1.
    epsilon: shrinkage strength for covariance regularization, >= 0.
    projection_dim: optional channel count k; blocks wider than k are
        first reduced with a fixed seeded Gaussian projection.
    """

    patch: int = 7
    stride: int = 1
    epsilon: float = 1e-3
    projection_dim: int | None = None

    def __post_init__(self):
        if self.patch < 3 or self.patch % 2 == 0:
            raise InvalidPatchError(f"patch must be odd and >= 3, got {self.patch}")
        if self.stride < 1:
            raise InvalidPatchError(f"stride must be >= 1, got {self.stride}")
        if self.epsilon < 0:
            raise InvalidPatchError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.projection_dim is not None and self.projection_dim < 1:
            raise InvalidPatchError(
                f"projection_dim must be >= 1, got {self.projection_dim}"
            )


@dataclass
class CovarianceEstimate:
    """Sample mean and unbiased covariance of n D-dimensional vectors."""

    mean: np.ndarray
    cov: np.ndarray
    sample_count: int


@dataclass
class MIMap:
    """Per-window MI values in nats.

    resolution is the shared H x W grid of the input pair; values has one
    entry per window, so its shape is ceil(H/s) x ceil(W/s) and matches
    resolution only at stride 1.
    """

    values: np.ndarray
    resolution: tuple


def empirical_covariance(samples) -> CovarianceEstimate:
    """Unbiased (1/(n-1)) covariance of an n x D sample matrix."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeMismatchError(f"samples must be n x D, got shape {x.shape}")
    n = x.shape[0]
    if n < 2:
        raise DegenerateInputError(f"need at least 2 samples, got {n}")
    mean = x.mean(axis=0)
    centered = x - mean
    centered -= centered.mean(axis=0)  # kills round-off residue of the first pass
    cov = centered.T @ centered / (n - 1)
    cov = (cov + cov.T) / 2.0  # BLAS round-off can leave tiny asymmetry
    return CovarianceEstimate(mean=mean, cov=cov, sample_count=n)


def regularize(cov, epsilon: float) -> np.ndarray:
    """Trace-scaled shrinkage: cov + eps * (trace/D) * I.

    A zero trace falls back to eps * I so the result is positive definite
    for any PSD input with eps > 0. Nonpositive traces (round-off away
    from an exactly zero matrix) take the same fallback.
    """
    c = np.asarray(cov, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ShapeMismatchError(f"cov must be square, got shape {c.shape}")
    if epsilon < 0:
        raise DegenerateInputError(f"epsilon must be >= 0, got {epsilon}")
    if epsilon == 0:
        return c.copy()
    d = c.shape[0]
    tr = float(np.trace(c))
    scale = tr / d if tr > 0.0 else 1.0
    out = c.copy()
    out[np.diag_indices(d)] += epsilon * scale
    return out


def _logdet_chol(mat) -> float:
    try:
        chol = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError(
            "covariance block is not positive definite"
        ) from exc
    return 2.0 * float(np.log(np.diagonal(chol)).sum())


def gaussian_mi(joint_cov, dim_a: int) -> float:
    """Closed-form Gaussian MI (nats) from a joint covariance.

    The leading dim_a x dim_a block is the a-marginal, the trailing block
    the b-marginal. Values inside [-1e-9, 0) are round-off and clamp to 0.
    """
    joint = np.asarray(joint_cov, dtype=np.float64)
    if joint.ndim != 2 or joint.shape[0] != joint.shape[1]:
        raise ShapeMismatchError(f"joint_cov must be square, got shape {joint.shape}")
    d = joint.shape[0]
    if not 1 <= dim_a < d:
        raise ShapeMismatchError(f"dim_a must be in [1, {d - 1}], got {dim_a}")
    ld_a = _logdet_chol(joint[:dim_a, :dim_a])
    ld_b = _logdet_chol(joint[dim_a:, dim_a:])
    ld_joint = _logdet_chol(joint)
    mi = 0.5 * (ld_a + ld_b - ld_joint)
    if -_CLAMP_TOL <= mi < 0.0:
        mi = 0.0
    return float(mi)


def _maybe_project(feat: np.ndarray, k, key: int) -> np.ndarray:
    if k is None or feat.shape[0] <= k:
        return feat
    rng = np.random.Generator(np.random.Philox(key=key))
    proj = rng.standard_normal((k, feat.shape[0])) / np.sqrt(k)
    return np.tensordot(proj, feat, axes=1)


def _grid_starts(size: int, stride: int) -> np.ndarray:
    # window top-left offsets in the padded frame; centers land on the
    # stride grid of the unpadded input
    return np.arange(0, size, stride)


def _prepare(feat_a, feat_b, cfg: MIConfig):
    a = np.asarray(feat_a, dtype=np.float64)
    b = np.asarray(feat_b, dtype=np.float64)
    if a.ndim != 3 or b.ndim != 3:
        raise ShapeMismatchError(
            f"features must be C x H x W, got {a.shape} and {b.shape}"
        )
    if a.shape[1:] != b.shape[1:]:
        raise ShapeMismatchError(
            f"feature grids differ: {a.shape[1:]} vs {b.shape[1:]}; align first"
        )
    h, w = a.shape[1:]
    if cfg.patch > min(h, w):
        raise InvalidPatchError(
            f"patch {cfg.patch} exceeds smallest grid side of {min(h, w)}"
        )
    a = _maybe_project(a, cfg.projection_dim, _PROJECTION_KEYS[0])
    b = _maybe_project(b, cfg.projection_dim, _PROJECTION_KEYS[1])
    stacked = np.concatenate([a, b], axis=0)
    pad = cfg.patch // 2
    padded = np.pad(stacked, ((0, 0), (pad, pad), (pad, pad)), mode="reflect")
    return padded, a.shape[0], (h, w)


def _mi_map_naive(padded, dim_a, hw, cfg: MIConfig) -> np.ndarray:
    p = cfg.patch
    rows = _grid_starts(hw[0], cfg.stride)
    cols = _grid_starts(hw[1], cfg.stride)
    out = np.empty((rows.size, cols.size), dtype=np.float64)
    for i, r in enumerate(rows):
        for j, c in enumerate(cols):
            win = padded[:, r:r + p, c:c + p]
            samples = win.reshape(win.shape[0], -1).T
            est = empirical_covariance(samples)
            joint = regularize(est.cov, cfg.epsilon)
            try:
                out[i, j] = gaussian_mi(joint, dim_a)
            except SingularCovarianceError as exc:
                raise SingularCovarianceError(
                    f"window at output ({i}, {j}): {exc}"
                ) from exc
    return out


def _sat(x: np.ndarray) -> np.ndarray:
    """Zero-prefixed 2-D inclusion-exclusion table over the last two axes."""
    out = np.zeros(x.shape[:-2] + (x.shape[-2] + 1, x.shape[-1] + 1), dtype=np.float64)
    np.cumsum(x, axis=-2, out=out[..., 1:, 1:])
    np.cumsum(out[..., 1:, 1:], axis=-1, out=out[..., 1:, 1:])
    return out


def _box_sums(sat: np.ndarray, rows, cols, p: int) -> np.ndarray:
    r0 = rows[:, None]
    c0 = cols[None, :]
    r1 = r0 + p
    c1 = c0 + p
    return (
        sat[..., r1, c1] - sat[..., r0, c1] - sat[..., r1, c0] + sat[..., r0, c0]
    )


def _batched_logdet(mats: np.ndarray, label: str) -> np.ndarray:
    try:
        chol = np.linalg.cholesky(mats)
    except np.linalg.LinAlgError:
        # find the offender for a useful message; this path is cold
        for idx in range(mats.shape[0]):
            try:
                np.linalg.cholesky(mats[idx])
            except np.linalg.LinAlgError as exc:
                raise SingularCovarianceError(
                    f"{label} covariance at window {idx} is not positive definite"
                ) from exc
        raise SingularCovarianceError(f"{label} covariance is not positive definite")
    diag = np.diagonal(chol, axis1=-2, axis2=-1)
    return 2.0 * np.log(diag).sum(axis=-1)


def _mi_map_fast(padded, dim_a, hw, cfg: MIConfig) -> np.ndarray:
    p = cfg.patch
    n = p * p
    d = padded.shape[0]
    rows = _grid_starts(hw[0], cfg.stride)
    cols = _grid_starts(hw[1], cfg.stride)

    s1 = _box_sums(_sat(padded), rows, cols, p)  # D x nH x nW
    s2 = np.empty((d, d, rows.size, cols.size), dtype=np.float64)
    for i in range(d):
        prod = padded[i:] * padded[i]
        s2[i, i:] = _box_sums(_sat(prod), rows, cols, p)
        s2[i + 1:, i] = s2[i, i + 1:]

    s1 = np.moveaxis(s1, 0, -1)  # nH x nW x D
    s2 = np.moveaxis(s2, (0, 1), (-2, -1))  # nH x nW x D x D
    cov = (s2 - s1[..., :, None] * s1[..., None, :] / n) / (n - 1)

    if cfg.epsilon > 0:
        tr = np.trace(cov, axis1=-2, axis2=-1)
        scale = np.where(tr > 0.0, tr / d, 1.0)
        idx = np.arange(d)
        cov[..., idx, idx] += cfg.epsilon * scale[..., None]

    flat = cov.reshape(-1, d, d)
    ld_a = _batched_logdet(np.ascontiguousarray(flat[:, :dim_a, :dim_a]), "a-block")
    ld_b = _batched_logdet(np.ascontiguousarray(flat[:, dim_a:, dim_a:]), "b-block")
    ld_joint = _batched_logdet(flat, "joint")
    mi = 0.5 * (ld_a + ld_b - ld_joint)
    mi = np.where((mi >= -_CLAMP_TOL) & (mi < 0.0), 0.0, mi)
    return mi.reshape(rows.size, cols.size)


def windowed_mi_map(feat_a, feat_b, cfg: MIConfig | None = None,
                    mode: str = "fast") -> MIMap:
    """Dense MI map between two aligned C x H x W feature grids.

    Each output cell is the Gaussian MI between the two channel blocks,
    estimated from the p^2 pixels of a p x p window reflect-padded by
    floor(p/2), so stride 1 yields exactly H x W cells and stride s
    yields a ceil(H/s) x ceil(W/s) grid.
    """
    if cfg is None:
        cfg = MIConfig()
    if mode not in ("naive", "fast"):
        raise ValueError(f"mode must be 'naive' or 'fast', got {mode!r}")
    padded, dim_a, hw = _prepare(feat_a, feat_b, cfg)
    impl = _mi_map_naive if mode == "naive" else _mi_map_fast
    values = impl(padded, dim_a, hw, cfg)
    return MIMap(values=values, resolution=hw)
