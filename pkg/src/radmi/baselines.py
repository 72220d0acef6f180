"""Reference uncertainty measures computed from dumped network outputs.

Every measure is pointwise over pixels and returns an UncertaintyMap:

  - entropy of a softmax output, in nats, with 0*log(0) = 0;
  - one minus the maximum softmax probability;
  - entropy of member-averaged probabilities (deep ensembles and MC
    dropout differ only in how the stack was produced);
  - count of predicted-class changes across a training-epoch sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateInputError, ShapeMismatchError
from .pipeline import UncertaintyMap

# per-pixel class vectors must sum to 1 within this (single-precision dumps)
SIMPLEX_ATOL = 1e-4
# probabilities this far below zero are round-off and clamp to 0
NEGATIVE_TOL = 1e-6


def _check_simplex(probs: np.ndarray, what: str) -> np.ndarray:
    """Validate class-axis simplex vectors; returns float64 with round-off
    negatives clamped. probs has the class axis first."""
    p = np.asarray(probs, dtype=np.float64)
    if p.min() < -NEGATIVE_TOL:
        raise DegenerateInputError(
            f"{what}: probability {p.min():.3g} below tolerance {-NEGATIVE_TOL}"
        )
    sums = p.sum(axis=0)
    worst = float(np.abs(sums - 1.0).max())
    if worst > SIMPLEX_ATOL:
        raise DegenerateInputError(
            f"{what}: class sums deviate from 1 by {worst:.3g} (> {SIMPLEX_ATOL})"
        )
    # round-off can leave values a hair outside [0, 1]; entropy of p > 1
    # would go negative, so clip both ends
    return np.clip(p, 0.0, 1.0)


@dataclass
class ProbabilityStack:
    """M x K x H x W class probabilities from M members or passes."""

    values: np.ndarray
    member_count: int = field(init=False)

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 4:
            raise ShapeMismatchError(
                f"probability stack must be M x K x H x W, got shape {v.shape}"
            )
        for m in range(v.shape[0]):
            _check_simplex(v[m], f"member {m}")
        self.values = v
        self.member_count = v.shape[0]


@dataclass
class PredictionStack:
    """E x H x W int class ids from E training epochs."""

    values: np.ndarray
    epoch_count: int = field(init=False)

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 3:
            raise ShapeMismatchError(
                f"prediction stack must be E x H x W, got shape {v.shape}"
            )
        if not np.issubdtype(v.dtype, np.integer):
            raise ShapeMismatchError(
                f"prediction stack must hold integer class ids, got {v.dtype}"
            )
        if v.size and v.min() < 0:
            raise DegenerateInputError(f"negative class id {v.min()}")
        self.values = v
        self.epoch_count = v.shape[0]


def softmax_entropy(probs) -> UncertaintyMap:
    """Per-pixel entropy -sum_c p_c ln p_c of a K x H x W softmax output."""
    p = np.asarray(probs)
    if p.ndim != 3:
        raise ShapeMismatchError(f"probs must be K x H x W, got shape {p.shape}")
    p = _check_simplex(p, "probs")
    terms = np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)
    return UncertaintyMap(values=-terms.sum(axis=0), method_tag="entropy")


def one_minus_msp(probs) -> UncertaintyMap:
    """Per-pixel 1 - max_c p_c of a K x H x W softmax output."""
    p = np.asarray(probs)
    if p.ndim != 3:
        raise ShapeMismatchError(f"probs must be K x H x W, got shape {p.shape}")
    p = _check_simplex(p, "probs")
    return UncertaintyMap(values=1.0 - p.max(axis=0), method_tag="msp")


def ensemble_entropy(stack, method_tag: str = "ensemble") -> UncertaintyMap:
    """Entropy of the member-averaged class probabilities.

    Serves both deep ensembles and MC dropout; pass method_tag="mcdropout"
    for the latter. With one member this is exactly softmax_entropy.
    """
    if not isinstance(stack, ProbabilityStack):
        stack = ProbabilityStack(values=stack)
    mean = np.asarray(stack.values, dtype=np.float64).mean(axis=0)
    out = softmax_entropy(mean)
    out.method_tag = method_tag
    return out


def prediction_switches(stack) -> UncertaintyMap:
    """Count of consecutive-epoch class changes per pixel, in [0, E-1]."""
    if not isinstance(stack, PredictionStack):
        stack = PredictionStack(values=stack)
    v = stack.values
    if stack.epoch_count < 2:
        changes = np.zeros(v.shape[1:], dtype=np.float64)
    else:
        changes = (np.diff(v, axis=0) != 0).sum(axis=0).astype(np.float64)
    return UncertaintyMap(values=changes, method_tag="switches")
