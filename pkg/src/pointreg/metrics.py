"""PCK evaluation of fitted transforms against ground-truth correspondences."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptyBatchError
from .geometry import Transform, as_point_set
from .losses import as_correspondence


@dataclass(frozen=True)
class PckConfig:
    """PCK threshold as a fraction of the normalized image extent.

    Keypoints are already normalized per axis by image width/height, so the
    threshold is alpha in normalized units. Comparison is inclusive: a point
    exactly at distance alpha counts as correct.
    """

    alpha: float = 0.1

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")


def pck(transform: Transform, pa, pb, correspondence, cfg: PckConfig = PckConfig()) -> float:
    """Fraction of corresponded source keypoints whose projections land within
    alpha of their true target keypoints."""
    pa, pb = as_point_set(pa), as_point_set(pb)
    corr = as_correspondence(correspondence, len(pa), len(pb))
    warped = transform.warp(pa)
    residuals = warped[corr[:, 0]] - pb[corr[:, 1]]
    distances = np.sqrt(np.einsum("ni,ni->n", residuals, residuals))
    return float(np.count_nonzero(distances <= cfg.alpha) / len(corr))


@dataclass
class PckReport:
    """Per-pair PCK fractions, their overall mean, and per-category means."""

    per_pair: list = field(default_factory=list)
    mean: float = 0.0
    per_category: dict = field(default_factory=dict)


def evaluate_batch(items: Sequence, cfg: PckConfig = PckConfig()) -> PckReport:
    """Score a batch of (RegistrationResult, PairSample) via each fitted
    theta_ab. Every sample must carry ground-truth correspondence."""
    items = list(items)
    if not items:
        raise EmptyBatchError("no pairs to evaluate")
    per_pair = []
    by_category: dict = {}
    for result, sample in items:
        if sample.correspondence is None:
            raise ValueError(f"pair {sample.pair_id!r} has no ground-truth correspondence")
        fraction = pck(result.theta_ab, sample.source, sample.target, sample.correspondence, cfg)
        per_pair.append(fraction)
        label = sample.category if sample.category is not None else "uncategorized"
        by_category.setdefault(label, []).append(fraction)
    per_category = {label: float(np.mean(vals)) for label, vals in sorted(by_category.items())}
    return PckReport(per_pair=per_pair, mean=float(np.mean(per_pair)), per_category=per_category)
