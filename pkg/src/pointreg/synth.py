"""Synthetic benchmark pairs with known ground-truth transforms.

Generation is driven by numpy's PCG64 bit generator (fixed, named, portable),
so a seed reproduces the same sample on any platform. Batch generation seeds
pair i with SeedSequence((seed, i)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import ConfigError
from .geometry import AffineTransform, Transform, TpsTransform, as_point_set
from .losses import as_correspondence

_SOURCE_LO, _SOURCE_HI = 0.1, 0.9
_NOISE_TRUNCATION_SIGMAS = 3.0
_MAX_RESAMPLE_PASSES = 10000


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for one synthetic pair.

    rotation bounds are degrees (the sampled angle magnitude lies in
    [rotation_min, rotation_max], sign random); scale is isotropic;
    translation and TPS displacements are in normalized units. Noise is
    Gaussian truncated at radius 3*noise_sigma so stored correspondences
    always satisfy ||T_true(p_a) - p_b|| <= 3*noise_sigma. With
    constrain_to_unit, points are resampled until the noisy target lands in
    [0, 1]^2 (required when writing dataset files).
    """

    n_points: int = 20
    transform_family: str = "affine"
    rotation_max: float = 30.0
    rotation_min: float = 0.0
    scale_range: tuple = (0.8, 1.2)
    translation_max: float = 0.2
    tps_displacement_max: float = 0.1
    drop_fraction: float = 0.2
    noise_sigma: float = 0.01
    seed: int = 0
    constrain_to_unit: bool = False

    def __post_init__(self):
        if self.transform_family not in ("affine", "tps"):
            raise ConfigError(f"transform_family must be 'affine' or 'tps', got {self.transform_family!r}")
        if self.n_points < 1:
            raise ConfigError("n_points must be at least 1")
        if not (0.0 <= self.drop_fraction < 1.0):
            raise ConfigError("drop_fraction must lie in [0, 1)")
        if int(round(self.n_points * (1.0 - self.drop_fraction))) < 1:
            raise ConfigError("drop_fraction leaves no surviving points")
        if not (0.0 <= self.rotation_min <= self.rotation_max):
            raise ConfigError("need 0 <= rotation_min <= rotation_max")
        lo, hi = self.scale_range
        if not (0.0 < lo <= hi):
            raise ConfigError("scale_range must satisfy 0 < lo <= hi")
        if self.translation_max < 0 or self.tps_displacement_max < 0 or self.noise_sigma < 0:
            raise ConfigError("translation_max, tps_displacement_max and noise_sigma must be nonnegative")


@dataclass
class PairSample:
    """One source/target keypoint-set pair.

    Coordinates are normalized; sizes record the pixel canvas they came from
    ((1, 1) for synthetic data). correspondence, when present, holds ground-
    truth (source index, target index) rows and is used for evaluation only.
    """

    source: np.ndarray
    target: np.ndarray
    category: Optional[str] = None
    correspondence: Optional[np.ndarray] = None
    source_size: tuple = (1.0, 1.0)
    target_size: tuple = (1.0, 1.0)
    pair_id: str = ""
    source_id: str = ""
    target_id: str = ""
    true_transform: Optional[Transform] = None

    def __post_init__(self):
        self.source = as_point_set(self.source)
        self.target = as_point_set(self.target)
        if self.correspondence is not None:
            self.correspondence = as_correspondence(
                self.correspondence, len(self.source), len(self.target)
            )


def _make_rng(key: tuple) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def _random_transform(rng: np.random.Generator, cfg: SynthConfig) -> Transform:
    if cfg.transform_family == "tps":
        disp = rng.uniform(-cfg.tps_displacement_max, cfg.tps_displacement_max, 18)
        return TpsTransform(disp)
    magnitude = rng.uniform(math.radians(cfg.rotation_min), math.radians(cfg.rotation_max))
    sign = 1.0 if rng.random() < 0.5 else -1.0
    scale = rng.uniform(cfg.scale_range[0], cfg.scale_range[1])
    translation = rng.uniform(-cfg.translation_max, cfg.translation_max, 2)
    angle = sign * magnitude
    c, s = math.cos(angle), math.sin(angle)
    matrix = scale * np.array([[c, -s], [s, c]])
    return AffineTransform.from_matrix(matrix, translation=translation, center=(0.5, 0.5))


def _draw_noise(rng: np.random.Generator, count: int, sigma: float) -> np.ndarray:
    """Gaussian noise vectors, redrawn until every norm is <= 3*sigma."""
    noise = rng.normal(0.0, sigma, (count, 2))
    if sigma > 0:
        limit = _NOISE_TRUNCATION_SIGMAS * sigma
        for _ in range(_MAX_RESAMPLE_PASSES):
            bad = np.flatnonzero(np.einsum("ni,ni->n", noise, noise) > limit**2)
            if bad.size == 0:
                break
            noise[bad] = rng.normal(0.0, sigma, (bad.size, 2))
    return noise


def generate_pair(cfg: SynthConfig, index: Optional[int] = None) -> PairSample:
    """Draw one pair: uniform source points, true-transformed noisy targets,
    independent per-side drops, both sides shuffled, surviving ground-truth
    correspondences recorded.

    index, when given, derives the sub-seed (cfg.seed, index); generate_pairs
    uses it for batches.
    """
    key = (cfg.seed,) if index is None else (cfg.seed, index)
    rng = _make_rng(key)
    true_transform = _random_transform(rng, cfg)

    n = cfg.n_points
    source = rng.uniform(_SOURCE_LO, _SOURCE_HI, (n, 2))
    noise = _draw_noise(rng, n, cfg.noise_sigma)
    target = true_transform.warp(source) + noise
    if cfg.constrain_to_unit:
        for _ in range(_MAX_RESAMPLE_PASSES):
            bad = np.flatnonzero(np.any((target < 0.0) | (target > 1.0), axis=1))
            if bad.size == 0:
                break
            source[bad] = rng.uniform(_SOURCE_LO, _SOURCE_HI, (bad.size, 2))
            noise[bad] = _draw_noise(rng, bad.size, cfg.noise_sigma)
            target[bad] = true_transform.warp(source[bad]) + noise[bad]
        else:
            raise ConfigError("could not keep targets inside [0,1]^2; transform ranges too extreme")

    n_keep = max(1, int(round(n * (1.0 - cfg.drop_fraction))))
    keep_src = np.sort(rng.permutation(n)[:n_keep])
    keep_tgt = np.sort(rng.permutation(n)[:n_keep])
    order_src = rng.permutation(n_keep)
    order_tgt = rng.permutation(n_keep)

    # final position of original point i on each side (when it survived)
    pos_src = {int(keep_src[order_src[k]]): k for k in range(n_keep)}
    pos_tgt = {int(keep_tgt[order_tgt[k]]): k for k in range(n_keep)}
    common = sorted(set(pos_src) & set(pos_tgt))
    correspondence = (
        np.array([[pos_src[i], pos_tgt[i]] for i in common], dtype=np.int64) if common else None
    )

    tag = "-".join(str(k) for k in key)
    return PairSample(
        source=source[keep_src][order_src],
        target=target[keep_tgt][order_tgt],
        correspondence=correspondence,
        pair_id=f"synth-{tag}",
        source_id=f"synth-{tag}-src",
        target_id=f"synth-{tag}-tgt",
        true_transform=true_transform,
    )


def generate_pairs(cfg: SynthConfig, count: int) -> list:
    """count independent pairs seeded (cfg.seed, 0..count-1)."""
    return [generate_pair(cfg, index=i) for i in range(count)]


def regime_config(regime: str, seed: int = 0, **overrides) -> SynthConfig:
    """Preset viewpoint-variation regimes.

    easy: rotation <= 30 deg, drop 0.2/side. hard: rotation 45-60 deg,
    drop 0.3/side. Both: 20 points, scale [0.8, 1.2], translation <= 0.2,
    noise sigma 0.01.
    """
    if regime == "easy":
        base = SynthConfig(seed=seed)
    elif regime == "hard":
        base = SynthConfig(rotation_min=45.0, rotation_max=60.0, drop_fraction=0.3, seed=seed)
    else:
        raise ConfigError(f"unknown regime {regime!r}; expected 'easy' or 'hard'")
    return replace(base, **overrides) if overrides else base


def combine_category_pairs(samples, cap_per_category: int) -> list:
    """New weakly supervised pairs from category-mates of distinct original
    pairs.

    Every image (keypoint set) is keyed by its stable id; unordered
    combinations of two images from the same category but different origin
    pairs become new samples without correspondence maps, capped per category
    in deterministic first-seen order.
    """
    images: dict = {}
    by_category: dict = {}
    for sample in samples:
        if sample.category is None:
            raise ValueError(f"pair {sample.pair_id!r} has no category label")
        if not sample.source_id or not sample.target_id:
            raise ValueError(f"pair {sample.pair_id!r} lacks stable image identifiers")
        for image_id, pts, size in (
            (sample.source_id, sample.source, sample.source_size),
            (sample.target_id, sample.target, sample.target_size),
        ):
            if image_id not in images:
                images[image_id] = (pts, size, sample.pair_id)
                by_category.setdefault(sample.category, []).append(image_id)

    combined = []
    for category, ids in by_category.items():
        produced = 0
        for i in range(len(ids)):
            if produced >= cap_per_category:
                break
            for j in range(i + 1, len(ids)):
                if produced >= cap_per_category:
                    break
                pts_i, size_i, origin_i = images[ids[i]]
                pts_j, size_j, origin_j = images[ids[j]]
                if origin_i == origin_j:
                    continue
                combined.append(
                    PairSample(
                        source=pts_i.copy(),
                        target=pts_j.copy(),
                        category=category,
                        source_size=size_i,
                        target_size=size_j,
                        pair_id=f"{ids[i]}+{ids[j]}",
                        source_id=ids[i],
                        target_id=ids[j],
                    )
                )
                produced += 1
    return combined


def exclude_test_flips(train, test) -> list:
    """Drop training pairs that duplicate or order-flip any test pair."""
    for sample in list(train) + list(test):
        if not sample.source_id or not sample.target_id:
            raise ValueError(f"pair {sample.pair_id!r} lacks stable image identifiers")
    test_keys = {(s.source_id, s.target_id) for s in test}
    return [
        s
        for s in train
        if (s.source_id, s.target_id) not in test_keys
        and (s.target_id, s.source_id) not in test_keys
    ]


_FLIP_PERMUTATION = (2, 1, 0, 5, 4, 3, 8, 7, 6)


def _flip_transform(transform: Optional[Transform]) -> Optional[Transform]:
    """Conjugate by the horizontal flip F(x, y) = (1 - x, y)."""
    if transform is None:
        return None
    if isinstance(transform, AffineTransform):
        f = np.array([-1.0, 0.0, 1.0, 0.0, 1.0, 0.0])
        flip = AffineTransform(f)
        m = flip.matrix @ transform.matrix @ flip.matrix
        t = flip.matrix @ (transform.matrix @ np.array([1.0, 0.0]) + transform.offset) + np.array([1.0, 0.0])
        return AffineTransform(np.array([m[0, 0], m[0, 1], t[0], m[1, 0], m[1, 1], t[1]]))
    if isinstance(transform, TpsTransform):
        # the flip permutes the control lattice onto itself and mirrors dx
        disp = transform.displacements.reshape(9, 2)
        flipped = disp[list(_FLIP_PERMUTATION)] * np.array([-1.0, 1.0])
        return TpsTransform(flipped.reshape(-1), transform.regularization)
    raise TypeError("can only flip plain affine or tps transforms")


def flip_horizontal(sample: PairSample) -> PairSample:
    """Mirror both keypoint sets (x -> 1 - x), the point-set analogue of the
    image-flip augmentation; correspondence survives, and any stored ground-
    truth transform is conjugated to stay consistent."""
    def flip_points(pts):
        out = pts.copy()
        out[:, 0] = 1.0 - out[:, 0]
        return out

    return PairSample(
        source=flip_points(sample.source),
        target=flip_points(sample.target),
        category=sample.category,
        correspondence=None if sample.correspondence is None else sample.correspondence.copy(),
        source_size=sample.source_size,
        target_size=sample.target_size,
        pair_id=f"{sample.pair_id}-flip",
        source_id=f"{sample.source_id}-flip",
        target_id=f"{sample.target_id}-flip",
        true_transform=_flip_transform(sample.true_transform),
    )
