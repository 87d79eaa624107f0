"""PCK scoring and batch aggregation."""

import numpy as np
import pytest

from pointreg.errors import EmptyBatchError, EmptyCorrespondenceError
from pointreg.geometry import AffineTransform
from pointreg.metrics import PckConfig, evaluate_batch, pck
from pointreg.optimizer import RegistrationResult
from pointreg.synth import PairSample

from conftest import make_rng, random_points

IDENT = AffineTransform.identity()


def _full_corr(n):
    return np.stack([np.arange(n), np.arange(n)], axis=1)


class TestPck:
    def test_perfect_overlap(self):
        pts = random_points(make_rng(0), 8)
        assert pck(IDENT, pts, pts, _full_corr(8)) == 1.0

    def test_beyond_threshold(self):
        assert pck(IDENT, [[0, 0]], [[0.2, 0]], [[0, 0]]) == 0.0

    def test_two_of_three_within(self):
        pa = [[0, 0], [0, 0.5], [0, 1]]
        pb = [[0.05, 0], [0.09, 0.5], [0.2, 1]]
        assert pck(IDENT, pa, pb, _full_corr(3)) == pytest.approx(2 / 3, abs=1e-15)

    def test_boundary_is_inclusive(self):
        # distance is exactly alpha: axis-aligned offset of 0.1
        assert pck(IDENT, [[0.0, 0.5]], [[0.1, 0.5]], [[0, 0]], PckConfig(alpha=0.1)) == 1.0

    def test_monotone_in_alpha(self):
        rng = make_rng(1)
        pa = random_points(rng, 12)
        pb = random_points(rng, 12)
        corr = _full_corr(12)
        previous = 0.0
        for alpha in (0.05, 0.1, 0.2, 0.4, 0.8, 1.0):
            value = pck(IDENT, pa, pb, corr, PckConfig(alpha=alpha))
            assert value >= previous
            previous = value

    def test_alpha_validation(self):
        with pytest.raises(ValueError):
            PckConfig(alpha=0.0)
        with pytest.raises(ValueError):
            PckConfig(alpha=1.5)

    def test_empty_correspondence_rejected(self):
        with pytest.raises(EmptyCorrespondenceError):
            pck(IDENT, [[0, 0]], [[0, 0]], np.zeros((0, 2), dtype=int))


def _result_with(transform):
    return RegistrationResult(theta_ab=transform, theta_ba=transform)


def _sample(pts_a, pts_b, category=None):
    n = len(pts_a)
    return PairSample(source=pts_a, target=pts_b, category=category, correspondence=_full_corr(n))


class TestEvaluateBatch:
    def test_single_perfect_pair(self):
        pts = random_points(make_rng(2), 5)
        report = evaluate_batch([(_result_with(IDENT), _sample(pts, pts))])
        assert report.mean == 1.0
        assert report.per_pair == [1.0]

    def test_mean_of_two_pairs(self):
        pts = random_points(make_rng(3), 4)
        far = pts + np.array([0.5, 0.0])
        half = pts.copy()
        half[:2] += np.array([0.5, 0.0])
        report = evaluate_batch(
            [
                (_result_with(IDENT), _sample(pts, pts)),
                (_result_with(IDENT), _sample(pts, half)),
            ]
        )
        assert report.per_pair == [1.0, 0.5]
        assert report.mean == pytest.approx(0.75)
        assert far is not None

    def test_per_category_matches_recomputation(self):
        rng = make_rng(4)
        items = []
        for i in range(9):
            pts = random_points(rng, 6)
            shift = rng.uniform(0, 0.25)
            target = pts + np.array([shift, 0.0])
            items.append((_result_with(IDENT), _sample(pts, target, category=f"cat{i % 3}")))
        report = evaluate_batch(items)
        for label in ("cat0", "cat1", "cat2"):
            manual = [
                pck(IDENT, s.source, s.target, s.correspondence)
                for _, s in items
                if s.category == label
            ]
            assert report.per_category[label] == pytest.approx(np.mean(manual))
        assert report.mean == pytest.approx(np.mean(report.per_pair))

    def test_empty_batch_rejected(self):
        with pytest.raises(EmptyBatchError):
            evaluate_batch([])

    def test_missing_correspondence_rejected(self):
        pts = random_points(make_rng(5), 4)
        sample = PairSample(source=pts, target=pts, pair_id="p0")
        with pytest.raises(ValueError, match="p0"):
            evaluate_batch([(_result_with(IDENT), sample)])
