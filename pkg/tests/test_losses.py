"""Loss values, properties, and analytic gradients for all loss forms."""

import numpy as np
import pytest

from pointreg.errors import EmptyCorrespondenceError, EmptySetError
from pointreg.geometry import AffineTransform, invert_affine
from pointreg.losses import (
    DIRECTIONS,
    LOSS_FAMILIES,
    LossSpec,
    compute_assignments,
    cycle_residual,
    evaluate_loss,
    loss_cd_forward,
    loss_grid,
    loss_nn_backward,
    loss_nn_cyc_forward,
    loss_nn_forward,
    loss_supervised,
    loss_symmetric,
    nn_assign,
)
from pointreg.optimizer import relative_error

from conftest import brute_force_nn, make_rng, random_affine, random_points, random_tps

IDENT = AffineTransform.identity()


class TestNnAssign:
    def test_coincident_sets(self):
        pts = random_points(make_rng(0), 6)
        asg = nn_assign(pts, pts)
        np.testing.assert_array_equal(asg.indices, np.arange(6))
        np.testing.assert_array_equal(asg.distances, np.zeros(6))

    def test_two_point_example(self):
        asg = nn_assign([[0, 0], [1, 1]], [[0.1, 0], [0.9, 1.1]])
        np.testing.assert_array_equal(asg.indices, [0, 1])
        np.testing.assert_allclose(asg.distances, [0.1, np.sqrt(0.02)], atol=1e-15)

    def test_single_reference(self):
        asg = nn_assign(random_points(make_rng(1), 5), [[0.5, 0.5]])
        np.testing.assert_array_equal(asg.indices, np.zeros(5, dtype=int))

    def test_tie_breaks_to_lowest_index(self):
        # references symmetric about the query: exactly equidistant
        asg = nn_assign([[0.0, 0.0]], [[0.0, 0.3], [0.0, -0.3]])
        assert asg.indices[0] == 0

    def test_matches_brute_force_oracle(self):
        rng = make_rng(2)
        for _ in range(100):
            q = random_points(rng)
            r = random_points(rng)
            asg = nn_assign(q, r)
            oracle_idx, oracle_dist = brute_force_nn(q, r)
            np.testing.assert_array_equal(asg.indices, oracle_idx)
            np.testing.assert_allclose(asg.distances, oracle_dist, atol=1e-12)

    def test_rejects_empty(self):
        with pytest.raises(EmptySetError):
            nn_assign(np.zeros((0, 2)), [[0, 0]])


class TestForwardLosses:
    def test_nn_zero_on_coincident(self):
        pts = random_points(make_rng(3), 7)
        assert loss_nn_forward(IDENT, pts, pts).value == 0.0

    def test_nn_three_four_five(self):
        assert loss_nn_forward(IDENT, [[0, 0]], [[0.3, 0.4]]).value == pytest.approx(0.5, abs=1e-15)

    def test_nn_mean_over_sources(self):
        lv = loss_nn_forward(IDENT, [[0, 0], [1, 0]], [[0.1, 0]])
        assert lv.value == pytest.approx(0.5, abs=1e-15)

    def test_cd_adds_target_term(self):
        lv = loss_cd_forward(IDENT, [[0, 0], [1, 0]], [[0.1, 0]])
        assert lv.value == pytest.approx(0.6, abs=1e-15)

    def test_cd_dominates_nn(self):
        rng = make_rng(4)
        for _ in range(50):
            t = random_affine(rng)
            pa, pb = random_points(rng), random_points(rng)
            assert loss_cd_forward(t, pa, pb).value >= loss_nn_forward(t, pa, pb).value

    def test_cyc_zero_for_identity_coincident(self):
        pts = random_points(make_rng(5), 6)
        assert loss_nn_cyc_forward(IDENT, IDENT, pts, pts).value == 0.0

    def test_cyc_exact_inverse_pair(self):
        t = AffineTransform.translation(0.2, 0.0)
        pa = np.array([[0.1, 0.4], [0.5, 0.2]])
        pb = t.warp(pa)
        lv = loss_nn_cyc_forward(t, invert_affine(t), pa, pb)
        assert lv.value < 1e-12

    def test_cyc_hand_composed_chain(self):
        t = AffineTransform.translation(0.2, 0.0)
        lv = loss_nn_cyc_forward(t, IDENT, [[0, 0]], [[0.2, 0]])
        assert lv.value == pytest.approx(0.2, abs=1e-15)


class TestBackwardAndSymmetric:
    def test_backward_zero_on_coincident(self):
        pts = random_points(make_rng(6), 5)
        for fam in LOSS_FAMILIES:
            lv = evaluate_loss(LossSpec(fam, "backward"), IDENT, IDENT, pts, pts)
            assert lv.value == 0.0

    def test_backward_nn_single_target(self):
        lv = loss_nn_backward(IDENT, [[0, 0], [1, 0]], [[0.1, 0]])
        assert lv.value == pytest.approx(0.1, abs=1e-15)

    def test_mirror_identity_bitwise(self):
        rng = make_rng(7)
        for _ in range(100):
            t = random_affine(rng)
            pa, pb = random_points(rng), random_points(rng)
            assert loss_nn_backward(t, pa, pb).value == loss_nn_forward(t, pb, pa).value

    def test_cd_swap_symmetry(self):
        rng = make_rng(8)
        t1, t2 = random_affine(rng), random_affine(rng)
        pa, pb = random_points(rng), random_points(rng)
        spec = LossSpec("cd", "symmetric")
        forward_view = loss_symmetric(spec, t1, t2, pa, pb).value
        swapped_view = loss_symmetric(spec, t2, t1, pb, pa).value
        assert forward_view == pytest.approx(swapped_view, rel=1e-12)

    def test_symmetric_equals_sum_of_parts(self):
        rng = make_rng(9)
        for fam in LOSS_FAMILIES:
            t1, t2 = random_affine(rng), random_tps(rng)
            pa, pb = random_points(rng), random_points(rng)
            sym = evaluate_loss(LossSpec(fam, "symmetric"), t1, t2, pa, pb).value
            fwd = evaluate_loss(LossSpec(fam, "forward"), t1, t2, pa, pb).value
            bwd = evaluate_loss(LossSpec(fam, "backward"), t1, t2, pa, pb).value
            assert sym == fwd + bwd

    def test_nonnegative_on_random_inputs(self):
        rng = make_rng(10)
        for _ in range(25):
            t1, t2 = random_affine(rng), random_affine(rng)
            pa, pb = random_points(rng), random_points(rng)
            for fam in LOSS_FAMILIES:
                for direction in DIRECTIONS:
                    lv = evaluate_loss(LossSpec(fam, direction), t1, t2, pa, pb)
                    assert lv.value >= 0.0

    def test_size_one_sets_permitted(self):
        for fam in LOSS_FAMILIES:
            for direction in DIRECTIONS:
                lv = evaluate_loss(LossSpec(fam, direction), IDENT, IDENT, [[0.2, 0.2]], [[0.7, 0.2]])
                assert lv.value >= 0.0


class TestSupervisedAndGrid:
    def test_supervised_zero_on_identity_correspondence(self):
        pts = random_points(make_rng(11), 6)
        corr = np.stack([np.arange(6), np.arange(6)], axis=1)
        assert loss_supervised(IDENT, pts, pts, corr).value == 0.0

    def test_supervised_three_four_five(self):
        lv = loss_supervised(IDENT, [[0, 0]], [[0.3, 0.4]], [[0, 0]])
        assert lv.value == pytest.approx(0.5, abs=1e-15)

    def test_nn_bounded_by_supervised_under_full_correspondence(self):
        rng = make_rng(12)
        for _ in range(100):
            t = random_affine(rng)
            pa = random_points(rng, 6)
            pb = random_points(rng, 6)
            corr = np.stack([np.arange(6), rng.permutation(6)], axis=1)
            assert loss_nn_forward(t, pa, pb).value <= loss_supervised(t, pa, pb, corr).value

    def test_supervised_rejects_empty(self):
        with pytest.raises(EmptyCorrespondenceError):
            loss_supervised(IDENT, [[0, 0]], [[1, 1]], np.zeros((0, 2), dtype=int))

    def test_grid_zero_for_equal_transforms(self):
        t = random_affine(make_rng(13))
        grid = random_points(make_rng(14), 25)
        assert loss_grid(t, t, grid).value == 0.0

    def test_grid_uniform_offset(self):
        grid = random_points(make_rng(15), 25)
        lv = loss_grid(AffineTransform.translation(0.1, 0), IDENT, grid)
        assert lv.value == pytest.approx(0.1, abs=1e-12)

    def test_grid_random_pair_direct_evaluation(self):
        rng = make_rng(16)
        t1, t2 = random_affine(rng), random_affine(rng)
        xs = np.linspace(0, 1, 5)
        grid = np.array([[x, y] for y in xs for x in xs])
        expected = np.linalg.norm(t1.warp(grid) - t2.warp(grid), axis=1).mean()
        assert loss_grid(t1, t2, grid).value == pytest.approx(expected, rel=1e-12)


class TestExactInverseCycle:
    def test_cycle_term_vanishes(self):
        rng = make_rng(17)
        for _ in range(100):
            t = random_affine(rng)
            pts = random_points(rng, 10)
            assert cycle_residual(t, invert_affine(t), pts) < 1e-10


def _fd_gradient(spec, theta_ab, theta_ba, pa, pb, asg, step=1e-5):
    n_ab = theta_ab.n_params if theta_ab is not None else 0
    vec = np.concatenate(
        [
            theta_ab.params_vector if theta_ab is not None else np.zeros(0),
            theta_ba.params_vector if theta_ba is not None else np.zeros(0),
        ]
    )

    def value(v):
        ta = theta_ab.with_params(v[:n_ab]) if theta_ab is not None else None
        tb = theta_ba.with_params(v[n_ab:]) if theta_ba is not None else None
        return evaluate_loss(spec, ta, tb, pa, pb, asg).value

    grad = np.zeros_like(vec)
    for i in range(len(vec)):
        bump = np.zeros_like(vec)
        bump[i] = step
        grad[i] = (value(vec + bump) - value(vec - bump)) / (2 * step)
    return grad


class TestGradients:
    @pytest.mark.parametrize("family", LOSS_FAMILIES)
    @pytest.mark.parametrize("direction", DIRECTIONS)
    def test_analytic_matches_finite_differences(self, family, direction):
        rng = make_rng(hash((family, direction)) % 2**32)
        spec = LossSpec(family, direction)
        worst = 0.0
        for trial in range(12):
            kind = "affine" if trial % 2 == 0 else "tps"
            theta_ab = random_affine(rng) if kind == "affine" else random_tps(rng)
            theta_ba = random_affine(rng) if kind == "affine" else random_tps(rng)
            pa, pb = random_points(rng), random_points(rng)
            asg = compute_assignments(spec, theta_ab, theta_ba, pa, pb)
            lv = evaluate_loss(spec, theta_ab, theta_ba, pa, pb, asg)
            analytic = np.concatenate([lv.grad_ab, lv.grad_ba])
            numeric = _fd_gradient(spec, theta_ab, theta_ba, pa, pb, asg)
            worst = max(worst, relative_error(analytic, numeric).max())
        assert worst < 1e-5

    def test_supervised_and_grid_gradients(self):
        rng = make_rng(18)
        t = random_affine(rng)
        pa, pb = random_points(rng, 6), random_points(rng, 6)
        corr = np.stack([np.arange(6), rng.permutation(6)], axis=1)
        lv = loss_supervised(t, pa, pb, corr)
        step = 1e-5
        fd = np.zeros(6)
        vec = t.params_vector
        for i in range(6):
            bump = np.zeros(6)
            bump[i] = step
            hi = loss_supervised(t.with_params(vec + bump), pa, pb, corr).value
            lo = loss_supervised(t.with_params(vec - bump), pa, pb, corr).value
            fd[i] = (hi - lo) / (2 * step)
        assert relative_error(lv.grad_ab, fd).max() < 1e-5

        grid = random_points(rng, 9)
        ref = random_affine(rng)
        lv = loss_grid(t, ref, grid)
        for i in range(6):
            bump = np.zeros(6)
            bump[i] = step
            hi = loss_grid(t.with_params(vec + bump), ref, grid).value
            lo = loss_grid(t.with_params(vec - bump), ref, grid).value
            fd[i] = (hi - lo) / (2 * step)
        assert relative_error(lv.grad_ab, fd).max() < 1e-5

    def test_frozen_assignment_is_respected(self):
        rng = make_rng(19)
        t = random_affine(rng)
        pa, pb = random_points(rng, 5), random_points(rng, 8)
        spec = LossSpec("nn", "forward")
        asg = compute_assignments(spec, t, None, pa, pb)
        forced = asg.fwd_nn.copy()
        forced[0] = (forced[0] + 1) % len(pb)  # deliberately non-nearest
        free = evaluate_loss(spec, t, None, pa, pb)
        frozen = evaluate_loss(
            spec, t, None, pa, pb, assignments=type(asg)(fwd_nn=forced)
        )
        assert frozen.value > free.value  # non-nearest choice costs more
