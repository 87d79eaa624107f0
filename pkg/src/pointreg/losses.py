"""Alignment losses over unordered keypoint sets, with analytic gradients.

Four loss families are available, each in a forward, backward, or symmetric
direction:

    nn       mean distance from each projected source point to its nearest
             target point (ICP-style);
    cd       nn plus, for each target, the distance to its nearest projected
             source point (Chamfer);
    nn-cyc   nn plus a cyclic-consistency term: points mapped forward and
             then backward must return to where they started;
    cd-cyc   cd plus the same cyclic term.

The backward direction exchanges the roles of the two sets and transforms;
the symmetric direction is the sum of both. Nearest-neighbor index functions
are piecewise constant, so gradients hold the assignment fixed per
evaluation (the standard ICP resolution); every entry point accepts frozen
assignments so finite-difference checks can differentiate the identical
function.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EmptyCorrespondenceError
from .geometry import Transform, as_point_set

LOSS_FAMILIES = ("nn", "cd", "nn-cyc", "cd-cyc")
DIRECTIONS = ("forward", "backward", "symmetric")


@dataclass(frozen=True)
class LossSpec:
    """Which loss to evaluate: family in LOSS_FAMILIES, direction in DIRECTIONS."""

    family: str = "nn-cyc"
    direction: str = "symmetric"

    def __post_init__(self):
        if self.family not in LOSS_FAMILIES:
            raise ValueError(f"unknown loss family {self.family!r}; expected one of {LOSS_FAMILIES}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"unknown direction {self.direction!r}; expected one of {DIRECTIONS}")

    @property
    def cyclic(self) -> bool:
        return self.family.endswith("-cyc")


@dataclass
class Assignment:
    """Nearest-neighbor assignment: for each query, index of and distance to
    its closest reference point."""

    indices: np.ndarray
    distances: np.ndarray


@dataclass
class LossValue:
    """Scalar loss plus gradients w.r.t. the two transform parameter vectors.

    A gradient is None when the corresponding transform plays no role in the
    evaluated expression.
    """

    value: float
    grad_ab: Optional[np.ndarray] = None
    grad_ba: Optional[np.ndarray] = None


@dataclass
class LossAssignments:
    """Frozen nearest-neighbor index vectors, one per loss term that uses one.

    fwd_nn: for each projected source point, index into the target set.
    fwd_cd: for each target point, index into the projected source set.
    bwd_nn: for each projected target point, index into the source set.
    bwd_cd: for each source point, index into the projected target set.
    """

    fwd_nn: Optional[np.ndarray] = None
    fwd_cd: Optional[np.ndarray] = None
    bwd_nn: Optional[np.ndarray] = None
    bwd_cd: Optional[np.ndarray] = None


def _distance_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.einsum("mni,mni->mn", diff, diff))


def nn_assign(queries, references) -> Assignment:
    """Exact brute-force nearest neighbors, O(M*N); ties go to the lowest index."""
    queries = as_point_set(queries)
    references = as_point_set(references)
    dist = _distance_matrix(queries, references)
    indices = np.argmin(dist, axis=1)
    return Assignment(indices, dist[np.arange(len(queries)), indices])


def _unit_residuals(residuals: np.ndarray):
    """Distances and unit residual vectors; zero rows where the distance is 0
    (subgradient convention at the norm's kink)."""
    d = np.sqrt(np.einsum("ni,ni->n", residuals, residuals))
    units = np.zeros_like(residuals)
    nz = d > 0.0
    units[nz] = residuals[nz] / d[nz, None]
    return d, units


def _points_to_refs(warped: np.ndarray, refs: np.ndarray, idx=None):
    """Mean distance from each warped point to refs[idx] (NN when idx is None).

    Returns (value, d(value)/d(warped), idx used).
    """
    if idx is None:
        idx = np.argmin(_distance_matrix(warped, refs), axis=1)
    d, units = _unit_residuals(warped - refs[idx])
    return float(d.mean()), units / len(warped), idx


def _refs_to_points(refs: np.ndarray, warped: np.ndarray, idx=None):
    """Mean distance from each reference to warped[idx] (NN when idx is None).

    The gradient w.r.t. warped accumulates on the selected rows.
    """
    if idx is None:
        idx = np.argmin(_distance_matrix(refs, warped), axis=1)
    d, units = _unit_residuals(warped[idx] - refs)
    grad = np.zeros_like(warped)
    np.add.at(grad, idx, units / len(refs))
    return float(d.mean()), grad, idx


def _chain_to_params(g_warped: np.ndarray, transform: Transform, pts: np.ndarray) -> np.ndarray:
    return np.einsum("ni,nik->k", g_warped, transform.param_jacobian(pts))


def _cycle_term(t_outer: Transform, t_inner: Transform, pts: np.ndarray):
    """Mean re-projection error ||t_outer(t_inner(p)) - p|| and its gradients
    w.r.t. the outer and inner parameter vectors (chain rule through both warps)."""
    q = t_inner.warp(pts)
    d, units = _unit_residuals(t_outer.warp(q) - pts)
    g = units / len(pts)
    grad_outer = np.einsum("ni,nik->k", g, t_outer.param_jacobian(q))
    chain = np.einsum("nij,njk->nik", t_outer.point_jacobian(q), t_inner.param_jacobian(pts))
    grad_inner = np.einsum("ni,nik->k", g, chain)
    return float(d.mean()), grad_outer, grad_inner


def loss_nn_forward(theta_ab: Transform, pa, pb, nn_idx=None) -> LossValue:
    """Mean distance from projected source points to their nearest targets."""
    pa, pb = as_point_set(pa), as_point_set(pb)
    warped = theta_ab.warp(pa)
    value, g, _ = _points_to_refs(warped, pb, nn_idx)
    return LossValue(value, grad_ab=_chain_to_params(g, theta_ab, pa))


def loss_cd_forward(theta_ab: Transform, pa, pb, nn_idx=None, cd_idx=None) -> LossValue:
    """Forward nn loss plus, per target point, the distance to its nearest
    projected source point."""
    pa, pb = as_point_set(pa), as_point_set(pb)
    warped = theta_ab.warp(pa)
    v1, g1, _ = _points_to_refs(warped, pb, nn_idx)
    v2, g2, _ = _refs_to_points(pb, warped, cd_idx)
    return LossValue(v1 + v2, grad_ab=_chain_to_params(g1 + g2, theta_ab, pa))


def loss_nn_cyc_forward(theta_ab: Transform, theta_ba: Transform, pa, pb, nn_idx=None) -> LossValue:
    """Forward nn loss plus the mean error of re-projecting source points back
    through the backward transform."""
    pa, pb = as_point_set(pa), as_point_set(pb)
    warped = theta_ab.warp(pa)
    v1, g1, _ = _points_to_refs(warped, pb, nn_idx)
    vc, grad_ba, grad_ab_cyc = _cycle_term(theta_ba, theta_ab, pa)
    grad_ab = _chain_to_params(g1, theta_ab, pa) + grad_ab_cyc
    return LossValue(v1 + vc, grad_ab=grad_ab, grad_ba=grad_ba)


def loss_cd_cyc_forward(
    theta_ab: Transform, theta_ba: Transform, pa, pb, nn_idx=None, cd_idx=None
) -> LossValue:
    """Forward cd loss plus the cyclic re-projection term."""
    pa, pb = as_point_set(pa), as_point_set(pb)
    warped = theta_ab.warp(pa)
    v1, g1, _ = _points_to_refs(warped, pb, nn_idx)
    v2, g2, _ = _refs_to_points(pb, warped, cd_idx)
    vc, grad_ba, grad_ab_cyc = _cycle_term(theta_ba, theta_ab, pa)
    grad_ab = _chain_to_params(g1 + g2, theta_ab, pa) + grad_ab_cyc
    return LossValue(v1 + v2 + vc, grad_ab=grad_ab, grad_ba=grad_ba)


def _swap_grads(lv: LossValue) -> LossValue:
    return LossValue(lv.value, grad_ab=lv.grad_ba, grad_ba=lv.grad_ab)


def loss_nn_backward(theta_ba: Transform, pa, pb, nn_idx=None) -> LossValue:
    """Mirror of the forward nn loss: target points projected into the source
    frame. Identical, term for term, to loss_nn_forward(theta_ba, pb, pa)."""
    return _swap_grads(loss_nn_forward(theta_ba, pb, pa, nn_idx))


def loss_cd_backward(theta_ba: Transform, pa, pb, nn_idx=None, cd_idx=None) -> LossValue:
    return _swap_grads(loss_cd_forward(theta_ba, pb, pa, nn_idx, cd_idx))


def loss_nn_cyc_backward(theta_ba: Transform, theta_ab: Transform, pa, pb, nn_idx=None) -> LossValue:
    """Backward nn loss plus re-projection of the target points through the
    forward transform."""
    return _swap_grads(loss_nn_cyc_forward(theta_ba, theta_ab, pb, pa, nn_idx))


def loss_cd_cyc_backward(
    theta_ba: Transform, theta_ab: Transform, pa, pb, nn_idx=None, cd_idx=None
) -> LossValue:
    return _swap_grads(loss_cd_cyc_forward(theta_ba, theta_ab, pb, pa, nn_idx, cd_idx))


def _forward_loss(family, theta_ab, theta_ba, pa, pb, asg: LossAssignments) -> LossValue:
    if family == "nn":
        return loss_nn_forward(theta_ab, pa, pb, asg.fwd_nn)
    if family == "cd":
        return loss_cd_forward(theta_ab, pa, pb, asg.fwd_nn, asg.fwd_cd)
    if family == "nn-cyc":
        return loss_nn_cyc_forward(theta_ab, theta_ba, pa, pb, asg.fwd_nn)
    return loss_cd_cyc_forward(theta_ab, theta_ba, pa, pb, asg.fwd_nn, asg.fwd_cd)


def _backward_loss(family, theta_ab, theta_ba, pa, pb, asg: LossAssignments) -> LossValue:
    if family == "nn":
        return loss_nn_backward(theta_ba, pa, pb, asg.bwd_nn)
    if family == "cd":
        return loss_cd_backward(theta_ba, pa, pb, asg.bwd_nn, asg.bwd_cd)
    if family == "nn-cyc":
        return loss_nn_cyc_backward(theta_ba, theta_ab, pa, pb, asg.bwd_nn)
    return loss_cd_cyc_backward(theta_ba, theta_ab, pa, pb, asg.bwd_nn, asg.bwd_cd)


def _add_optional(a: Optional[np.ndarray], b: Optional[np.ndarray]) -> Optional[np.ndarray]:
    if a is None:
        return None if b is None else b.copy()
    if b is None:
        return a.copy()
    return a + b


def loss_symmetric(spec: LossSpec, theta_ab, theta_ba, pa, pb, assignments=None) -> LossValue:
    """Sum of the forward and backward variants of spec.family; gradients
    accumulate over both."""
    asg = assignments if assignments is not None else LossAssignments()
    fwd = _forward_loss(spec.family, theta_ab, theta_ba, pa, pb, asg)
    bwd = _backward_loss(spec.family, theta_ab, theta_ba, pa, pb, asg)
    return LossValue(
        fwd.value + bwd.value,
        grad_ab=_add_optional(fwd.grad_ab, bwd.grad_ab),
        grad_ba=_add_optional(fwd.grad_ba, bwd.grad_ba),
    )


def _requires_theta_ba(spec: LossSpec) -> bool:
    return spec.cyclic or spec.direction in ("backward", "symmetric")


def _requires_theta_ab(spec: LossSpec) -> bool:
    return spec.cyclic or spec.direction in ("forward", "symmetric")


def evaluate_loss(
    spec: LossSpec,
    theta_ab: Optional[Transform],
    theta_ba: Optional[Transform],
    pa,
    pb,
    assignments: Optional[LossAssignments] = None,
) -> LossValue:
    """Evaluate any loss form; gradients are zero-filled for a transform that
    is supplied but unused, so the result always matches the parameter layout
    the optimizer concatenates."""
    if _requires_theta_ab(spec) and theta_ab is None:
        raise ValueError(f"{spec} requires theta_ab")
    if _requires_theta_ba(spec) and theta_ba is None:
        raise ValueError(f"{spec} requires theta_ba")
    asg = assignments if assignments is not None else LossAssignments()
    if spec.direction == "forward":
        lv = _forward_loss(spec.family, theta_ab, theta_ba, pa, pb, asg)
    elif spec.direction == "backward":
        lv = _backward_loss(spec.family, theta_ab, theta_ba, pa, pb, asg)
    else:
        lv = loss_symmetric(spec, theta_ab, theta_ba, pa, pb, asg)
    grad_ab = lv.grad_ab if lv.grad_ab is not None else _zeros_for(theta_ab)
    grad_ba = lv.grad_ba if lv.grad_ba is not None else _zeros_for(theta_ba)
    return LossValue(lv.value, grad_ab=grad_ab, grad_ba=grad_ba)


def _zeros_for(transform: Optional[Transform]) -> np.ndarray:
    return np.zeros(transform.n_params if transform is not None else 0)


def compute_assignments(
    spec: LossSpec,
    theta_ab: Optional[Transform],
    theta_ba: Optional[Transform],
    pa,
    pb,
) -> LossAssignments:
    """Nearest-neighbor index vectors for every term spec uses, computed at
    the given transforms. Feeding these back into evaluate_loss freezes the
    assignment (ICP-style alternation; finite-difference checks)."""
    pa, pb = as_point_set(pa), as_point_set(pb)
    asg = LossAssignments()
    chamfer = spec.family.startswith("cd")
    if spec.direction in ("forward", "symmetric"):
        warped = theta_ab.warp(pa)
        asg.fwd_nn = nn_assign(warped, pb).indices
        if chamfer:
            asg.fwd_cd = nn_assign(pb, warped).indices
    if spec.direction in ("backward", "symmetric"):
        warped = theta_ba.warp(pb)
        asg.bwd_nn = nn_assign(warped, pa).indices
        if chamfer:
            asg.bwd_cd = nn_assign(pa, warped).indices
    return asg


def as_correspondence(pairs, n_source: int, n_target: int) -> np.ndarray:
    """Validate a correspondence map: int array (k, 2) of (source, target)
    index pairs, at most one entry per source index."""
    arr = np.asarray(pairs, dtype=np.int64)
    if arr.size == 0:
        raise EmptyCorrespondenceError("correspondence map has no entries")
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"correspondence must have shape (k, 2), got {arr.shape}")
    if np.any(arr[:, 0] < 0) or np.any(arr[:, 0] >= n_source):
        raise ValueError("correspondence source index out of range")
    if np.any(arr[:, 1] < 0) or np.any(arr[:, 1] >= n_target):
        raise ValueError("correspondence target index out of range")
    if len(np.unique(arr[:, 0])) != len(arr):
        raise ValueError("correspondence must be injective on the source side")
    return arr


def loss_supervised(theta_ab: Transform, pa, pb, correspondence) -> LossValue:
    """Mean distance between projected source points and their ground-truth
    correspondents. Used as an oracle/metric only, never as a training signal."""
    pa, pb = as_point_set(pa), as_point_set(pb)
    corr = as_correspondence(correspondence, len(pa), len(pb))
    warped = theta_ab.warp(pa)
    d, units = _unit_residuals(warped[corr[:, 0]] - pb[corr[:, 1]])
    grad = np.zeros_like(warped)
    np.add.at(grad, corr[:, 0], units / len(corr))
    return LossValue(float(d.mean()), grad_ab=_chain_to_params(grad, theta_ab, pa))


def loss_grid(theta_hat: Transform, theta_true: Transform, grid) -> LossValue:
    """Mean distance between a grid warped by the estimated transform and the
    same grid warped by the reference transform."""
    grid = as_point_set(grid)
    d, units = _unit_residuals(theta_hat.warp(grid) - theta_true.warp(grid))
    return LossValue(float(d.mean()), grad_ab=_chain_to_params(units / len(grid), theta_hat, grid))


def cycle_residual(theta_ab: Transform, theta_ba: Transform, pts) -> float:
    """Mean ||theta_ba(theta_ab(p)) - p|| over pts (the cyclic term alone)."""
    pts = as_point_set(pts)
    d, _ = _unit_residuals(theta_ba.warp(theta_ab.warp(pts)) - pts)
    return float(d.mean())
