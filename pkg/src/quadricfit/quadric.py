"""Dual-quadric ellipsoids and the three landmark parameterizations.

Canonical dual form
-------------------
A landmark is exchanged between parameterizations as a normalized 4x4
symmetric dual quadric ``q = T diag(s1^2, s2^2, s3^2, -1) T^T`` with ``T``
the homogeneous pose matrix, rescaled so ``q[3, 3] = -1``.  Under this
convention the ellipsoid center is ``c = -q[:3, 3]`` and the SPD shape
matrix (rotated, squared semi-axes) is ``P = q[:3, :3] + c c^T``.  Tangent
planes ``pi`` of the ellipsoid satisfy ``pi^T q pi = 0``.

Parameterizations
-----------------
* ``RtsState``   -- rotation + translation + semi-axis lengths (9 tangent dims)
* ``SpdState``   -- SPD(3) shape matrix + translation (9 tangent dims),
  free of the axis-relabeling ambiguity of ``RtsState``
* ``FullState``  -- raw 10 coefficients of the dual matrix; its retraction
  re-projects onto valid ellipsoids after every step

All states implement ``tangent_dim`` / ``retract`` / ``fd_scales`` / ``dual``
and therefore compose with :func:`quadricfit.manifold.product_retract`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import permutations

import numpy as np

from .manifold import (
    InvalidInputError,
    Pose,
    as_spd,
    pose_retract,
    so3_exp,
    spd_retract_normalized,
    vec6_to_sym,
)

# Floor applied to shape eigenvalues when re-projecting a raw coefficient
# vector onto valid ellipsoids (m^2).
SHAPE_EIG_FLOOR = 1e-6


class DegenerateLandmarkError(ValueError):
    """The quadric does not describe a nondegenerate ellipsoid."""


def normalize_dual(q: np.ndarray) -> np.ndarray:
    """Rescale a dual quadric to the canonical ``q[3, 3] = -1`` representative."""
    q = np.asarray(q, dtype=float)
    q = 0.5 * (q + q.T)
    corner = q[3, 3]
    if abs(corner) < 1e-12 * max(1.0, float(np.max(np.abs(q)))):
        raise DegenerateLandmarkError("dual quadric has vanishing homogeneous corner")
    return q / -corner


def dual_center(q: np.ndarray) -> np.ndarray:
    """Ellipsoid center of a normalized dual quadric."""
    return -q[:3, 3]


def dual_shape(q: np.ndarray) -> np.ndarray:
    """Shape block ``P = q[:3, :3] + c c^T`` of a normalized dual quadric.

    Returns the symmetric matrix without checking positive-definiteness.
    """
    c = dual_center(q)
    p = q[:3, :3] + np.outer(c, c)
    return 0.5 * (p + p.T)


def _pose_matrix(rotation: np.ndarray, translation: np.ndarray) -> np.ndarray:
    t = np.eye(4)
    t[:3, :3] = rotation
    t[:3, 3] = translation
    return t


def dual_from_rts(state: "RtsState") -> np.ndarray:
    """Compose the canonical dual quadric of a rotation/translation/scale state."""
    s = np.asarray(state.scale, dtype=float)
    if np.any(np.abs(s) < 1e-8):
        raise DegenerateLandmarkError("semi-axis length is (near) zero")
    t = _pose_matrix(state.rotation, state.translation)
    core = np.diag(np.concatenate([s * s, [-1.0]]))
    return normalize_dual(t @ core @ t.T)


def dual_from_spd(state: "SpdState") -> np.ndarray:
    """Compose the canonical dual quadric of an SPD-shape + translation state."""
    c = np.asarray(state.translation, dtype=float)
    q = np.empty((4, 4))
    q[:3, :3] = state.shape - np.outer(c, c)
    q[:3, 3] = -c
    q[3, :3] = -c
    q[3, 3] = -1.0
    return 0.5 * (q + q.T)


def spd_from_dual(q: np.ndarray) -> "SpdState":
    """Extract the SPD parameterization; exact inverse of :func:`dual_from_spd`."""
    p = dual_shape(q)
    try:
        p = as_spd(p)
    except InvalidInputError as exc:
        raise DegenerateLandmarkError(f"shape block is not SPD: {exc}") from exc
    return SpdState(p, dual_center(q))


def rts_from_dual(q: np.ndarray) -> "RtsState":
    """Decompose into rotation/translation/scale with ``s1 >= s2 >= s3``.

    The rotation is proper (``det = +1``); the third column is flipped when
    the eigenvector basis comes out left-handed.
    """
    p = dual_shape(q)
    w, u = np.linalg.eigh(p)
    if w[0] <= 1e-12:
        raise DegenerateLandmarkError("shape block is not positive definite")
    order = [2, 1, 0]  # eigh is ascending; semi-axes are reported descending
    w = w[order]
    r = u[:, order]
    if np.linalg.det(r) < 0.0:
        r = r.copy()
        r[:, 2] = -r[:, 2]
    return RtsState(r, dual_center(q), np.sqrt(w))


def primal_from_rts(state: "RtsState") -> np.ndarray:
    """Primal quadric matrix: surface points satisfy ``[x;1]^T Q [x;1] = 0``.

    Built with inverse-squared semi-axes so the unit sphere maps to
    ``diag(1, 1, 1, -1)``.  Used by the tangent-plane and point-membership
    oracles only.
    """
    s = np.asarray(state.scale, dtype=float)
    t_inv = np.linalg.inv(_pose_matrix(state.rotation, state.translation))
    core = np.diag(np.concatenate([1.0 / (s * s), [-1.0]]))
    return t_inv.T @ core @ t_inv


# ---------------------------------------------------------------------------
# Landmark states


@dataclass(frozen=True)
class RtsState:
    """Rotation (3x3), translation (m), semi-axis lengths (m).

    Scales are positive for a physically meaningful landmark; intermediate
    solver iterates may wander (the quadric only depends on ``scale**2``),
    and conversions from a dual quadric always return positive sorted scales.
    """

    rotation: np.ndarray
    translation: np.ndarray
    scale: np.ndarray

    tangent_dim = 9  # 3 rotation + 3 translation + 3 scale

    def retract(self, delta: np.ndarray) -> "RtsState":
        delta = np.asarray(delta, dtype=float)
        return RtsState(
            so3_exp(delta[:3]) @ self.rotation,
            self.translation + delta[3:6],
            self.scale + delta[6:9],
        )

    def fd_scales(self) -> np.ndarray:
        return np.concatenate(
            [np.ones(3), 1.0 + np.abs(self.translation), 1.0 + np.abs(self.scale)]
        )

    @cached_property
    def dual(self) -> np.ndarray:
        return dual_from_rts(self)


@dataclass(frozen=True)
class SpdState:
    """SPD(3) shape matrix (m^2) plus translation (m); singularity-free.

    The first six tangent coordinates are orthonormal under the
    affine-invariant metric at the current shape (``xi = P^{1/2} Z
    P^{1/2}`` with ``Z`` in vec6 coordinates), so a unit coordinate step
    always moves the shape by one metric unit -- roughly, one e-fold of an
    eigenvalue -- however stretched the current shape is. The last three
    coordinates translate the center.
    """

    shape: np.ndarray
    translation: np.ndarray

    tangent_dim = 9  # 6 shape (metric-orthonormal) + 3 translation

    def retract(self, delta: np.ndarray) -> "SpdState":
        delta = np.asarray(delta, dtype=float)
        return SpdState(
            spd_retract_normalized(self.shape, vec6_to_sym(delta[:6])),
            self.translation + delta[6:9],
        )

    def fd_scales(self) -> np.ndarray:
        return np.concatenate([np.ones(6), 1.0 + np.abs(self.translation)])

    @cached_property
    def dual(self) -> np.ndarray:
        return dual_from_spd(self)


@dataclass(frozen=True)
class FullState:
    """Raw dual-quadric coefficient vector ``(A..J)``.

    Coefficient order follows the symmetric matrix layout
    ``[[A, D, F, G], [D, B, E, H], [F, E, C, I], [G, H, I, J]]``.
    The retraction is plain vector addition; nothing at rest keeps the
    coefficients on the ellipsoid set. A solver using this
    parameterization re-projects accepted iterates through
    :func:`regularize_full` after each step.
    """

    v: np.ndarray

    tangent_dim = 10

    def retract(self, delta: np.ndarray) -> "FullState":
        return FullState(np.asarray(self.v, dtype=float) + delta)

    def fd_scales(self) -> np.ndarray:
        return 1.0 + np.abs(np.asarray(self.v, dtype=float))

    @cached_property
    def dual(self) -> np.ndarray:
        return normalize_dual(coeffs_to_sym4(self.v))


LandmarkState = RtsState | SpdState | FullState


def coeffs_to_sym4(v: np.ndarray) -> np.ndarray:
    """Assemble the symmetric 4x4 matrix from a 10-coefficient vector."""
    v = np.asarray(v, dtype=float)
    if v.shape != (10,):
        raise InvalidInputError(f"expected 10 coefficients, got shape {v.shape}")
    a, b, c, d, e, f, g, h, i, j = v
    return np.array(
        [
            [a, d, f, g],
            [d, b, e, h],
            [f, e, c, i],
            [g, h, i, j],
        ]
    )


def sym4_to_coeffs(m: np.ndarray) -> np.ndarray:
    """Inverse of :func:`coeffs_to_sym4`."""
    return np.array(
        [
            m[0, 0], m[1, 1], m[2, 2],
            m[0, 1], m[1, 2], m[0, 2],
            m[0, 3], m[1, 3], m[2, 3],
            m[3, 3],
        ]
    )


def full_from_dual(q: np.ndarray) -> FullState:
    return FullState(sym4_to_coeffs(normalize_dual(q)))


def regularize_full(state: FullState) -> FullState:
    """Project a raw coefficient vector back onto valid ellipsoids.

    Normalizes the projective scale, clamps the shape-block eigenvalues to
    at least ``SHAPE_EIG_FLOOR`` and re-serializes.  Idempotent on already
    valid ellipsoids.
    """
    v = np.asarray(state.v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("coefficients contain non-finite entries")
    if np.all(v == 0.0):
        raise DegenerateLandmarkError("all-zero quadric coefficients")
    q = normalize_dual(coeffs_to_sym4(v))
    c = dual_center(q)
    w, u = np.linalg.eigh(dual_shape(q))
    p = (u * np.maximum(w, SHAPE_EIG_FLOOR)) @ u.T
    return full_from_dual(dual_from_spd(SpdState(0.5 * (p + p.T), c)))


def rts_perturb(state: RtsState, xi: np.ndarray, ds: np.ndarray) -> RtsState:
    """Perturb pose by ``Exp(xi)`` on the left and semi-axes additively."""
    pose = pose_retract(Pose(state.rotation, state.translation), xi)
    return RtsState(pose.rotation, pose.translation, np.asarray(state.scale) + ds)


def proper_axis_permutations() -> list[np.ndarray]:
    """The 24 signed permutation matrices with determinant +1.

    These are the axis relabelings under which a rotation + scale pair
    describes the same ellipsoid (the parameterization's symmetry group).
    """
    mats = []
    for perm in permutations(range(3)):
        for signs in np.ndindex(2, 2, 2):
            m = np.zeros((3, 3))
            for col, row in enumerate(perm):
                m[row, col] = -1.0 if signs[col] else 1.0
            if np.linalg.det(m) > 0.5:
                mats.append(m)
    return mats


def permuted_rts(state: RtsState, perm: np.ndarray) -> RtsState:
    """Relabel the axes of an RTS state: same ellipsoid, different tuple."""
    return RtsState(
        state.rotation @ perm,
        state.translation,
        np.abs(perm).T @ np.asarray(state.scale, dtype=float),
    )
