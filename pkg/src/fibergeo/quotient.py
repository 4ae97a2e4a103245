"""Quotient geometry: from full-rank matrices to SPD matrices.

The projection pi(A) = A^T A is a Riemannian submersion onto the
positive definite symmetric matrices carrying the scaled inner product

    <h, k>_g = (1/4) tr(g^{-1} h g^{-1} k) sqrt(det g),

and its fibers are exactly the orbits of left multiplication by SO(n)
(n > m).  Distances downstairs are computed by minimizing the fiber
distance over the rotation orbit of a polar lift; alignment recovers a
rotation carrying one fiber point to another whenever their projections
agree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import GramMismatchError, RankError, ShapeError
from .fiber import (
    RANK_TOL,
    FullRankMatrix,
    _as_array,
    as_point,
    exp_map_with_velocity,
    lower_bound,
    norm,
)
from .solver import (
    DEFAULT_OPTIONS,
    ConvergenceError,
    _log_map_impl,
    dist_to_singular,
    distance,
)

_SYM_TOL = 1e-12
_ORTHO_TOL = 1e-10


def _check_symmetric(arr, name="matrix", tol=_SYM_TOL):
    skew = np.abs(arr - arr.T).max()
    if skew > tol * max(1.0, np.abs(arr).max()):
        raise ShapeError(f"{name} is not symmetric (deviation {skew:.3e})")


@dataclass(frozen=True, eq=False)
class SPDMatrix:
    """A symmetric positive definite m x m matrix."""

    entries: np.ndarray
    rank_tol: float = RANK_TOL

    def __post_init__(self):
        arr = _as_array(self.entries)
        if arr.shape[0] != arr.shape[1]:
            raise ShapeError(f"expected a square matrix, got {arr.shape}")
        _check_symmetric(arr)
        arr = 0.5 * (arr + arr.T)
        lam = np.linalg.eigvalsh(arr)
        if lam[0] <= self.rank_tol * max(lam[-1], 1.0):
            raise RankError(
                f"matrix is not positive definite: eigenvalues in "
                f"[{lam[0]:.3e}, {lam[-1]:.3e}]"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def m(self):
        return self.entries.shape[0]


@dataclass(frozen=True, eq=False)
class Rotation:
    """An element of SO(n): orthogonal with determinant +1."""

    entries: np.ndarray

    def __post_init__(self):
        arr = _as_array(self.entries)
        n = arr.shape[0]
        if arr.shape != (n, n):
            raise ShapeError(f"expected a square matrix, got {arr.shape}")
        if np.abs(arr.T @ arr - np.eye(n)).max() > _ORTHO_TOL:
            raise ShapeError("matrix is not orthogonal within 1e-10")
        if abs(np.linalg.det(arr) - 1.0) > _ORTHO_TOL:
            raise ShapeError("matrix has determinant != +1 within 1e-10")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def n(self):
        return self.entries.shape[0]


def _as_spd(g):
    return g if isinstance(g, SPDMatrix) else SPDMatrix(g)


def ebin_inner(g, h, k):
    """Scaled inner product (1/4) tr(g^{-1} h g^{-1} k) sqrt(det g)."""
    g = _as_spd(g)
    h = _as_array(h, "h")
    k = _as_array(k, "k")
    if h.shape != g.entries.shape or k.shape != g.entries.shape:
        raise ShapeError("tangent shapes must match the base point")
    _check_symmetric(h, "h")
    _check_symmetric(k, "k")
    gh = np.linalg.solve(g.entries, h)
    gk = np.linalg.solve(g.entries, k)
    return float(
        0.25 * np.trace(gh @ gk) * np.sqrt(np.linalg.det(g.entries))
    )


def project(A):
    """Submersion to the metric side: A -> A^T A (SPD iff A full rank)."""
    arr = A.entries if isinstance(A, FullRankMatrix) else _as_array(A)
    g = arr.T @ arr
    return 0.5 * (g + g.T)


def sqrtm_spd(g):
    """Symmetric square root by eigendecomposition, clamping tiny drift."""
    arr = g.entries if isinstance(g, SPDMatrix) else np.asarray(g, dtype=float)
    lam, vec = np.linalg.eigh(arr)
    lam = np.where(lam > 0.0, lam, np.where(lam > -1e-12, 0.0, np.nan))
    if np.any(np.isnan(lam)):
        raise RankError("matrix has a significantly negative eigenvalue")
    return (vec * np.sqrt(lam)) @ vec.T


def polar_lift(g, n):
    """Horizontal representative of g upstairs: sqrt(g) over a zero block."""
    g = _as_spd(g)
    m = g.m
    if not n > m:
        raise ShapeError(f"ambient rows n={n} must exceed m={m}")
    root = sqrtm_spd(g)
    lift = np.zeros((n, m))
    lift[:m] = root
    return FullRankMatrix(lift, g.rank_tol)


def _complete_orthonormal(cols):
    """Extend orthonormal columns to a positively-oriented full basis.

    Gram-Schmidt over the canonical basis vectors in index order, skipping
    near-dependent candidates (threshold 1e-8); the last appended column's
    sign is flipped if needed to reach determinant +1.
    """
    n, m = cols.shape
    basis = np.empty((n, n))
    basis[:, :m] = cols
    have = m
    for j in range(n):
        if have == n:
            break
        cand = np.zeros(n)
        cand[j] = 1.0
        cand -= basis[:, :have] @ (basis[:, :have].T @ cand)
        length = np.linalg.norm(cand)
        if length > 1e-8:
            basis[:, have] = cand / length
            have += 1
    if have < n:
        raise RankError("could not complete an orthonormal basis")
    if np.linalg.det(basis) < 0.0:
        basis[:, -1] = -basis[:, -1]
    return basis


def align(A, B, tol=1e-6):
    """Rotation O in SO(n) with A = O B, given matching induced metrics.

    Requires ||A^T A - B^T B||_F <= tol * ||A^T A||_F.  The normalized
    column frames A (A^T A)^{-1/2} and B (B^T B)^{-1/2} are each completed
    to positively-oriented orthonormal bases, and O maps the B-frame onto
    the A-frame.  When n - m >= 2 the completion is not unique, so only
    A = O B is guaranteed, not any particular O.
    """
    A = as_point(A)
    B = as_point(B)
    if A.entries.shape != B.entries.shape:
        raise ShapeError(
            f"shape mismatch: {A.entries.shape} vs {B.entries.shape}"
        )
    ga, gb = project(A), project(B)
    gap = float(np.linalg.norm(ga - gb))
    if gap > tol * max(float(np.linalg.norm(ga)), 1e-300):
        raise GramMismatchError(
            f"induced metrics differ by {gap:.3e} (tolerance "
            f"{tol * np.linalg.norm(ga):.3e}); the points lie on "
            "different fibers"
        )
    lam_a, vec_a = np.linalg.eigh(ga)
    lam_b, vec_b = np.linalg.eigh(gb)
    inv_root_a = (vec_a / np.sqrt(lam_a)) @ vec_a.T
    inv_root_b = (vec_b / np.sqrt(lam_b)) @ vec_b.T
    frame_a = _complete_orthonormal(A.entries @ inv_root_a)
    frame_b = _complete_orthonormal(B.entries @ inv_root_b)
    return Rotation(frame_a @ frame_b.T)


def _skew_basis_norm(mat):
    return float(np.sqrt(np.sum(mat * mat)))


def _shoot_length(Pg, target_entries, warm, opts):
    """Geodesic length to a rotated lift, warm-started; None on failure."""
    try:
        target = FullRankMatrix(target_entries, opts.rank_tol)
    except RankError:
        return None
    initial = warm if warm is not None else target.entries - Pg.entries
    try:
        zeta, _ = _log_map_impl(
            Pg, target, opts.endpoint_tol, opts.max_iter, initial
        )
    except ConvergenceError:
        return None
    return zeta


def _orbit_descent(Pg, Ph, O0, opts, floor=0.0, max_steps=40):
    """Minimize the fiber distance over O in SO(n) by gradient descent.

    The descent direction comes from the first variation of the geodesic
    length in its endpoint: for an endpoint perturbation W B (W skew) the
    derivative is <v_end, W B>_B / length, so the gradient over skew W is
    the skew part of the pairing matrix.  Each evaluation warm-starts the
    boundary-value solve from the previous velocity.  ``floor`` is a known
    lower bound; reaching it ends the descent.
    """
    O = O0
    zeta = _shoot_length(Pg, O @ Ph.entries, None, opts)
    if zeta is None:
        return np.inf, O
    value = norm(Pg, zeta)
    step = 0.5
    for _ in range(max_steps):
        if value <= floor * (1.0 + 1e-9) + 1e-12:
            break
        endpoint = FullRankMatrix(O @ Ph.entries, opts.rank_tol)
        _, vel = exp_map_with_velocity(Pg, zeta, 1.0)
        g_end = endpoint.entries.T @ endpoint.entries
        pairing = (
            vel
            @ np.linalg.solve(g_end, endpoint.entries.T)
            * np.sqrt(np.linalg.det(g_end))
        )
        grad = 0.5 * (pairing - pairing.T) / max(value, 1e-300)
        gnorm = _skew_basis_norm(grad)
        if gnorm <= 1e-9 * (1.0 + value):
            break
        improved = False
        while step > 1e-12:
            O_trial = expm(-step * grad) @ O
            zeta_trial = _shoot_length(Pg, O_trial @ Ph.entries, zeta.entries, opts)
            if zeta_trial is not None:
                value_trial = norm(Pg, zeta_trial)
                if value_trial < value - 1e-6 * step * gnorm * gnorm:
                    O, zeta, value = O_trial, zeta_trial, value_trial
                    step = min(step * 2.0, 4.0)
                    improved = True
                    break
            step *= 0.5
        if not improved:
            break
    return value, O


def sym_distance(g, h, n, opts=None):
    """Quotient distance between SPD matrices via their lifted orbits.

    Minimizes distance(polar_lift(g), O polar_lift(h)) over O in SO(n)
    with seeded restarts (identity first, then random skew generators of
    norm <= pi), and never exceeds the cone route through the singular
    class.  The projection is 1-Lipschitz: sym_distance(pi(A), pi(B)) <=
    distance(A, B) up to solver tolerance.
    """
    opts = opts or DEFAULT_OPTIONS
    g = _as_spd(g)
    h = _as_spd(h)
    if g.m != h.m:
        raise ShapeError(f"dimension mismatch: {g.m} vs {h.m}")
    if np.array_equal(g.entries, h.entries):
        return 0.0
    Pg = polar_lift(g, n)
    Ph = polar_lift(h, n)
    cone = dist_to_singular(Pg) + dist_to_singular(Ph)
    # det^(1/4) bound; rotation-invariant, hence valid for the quotient,
    # and tight once the descent has aligned the orbits radially.
    floor = lower_bound(Pg, Ph)
    # The identity-rotation fiber distance (all routes) bounds the result.
    best = distance(Pg, Ph, opts).value
    rng = np.random.default_rng([opts.seed, 0x5F])
    for restart in range(max(opts.so_restarts, 1)):
        if best <= floor * (1.0 + 1e-9) + 1e-12:
            break
        if restart == 0:
            O0 = np.eye(n)
        else:
            skew = rng.standard_normal((n, n))
            skew = 0.5 * (skew - skew.T)
            amount = rng.uniform(0.0, np.pi)
            O0 = expm(skew * (amount / max(_skew_basis_norm(skew), 1e-300)))
        value, _ = _orbit_descent(Pg, Ph, O0, opts, floor)
        best = min(best, value)
    return float(min(best, cone))
