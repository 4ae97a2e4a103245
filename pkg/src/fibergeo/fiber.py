"""Closed-form geometry on the space of full-rank n x m matrices.

The open set of full-rank real n x m matrices (n > m) carries the
Riemannian metric

    <U, V>_A = tr(U (A^T A)^{-1} V^T) * sqrt(det(A^T A)),

whose geodesics are known in closed form: writing Z = zeta A^+ for the
initial velocity zeta and splitting off the trace part Z0 = Z -
(tr Z / m) A A^+, the geodesic from A is

    c(t) = f(t)^(1/m) * exp(s(t) (Z0 - Z0^T)) * exp(s(t) Z0^T A A^+) * A,

with scalar coefficients

    f(t) = (m/4) tr(Z0 Z0^T) t^2 + (1 + tr(Z) t / 2)^2,
    s(t) = integral of 1/f from 0 to t.

This module provides the metric, the Moore-Penrose machinery, the
geodesic exponential map with its finite blow-up time, piecewise-linear
path lengths and energies, and the det^(1/4)-difference lower bound on
distances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import DomainError, RankError, ShapeError

#: A matrix counts as full rank iff sigma_min > RANK_TOL * max(sigma_max, 1).
RANK_TOL = 1e-9

# 16-node Gauss-Legendre rule on [0, 1]; the PL-segment integrands are
# smooth wherever the segment stays full rank.
_QUAD_NODES, _QUAD_WEIGHTS = np.polynomial.legendre.leggauss(16)
_QUAD_NODES = 0.5 * (_QUAD_NODES + 1.0)
_QUAD_WEIGHTS = 0.5 * _QUAD_WEIGHTS

_EPS = float(np.finfo(float).eps)


def _as_array(entries, name="matrix"):
    arr = np.asarray(entries, dtype=float)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{name} contains non-finite entries")
    return arr


def singular_gap(entries):
    """Return (sigma_min, sigma_max) of a matrix."""
    s = np.linalg.svd(entries, compute_uv=False)
    return float(s[-1]), float(s[0])


def is_full_rank(entries, rank_tol=RANK_TOL):
    """Scale-aware rank test: sigma_min > rank_tol * max(sigma_max, 1)."""
    smin, smax = singular_gap(entries)
    return smin > rank_tol * max(smax, 1.0)


def _freeze(arr):
    arr = np.ascontiguousarray(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FullRankMatrix:
    """A full-rank n x m matrix with n > m >= 1, immutable after checks."""

    entries: np.ndarray
    rank_tol: float = RANK_TOL

    def __post_init__(self):
        arr = _as_array(self.entries)
        n, m = arr.shape
        if not (n > m >= 1):
            raise ShapeError(f"need n > m >= 1, got shape ({n}, {m})")
        if not is_full_rank(arr, self.rank_tol):
            smin, smax = singular_gap(arr)
            raise RankError(
                f"matrix is rank deficient: sigma_min={smin:.3e}, "
                f"sigma_max={smax:.3e}, rank_tol={self.rank_tol:.1e}"
            )
        object.__setattr__(self, "entries", _freeze(arr))

    @property
    def n(self):
        return self.entries.shape[0]

    @property
    def m(self):
        return self.entries.shape[1]


@dataclass(frozen=True, eq=False)
class TangentMatrix:
    """A tangent vector at ``base``: any n x m matrix of matching shape."""

    entries: np.ndarray
    base: FullRankMatrix

    def __post_init__(self):
        arr = _as_array(self.entries, "tangent")
        if arr.shape != self.base.entries.shape:
            raise ShapeError(
                f"tangent shape {arr.shape} does not match base "
                f"{self.base.entries.shape}"
            )
        object.__setattr__(self, "entries", _freeze(arr))


def as_point(A, rank_tol=RANK_TOL):
    """Coerce an array or FullRankMatrix to a validated FullRankMatrix."""
    if isinstance(A, FullRankMatrix):
        return A
    return FullRankMatrix(A, rank_tol)


def _tangent_entries(zeta, base):
    """Extract tangent entries, checking base identity when wrapped."""
    if isinstance(zeta, TangentMatrix):
        if zeta.base is not base and not np.array_equal(
            zeta.base.entries, base.entries
        ):
            raise ShapeError("tangent vector is based at a different point")
        return zeta.entries
    arr = _as_array(zeta, "tangent")
    if arr.shape != base.entries.shape:
        raise ShapeError(
            f"tangent shape {arr.shape} does not match base {base.entries.shape}"
        )
    return arr


def gram(A):
    """A^T A of a point or array."""
    arr = A.entries if isinstance(A, FullRankMatrix) else _as_array(A)
    return arr.T @ arr


def moore_penrose(A):
    """Moore-Penrose inverse (A^T A)^{-1} A^T of a full-rank matrix."""
    A = as_point(A)
    return np.linalg.solve(gram(A), A.entries.T)


def inner_product(A, U, V):
    """Riemannian inner product tr(U (A^T A)^{-1} V^T) sqrt(det(A^T A))."""
    A = as_point(A)
    u = _tangent_entries(U, A)
    v = _tangent_entries(V, A)
    g = gram(A)
    X = np.linalg.solve(g, v.T)  # (m, n) = G^{-1} V^T
    return float(np.einsum("ij,ji->", u, X) * np.sqrt(np.linalg.det(g)))


def norm(A, U):
    """Riemannian norm of a tangent vector."""
    val = inner_product(A, U, U)
    return float(np.sqrt(max(val, 0.0)))


def volume_quarter(A):
    """det(A^T A)^(1/4) >= 0; accepts rank-deficient input."""
    arr = A.entries if isinstance(A, FullRankMatrix) else _as_array(A)
    det = np.linalg.det(arr.T @ arr)
    return float(max(det, 0.0) ** 0.25)


def lower_bound(A, B):
    """(2/sqrt(m)) |det(A^T A)^(1/4) - det(B^T B)^(1/4)|.

    This never exceeds the length of any path between A and B that stays
    full rank, and it is attained on pure-scaling rays.
    """
    a = A.entries if isinstance(A, FullRankMatrix) else _as_array(A)
    b = B.entries if isinstance(B, FullRankMatrix) else _as_array(B)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    m = a.shape[1]
    return 2.0 / np.sqrt(m) * abs(volume_quarter(a) - volume_quarter(b))


@dataclass(frozen=True, eq=False)
class GeodesicData:
    """Precomputed geodesic coefficients for one (point, velocity) pair.

    ``Z = zeta A^+``, ``Z0`` its traceless part relative to the column
    projector ``A A^+``, ``omega = Z0 - Z0^T``, ``q = tr(Z0 Z0^T)``, and
    ``p_small = (A^T A)^{-1} zeta^T A - (tr Z / m) I`` the m x m generator
    with ``exp(s Z0^T A A^+) A = A exp(s p_small)``.  ``blowup`` is the
    first positive time at which the geodesic leaves the full-rank set:
    finite (equal to 2/|tr Z|) exactly when q = 0 and tr Z < 0.
    """

    base: FullRankMatrix
    pinv: np.ndarray
    Z: np.ndarray
    Z0: np.ndarray
    tr_z: float
    omega: np.ndarray
    q: float
    blowup: float
    p_small: np.ndarray = field(repr=False, default=None)

    @property
    def n(self):
        return self.base.n

    @property
    def m(self):
        return self.base.m


def geodesic_data(A, zeta):
    """Assemble the closed-form geodesic coefficients for (A, zeta)."""
    A = as_point(A)
    z = _tangent_entries(zeta, A)
    m = A.m
    pinv = moore_penrose(A)
    Z = z @ pinv
    proj = A.entries @ pinv
    tr_z = float(np.trace(Z))
    Z0 = Z - (tr_z / m) * proj
    q = float(np.sum(Z0 * Z0))
    # Roundoff guard: Z0 entries inherit ~eps * |Z| noise, so q below the
    # squared noise floor is treated as exactly zero.
    z_scale = max(1.0, float(np.linalg.norm(Z)))
    if q <= (16.0 * _EPS * z_scale) ** 2:
        q = 0.0
        Z0 = np.zeros_like(Z0)
    omega = Z0 - Z0.T
    omega = 0.5 * (omega - omega.T)  # enforce exact skewness
    if q == 0.0 and tr_z < 0.0:
        blowup = 2.0 / abs(tr_z)
    else:
        blowup = np.inf
    p_small = np.linalg.solve(gram(A), z.T @ A.entries) - (tr_z / m) * np.eye(m)
    return GeodesicData(
        base=A,
        pinv=_freeze(pinv),
        Z=_freeze(Z),
        Z0=_freeze(Z0),
        tr_z=tr_z,
        omega=_freeze(omega),
        q=q,
        blowup=float(blowup),
        p_small=_freeze(p_small),
    )


def _check_time(data, t):
    if t < 0.0:
        raise DomainError(f"geodesic time must be >= 0, got {t}")
    if t >= data.blowup:
        raise DomainError(
            f"geodesic time {t} reaches the blow-up time {data.blowup}"
        )


def fs_coefficients(data, t):
    """Return (f(t), s(t)) for precomputed geodesic data.

    ``s`` is the continuous antiderivative of 1/f.  In the rotational
    branch (q > 0) the principal arctan expression jumps where its
    denominator 2 + tr(Z) t changes sign, so pi * 2/sqrt(m q) is added
    past the sign change to keep s continuous and increasing.
    """
    t = float(t)
    _check_time(data, t)
    half = 1.0 + 0.5 * data.tr_z * t
    f = 0.25 * data.m * data.q * t * t + half * half
    if data.q == 0.0:
        s = t / half
    else:
        r = np.sqrt(data.m * data.q)
        den = 2.0 + data.tr_z * t
        if den > 0.0:
            base = np.arctan(r * t / den)
        elif den < 0.0:
            base = np.arctan(r * t / den) + np.pi
        else:
            base = 0.5 * np.pi
        s = 2.0 * base / r
    return float(f), float(s)


def _fs_rates(data, t, f):
    """Time derivatives (f'(t), s'(t)); s' = 1/f by construction."""
    half = 1.0 + 0.5 * data.tr_z * t
    fdot = 0.5 * data.m * data.q * t + half * data.tr_z
    return fdot, 1.0 / f


def _exp_factors(data, t):
    f, s = fs_coefficients(data, t)
    rot = expm(s * data.omega)
    core = data.base.entries @ expm(s * data.p_small)
    point = f ** (1.0 / data.m) * rot @ core
    return f, s, rot, core, point


def exp_map(A, zeta, t):
    """Geodesic point at time t from A with initial velocity zeta.

    The curve has constant speed ||zeta||_A.  Raises DomainError at or
    beyond the blow-up time and RankError if the computed point fails the
    rank test (numerical breakdown near the singular stratum).
    """
    data = zeta if isinstance(zeta, GeodesicData) else geodesic_data(A, zeta)
    _, _, _, _, point = _exp_factors(data, float(t))
    if not is_full_rank(point, data.base.rank_tol):
        raise RankError(
            f"geodesic point at t={t} is numerically rank deficient"
        )
    return FullRankMatrix(point, data.base.rank_tol)


def exp_map_with_velocity(A, zeta, t):
    """Geodesic point and velocity (dc/dt) at time t.

    Returns (FullRankMatrix, ndarray).  Used by boundary-value solvers
    that need the endpoint velocity for first-variation gradients.
    """
    data = zeta if isinstance(zeta, GeodesicData) else geodesic_data(A, zeta)
    t = float(t)
    f, s, rot, core, point = _exp_factors(data, t)
    fdot, sdot = _fs_rates(data, t, f)
    proj = data.base.entries @ data.pinv
    vel = (
        (fdot / (data.m * f)) * point
        + sdot * data.omega @ point
        + sdot * f ** (1.0 / data.m) * rot @ (data.Z0.T @ proj) @ core
    )
    if not is_full_rank(point, data.base.rank_tol):
        raise RankError(
            f"geodesic point at t={t} is numerically rank deficient"
        )
    return FullRankMatrix(point, data.base.rank_tol), vel


@dataclass(frozen=True, eq=False)
class PLPath:
    """A piecewise-linear path of k >= 1 segments with full-rank controls.

    The first and last control matrices are the fixed endpoints; lengths
    and energies refer to the parametrization proportional to arc length,
    for which energy = length^2.
    """

    controls: np.ndarray
    rank_tol: float = RANK_TOL

    def __post_init__(self):
        arr = np.asarray(self.controls, dtype=float)
        if arr.ndim != 3:
            raise ShapeError(
                f"controls must be a (k+1, n, m) stack, got shape {arr.shape}"
            )
        k1, n, m = arr.shape
        if k1 < 2:
            raise ShapeError("a PL path needs at least one segment (k >= 1)")
        if not (n > m >= 1):
            raise ShapeError(f"need n > m >= 1, got control shape ({n}, {m})")
        if not np.all(np.isfinite(arr)):
            raise ShapeError("controls contain non-finite entries")
        for i, ctrl in enumerate(arr):
            if not is_full_rank(ctrl, self.rank_tol):
                raise RankError(f"control matrix {i} is rank deficient")
        object.__setattr__(self, "controls", _freeze(arr))

    @classmethod
    def from_endpoints(cls, A, B, segments, rank_tol=RANK_TOL):
        """Straight-line control polygon from A to B with ``segments`` pieces."""
        a = A.entries if isinstance(A, FullRankMatrix) else _as_array(A)
        b = B.entries if isinstance(B, FullRankMatrix) else _as_array(B)
        if a.shape != b.shape:
            raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
        ts = np.linspace(0.0, 1.0, segments + 1)
        controls = a[None] + ts[:, None, None] * (b - a)[None]
        return cls(controls, rank_tol)

    @property
    def k(self):
        return self.controls.shape[0] - 1

    @property
    def endpoints(self):
        return self.controls[0], self.controls[-1]

    def refine(self):
        """Insert segment midpoints, doubling the segment count."""
        c = self.controls
        mids = 0.5 * (c[:-1] + c[1:])
        out = np.empty((2 * self.k + 1,) + c.shape[1:])
        out[0::2] = c
        out[1::2] = mids
        return PLPath(out, self.rank_tol)


def _segments_eval(starts, diffs, rank_tol, with_grad=False):
    """Batched Gauss-Legendre lengths of linear segments start -> start+diff.

    Segments with a quadrature node below the rank tolerance get length
    +inf (the path leaves the full-rank set there) and zero gradients.
    Returns a dict with per-segment ``lengths`` and, when requested, the
    length gradients in the segment start and end matrices.
    """
    u = _QUAD_NODES
    w = _QUAD_WEIGHTS
    nseg, n, m = starts.shape
    c = starts[:, None, :, :] + u[None, :, None, None] * diffs[:, None, :, :]
    g = np.einsum("kqni,kqnj->kqij", c, c)
    det = np.maximum(np.linalg.det(g), 0.0)
    tr = np.einsum("kqnm,kqnm->kq", c, c)
    # Node is full rank iff lambda_min(g) > tol^2 * max(lambda_max, 1).
    # Fast sufficient pass via lambda_min >= det / tr^(m-1); only nodes
    # failing it get the exact eigenvalue check.
    thresh = rank_tol * rank_tol * np.maximum(tr, 1.0)
    node_ok = det > thresh * np.maximum(tr, _EPS) ** (m - 1)
    unsure = ~node_ok
    if np.any(unsure):
        lam = np.linalg.eigvalsh(g[unsure])
        node_ok[unsure] = lam[..., 0] > rank_tol * rank_tol * np.maximum(
            lam[..., -1], 1.0
        )
    seg_ok = np.all(node_ok, axis=1)
    lengths = np.full(nseg, np.inf)
    out = {"lengths": lengths, "valid": seg_ok}
    if with_grad:
        out["grad_start"] = np.zeros_like(starts)
        out["grad_end"] = np.zeros_like(starts)
    if not np.any(seg_ok):
        return out
    c = c[seg_ok]
    g = g[seg_ok]
    det = det[seg_ok]
    d_ok = diffs[seg_ok]
    q = u.size
    dt = np.broadcast_to(
        np.swapaxes(d_ok, -1, -2)[:, None], (c.shape[0], q, m, n)
    )
    X = np.linalg.solve(g, dt)  # G^{-1} D^T, (S, q, m, n)
    T = np.einsum("knm,kqmn->kq", d_ok, X)
    V = np.sqrt(det)
    phi = np.sqrt(np.maximum(T * V, 0.0))
    lengths[seg_ok] = phi @ w
    if not with_grad:
        return out
    # First variation of the segment length in its endpoints.
    cginv = np.swapaxes(np.linalg.solve(g, np.swapaxes(c, -1, -2)), -1, -2)
    xxt = np.einsum("kqan,kqbn->kqab", X, X)  # G^{-1} D^T D G^{-1}
    c_mh = np.einsum("kqna,kqab->kqnb", c, xxt)
    dginv = np.swapaxes(X, -1, -2)  # D G^{-1}, (S, q, n, m)
    safe_phi = np.where(phi > 0.0, phi, 1.0)
    pref = np.where(phi > 0.0, w[None, :] / (2.0 * safe_phi), 0.0)
    common = V[..., None, None] * (-2.0) * c_mh + (T * V)[..., None, None] * cginv
    u_a = (1.0 - u)[None, :, None, None]
    u_b = u[None, :, None, None]
    out["grad_start"][seg_ok] = np.einsum(
        "kq,kqnm->knm", pref, u_a * common - 2.0 * V[..., None, None] * dginv
    )
    out["grad_end"][seg_ok] = np.einsum(
        "kq,kqnm->knm", pref, u_b * common + 2.0 * V[..., None, None] * dginv
    )
    return out


def _segment_quadrature(controls, rank_tol, with_grad=False):
    """Segment data for a whole control polygon (see _segments_eval)."""
    return _segments_eval(
        controls[:-1], controls[1:] - controls[:-1], rank_tol, with_grad
    )


def segment_lengths(path):
    """Quadrature lengths of each segment of a PLPath."""
    data = _segment_quadrature(path.controls, path.rank_tol)
    if not np.all(data["valid"]):
        raise RankError(
            "a quadrature node falls below the rank tolerance: the path "
            "leaves the full-rank set"
        )
    return data["lengths"]


def path_length(path):
    """Length of a PLPath under the fiber metric (16-node rule/segment)."""
    return float(np.sum(segment_lengths(path)))


def path_energy(path):
    """Energy of the arc-length-proportional parametrization: length^2."""
    return path_length(path) ** 2
