"""Discretized matrix-valued one-form fields over weighted sample sets.

A sampled manifold is a pure quadrature abstraction: ordered sample
identifiers with positive weights.  Field distances decouple per sample,

    dist(alpha, beta)^2 = sum_k w_k * d(alpha_k, beta_k)^2,

with d the fiber distance (or the completion distance for canonicalized
fields), so no mesh connectivity is needed.  Pointwise geodesics
assemble into minimizing field paths, pointwise projections produce
metric fields, and pointwise rotations act as isometries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    GramMismatchError,
    InterpolationError,
    ManifoldMismatchError,
    RankError,
    ShapeError,
)
from .fiber import (
    RANK_TOL,
    FullRankMatrix,
    exp_map,
    is_full_rank,
    norm,
)
from .quotient import Rotation, SPDMatrix, align, sym_distance
from .solver import (
    DEFAULT_OPTIONS,
    CompletionPoint,
    ConvergenceError,
    completion_distance,
    distance,
    log_map,
)


@dataclass(frozen=True, eq=False)
class SampledManifold:
    """Ordered sample identifiers with positive quadrature weights."""

    point_ids: tuple
    weights: np.ndarray
    n: int
    m: int

    def __post_init__(self):
        ids = tuple(str(p) for p in self.point_ids)
        if len(set(ids)) != len(ids):
            raise ShapeError("sample identifiers must be unique")
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size != len(ids):
            raise ShapeError("need one weight per sample point")
        if not np.all(np.isfinite(w)) or np.any(w <= 0.0):
            raise ShapeError("weights must be positive and finite")
        if not (self.n > self.m >= 1):
            raise ShapeError(f"need n > m >= 1, got ({self.n}, {self.m})")
        w = np.ascontiguousarray(w)
        w.setflags(write=False)
        object.__setattr__(self, "point_ids", ids)
        object.__setattr__(self, "weights", w)

    @classmethod
    def torus_grid(cls, counts, n):
        """Uniform grid on a flat torus with equal weights summing to 1.

        ``counts`` gives the number of samples per period direction, so
        the value dimension is m = len(counts).
        """
        counts = tuple(int(c) for c in counts)
        if any(c < 1 for c in counts):
            raise ShapeError("grid counts must be >= 1")
        total = int(np.prod(counts))
        ids = []
        for flat in range(total):
            coords = np.unravel_index(flat, counts)
            ids.append("g" + "-".join(str(c) for c in coords))
        weights = np.full(total, 1.0 / total)
        return cls(tuple(ids), weights, n, len(counts))

    @property
    def size(self):
        return len(self.point_ids)

    def same_as(self, other):
        """Identical sample set: same ids in the same order, same weights."""
        return (
            self.n == other.n
            and self.m == other.m
            and self.point_ids == other.point_ids
            and np.array_equal(self.weights, other.weights)
        )


def _check_same_manifold(a, b):
    if a.manifold is not b.manifold and not a.manifold.same_as(b.manifold):
        raise ManifoldMismatchError(
            "fields live over different sampled manifolds; comparisons "
            "require identical sample ids, order and weights"
        )


def _stack_values(values, manifold, what):
    arr = np.asarray(values, dtype=float)
    expected = (manifold.size, manifold.n, manifold.m)
    if arr.shape != expected:
        raise ShapeError(f"{what} must have shape {expected}, got {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class OneFormField:
    """One full-rank n x m matrix per sample point."""

    manifold: SampledManifold
    values: np.ndarray
    rank_tol: float = RANK_TOL

    def __post_init__(self):
        arr = _stack_values(self.values, self.manifold, "values")
        if not np.all(np.isfinite(arr)):
            raise ShapeError("field values contain non-finite entries")
        for idx, v in enumerate(arr):
            if not is_full_rank(v, self.rank_tol):
                raise RankError(
                    f"field value at sample {idx} "
                    f"({self.manifold.point_ids[idx]}) is rank deficient"
                )
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def point(self, idx):
        return FullRankMatrix(self.values[idx], self.rank_tol)


@dataclass(frozen=True, eq=False)
class CompletionField:
    """Pointwise completed field: full-rank values or exact zeros."""

    manifold: SampledManifold
    values: np.ndarray
    rank_tol: float = RANK_TOL

    def __post_init__(self):
        arr = _stack_values(self.values, self.manifold, "values")
        if not np.all(np.isfinite(arr)):
            raise ShapeError("field values contain non-finite entries")
        for idx, v in enumerate(arr):
            if v.any() and not is_full_rank(v, self.rank_tol):
                raise RankError(
                    f"value at sample {idx} is neither full rank nor zero; "
                    "canonicalize the raw field first"
                )
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def point(self, idx):
        return CompletionPoint(self.values[idx], self.rank_tol)


@dataclass(frozen=True, eq=False)
class MetricField:
    """One SPD m x m matrix per sample point."""

    manifold: SampledManifold
    values: np.ndarray
    rank_tol: float = RANK_TOL

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        expected = (self.manifold.size, self.manifold.m, self.manifold.m)
        if arr.shape != expected:
            raise ShapeError(
                f"values must have shape {expected}, got {arr.shape}"
            )
        for v in arr:
            SPDMatrix(v, self.rank_tol)  # raises if not SPD
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def point(self, idx):
        return SPDMatrix(self.values[idx], self.rank_tol)


@dataclass(frozen=True, eq=False)
class RotationField:
    """One special-orthogonal n x n matrix per sample point."""

    manifold: SampledManifold
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        expected = (self.manifold.size, self.manifold.n, self.manifold.n)
        if arr.shape != expected:
            raise ShapeError(
                f"values must have shape {expected}, got {arr.shape}"
            )
        for v in arr:
            Rotation(v)  # raises if not in SO(n)
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def apply(self, field):
        """Pointwise rotation of a one-form field (an isometry)."""
        _check_same_manifold(self, field)
        rotated = np.einsum("kij,kjm->kim", self.values, field.values)
        return OneFormField(field.manifold, rotated, field.rank_tol)


def pointwise_distances(alpha, beta, opts=None):
    """Per-sample distances and the total solver iteration count.

    For OneFormField inputs the fiber distance is used; CompletionField
    inputs (or a mix) use the cone-point-aware completion distance.
    """
    opts = opts or DEFAULT_OPTIONS
    _check_same_manifold(alpha, beta)
    dists = np.empty(alpha.manifold.size)
    iters = 0
    if isinstance(alpha, CompletionField) or isinstance(beta, CompletionField):
        alpha = as_completion_field(alpha)
        beta = as_completion_field(beta)
        for k in range(alpha.manifold.size):
            dists[k] = completion_distance(alpha.point(k), beta.point(k), opts)
    else:
        for k in range(alpha.manifold.size):
            res = distance(alpha.values[k], beta.values[k], opts)
            dists[k] = res.value
            iters += res.iterations
    return dists, iters


def field_distance(alpha, beta, opts=None):
    """L2 field distance sqrt(sum_k w_k d(alpha_k, beta_k)^2).

    For OneFormField inputs d is the fiber distance; for CompletionField
    inputs it is the completion distance (cone-point aware).
    """
    dists, _ = pointwise_distances(alpha, beta, opts)
    w = alpha.manifold.weights
    return float(np.sqrt(np.sum(w * dists * dists)))


def field_log(alpha, beta, opts=None):
    """Pointwise geodesic velocities from alpha to beta, one per sample.

    Fails loudly (with the sample index) when a pointwise boundary-value
    solve does not converge, rather than substituting fallback values.
    """
    opts = opts or DEFAULT_OPTIONS
    _check_same_manifold(alpha, beta)
    out = np.empty_like(alpha.values)
    for k in range(alpha.manifold.size):
        try:
            out[k] = log_map(
                alpha.point(k), beta.values[k], opts.endpoint_tol,
                opts.max_iter,
            ).entries
        except (ConvergenceError, RankError) as err:
            raise InterpolationError(
                f"pointwise geodesic failed at sample {k} "
                f"({alpha.manifold.point_ids[k]}): {err}",
                index=k,
                point_id=alpha.manifold.point_ids[k],
            ) from err
    return out


def field_exp(alpha, velocities, t):
    """Pointwise geodesic flow of a velocity stack for time t."""
    out = np.empty_like(alpha.values)
    for k in range(alpha.manifold.size):
        out[k] = exp_map(alpha.point(k), velocities[k], t).entries
    return OneFormField(alpha.manifold, out, alpha.rank_tol)


def field_interpolate(alpha, beta, t, opts=None):
    """Pointwise geodesic interpolation between two one-form fields.

    Returns the field whose value at sample k is
    exp(alpha_k, log(alpha_k, beta_k), t).  Fails loudly (with the sample
    index) when a pointwise boundary-value solve does not converge, so
    reported field paths are genuinely geodesic at every sample.
    """
    _check_same_manifold(alpha, beta)
    if not 0.0 <= t <= 1.0:
        raise ShapeError(f"interpolation time must be in [0, 1], got {t}")
    return field_exp(alpha, field_log(alpha, beta, opts), t)


def metric_field(alpha):
    """Pointwise induced metrics alpha_k^T alpha_k."""
    values = np.einsum("kni,knj->kij", alpha.values, alpha.values)
    values = 0.5 * (values + np.swapaxes(values, -1, -2))
    return MetricField(alpha.manifold, values, alpha.rank_tol)


def ebin_field_distance(g, h, opts=None):
    """L2 distance between metric fields: pointwise quotient distances.

    Never exceeds field_distance of lifted one-form fields, since the
    projection is 1-Lipschitz on every fiber.
    """
    opts = opts or DEFAULT_OPTIONS
    _check_same_manifold(g, h)
    w = g.manifold.weights
    n = g.manifold.n
    total = 0.0
    for k in range(g.manifold.size):
        d = sym_distance(g.values[k], h.values[k], n, opts)
        total += w[k] * d * d
    return float(np.sqrt(total))


def field_align(alpha, beta, tol=1e-6):
    """Pointwise rotations carrying beta onto alpha.

    Requires the induced metric fields to agree within ``tol`` at every
    sample; mismatching samples are reported together in the raised
    error.
    """
    _check_same_manifold(alpha, beta)
    out = np.empty((alpha.manifold.size, alpha.manifold.n, alpha.manifold.n))
    bad = []
    for k in range(alpha.manifold.size):
        try:
            out[k] = align(alpha.point(k), beta.point(k), tol).entries
        except GramMismatchError:
            bad.append(k)
    if bad:
        ids = [alpha.manifold.point_ids[k] for k in bad]
        raise GramMismatchError(
            f"induced metrics mismatch at samples {ids}", indices=bad
        )
    return RotationField(alpha.manifold, out)


def canonicalize(raw_values, manifold, rank_tol=RANK_TOL):
    """Build a CompletionField: rank-deficient values become exact zeros."""
    arr = _stack_values(raw_values, manifold, "raw values")
    if not np.all(np.isfinite(arr)):
        raise ShapeError("raw field contains non-finite entries")
    out = arr.copy()
    for idx, v in enumerate(arr):
        if not is_full_rank(v, rank_tol):
            out[idx] = 0.0
    fld = CompletionField(manifold, out, rank_tol)
    if not np.isfinite(field_volume(fld)):
        raise ShapeError("field volume is not finite")
    return fld


def as_completion_field(field):
    """View a one-form field inside the completion (identity on values)."""
    if isinstance(field, CompletionField):
        return field
    return CompletionField(field.manifold, field.values, field.rank_tol)


def field_volume(field):
    """Total induced volume sum_k w_k sqrt(det(alpha_k^T alpha_k))."""
    grams = np.einsum("kni,knj->kij", field.values, field.values)
    dets = np.maximum(np.linalg.det(grams), 0.0)
    return float(np.sum(field.manifold.weights * np.sqrt(dets)))


def field_speed(field, velocities):
    """Field-level norm sqrt(sum_k w_k ||v_k||^2_{alpha_k}) of a variation."""
    w = field.manifold.weights
    total = 0.0
    for k in range(field.manifold.size):
        total += w[k] * norm(field.point(k), velocities[k]) ** 2
    return float(np.sqrt(total))
