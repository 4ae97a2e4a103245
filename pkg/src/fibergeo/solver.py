"""Geodesic distance on the full-rank matrix fiber and its completion.

Two independent routes produce upper bounds on the distance between two
full-rank matrices: a shooting solver that inverts the closed-form
exponential map (damped Gauss-Newton on the endpoint residual), and a
piecewise-linear path shortener (coordinate descent on interior control
points).  A third route goes through the cone point of the metric
completion, where the whole singular stratum is identified to a single
point at distance (2/sqrt(m)) det(A^T A)^(1/4) from A.  ``distance``
reports the best of the three.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from .errors import ConvergenceError, DomainError, RankError, ShapeError
from .fiber import (
    RANK_TOL,
    PLPath,
    TangentMatrix,
    _as_array,
    _segment_quadrature,
    as_point,
    exp_map,
    is_full_rank,
    lower_bound,
    norm,
    volume_quarter,
)

METHOD_SHOOTING = "shooting"
METHOD_PL = "pl"
METHOD_SINGULAR = "through_singular"


@dataclass(frozen=True)
class SolverOptions:
    """Shared solver settings; one record is reused across a whole batch.

    ``restarts`` counts PL runs (the first starts from the straight
    chord, later ones from seeded perturbations); ``so_restarts`` counts
    seeded starting rotations for the quotient-distance minimization.
    """

    rank_tol: float = RANK_TOL
    endpoint_tol: float = 1e-10
    max_iter: int = 60
    pl_segments: int = 16
    pl_sweeps: int = 200
    restarts: int = 3
    so_restarts: int = 8
    seed: int = 0

    def with_updates(self, **kwargs):
        return replace(self, **kwargs)


DEFAULT_OPTIONS = SolverOptions()


@dataclass(frozen=True)
class DistanceResult:
    """Distance value plus the route that realized it.

    ``certificate`` is the winning tangent vector (shooting) or PL path,
    oriented from the first argument of ``distance``; ``lower`` is the
    det^(1/4) lower bound, which the value may undercut only by
    quadrature-level error.
    """

    value: float
    method: str
    certificate: Union[TangentMatrix, PLPath, None]
    lower: float
    iterations: int


def dist_to_singular(A):
    """Distance from A to the identified singular stratum (cone point).

    Equals (2/sqrt(m)) det(A^T A)^(1/4): the pure-scaling geodesic
    t -> (1 - t/2)^(2/m) A reaches the stratum in finite length and no
    admissible path does better than the det^(1/4) bound.
    """
    A = as_point(A)
    return 2.0 / np.sqrt(A.m) * volume_quarter(A)


def log_map(A, B, endpoint_tol=1e-10, max_iter=60, initial=None):
    """Invert the exponential map: find zeta with exp(A, zeta, 1) = B.

    Damped Gauss-Newton on the endpoint residual, initialized at the
    chord B - A (the chart is a vector space, so short geodesics are
    near-linear).  Raises ConvergenceError when the residual cannot be
    brought below ``endpoint_tol`` within ``max_iter`` iterations.
    """
    zeta, _ = _log_map_impl(A, B, endpoint_tol, max_iter, initial)
    return zeta


def _log_map_impl(A, B, endpoint_tol=1e-10, max_iter=60, initial=None):
    """log_map returning (tangent, iterations used)."""
    A = as_point(A)
    B = as_point(B)
    if A.entries.shape != B.entries.shape:
        raise ShapeError(
            f"shape mismatch: {A.entries.shape} vs {B.entries.shape}"
        )
    target = B.entries
    if np.array_equal(A.entries, target):
        return TangentMatrix(np.zeros_like(target), A), 0

    def residual(z):
        return exp_map(A, z, 1.0).entries - target

    zeta = np.array(initial if initial is not None else target - A.entries)
    res = None
    for _ in range(8):
        try:
            res = residual(zeta)
            break
        except (DomainError, RankError):
            zeta = 0.5 * zeta
    if res is None:
        raise ConvergenceError("no usable initial velocity for shooting")

    n, m = target.shape
    dim = n * m
    res_norm = float(np.linalg.norm(res))
    lam = 0.0
    history = []
    for it in range(max_iter):
        if res_norm <= endpoint_tol:
            return TangentMatrix(zeta, A), it
        # Near a true solution Gauss-Newton contracts quadratically, so
        # sustained slow progress means the target is unreachable.
        history.append(res_norm)
        if len(history) > 8 and res_norm > 0.7 * history[-9]:
            raise ConvergenceError(
                f"shooting stagnated at residual {res_norm:.3e}",
                iterations=it,
                residual=res_norm,
            )
        # Forward-difference Jacobian of the endpoint in the velocity.
        h = 1e-7 * max(1.0, float(np.linalg.norm(zeta)))
        jac = np.empty((dim, dim))
        for col in range(dim):
            dz = np.zeros(dim)
            dz[col] = h
            try:
                pert = residual(zeta + dz.reshape(n, m))
            except (DomainError, RankError):
                pert = residual(zeta - dz.reshape(n, m))
                pert = 2.0 * res - pert
            jac[:, col] = (pert - res).ravel() / h
        jtj = jac.T @ jac
        jtr = jac.T @ res.ravel()
        mu = float(np.trace(jtj)) / dim
        improved = False
        # Levenberg-Marquardt ladder: raise damping until a step helps.
        for _ in range(12):
            try:
                step = np.linalg.solve(
                    jtj + lam * mu * np.eye(dim), -jtr
                ).reshape(n, m)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(jac, -res.ravel(), rcond=None)[0].reshape(
                    n, m
                )
            scale = 1.0
            while scale > 1e-6:
                trial = zeta + scale * step
                try:
                    trial_res = residual(trial)
                except (DomainError, RankError):
                    scale *= 0.5
                    continue
                trial_norm = float(np.linalg.norm(trial_res))
                if trial_norm < res_norm:
                    zeta, res, res_norm = trial, trial_res, trial_norm
                    improved = True
                    break
                scale *= 0.5
            if improved:
                lam = max(lam / 4.0, 0.0) if scale == 1.0 else lam
                break
            lam = 10.0 * lam if lam > 0.0 else 1e-4
        if not improved:
            raise ConvergenceError(
                f"shooting stalled at residual {res_norm:.3e}",
                iterations=it + 1,
                residual=res_norm,
            )
    if res_norm <= endpoint_tol:
        return TangentMatrix(zeta, A), max_iter
    raise ConvergenceError(
        f"shooting did not reach {endpoint_tol:.1e} within {max_iter} "
        f"iterations (residual {res_norm:.3e})",
        iterations=max_iter,
        residual=res_norm,
    )


def _color_sweep(controls, rank_tol, step_sizes, color, seg_lengths):
    """Simultaneous descent step on every interior point of one parity.

    Same-parity points touch disjoint segment pairs, so updating them
    together is an exact Gauss-Seidel half-sweep; all trial windows are
    evaluated in one batched quadrature call per backtracking round.
    Updates ``controls``, ``step_sizes`` and ``seg_lengths`` in place and
    returns the total finite length decrease.
    """
    from .fiber import _segments_eval

    k = controls.shape[0] - 1
    idx = np.arange(1 + color, k, 2)
    if idx.size == 0:
        return 0.0
    data = _segment_quadrature(controls, rank_tol, with_grad=True)
    seg_lengths[:] = data["lengths"]
    current = seg_lengths[idx - 1] + seg_lengths[idx]
    grads = data["grad_end"][idx - 1] + data["grad_start"][idx]
    # Infeasible windows have zero gradients; pull those points toward
    # the chord of their neighbours to restore feasibility.
    bad = ~np.isfinite(current)
    if np.any(bad):
        grads[bad] = controls[idx[bad]] - 0.5 * (
            controls[idx[bad] - 1] + controls[idx[bad] + 1]
        )
    gnorm2 = np.einsum("pnm,pnm->p", grads, grads)
    active = gnorm2 > 0.0
    steps = step_sizes[idx].copy()
    decrease = 0.0
    for _ in range(24):
        if not np.any(active):
            break
        act = np.where(active)[0]
        pts = idx[act]
        trials = controls[pts] - steps[act, None, None] * grads[act]
        starts = np.concatenate([controls[pts - 1], trials])
        ends = np.concatenate([trials, controls[pts + 1]])
        win = _segments_eval(starts, ends - starts, rank_tol)["lengths"]
        values = win[: act.size] + win[act.size :]
        armijo = values < current[act] - 1e-4 * steps[act] * gnorm2[act]
        rescue = ~np.isfinite(current[act]) & np.isfinite(values)
        accept = armijo | rescue
        for pos, j in enumerate(act):
            if accept[pos]:
                pt = idx[j]
                controls[pt] = trials[pos]
                if np.isfinite(current[j]):
                    decrease += current[j] - values[pos]
                seg_lengths[pt - 1 : pt + 1] = np.nan  # stale, refreshed next call
                step_sizes[pt] = min(steps[j] * 2.0, 1e3)
                active[j] = False
            else:
                steps[j] *= 0.5
                if steps[j] < 1e-14:
                    step_sizes[idx[j]] = max(step_sizes[idx[j]] * 0.5, 1e-12)
                    active[j] = False
    return decrease


def _redistribute(controls, rank_tol):
    """Move interior controls to equal metric arc-length along the polygon.

    Descent on the length lets control points bunch up (zero-length
    segments carry no gradient and deaden their neighbourhood), so the
    polygon is resampled on its own image.  The result is kept only when
    it is valid and not longer, preserving monotonicity.
    """
    data = _segment_quadrature(controls, rank_tol)
    seg = data["lengths"]
    if not np.all(np.isfinite(seg)):
        return controls
    total = float(np.sum(seg))
    if total <= 0.0:
        return controls
    k = controls.shape[0] - 1
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, total, k + 1)[1:-1]
    out = controls.copy()
    for j, s in enumerate(targets, start=1):
        i = min(int(np.searchsorted(cum, s, side="right")) - 1, k - 1)
        frac = 0.0 if seg[i] <= 0.0 else (s - cum[i]) / seg[i]
        out[j] = controls[i] + frac * (controls[i + 1] - controls[i])
    trial = _segment_quadrature(out, rank_tol)
    new_total = float(np.sum(trial["lengths"]))
    if np.isfinite(new_total) and new_total <= total and all(
        is_full_rank(c, rank_tol) for c in out[1:-1]
    ):
        return out
    return controls


def pl_shorten(path, iters=200, rank_tol=None):
    """Shorten a PL path by coordinate descent on interior control points.

    Endpoints stay fixed; every accepted step keeps all quadrature nodes
    full rank, so the energy sequence is non-increasing and the result is
    never worse than the input.  Interior points are swept in red-black
    order with per-point backtracking line searches, redistributing the
    controls to equal arc-length between sweeps.
    """
    rank_tol = path.rank_tol if rank_tol is None else rank_tol
    controls = np.array(path.controls)
    scale = max(float(np.max(np.abs(controls))), 1.0)
    step_sizes = np.full(controls.shape[0], scale, dtype=float)
    seg_lengths = np.full(controls.shape[0] - 1, np.nan)
    for sweep in range(iters):
        decrease = _color_sweep(controls, rank_tol, step_sizes, 0, seg_lengths)
        decrease += _color_sweep(controls, rank_tol, step_sizes, 1, seg_lengths)
        finite = seg_lengths[np.isfinite(seg_lengths)]
        length_scale = float(np.sum(finite)) if finite.size else 1.0
        # Coordinate descent converges linearly here, so a sweep decrease
        # below ~1e-6 of the length means either convergence or a bunched
        # stall; redistribution distinguishes the two.
        stalled = decrease < 1e-6 * max(length_scale, 1e-6)
        if stalled or sweep % 4 == 3:
            redistributed = _redistribute(controls, rank_tol)
            moved = float(np.abs(redistributed - controls).max())
            controls[:] = redistributed
            if moved > 1e-9 * scale:
                step_sizes[:] = np.minimum(step_sizes, scale)
            elif stalled:
                break
    return PLPath(controls, rank_tol)


def _perturbed_chord(a, b, segments, rng, noise, rank_tol):
    """Straight chord with Gaussian noise on interior controls.

    Retries with shrinking noise until every control is full rank;
    returns None if that fails (caller skips the restart).
    """
    ts = np.linspace(0.0, 1.0, segments + 1)
    base = a[None] + ts[:, None, None] * (b - a)[None]
    for _ in range(8):
        controls = base.copy()
        if noise > 0.0:
            controls[1:-1] += noise * rng.standard_normal(controls[1:-1].shape)
        if all(is_full_rank(c, rank_tol) for c in controls):
            return controls
        noise *= 0.5
    return None


def _pl_route(A, B, opts):
    """Best PL path length over seeded restarts with midpoint refinement.

    Returns (length, PLPath, sweeps) or (inf, None, sweeps) when no valid
    path was found.  Restart 0 uses the plain chord; later restarts
    perturb the interior controls with seeded noise.  Each restart runs a
    coarse-to-fine schedule, doubling the segment count up to
    ``opts.pl_segments``.
    """
    a, b = A.entries, B.entries
    chord = float(np.linalg.norm(b - a))
    levels = [opts.pl_segments]
    while levels[0] > 4:
        levels.insert(0, levels[0] // 2)
    sweeps_per_level = max(10, opts.pl_sweeps // len(levels))
    best = (np.inf, None)
    total_sweeps = 0
    for restart in range(max(opts.restarts, 1)):
        rng = np.random.default_rng([opts.seed, restart])
        noise = 0.0 if restart == 0 else 0.15 * restart * chord
        controls = _perturbed_chord(a, b, levels[0], rng, noise, opts.rank_tol)
        if controls is None:
            continue
        try:
            path = PLPath(controls, opts.rank_tol)
        except (RankError, ShapeError):
            continue
        for level, segs in enumerate(levels):
            if level > 0:
                path = path.refine()
            path = pl_shorten(path, sweeps_per_level, opts.rank_tol)
            total_sweeps += sweeps_per_level
        total = float(
            np.sum(_segment_quadrature(path.controls, opts.rank_tol)["lengths"])
        )
        if np.isfinite(total) and total < best[0]:
            best = (total, path)
    return best[0], best[1], total_sweeps


_SHOOT_BLENDS = (0.0, 0.3, 0.6, 0.9)


def _shoot_ladder(start, goal, lower, opts, state):
    """Run the blend ladder of initializers from one endpoint."""
    best_len, best_zeta, best_anchor, iters = state
    chord = goal.entries - start.entries
    base_norm = float(np.linalg.norm(start.entries))
    scale = float(np.linalg.norm(chord)) / max(base_norm, 1e-300)
    inward = -start.entries * scale
    for blend in _SHOOT_BLENDS:
        init = (1.0 - blend) * chord + blend * inward
        try:
            zeta, used = _log_map_impl(
                start, goal, opts.endpoint_tol, opts.max_iter, init
            )
        except ConvergenceError as err:
            iters += err.iterations
            continue
        iters += used
        length = norm(start, zeta)
        if length < best_len:
            best_len, best_zeta, best_anchor = length, zeta, start
        if best_len <= lower * (1.0 + 1e-9) + 1e-12:
            break
    return best_len, best_zeta, best_anchor, iters


def _shooting_route(first, second, lower, singular_len, opts):
    """Shortest geodesic found over a deterministic ladder of initializers.

    The plain chord lands in the basin of the nearest geodesic, which for
    near-cone pairs need not be the shortest one; blending the chord with
    the inward radial direction reaches the basins of geodesics that
    skirt the singular stratum, and pairs whose best result stays close
    to the cone route are re-shot from the other endpoint (lengths are
    direction-symmetric).  Stops early once the det^(1/4) bound is met,
    which is tight on pure-scaling pairs.

    Returns (length, tangent, anchor point of the tangent, iterations).
    """
    state = (np.inf, None, None, 0)
    state = _shoot_ladder(first, second, lower, opts, state)
    near_cone = state[0] > lower * (1.0 + 1e-9) and (
        not np.isfinite(state[0]) or state[0] > 0.8 * singular_len
    )
    if near_cone:
        state = _shoot_ladder(second, first, lower, opts, state)
    return state


def _canonical_order(A, B):
    """Deterministic argument ordering so distance(A, B) == distance(B, A)."""
    ka = tuple(A.entries.ravel())
    kb = tuple(B.entries.ravel())
    return (A, B, False) if ka <= kb else (B, A, True)


def _reverse_tangent(base_from, zeta, target, endpoint_tol, max_iter):
    """Tangent at ``target`` for the time-reversed geodesic."""
    from .fiber import exp_map_with_velocity

    _, vel = exp_map_with_velocity(base_from, zeta, 1.0)
    guess = -vel
    try:
        check = exp_map(target, guess, 1.0).entries
        if np.linalg.norm(check - base_from.entries) <= endpoint_tol:
            return TangentMatrix(guess, target)
    except (DomainError, RankError):
        pass
    return log_map(target, base_from, endpoint_tol, max_iter, initial=guess)


ALL_ROUTES = (METHOD_SHOOTING, METHOD_PL, METHOD_SINGULAR)


def distance(A, B, opts=None, routes=ALL_ROUTES):
    """Geodesic distance on the fiber, reported with its winning route.

    The value is min(shooting length if converged, best PL length,
    dist_to_singular(A) + dist_to_singular(B)); the last route accounts
    for shortcuts through the cone point of the completion, which
    admissible paths approximate arbitrarily well (without it the solver
    over-reports distances between nearly-orthogonal column spaces, where
    no connecting geodesic exists).  Arguments are processed in a
    canonical order, making the value exactly symmetric.  ``routes``
    restricts the candidate set, e.g. to cross-validate the shooting and
    PL solvers against each other.
    """
    opts = opts or DEFAULT_OPTIONS
    A = as_point(A, opts.rank_tol)
    B = as_point(B, opts.rank_tol)
    if A.entries.shape != B.entries.shape:
        raise ShapeError(
            f"shape mismatch: {A.entries.shape} vs {B.entries.shape}"
        )
    lower = lower_bound(A, B)
    if np.array_equal(A.entries, B.entries):
        zero = TangentMatrix(np.zeros_like(A.entries), A)
        return DistanceResult(0.0, METHOD_SHOOTING, zero, lower, 0)

    first, second, swapped = _canonical_order(A, B)

    cone_route = dist_to_singular(A) + dist_to_singular(B)

    shoot_len = np.inf
    shoot_zeta = None
    shoot_anchor = None
    shoot_iters = 0
    if METHOD_SHOOTING in routes:
        shoot_len, shoot_zeta, shoot_anchor, shoot_iters = _shooting_route(
            first, second, lower, cone_route, opts
        )

    if METHOD_PL in routes:
        pl_len, pl_path, pl_sweeps = _pl_route(first, second, opts)
    else:
        pl_len, pl_path, pl_sweeps = np.inf, None, 0
    singular_len = cone_route if METHOD_SINGULAR in routes else np.inf

    value, method = min(
        (shoot_len, METHOD_SHOOTING),
        (pl_len, METHOD_PL),
        (singular_len, METHOD_SINGULAR),
        key=lambda pair: (pair[0], _METHOD_RANK[pair[1]]),
    )
    certificate: Union[TangentMatrix, PLPath, None] = None
    iterations = 0
    if method == METHOD_SHOOTING:
        iterations = shoot_iters
        if shoot_anchor is A or shoot_zeta is None:
            certificate = shoot_zeta
        else:
            certificate = _reverse_tangent(
                shoot_anchor, shoot_zeta, A, opts.endpoint_tol, opts.max_iter
            )
    elif method == METHOD_PL:
        iterations = pl_sweeps
        controls = pl_path.controls[::-1] if swapped else pl_path.controls
        certificate = PLPath(controls, opts.rank_tol)
    return DistanceResult(float(value), method, certificate, lower, iterations)


_METHOD_RANK = {METHOD_SHOOTING: 0, METHOD_PL: 1, METHOD_SINGULAR: 2}


@dataclass(frozen=True, eq=False)
class CompletionPoint:
    """A point of the completed fiber: full rank, or the cone point 0.

    Construction canonicalizes: any rank-deficient matrix is stored as
    the exact zero matrix, implementing the identification of the whole
    singular stratum.
    """

    matrix: np.ndarray
    rank_tol: float = RANK_TOL

    def __post_init__(self):
        arr = _as_array(self.matrix)
        n, m = arr.shape
        if not (n > m >= 1):
            raise ShapeError(f"need n > m >= 1, got shape ({n}, {m})")
        if not is_full_rank(arr, self.rank_tol):
            arr = np.zeros_like(arr)
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "matrix", arr)

    @property
    def is_zero(self):
        return not self.matrix.any()


def completion_distance(P, Q, opts=None):
    """Metric on the completed fiber (full-rank matrices plus cone point)."""
    opts = opts or DEFAULT_OPTIONS
    if not isinstance(P, CompletionPoint):
        P = CompletionPoint(P, opts.rank_tol)
    if not isinstance(Q, CompletionPoint):
        Q = CompletionPoint(Q, opts.rank_tol)
    if P.matrix.shape != Q.matrix.shape:
        raise ShapeError(
            f"shape mismatch: {P.matrix.shape} vs {Q.matrix.shape}"
        )
    if P.is_zero and Q.is_zero:
        return 0.0
    if P.is_zero:
        return dist_to_singular(as_point(Q.matrix, opts.rank_tol))
    if Q.is_zero:
        return dist_to_singular(as_point(P.matrix, opts.rank_tol))
    return distance(P.matrix, Q.matrix, opts).value
