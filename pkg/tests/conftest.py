"""Shared fixtures and independent oracles for the test suite.

The oracles here are deliberately implemented from scratch (closed-form
cone geometry, scipy quadrature, dense resampling) so they do not share
code paths with the solvers they check.
"""

import numpy as np
import pytest
from scipy.integrate import quad

from fibergeo import FullRankMatrix


def euclid(x):
    return float(np.linalg.norm(x))


def cone_distance(a, b):
    """Exact fiber distance for column dimension m = 1.

    With A = r * unit vector, the metric |U|^2 / |A| becomes, after the
    substitution u = 2 sqrt(r), the cone metric du^2 + (u/2)^2 dtheta^2
    over the unit sphere scaled by 1/2.  Unrolling the cone, two points
    at radii u1, u2 subtending a central angle phi on the sphere sit at
    unrolled angle phi/2 <= pi/2 < pi, so the direct geodesic always
    exists and the law of cosines gives the distance.
    """
    a = a.entries if isinstance(a, FullRankMatrix) else np.asarray(a, float)
    b = b.entries if isinstance(b, FullRankMatrix) else np.asarray(b, float)
    ra, rb = euclid(a), euclid(b)
    u1, u2 = 2.0 * np.sqrt(ra), 2.0 * np.sqrt(rb)
    cosphi = float(np.clip(np.dot(a.ravel(), b.ravel()) / (ra * rb), -1.0, 1.0))
    half = 0.5 * np.arccos(cosphi)
    return float(np.sqrt(u1 * u1 + u2 * u2 - 2.0 * u1 * u2 * np.cos(half)))


def radial_quad(r0, r1, m):
    """Radial length by adaptive quadrature of sqrt(m) c^(m/2-1)."""
    val, _ = quad(lambda c: np.sqrt(m) * c ** (0.5 * m - 1.0), r0, r1)
    return float(val)


def s_by_quadrature(data, t):
    """Independent s(t): adaptive quadrature of 1/f from 0 to t."""

    def inv_f(sigma):
        half = 1.0 + 0.5 * data.tr_z * sigma
        return 1.0 / (0.25 * data.m * data.q * sigma * sigma + half * half)

    val, _ = quad(inv_f, 0.0, t, limit=200)
    return float(val)


def _polygon_points(controls, ts):
    k = controls.shape[0] - 1
    seg = np.minimum((ts * k).astype(int), k - 1)
    loc = ts * k - seg
    return controls[seg] + loc[:, None, None] * (controls[seg + 1] - controls[seg])


def reparametrized_energy(path, samples=4096):
    """Energy of the arc-length-proportional parametrization of a PL path.

    Densely samples the control polygon, accumulates fiber arc length,
    inverts it numerically, and integrates the finite-difference squared
    speed of the reparametrized curve with the trapezoid rule; fully
    independent of the library's Gauss quadrature.  Returns (energy,
    length).
    """
    controls = np.asarray(path.controls, float)
    k = controls.shape[0] - 1
    ts = np.linspace(0.0, 1.0, samples + 1)
    pts = _polygon_points(controls, ts)
    vel = k * (controls[np.minimum((ts * k).astype(int), k - 1) + 1]
               - controls[np.minimum((ts * k).astype(int), k - 1)])
    speeds = np.empty(samples + 1)
    for i in range(samples + 1):
        g = pts[i].T @ pts[i]
        x = np.linalg.solve(g, vel[i].T)
        speeds[i] = np.sqrt(
            np.einsum("ij,ji->", vel[i], x) * np.sqrt(np.linalg.det(g))
        )
    darc = 0.5 * (speeds[:-1] + speeds[1:]) * (1.0 / samples)
    arc = np.concatenate([[0.0], np.cumsum(darc)])
    total = arc[-1]
    # Uniform grid in the new time u; gamma(u) = polygon(t(u)) with t the
    # numerical inverse of the arc-length fraction.
    us = np.linspace(0.0, 1.0, samples + 1)
    t_of_u = np.interp(us * total, arc, ts)
    gamma = _polygon_points(controls, t_of_u)
    sq_speed = np.empty(samples + 1)
    du = 1.0 / samples
    for i in range(samples + 1):
        if i == 0:
            dg = (gamma[1] - gamma[0]) / du
        elif i == samples:
            dg = (gamma[-1] - gamma[-2]) / du
        else:
            dg = (gamma[i + 1] - gamma[i - 1]) / (2.0 * du)
        g = gamma[i].T @ gamma[i]
        x = np.linalg.solve(g, dg.T)
        sq_speed[i] = np.einsum("ij,ji->", dg, x) * np.sqrt(np.linalg.det(g))
    energy = float(np.trapezoid(sq_speed, us))
    return energy, float(total)


@pytest.fixture(scope="session")
def worked_point():
    """Base point of the fully worked geodesic example."""
    return FullRankMatrix([[1.0], [0.0]])
