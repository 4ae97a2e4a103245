"""Independent instance generators and brute-force oracles.

Random instances are drawn from numpy's PCG64 generator, a documented
64-bit bit generator with explicit, serializable state
(``InstanceGenerator.state``), so acceptance inputs are reproducible
from the seeds recorded alongside the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .fiber import (
    FullRankMatrix,
    TangentMatrix,
    exp_map,
    geodesic_data,
    norm,
)


@dataclass
class InstanceGenerator:
    """Seeded source of full-rank matrices with controlled spectra.

    Every generated matrix is built as U diag(sigma) V^T with orthonormal
    factors, sigma drawn uniformly from [lo, hi], so all singular values
    (in particular sigma_min) land in [lo, hi] by construction.
    """

    seed: int
    n: int
    m: int
    lo: float = 0.5
    hi: float = 2.0
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if not (self.n > self.m >= 1):
            raise DomainError(f"need n > m >= 1, got ({self.n}, {self.m})")
        if not (0.0 < self.lo <= self.hi):
            raise DomainError(f"need 0 < lo <= hi, got [{self.lo}, {self.hi}]")
        self.rng = np.random.Generator(np.random.PCG64(self.seed))

    @property
    def state(self):
        """Serializable bit-generator state (PCG64)."""
        return self.rng.bit_generator.state

    @state.setter
    def state(self, value):
        self.rng.bit_generator.state = value


def _orthonormal_columns(rng, rows, cols):
    qmat, rmat = np.linalg.qr(rng.standard_normal((rows, cols)))
    return qmat * np.sign(np.where(np.diag(rmat) == 0, 1.0, np.diag(rmat)))


def random_full_rank(gen):
    """Draw a full-rank matrix with singular values in [gen.lo, gen.hi]."""
    u = _orthonormal_columns(gen.rng, gen.n, gen.m)
    v = _orthonormal_columns(gen.rng, gen.m, gen.m)
    sigma = gen.rng.uniform(gen.lo, gen.hi, size=gen.m)
    return FullRankMatrix(u @ np.diag(sigma) @ v.T)


def random_tangent(gen, base, fiber_norm=None):
    """Draw a Gaussian tangent at ``base``; optionally rescale its norm.

    ``fiber_norm`` rescales so that ||zeta||_base equals the given value.
    """
    z = gen.rng.standard_normal(base.entries.shape)
    if fiber_norm is not None:
        current = norm(base, z)
        if current == 0.0:
            raise DomainError("degenerate zero draw cannot be rescaled")
        z = z * (fiber_norm / current)
    return TangentMatrix(z, base)


def random_rotation(gen, size=None):
    """Draw a uniformly random special-orthogonal matrix."""
    size = gen.n if size is None else size
    qmat = _orthonormal_columns(gen.rng, size, size)
    if np.linalg.det(qmat) < 0.0:
        qmat = qmat.copy()
        qmat[:, -1] = -qmat[:, -1]
    return qmat


def random_spd(gen, size=None):
    """Draw an SPD matrix with eigenvalues in [lo^2, hi^2]."""
    size = gen.m if size is None else size
    qmat = random_rotation(gen, size)
    lam = gen.rng.uniform(gen.lo, gen.hi, size=size) ** 2
    return qmat @ np.diag(lam) @ qmat.T


def fd_speed_profile(A, zeta, steps=10, h=1e-5):
    """Central-difference speeds of the geodesic t -> exp(A, zeta, t).

    Samples ``steps`` times in [h, 0.9 * min(blowup, 2)], measuring
    ||exp(t+h) - exp(t-h)|| / (2h) in the fiber metric at exp(t).  For a
    true geodesic the profile is constant at ||zeta||_A.
    """
    data = geodesic_data(A, zeta)
    t_cap = 0.9 * min(data.blowup, 2.0)
    if t_cap <= h:
        raise DomainError("blow-up time too small for the requested stencil")
    ts = np.linspace(h, t_cap, steps)
    speeds = []
    for t in ts:
        mid = exp_map(A, data, t)
        ahead = exp_map(A, data, t + h).entries
        behind = exp_map(A, data, t - h).entries if t - h > 0.0 else exp_map(
            A, data, 0.0
        ).entries
        step = t + h - max(t - h, 0.0)
        vel = (ahead - behind) / step
        speeds.append(norm(mid, vel))
    return np.asarray(speeds)


# Nodes for the radial oracle: exactness for polynomial integrands up to
# degree 127 covers every column dimension of interest.
_RADIAL_NODES, _RADIAL_WEIGHTS = np.polynomial.legendre.leggauss(64)


def radial_integral_oracle(r0, r1, m):
    """Length of the pure-scaling ray between column scales r0 and r1.

    Along c -> c * A0 with det(A0^T A0) = 1 the fiber length element is
    sqrt(m) c^(m/2 - 1) dc; substituting w = sqrt(c) removes the endpoint
    singularity and makes the integrand the polynomial 2 sqrt(m) w^(m-1),
    which the fixed Gauss-Legendre rule integrates exactly.
    """
    if not (0.0 <= r0 <= r1):
        raise DomainError(f"need 0 <= r0 <= r1, got ({r0}, {r1})")
    if m < 1:
        raise DomainError(f"need m >= 1, got {m}")
    w0, w1 = np.sqrt(r0), np.sqrt(r1)
    mid = 0.5 * (w0 + w1)
    halfwidth = 0.5 * (w1 - w0)
    w = mid + halfwidth * _RADIAL_NODES
    vals = 2.0 * np.sqrt(m) * w ** (m - 1)
    return float(halfwidth * np.sum(_RADIAL_WEIGHTS * vals))
