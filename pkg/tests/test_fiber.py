"""Unit tests for the closed-form fiber geometry."""

import numpy as np
import pytest
from conftest import cone_distance, radial_quad, reparametrized_energy, s_by_quadrature

from fibergeo import (
    DomainError,
    FullRankMatrix,
    InstanceGenerator,
    PLPath,
    RankError,
    ShapeError,
    TangentMatrix,
    exp_map,
    exp_map_with_velocity,
    fs_coefficients,
    geodesic_data,
    inner_product,
    lower_bound,
    moore_penrose,
    norm,
    path_energy,
    path_length,
    random_full_rank,
    random_tangent,
    segment_lengths,
    volume_quarter,
)

RADIAL_1_TO_2 = 2.0 * (np.sqrt(2.0) - 1.0)  # quad of r^(-1/2) over [1, 2]


class TestTypes:
    def test_rejects_square(self):
        with pytest.raises(ShapeError):
            FullRankMatrix(np.eye(2))

    def test_rejects_wide(self):
        with pytest.raises(ShapeError):
            FullRankMatrix(np.ones((1, 2)))

    def test_rejects_rank_deficient(self):
        with pytest.raises(RankError):
            FullRankMatrix([[1.0, 1.0], [1.0, 1.0], [0.0, 0.0]])

    def test_rank_tolerance_is_scale_aware(self):
        # Uniformly tiny matrices stay full rank; the threshold tracks
        # max(sigma_max, 1) rather than raw magnitude.
        FullRankMatrix([[1e-6], [0.0]])
        with pytest.raises(RankError):
            FullRankMatrix([[1e-10], [0.0]])

    def test_tangent_shape_checked(self):
        base = FullRankMatrix([[1.0], [0.0]])
        with pytest.raises(ShapeError):
            TangentMatrix(np.ones((3, 1)), base)

    def test_entries_immutable(self):
        point = FullRankMatrix([[1.0], [0.0]])
        with pytest.raises(ValueError):
            point.entries[0, 0] = 2.0


class TestInnerProduct:
    def test_identity_gram(self):
        base = FullRankMatrix([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
        e11 = np.zeros((3, 2))
        e11[0, 0] = 1.0
        assert inner_product(base, e11, e11) == pytest.approx(1.0, abs=1e-14)

    def test_scalar_case(self):
        # tr(1 * (1/4) * 1) * sqrt(det 4) = 0.25 * 2
        base = FullRankMatrix([[2.0], [0.0]])
        u = [[1.0], [0.0]]
        assert inner_product(base, u, u) == pytest.approx(0.5, abs=1e-14)

    def test_rotation_invariance(self):
        gen = InstanceGenerator(101, 4, 2)
        from fibergeo import random_rotation

        for _ in range(10):
            base = random_full_rank(gen)
            u = gen.rng.standard_normal(base.entries.shape)
            v = gen.rng.standard_normal(base.entries.shape)
            rot = random_rotation(gen)
            before = inner_product(base, u, v)
            after = inner_product(
                FullRankMatrix(rot @ base.entries), rot @ u, rot @ v
            )
            assert after == pytest.approx(before, rel=1e-12)

    def test_symmetric_bilinear_positive(self):
        gen = InstanceGenerator(7, 5, 3)
        for _ in range(10):
            base = random_full_rank(gen)
            u = gen.rng.standard_normal(base.entries.shape)
            v = gen.rng.standard_normal(base.entries.shape)
            assert inner_product(base, u, v) == pytest.approx(
                inner_product(base, v, u), rel=1e-12
            )
            assert inner_product(base, u, u) > 0.0

    def test_base_mismatch_rejected(self):
        a = FullRankMatrix([[1.0], [0.0]])
        b = FullRankMatrix([[2.0], [0.0]])
        u = TangentMatrix([[1.0], [0.0]], b)
        with pytest.raises(ShapeError):
            inner_product(a, u, u)


class TestMoorePenrose:
    def test_stacked_identity(self):
        point = FullRankMatrix([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
        assert np.allclose(
            moore_penrose(point), [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]
        )

    def test_scalar(self):
        assert np.allclose(
            moore_penrose(FullRankMatrix([[2.0], [0.0]])), [[0.5, 0.0]]
        )

    def test_defining_identities(self):
        gen = InstanceGenerator(11, 5, 3)
        for _ in range(25):
            point = random_full_rank(gen)
            pinv = moore_penrose(point)
            assert np.abs(pinv @ point.entries - np.eye(3)).max() <= 1e-10
            proj = point.entries @ pinv
            assert np.abs(proj - proj.T).max() <= 1e-10
            assert np.abs(proj @ proj - proj).max() <= 1e-10


class TestGeodesicData:
    def test_zero_velocity(self):
        base = FullRankMatrix([[1.0], [0.0]])
        data = geodesic_data(base, np.zeros((2, 1)))
        assert data.q == 0.0 and data.tr_z == 0.0
        assert np.all(data.Z == 0.0)
        assert data.blowup == np.inf

    def test_worked_rotational(self):
        base = FullRankMatrix([[1.0], [0.0]])
        data = geodesic_data(base, [[0.0], [1.0]])
        assert np.allclose(data.Z, [[0.0, 0.0], [1.0, 0.0]])
        assert data.tr_z == pytest.approx(0.0, abs=1e-15)
        assert data.q == pytest.approx(1.0, rel=1e-14)
        assert data.blowup == np.inf

    def test_pure_scaling_blowup(self):
        base = FullRankMatrix([[1.0], [0.0]])
        data = geodesic_data(base, -base.entries)
        assert data.tr_z == pytest.approx(-1.0, rel=1e-14)
        assert data.q == 0.0
        assert data.blowup == pytest.approx(2.0, rel=1e-14)

    def test_traceless_and_skew_invariants(self):
        gen = InstanceGenerator(13, 6, 4)
        for _ in range(20):
            base = random_full_rank(gen)
            zeta = random_tangent(gen, base)
            data = geodesic_data(base, zeta)
            proj = base.entries @ data.pinv
            assert abs(np.sum(data.Z0 * proj.T)) <= 1e-10  # tr(Z0 proj) = 0
            assert np.abs(data.omega + data.omega.T).max() == 0.0


class TestFSCoefficients:
    def test_at_zero(self):
        base = FullRankMatrix([[1.0], [0.0]])
        data = geodesic_data(base, [[0.3], [0.7]])
        f, s = fs_coefficients(data, 0.0)
        assert f == 1.0 and s == 0.0

    def test_rotational_values(self):
        # q=1, trZ=0, m=1, t=1: f = 1.25, s = 2 arctan(1/2)
        base = FullRankMatrix([[1.0], [0.0]])
        data = geodesic_data(base, [[0.0], [1.0]])
        f, s = fs_coefficients(data, 1.0)
        assert f == pytest.approx(1.25, rel=1e-14)
        assert s == pytest.approx(2.0 * np.arctan(0.5), rel=1e-14)

    def test_scaling_values(self):
        # q=0, trZ=-1, t=1: f = 0.25, s = 1/(1 - 0.5) = 2
        base = FullRankMatrix([[1.0], [0.0]])
        data = geodesic_data(base, -base.entries)
        f, s = fs_coefficients(data, 1.0)
        assert f == pytest.approx(0.25, rel=1e-14)
        assert s == pytest.approx(2.0, rel=1e-14)

    def test_domain_errors(self):
        base = FullRankMatrix([[1.0], [0.0]])
        data = geodesic_data(base, -base.entries)
        with pytest.raises(DomainError):
            fs_coefficients(data, -0.25)
        with pytest.raises(DomainError):
            fs_coefficients(data, 2.0)

    def test_s_matches_quadrature_across_branch(self):
        # trZ < 0 with q > 0: the arctan denominator changes sign inside
        # the sampled range, exercising the continuity correction.
        gen = InstanceGenerator(17, 4, 2)
        for _ in range(10):
            base = random_full_rank(gen)
            zeta = random_tangent(gen, base)
            shrink = -1.5 * base.entries + 0.6 * zeta.entries
            data = geodesic_data(base, shrink)
            if data.q == 0.0:
                continue
            horizon = 3.0 if data.tr_z >= 0.0 else 4.0 / abs(data.tr_z)
            for t in np.linspace(0.1, horizon, 9):
                _, s = fs_coefficients(data, float(t))
                assert s == pytest.approx(s_by_quadrature(data, t), abs=1e-9)

    def test_s_strictly_increasing(self):
        base = FullRankMatrix([[1.0], [0.0], [0.0]])
        data = geodesic_data(base, [[-2.0], [0.8], [0.3]])
        ts = np.linspace(0.0, 5.0, 400)
        values = [fs_coefficients(data, float(t))[1] for t in ts]
        assert np.all(np.diff(values) > 0.0)


class TestExpMap:
    def test_zero_velocity_fixed(self):
        base = FullRankMatrix([[1.0], [0.0]])
        for t in (0.0, 0.7, 5.0):
            assert np.array_equal(
                exp_map(base, np.zeros((2, 1)), t).entries, base.entries
            )

    def test_worked_curve(self, worked_point):
        # alpha(t) = (1 - t^2/4, t), unit speed, from symbolic substitution.
        zeta = [[0.0], [1.0]]
        for t in np.linspace(0.0, 2.0, 101, endpoint=False):
            point = exp_map(worked_point, zeta, float(t))
            expected = np.array([[1.0 - t * t / 4.0], [t]])
            assert np.abs(point.entries - expected).max() <= 1e-9

    def test_pure_scaling(self, worked_point):
        point = exp_map(worked_point, -worked_point.entries, 1.0)
        assert np.allclose(point.entries, [[0.25], [0.0]], atol=1e-14)

    def test_beyond_blowup_raises(self, worked_point):
        with pytest.raises(DomainError):
            exp_map(worked_point, -worked_point.entries, 2.0)

    def test_near_blowup_output_rank_fails(self, worked_point):
        with pytest.raises(RankError):
            exp_map(worked_point, -worked_point.entries, 2.0 - 1e-12)

    def test_volume_identity_random(self):
        gen = InstanceGenerator(23, 6, 4)
        for _ in range(40):
            base = random_full_rank(gen)
            zeta = random_tangent(gen, base, fiber_norm=1.0)
            data = geodesic_data(base, zeta)
            vol0 = np.sqrt(np.linalg.det(base.entries.T @ base.entries))
            cap = 0.9 * min(data.blowup, 2.0)
            for t in np.linspace(0.0, cap, 7):
                point = exp_map(base, data, float(t))
                f, _ = fs_coefficients(data, float(t))
                vol = np.sqrt(np.linalg.det(point.entries.T @ point.entries))
                assert vol == pytest.approx(f * vol0, rel=1e-9)

    def test_constant_speed(self):
        gen = InstanceGenerator(29, 5, 3)
        for _ in range(10):
            base = random_full_rank(gen)
            zeta = random_tangent(gen, base, fiber_norm=0.8)
            data = geodesic_data(base, zeta)
            speed = norm(base, zeta)
            h = 1e-5
            cap = 0.9 * min(data.blowup, 2.0)
            for t in np.linspace(h, cap, 8):
                ahead = exp_map(base, data, float(t + h)).entries
                behind = exp_map(base, data, float(t - h)).entries
                mid = exp_map(base, data, float(t))
                fd = norm(mid, (ahead - behind) / (2.0 * h))
                assert fd == pytest.approx(speed, rel=1e-4)

    def test_initial_conditions(self):
        gen = InstanceGenerator(31, 4, 2)
        base = random_full_rank(gen)
        zeta = random_tangent(gen, base, fiber_norm=1.0)
        assert np.array_equal(exp_map(base, zeta, 0.0).entries, base.entries)
        h = 1e-6
        fd = (exp_map(base, zeta, h).entries - base.entries) / h
        assert np.abs(fd - zeta.entries).max() <= 1e-4  # O(h) agreement

    def test_left_rotation_equivariance(self):
        from fibergeo import random_rotation

        gen = InstanceGenerator(37, 4, 2)
        for _ in range(8):
            base = random_full_rank(gen)
            zeta = random_tangent(gen, base, fiber_norm=1.0)
            rot = random_rotation(gen)
            t = float(gen.rng.uniform(0.2, 1.5))
            direct = exp_map(
                FullRankMatrix(rot @ base.entries), rot @ zeta.entries, t
            )
            mapped = rot @ exp_map(base, zeta, t).entries
            assert np.abs(direct.entries - mapped).max() <= 1e-9

    def test_velocity_scaling_property(self):
        gen = InstanceGenerator(41, 4, 3)
        base = random_full_rank(gen)
        zeta = random_tangent(gen, base, fiber_norm=0.7)
        for c in (0.5, 2.0):
            a = exp_map(base, c * zeta.entries, 0.4)
            b = exp_map(base, zeta, c * 0.4)
            assert np.abs(a.entries - b.entries).max() <= 1e-11

    def test_velocity_output(self):
        gen = InstanceGenerator(43, 5, 2)
        base = random_full_rank(gen)
        zeta = random_tangent(gen, base, fiber_norm=1.0)
        point, vel = exp_map_with_velocity(base, zeta, 0.6)
        h = 1e-6
        fd = (
            exp_map(base, zeta, 0.6 + h).entries
            - exp_map(base, zeta, 0.6 - h).entries
        ) / (2.0 * h)
        assert np.abs(vel - fd).max() <= 1e-8
        assert np.array_equal(point.entries, exp_map(base, zeta, 0.6).entries)


class TestVolumeAndLowerBound:
    def test_identity_stack(self):
        assert volume_quarter(np.vstack([np.eye(3), np.zeros((2, 3))])) == 1.0

    def test_scaled_column(self):
        assert volume_quarter([[2.0], [0.0]]) == pytest.approx(np.sqrt(2.0))

    def test_singular_is_zero(self):
        assert volume_quarter(np.zeros((3, 2))) == 0.0

    def test_lower_bound_examples(self):
        a = [[1.0], [0.0]]
        assert lower_bound(a, a) == 0.0
        assert lower_bound(a, [[2.0], [0.0]]) == pytest.approx(RADIAL_1_TO_2)
        assert lower_bound(a, [[0.0], [0.0]]) == pytest.approx(2.0)

    def test_lower_bound_below_path_length(self):
        gen = InstanceGenerator(47, 3, 2)
        for _ in range(10):
            a, b = random_full_rank(gen), random_full_rank(gen)
            try:
                path = PLPath.from_endpoints(a, b, 6)
                length = path_length(path)
            except RankError:
                continue
            assert lower_bound(a, b) <= length + 1e-8

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            lower_bound(np.ones((3, 1)), np.ones((4, 1)))


class TestPLPath:
    def test_requires_segment(self):
        with pytest.raises(ShapeError):
            PLPath(np.ones((1, 2, 1)))

    def test_rejects_rank_deficient_control(self):
        controls = np.array([[[1.0], [0.0]], [[0.0], [0.0]], [[1.0], [1.0]]])
        with pytest.raises(RankError):
            PLPath(controls)

    def test_constant_path_has_zero_length(self):
        path = PLPath(np.array([[[1.0], [0.0]], [[1.0], [0.0]]]))
        assert path_length(path) == 0.0

    def test_radial_segment_matches_quadrature_oracle(self):
        path = PLPath.from_endpoints([[1.0], [0.0]], [[2.0], [0.0]], 1)
        oracle = radial_quad(1.0, 2.0, 1)
        assert path_length(path) == pytest.approx(oracle, abs=1e-12)
        assert oracle == pytest.approx(RADIAL_1_TO_2, abs=1e-12)

    def test_energy_is_squared_length(self):
        gen = InstanceGenerator(53, 3, 2)
        a, b = random_full_rank(gen), random_full_rank(gen)
        path = PLPath.from_endpoints(a, b, 5)
        assert path_energy(path) == pytest.approx(
            path_length(path) ** 2, abs=1e-8
        )

    def test_energy_matches_reparametrization_oracle(self):
        gen = InstanceGenerator(59, 3, 1)
        a, b = random_full_rank(gen), random_full_rank(gen)
        path = PLPath.from_endpoints(a, b, 4)
        energy, length = reparametrized_energy(path)
        assert length == pytest.approx(path_length(path), rel=1e-6)
        assert energy == pytest.approx(path_energy(path), rel=1e-5)

    def test_node_below_tolerance_raises(self):
        # Choose the endpoint so that an interior Gauss node hits the
        # zero matrix exactly: c(u*) = 0 at u* = first node > 0.4.
        from fibergeo.fiber import _QUAD_NODES

        node = _QUAD_NODES[len(_QUAD_NODES) // 2]
        a = np.array([[1.0], [0.0]])
        b = -a * node / (1.0 - node)
        path = PLPath(np.stack([a, b]))
        with pytest.raises(RankError):
            path_length(path)

    def test_refine_doubles_segments(self):
        path = PLPath.from_endpoints([[1.0], [0.0]], [[2.0], [0.5]], 3)
        fine = path.refine()
        assert fine.k == 6
        assert path_length(fine) == pytest.approx(path_length(path), rel=1e-9)

    def test_segment_lengths_sum(self):
        path = PLPath.from_endpoints([[1.0], [0.0]], [[2.0], [0.5]], 4)
        assert np.sum(segment_lengths(path)) == pytest.approx(
            path_length(path)
        )


class TestConeOracleConsistency:
    def test_exp_endpoint_distance_matches_cone(self, worked_point):
        # The worked geodesic is unit speed, so the endpoint at t=1 lies
        # at distance exactly 1; the independent cone formula must agree.
        assert cone_distance(worked_point, [[0.75], [1.0]]) == pytest.approx(
            1.0, abs=1e-12
        )

    def test_cone_matches_radial_quadrature(self):
        assert cone_distance([[1.0], [0.0]], [[2.0], [0.0]]) == pytest.approx(
            radial_quad(1.0, 2.0, 1), abs=1e-12
        )
