import math

import numpy as np
import pytest

from highprec import legendre_hp, rigid_sphere_hp, sph_hankel2_deriv_hp
from seldkit.array_model import (EIGENMIKE_TETRA, DEFAULT_CONSTANTS,
                                 MicChannel, MicGeometry, PhysicalConstants,
                                 foa_response, legendre_p,
                                 measurement_doa_grid, rigid_sphere_response,
                                 sph_hankel2_deriv, steering_vectors)
from seldkit.core import Doa

SQRT3 = math.sqrt(3.0)


class TestGeometry:
    def test_tetrahedral_selection(self):
        expected = {6: (45, 35), 10: (-45, -35), 26: (135, -35), 22: (-135, 35)}
        assert [ch.label for ch in EIGENMIKE_TETRA.channels] == [6, 10, 26, 22]
        for ch in EIGENMIKE_TETRA.channels:
            az, el = expected[ch.label]
            assert ch.azimuth == pytest.approx(math.radians(az))
            assert ch.elevation == pytest.approx(math.radians(el))
            assert ch.radius == 0.042

    def test_geometry_validation(self):
        with pytest.raises(ValueError):
            MicGeometry(channels=EIGENMIKE_TETRA.channels[:3])
        mixed = EIGENMIKE_TETRA.channels[:3] + (MicChannel(9, 0.0, 0.0, 0.05),)
        with pytest.raises(ValueError):
            MicGeometry(channels=mixed)

    def test_constants(self):
        assert DEFAULT_CONSTANTS.speed_of_sound == 343.0
        assert DEFAULT_CONSTANTS.expansion_terms == 30
        with pytest.raises(ValueError):
            PhysicalConstants(speed_of_sound=-1.0)


class TestFoaResponse:
    @pytest.mark.parametrize("az,el,expected", [
        (0.0, 0.0, (1.0, 0.0, 0.0, SQRT3)),
        (90.0, 0.0, (1.0, SQRT3, 0.0, 0.0)),
        (0.0, 90.0, (1.0, 0.0, SQRT3, 0.0)),
    ])
    def test_cardinal_directions(self, az, el, expected):
        np.testing.assert_allclose(foa_response(Doa.from_degrees(az, el)),
                                   expected, atol=1e-12)

    def test_gain_power_sums_to_four(self, rng):
        for az, el in zip(rng.uniform(-np.pi, np.pi, 300),
                          rng.uniform(-np.pi / 2, np.pi / 2, 300)):
            h = foa_response(Doa(az, el))
            assert np.sum(h ** 2) == pytest.approx(4.0, abs=1e-12)

    def test_orthonormality_by_quadrature(self):
        # Gauss-Legendre over sin(elevation) x uniform azimuth; the
        # integrands are low-order polynomials so the grid is exact
        nodes, weights = np.polynomial.legendre.leggauss(64)
        azimuths = np.linspace(-np.pi, np.pi, 128, endpoint=False)
        gram = np.zeros((4, 4))
        for s, w in zip(nodes, weights):
            el = math.asin(s)
            for az in azimuths:
                h = foa_response(Doa(az, el))
                gram += w * (2 * np.pi / 128) * np.outer(h, h)
        gram /= 4 * np.pi
        assert np.abs(gram - np.eye(4)).max() < 1e-6


class TestLegendre:
    def test_base_cases(self, rng):
        for x in rng.uniform(-1, 1, 20):
            assert legendre_p(0, x) == 1.0
            assert legendre_p(1, x) == x

    def test_degree_two_closed_form(self):
        assert legendre_p(2, 0.5) == pytest.approx(-0.125, abs=1e-15)

    def test_degree_30_against_high_precision(self):
        expected = float(legendre_hp(30, 0.3))
        assert legendre_p(30, 0.3) == pytest.approx(expected, rel=1e-12)

    def test_random_degrees_against_high_precision(self, rng):
        for _ in range(30):
            n = int(rng.integers(0, 61))
            x = float(rng.uniform(-1, 1))
            assert legendre_p(n, x) == pytest.approx(float(legendre_hp(n, x)),
                                                     rel=1e-11, abs=1e-13)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            legendre_p(2, 1.5)
        with pytest.raises(ValueError):
            legendre_p(61, 0.0)
        with pytest.raises(ValueError):
            legendre_p(-1, 0.0)


class TestSphHankelDeriv:
    def test_order_zero_closed_form(self):
        # h_0(2)(x) = i exp(-ix)/x, so h_0'(2)(x) = exp(-ix) (x - i) / x^2
        x = 1.0
        expected = np.exp(-1j * x) * (x - 1j) / x ** 2
        assert abs(sph_hankel2_deriv(0, x) - expected) < 1e-12

    def test_wronskian_identity(self):
        from scipy import special
        n, x = 5, 2.0
        w = (special.spherical_jn(n, x) * special.spherical_yn(n, x, derivative=True)
             - special.spherical_jn(n, x, derivative=True) * special.spherical_yn(n, x))
        assert w == pytest.approx(1.0 / x ** 2, abs=1e-10)

    def test_against_high_precision_small_argument(self):
        # n >> x is the regime where naive upward recurrence of j_n degrades
        mine = sph_hankel2_deriv(10, 0.5)
        ref = complex(sph_hankel2_deriv_hp(10, 0.5))
        assert abs(mine - ref) / abs(ref) < 1e-9

    def test_random_orders_against_high_precision(self, rng):
        for _ in range(25):
            n = int(rng.integers(0, 41))
            x = float(rng.uniform(0.05, 16.0))
            mine = sph_hankel2_deriv(n, x)
            ref = complex(sph_hankel2_deriv_hp(n, x))
            assert abs(mine - ref) / abs(ref) < 1e-10

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            sph_hankel2_deriv(3, 0.0)
        with pytest.raises(ValueError):
            sph_hankel2_deriv(3, -1.0)
        with pytest.raises(ValueError):
            sph_hankel2_deriv(61, 1.0)


class TestRigidSphereResponse:
    MIC = EIGENMIKE_TETRA.channels[0]

    def test_rotation_invariance(self, rng):
        # the response depends on direction only through cos(gamma)
        for _ in range(20):
            az, el = rng.uniform(-np.pi, np.pi), rng.uniform(-np.pi / 2, np.pi / 2)
            rot = rng.uniform(0, 2 * np.pi)
            freq = float(rng.uniform(100, 20000))
            h1 = rigid_sphere_response(self.MIC, Doa(az, el), freq)
            mic2 = MicChannel(self.MIC.label, self.MIC.azimuth + rot,
                              self.MIC.elevation, self.MIC.radius)
            h2 = rigid_sphere_response(mic2, Doa(az + rot, el), freq)
            assert abs(h1 - h2) < 1e-12 * max(1.0, abs(h1))

    def test_low_frequency_limit_is_unity(self):
        aligned = Doa(self.MIC.azimuth, self.MIC.elevation)
        h = rigid_sphere_response(self.MIC, aligned, 100.0)
        assert abs(h) == pytest.approx(1.0, abs=1e-3)

    def test_truncation_converged_at_30_terms(self):
        doa = Doa(0.4, -0.2)
        h30 = rigid_sphere_response(self.MIC, doa, 20000.0,
                                    PhysicalConstants(expansion_terms=30))
        h40 = rigid_sphere_response(self.MIC, doa, 20000.0,
                                    PhysicalConstants(expansion_terms=40))
        assert abs(h30 - h40) / abs(h40) < 1e-6

    def test_matches_high_precision_expansion(self, rng):
        for _ in range(5):
            freq = float(rng.uniform(50, 20000))
            cos_gamma = float(rng.uniform(-1, 1))
            gamma = math.acos(cos_gamma)
            # place the DOA at angle gamma from the capsule along elevation 0
            mic = MicChannel(1, 0.0, 0.0, 0.042)
            mine = rigid_sphere_response(mic, Doa(gamma, 0.0), freq)
            ref = rigid_sphere_hp(math.cos(gamma), freq)
            assert abs(mine - ref) / abs(ref) < 1e-9

    def test_continuity_in_gamma(self):
        # adjacent 1-degree directions move the response magnitude by a
        # bounded relative step (the phase legitimately rotates fast at
        # high kR, so the bound is on |H|)
        freqs = [1000.0, 8000.0, 20000.0]
        for freq in freqs:
            mags = np.array([abs(rigid_sphere_response(self.MIC, Doa(math.radians(d), 0.0), freq))
                             for d in range(0, 181)])
            steps = np.abs(np.diff(mags)) / np.maximum(mags[:-1], mags[1:])
            assert steps.max() < 0.1

    def test_frequency_domain_edges(self):
        with pytest.raises(ValueError):
            rigid_sphere_response(self.MIC, Doa(0, 0), 0.05)
        with pytest.raises(ValueError):
            rigid_sphere_response(self.MIC, Doa(0, 0), 25000.0)


class TestSteeringVectors:
    def test_foa_is_frequency_independent(self):
        sv = steering_vectors("foa", Doa(0.7, 0.2), np.array([100.0, 1000.0, 10000.0]))
        assert sv.shape == (4, 3)
        np.testing.assert_array_equal(sv[:, 0], sv[:, 1])
        np.testing.assert_array_equal(sv[:, 1], sv[:, 2])

    def test_foa_front_column(self):
        sv = steering_vectors("foa", Doa(0, 0), np.array([500.0]))
        np.testing.assert_allclose(sv[:, 0], [1, 0, 0, SQRT3], atol=1e-12)

    def test_mic_channel_dominates_toward_its_direction(self):
        mic = EIGENMIKE_TETRA.channels[0]
        doa = Doa(mic.azimuth, mic.elevation)
        sv = steering_vectors("mic", doa, np.array([8000.0]))
        mags = np.abs(sv[:, 0])
        assert int(np.argmax(mags)) == 0
        # oracle: evaluate each capsule independently through the scalar path
        direct = [abs(rigid_sphere_response(ch, doa, 8000.0))
                  for ch in EIGENMIKE_TETRA.channels]
        np.testing.assert_allclose(mags, direct, rtol=1e-12)

    def test_dc_bin_pinned_to_min_frequency(self):
        doa = Doa(0.3, 0.1)
        sv = steering_vectors("mic", doa, np.array([0.0, 0.1]))
        assert np.all(np.isfinite(sv))
        np.testing.assert_array_equal(sv[:, 0], sv[:, 1])

    def test_unknown_format_rejected(self):
        with pytest.raises(ValueError):
            steering_vectors("stereo", Doa(0, 0), np.array([1000.0]))


class TestMeasurementGrid:
    def test_counts(self):
        grid = measurement_doa_grid()
        assert len(grid) == 504
        assert len({(d.azimuth, d.elevation, d.distance) for d in grid}) == 504
        assert sum(1 for d in grid if d.distance == 1.0) == 324
        assert sum(1 for d in grid if d.distance == 2.0) == 180

    def test_elevation_ranges_per_distance(self):
        grid = {(round(d.azimuth_deg), round(d.elevation_deg), d.distance)
                for d in measurement_doa_grid()}
        assert (0, 40, 1.0) in grid
        assert (0, 40, 2.0) not in grid
        assert (0, -20, 2.0) in grid

    def test_azimuths_multiples_of_ten(self):
        for doa in measurement_doa_grid():
            deg = doa.azimuth_deg
            assert deg == pytest.approx(round(deg / 10.0) * 10.0, abs=1e-9)
