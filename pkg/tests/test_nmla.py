import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rayfem.exact import exact_point_source, exact_point_source_gradient, plane_wave
from rayfem.fem import Helmholtz, assemble
from rayfem.field import WaveField
from rayfem.mesh import build_mesh
from rayfem.nmla import (
    ImpedanceSamples,
    NMLAConfig,
    NMLAError,
    clean_peak_locations,
    dirichlet_kernel,
    l_alpha,
    mode_factors,
    nmla,
    nmla_filter,
    sample_count,
    sample_impedance,
    samples_from_function,
    sampling_plan,
    sharp_peak_locations,
)
from rayfem.rays import RayField

TWO_PI = 2 * math.pi


def wrap(a):
    return (a + math.pi) % TWO_PI - math.pi


def plane_wave_samples(alpha, M, waves, x0=(0.0, 0.0)):
    """Impedance samples of sum B exp(i k d.(x - x0)) on a unit circle with k = alpha."""
    k, r = alpha, 1.0
    x0 = np.asarray(x0, dtype=float)
    theta = TWO_PI * np.arange(M) / M
    s = np.column_stack([np.cos(theta), np.sin(theta)])
    vals = np.zeros(M, dtype=complex)
    for b, t in waves:
        d = np.array([math.cos(t), math.sin(t)])
        vals += b * (1 + s @ d) * np.exp(1j * k * r * (s @ d))
    return ImpedanceSamples(x0, r, theta, vals, float(alpha))


def kernel_sum(theta, waves, L):
    return sum(b * dirichlet_kernel(L, theta - t) for b, t in waves)


class TestLAlpha:
    @pytest.mark.parametrize("alpha,expected", [(0.5, 1), (1.0, 1), (10.0, 10), (30.0, 30), (100.0, 102)])
    def test_examples(self, alpha, expected):
        # max(1, floor(a), floor(a + a^(1/3) - 2.5))
        assert l_alpha(alpha) == expected

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            l_alpha(0.0)


class TestModeFactors:
    def test_against_mpmath(self):
        alpha, L = 17.3, 20
        got = mode_factors(alpha, L)
        for l in (-20, -7, 0, 3, 20):
            j = mpmath.besselj(l, alpha)
            jp = mpmath.diff(lambda x: mpmath.besselj(l, x), alpha)
            ref = complex((1j) ** l * (j - 1j * jp))
            assert abs(got[l + L] - ref) < 1e-12

    def test_jacobi_anger(self):
        # Fourier coefficients of the impedance trace of exp(i alpha cos t)
        alpha, L, M = 12.0, 14, 512
        t = TWO_PI * np.arange(M) / M
        trace = (1 + np.cos(t)) * np.exp(1j * alpha * np.cos(t))
        coeff = np.fft.fft(trace) / M
        ls = np.arange(-L, L + 1)
        np.testing.assert_allclose(coeff[ls % M], mode_factors(alpha, L), atol=1e-12)


class TestDirichletKernel:
    def test_peak_is_one(self):
        assert dirichlet_kernel(7, 0.0) == pytest.approx(1.0)

    def test_zeros(self):
        L = 5
        t = TWO_PI * np.arange(1, 2 * L + 1) / (2 * L + 1)
        np.testing.assert_allclose(dirichlet_kernel(L, t), 0.0, atol=1e-14)

    def test_sum_form(self):
        L, t = 6, np.linspace(-3, 3, 41)
        ref = np.exp(1j * np.outer(t, np.arange(-L, L + 1))).sum(axis=1).real / (2 * L + 1)
        np.testing.assert_allclose(dirichlet_kernel(L, t), ref, atol=1e-13)


class TestFilter:
    def test_kernel_identity(self):
        waves = [(1.0, 0.7)]
        s = plane_wave_samples(30.0, 128, waves)
        sig = nmla_filter(s)
        ref = kernel_sum(s.angles, waves, sig.L)
        assert np.max(np.abs(sig.values - ref)) <= 1e-10

    def test_kernel_identity_off_grid(self):
        waves = [(1.0, 0.7), (-0.5 + 0.2j, 4.0)]
        s = plane_wave_samples(25.0, 96, waves)
        sig = nmla_filter(s)
        t = np.linspace(0, TWO_PI, 333)
        assert np.max(np.abs(sig.at(t) - kernel_sum(t, waves, sig.L))) <= 1e-10

    def test_zero(self):
        s = plane_wave_samples(20.0, 64, [])
        assert np.all(nmla_filter(s).values == 0)

    def test_too_few_samples(self):
        s = plane_wave_samples(30.0, 40, [(1.0, 0.0)])
        with pytest.raises(NMLAError):
            nmla_filter(s)

    @given(
        st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False),
        st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False),
        st.floats(0, TWO_PI),
        st.floats(0, TWO_PI),
    )
    @settings(max_examples=40, deadline=None)
    def test_linearity(self, a, b, t1, t2):
        s1 = plane_wave_samples(20.0, 96, [(1.0, t1)])
        s2 = plane_wave_samples(20.0, 96, [(1.0, t2), (0.3, t1 + 1)])
        mix = ImpedanceSamples(s1.center, s1.radius, s1.angles, a * s1.values + b * s2.values, s1.alpha)
        lhs = nmla_filter(mix).values
        rhs = a * nmla_filter(s1).values + b * nmla_filter(s2).values
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, abs(a) + abs(b))

    def test_two_waves_amplitudes(self):
        s = plane_wave_samples(40.0, 192, [(1.0, 0.5), (2.0, 0.5 + math.pi)])
        est = sharp_peak_locations(nmla_filter(s), threshold=0.3)
        assert len(est) == 2
        np.testing.assert_allclose(sorted(est.peaks), [1.0, 2.0], atol=1 / 40)


class TestPeaks:
    def test_single_wave_within_resolution(self):
        alpha = 30.0
        s = plane_wave_samples(alpha, 128, [(1.0, 2.3)])
        est = sharp_peak_locations(nmla_filter(s))
        assert len(est) == 1
        assert abs(wrap(est.angles[0] - 2.3)) <= TWO_PI / (2 * l_alpha(alpha) + 1)
        # noise free, the polished peak is essentially exact
        assert abs(wrap(est.angles[0] - 2.3)) <= 1e-6

    def test_two_opposite_waves(self):
        s = plane_wave_samples(30.0, 128, [(1.0, 1.0), (1.0, 1.0 + math.pi)])
        est = sharp_peak_locations(nmla_filter(s))
        assert len(est) == 2
        np.testing.assert_allclose(est.angles, [1.0, 1.0 + math.pi], atol=1e-6)

    def test_empty_signal(self):
        est = sharp_peak_locations(nmla_filter(plane_wave_samples(20.0, 64, [])))
        assert len(est) == 0

    def test_threshold_range(self):
        sig = nmla_filter(plane_wave_samples(20.0, 64, [(1.0, 0.0)]))
        with pytest.raises(ValueError):
            sharp_peak_locations(sig, threshold=1.5)

    @given(st.integers(0, 127), st.floats(0.0, TWO_PI))
    @settings(max_examples=30, deadline=None)
    def test_rotation_equivariance(self, shift, t0):
        M = 128
        s = plane_wave_samples(30.0, M, [(1.0, t0), (0.7, t0 + 2.0)])
        rolled = ImpedanceSamples(s.center, s.radius, s.angles, np.roll(s.values, shift), s.alpha)
        a = sharp_peak_locations(nmla_filter(s), threshold=0.3).angles
        b = sharp_peak_locations(nmla_filter(rolled), threshold=0.3).angles
        assert len(a) == len(b) == 2
        moved = np.sort(np.mod(a + TWO_PI * shift / M, TWO_PI))
        gaps = [abs(wrap(x - y)) for x, y in zip(moved, np.sort(b))]
        # up to the optimiser's tolerance on a flat peak
        assert max(gaps) <= 1e-6


class TestClean:
    def test_four_waves_with_weak_member(self):
        # a 4:1 amplitude spread puts the weakest wave under the strongest's sidelobes
        waves = [(2.0, 0.4), (1.0, 2.0), (-1.0, 3.6), (0.5, 5.0)]
        s = plane_wave_samples(25.0, 128, waves)
        est = clean_peak_locations(nmla_filter(s), threshold=0.15)
        assert len(est) == 4
        np.testing.assert_allclose(est.angles, [t for _, t in waves], atol=1e-5)
        np.testing.assert_allclose(est.amplitudes, [b for b, _ in waves], atol=1e-5)

    def test_single_wave_matches_peaks(self):
        sig = nmla_filter(plane_wave_samples(30.0, 128, [(1.0, 0.9)]))
        a = clean_peak_locations(sig).angles
        b = sharp_peak_locations(sig).angles
        np.testing.assert_allclose(a, b, atol=1e-9)

    def test_no_sidelobe_directions(self):
        sig = nmla_filter(plane_wave_samples(30.0, 128, [(1.0, 0.9)]))
        assert len(clean_peak_locations(sig, threshold=0.1)) == 1


class TestRobustness:
    @pytest.mark.parametrize("alpha", [20.0, 50.0])
    def test_bounded_perturbations(self, alpha):
        # perturbation of size 0.25 of the unit amplitude, below 1/(4 * 0.89)
        rng = np.random.default_rng(7)
        L = l_alpha(alpha)
        M = sample_count(alpha)
        bound = TWO_PI / (2 * L + 1)
        worst = 0.0
        for _ in range(100):
            t0 = rng.uniform(0, TWO_PI)
            s = plane_wave_samples(alpha, M, [(1.0, t0)])
            noise = rng.uniform(-1, 1, M) + 1j * rng.uniform(-1, 1, M)
            noise *= 0.25 / np.max(np.abs(noise))
            noisy = ImpedanceSamples(s.center, s.radius, s.angles, s.values + noise, s.alpha)
            est = sharp_peak_locations(nmla_filter(noisy))
            strongest = est.angles[np.argmax(est.peaks)]
            worst = max(worst, abs(wrap(strongest - t0)))
        assert worst <= bound


class TestSampling:
    def test_plan(self):
        omega = TWO_PI * 20
        r, M = sampling_plan(omega, 1.0)
        assert r == pytest.approx(3.0 / math.sqrt(omega))
        assert M == max(2 * l_alpha(omega * r) + 2, 4 * math.ceil(omega * r), 16)

    def test_wavelength_floor_and_cap(self):
        omega = TWO_PI * 20
        r, _ = sampling_plan(omega, 1.0, NMLAConfig(radius_scale=1.0, wavelengths=4.0))
        assert r == pytest.approx(4 / 20)
        r, _ = sampling_plan(omega, 1.0, NMLAConfig(wavelengths=4.0, max_radius=0.1))
        assert r == pytest.approx(0.1)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            NMLAConfig(threshold=0.0)
        with pytest.raises(ValueError):
            NMLAConfig(peak_method="music")

    def test_plane_wave_impedance_closed_form(self):
        omega, d = 30.0, np.array([0.6, 0.8])
        x0, r = np.array([0.1, -0.2]), 0.3
        u = lambda p: plane_wave(p, omega, d)
        g = lambda p: 1j * omega * d[None, :] * plane_wave(p, omega, d)[:, None]
        s = samples_from_function(x0, r, 64, omega, u, g)
        sh = np.column_stack([np.cos(s.angles), np.sin(s.angles)])
        ref = (sh @ d + 1) * np.exp(1j * omega * ((x0 + r * sh) @ d))
        np.testing.assert_allclose(s.values, ref, atol=1e-12)


def fe_field(values_fn, h=1 / 40):
    """A P1 field carrying given nodal values."""
    m = build_mesh((-0.5, 0.5, -0.5, 0.5), h)
    return WaveField.from_nodal(m, values_fn(m.nodes))


class TestSampleImpedance:
    def test_zero_field(self):
        f = fe_field(lambda p: np.zeros(len(p), dtype=complex))
        s = sample_impedance(f, (0.0, 0.0), 0.2, 32, 10.0)
        assert np.all(s.values == 0)

    def test_constant_field(self):
        f = fe_field(lambda p: np.full(len(p), 2.5 - 1j))
        s = sample_impedance(f, (0.1, 0.0), 0.2, 32, 10.0)
        np.testing.assert_allclose(s.values, 2.5 - 1j, atol=1e-12)

    def test_circle_outside(self):
        f = fe_field(lambda p: np.zeros(len(p), dtype=complex))
        with pytest.raises(NMLAError):
            sample_impedance(f, (0.4, 0.0), 0.2, 32, 10.0)


class TestOnSolvedFields:
    def test_plane_wave_field(self):
        # exact plane wave represented in a one-direction ray basis
        omega, t0 = TWO_PI * 10, 0.8
        d = np.array([math.cos(t0), math.sin(t0)])
        m = build_mesh((-0.5, 0.5, -0.5, 0.5), 1 / 60)
        rays = RayField.from_lists([[t0]] * m.num_nodes)
        s = assemble(Helmholtz(m, omega, 1.0, 1.0, rays=rays))
        f = WaveField(m, s.basis, np.ones(m.num_nodes, dtype=complex))
        np.testing.assert_allclose(f.evaluate(np.array([[0.1, 0.2]])), plane_wave(np.array([[0.1, 0.2]]), omega, d))
        est = nmla((0.05, -0.1), f, omega)
        r, _ = sampling_plan(omega, 1.0)
        assert len(est) == 1
        assert abs(wrap(est.angles[0] - t0)) <= TWO_PI / (2 * l_alpha(omega * r) + 1)

    def test_hankel_far_point(self):
        # analytic samples of a point source 1.5 away
        omega = TWO_PI * 40
        x0 = np.array([0.3, 0.2])
        src = [((x0[0] - 0.9, x0[1] - 1.2), 1.0)]
        r, M = sampling_plan(omega, 1.0)
        u = lambda p: exact_point_source(p, omega, src)
        g = lambda p: exact_point_source_gradient(p, omega, src)
        s = samples_from_function(x0, r, M, omega, u, g)
        est = sharp_peak_locations(nmla_filter(s))
        bearing = math.atan2(1.2, 0.9)
        assert len(est) == 1
        assert abs(wrap(est.angles[0] - bearing)) <= 0.05
