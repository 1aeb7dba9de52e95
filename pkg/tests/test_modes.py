import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from periodic_pml.errors import ThresholdViolation, ValidationError
from periodic_pml.modes import (ModeClass, decay_rate, default_window, in_cone, lambda_minus, mode_spectrum,
                                pml_rates, validate_parameters, wave_eval)

ks = st.floats(0.1, 6.0).filter(lambda k: min(abs(k - round(k)), 1) > 1e-3)
alphas = st.floats(0.0, 0.99)
phis = st.floats(0.05, math.pi / 2 - 0.05)


def _non_threshold(k, a):
    return all(abs(k * k - (n + a) ** 2) > 1e-6 for n in range(-20, 21))


class TestValidate:
    def test_threshold_k1(self):
        with pytest.raises(ThresholdViolation) as exc:
            validate_parameters(1.0, 0.0, 8)
        assert exc.value.n == 1

    def test_ok(self):
        validate_parameters(1.5, 0.0, 8)

    def test_threshold_n0(self):
        with pytest.raises(ThresholdViolation) as exc:
            validate_parameters(0.5, 0.5, 8)
        assert exc.value.n == 0

    @pytest.mark.parametrize("k,a", [(math.nan, 0.0), (1.5, math.inf), (0.0, 0.0), (1.5, 1.0), (1.5, -0.1)])
    def test_rejects(self, k, a):
        with pytest.raises(ValidationError):
            validate_parameters(k, a, 8)

    def test_first_offender_in_scan_order(self):
        # k = 2, alpha = 0: n = 2 and n = -2 both hit; 2 is scanned first
        with pytest.raises(ThresholdViolation) as exc:
            validate_parameters(2.0, 0.0, 8)
        assert exc.value.n == 2


class TestSpectrum:
    def test_n1(self):
        e = mode_spectrum(1.5, 0.0).entry(1)
        assert e.lambda_minus == pytest.approx(1.118034, abs=1e-6)
        assert e.lambda_plus == pytest.approx(-1.118034, abs=1e-6)
        assert e.mode_class is ModeClass.PROPAGATING

    def test_n2(self):
        e = mode_spectrum(1.5, 0.0).entry(2)
        assert e.lambda_minus == pytest.approx(1.322876j, abs=1e-6)
        assert e.lambda_plus == pytest.approx(-1.322876j, abs=1e-6)
        assert e.mode_class is ModeClass.EVANESCENT_PAIR

    def test_propagating_set(self):
        spec = mode_spectrum(0.5, 0.25)
        assert [e.n for e in spec.propagating] == [0]

    def test_vectorized(self):
        v = lambda_minus(1.5, 0.0, np.array([0, 1, 2]))
        assert v.shape == (3,)
        assert v[2] == pytest.approx(1j * math.sqrt(1.75))

    @given(ks, alphas)
    def test_invariants(self, k, a):
        assume(_non_threshold(k, a))
        spec = mode_spectrum(k, a)
        prop = {e.n for e in spec.propagating}
        evan = {e.n for e in spec.evanescent}
        assert prop | evan == {e.n for e in spec.entries}
        assert not prop & evan
        for e in spec.entries:
            assert e.lambda_plus + e.lambda_minus == 0
            lm = e.lambda_minus
            assert lm.real >= 0 and lm.imag >= 0
            assert (lm.real > 0) != (lm.imag > 0)
            assert abs(lm) ** 2 == pytest.approx(abs(k * k - (e.n + a) ** 2), rel=1e-12)
            assert (abs(e.n + a) < abs(k)) == e.propagating
            if e.propagating:
                assert lm.imag == 0 and e.lambda_plus.imag == 0 and lm.real > 0
            else:
                assert lm.real == 0 and lm.imag > 0 and e.lambda_plus.imag < 0


class TestWave:
    def test_origin(self):
        e = mode_spectrum(1.5, 0.0).entry(0)
        assert wave_eval(e, "minus", 0.0, 0.0, 0.0) == 1 + 0j

    def test_evanescent_decay(self):
        e = mode_spectrum(1.5, 0.0).entry(2)
        val = abs(wave_eval(e, "minus", 0.0, 0.0, 1.0))
        assert val == pytest.approx(math.exp(-math.sqrt(1.75)), rel=1e-14)
        # e^{-1.322876} = 0.266368...; the rounded reference 0.26639 is off in the 5th digit
        assert val == pytest.approx(0.26639, abs=5e-5)

    def test_phase(self):
        e = mode_spectrum(1.5, 0.0).entry(1)
        assert wave_eval(e, "minus", 0.0, math.pi, 0.0) == pytest.approx(-1.0)

    def test_bad_branch(self):
        e = mode_spectrum(1.5, 0.0).entry(1)
        with pytest.raises(ValueError):
            wave_eval(e, "up", 0.0, 0.0, 0.0)


def brute_decay(k, a, phi, N=50):
    n = np.arange(-N, N + 1)
    return float(np.min((np.exp(1j * phi) * lambda_minus(k, a, n)).imag))


class TestRates:
    def test_canonical(self):
        r = pml_rates(mode_spectrum(1.5, 0.0), math.pi / 4, 1.0)
        assert r.decay_rate == pytest.approx(0.790569, abs=1e-6)
        assert r.decay_rate == pytest.approx(brute_decay(1.5, 0.0, math.pi / 4), abs=1e-12)
        assert r.gamma_max == pytest.approx(0.707107, abs=1e-6)

    def test_canonical_beta(self):
        r = pml_rates(mode_spectrum(1.5, 0.0), math.pi / 4, 1.0)
        assert r.beta_range.lower == pytest.approx(-0.707107, abs=1e-6)
        assert r.beta_range.lower_closed
        assert str(r.beta_range) == "[-0.707107, 0)"
        # cone containment of the incoming waves is not the binding constraint
        assert math.tan(math.pi / 4) * r.min_propagating > 0.7072
        spec = mode_spectrum(1.5, 0.0)
        for beta in np.linspace(r.beta_range.lower, -1e-3, 25):
            lam_plus = np.array([e.lambda_plus for e in spec.propagating])
            assert np.all(in_cone(lam_plus, beta, math.pi / 4))

    def test_small_k(self):
        spec = mode_spectrum(0.5, 0.25)
        phi = math.pi / 6
        r = pml_rates(spec, phi, 10.0)
        lam0 = math.sqrt(0.25 - 0.0625)
        assert spec.entry(0).lambda_minus.real == pytest.approx(0.433013, abs=1e-6)
        evan = min(e.lambda_minus.imag for e in spec.evanescent)
        assert r.decay_rate == pytest.approx(min(lam0 * 0.5, evan * math.cos(phi)), abs=1e-12)
        assert r.decay_rate == pytest.approx(brute_decay(0.5, 0.25, phi), abs=1e-12)
        assert r.gamma_max == r.decay_rate

    def test_cone_binding(self):
        # propagating lambda^- tiny: tan(phi) * min lambda^- becomes the binding bound
        k, a = 1.01, 0.0
        r = pml_rates(mode_spectrum(k, a), math.pi / 4, 5.0)
        assert r.beta_range.lower == pytest.approx(-math.sqrt(k * k - 1), rel=1e-12)
        assert not r.beta_range.lower_closed
        assert r.beta_range.lower not in r.beta_range

    @pytest.mark.parametrize("phi", [0.0, math.pi / 2, -0.1])
    def test_bad_phi(self, phi):
        with pytest.raises(ValidationError):
            pml_rates(mode_spectrum(1.5, 0.0), phi, 1.0)

    def test_bad_tau(self):
        with pytest.raises(ValidationError):
            pml_rates(mode_spectrum(1.5, 0.0), 0.5, 0.0)

    def test_window_check(self):
        spec = mode_spectrum(3.5, 0.0, n_window=2)
        with pytest.raises(ValidationError):
            decay_rate(spec, 0.5)

    def test_indices(self):
        spec = mode_spectrum(1.5, 0.0)
        assert decay_rate(spec, math.pi / 4, indices=[0]) == pytest.approx(1.5 * math.sin(math.pi / 4))
        with pytest.raises(KeyError):
            decay_rate(spec, math.pi / 4, indices=[99])

    @given(ks, alphas, phis, st.floats(0.1, 10.0))
    def test_formula_vs_scan(self, k, a, phi, tau):
        assume(_non_threshold(k, a))
        spec = mode_spectrum(k, a, max(default_window(k), 8))
        r = pml_rates(spec, phi, tau)
        assert r.decay_rate == pytest.approx(brute_decay(k, a, phi), abs=1e-12)
        assert r.gamma_max <= tau * math.sin(phi) + 1e-15
        assert r.gamma_max <= r.decay_rate + 1e-15
        assert r.beta_range.lower >= -tau * math.sin(phi) - 1e-15
        if spec.evanescent:
            assert r.beta_range.lower >= -min(e.lambda_minus.imag for e in spec.evanescent) - 1e-15

    @given(ks, alphas, phis, phis)
    def test_rotation_ordering(self, k, a, p1, p2):
        # with only propagating modes binding (cos phi factor large), the rate grows with phi
        assume(_non_threshold(k, a))
        p1, p2 = sorted((p1, p2))
        spec = mode_spectrum(k, a)
        r1 = min(e.lambda_minus.real for e in spec.propagating) if spec.propagating else math.inf
        s = min(e.lambda_minus.imag for e in spec.evanescent)
        assume(r1 * math.sin(p2) <= s * math.cos(p2))
        assert decay_rate(spec, p1) <= decay_rate(spec, p2) + 1e-15


class TestCone:
    def test_membership(self):
        phi = math.pi / 4
        beta = -0.3
        assert in_cone(1j * beta - np.exp(-1j * phi / 2) * 2.0, beta, phi)
        assert not in_cone(1j * beta + 1.0, beta, phi)
        assert not in_cone(1j * beta - np.exp(-1j * phi) * 2.0, beta, phi)  # boundary ray excluded
        assert not in_cone(1j * beta, beta, phi)
