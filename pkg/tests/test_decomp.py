import math

import numpy as np
import pytest
from mpmath import mp

import oracles
from vacpol.decomp import (CoarseGridError, Decomposition, DecompositionError, LaplaceOperator,
                           NoSpikeError, decompose, e_hat_zero, find_frequency, laplace_transform,
                           norms, transform_inverse_power, transform_linear, transform_oscillation)
from vacpol.uehling import u_position

GAMMA = 0.6712
SYN_GRID = np.linspace(2.0, 12.0, 801)


def synthetic(x):
    return 0.3 * x + 2.0 / x + 0.05 / x ** 5 + 0.1 * np.cos(3.0 * x)


class TestTransforms:
    def test_constant(self):
        g = np.linspace(0, 1, 11)
        assert laplace_transform(g, np.ones_like(g), 1.0) == pytest.approx(1 - math.exp(-1), rel=1e-14)

    @pytest.mark.parametrize("p", [0.0, 1e-8, 0.5, 3.0, 40.0])
    def test_linear_exact(self, p):
        a, b = 0.3, 2.2
        g = np.linspace(a, b, 7)
        expected = oracles.laplace_x(p, a, b)
        assert laplace_transform(g, g, p) == pytest.approx(expected, rel=1e-10)
        assert complex(transform_linear(p, a, b)).real == pytest.approx(expected, rel=1e-10)

    def test_linear_complex(self):
        a, b, p = 0.3, 2.2, 0.4 + 5j
        g = np.linspace(a, b, 5)
        exact = complex(mp.quad(lambda x: x * mp.e ** (-p * x), [a, b]))
        assert abs(laplace_transform(g, g, p) - exact) < 1e-12
        assert abs(complex(transform_linear(p, a, b)) - exact) < 1e-12

    @pytest.mark.parametrize("p", [0.0, 0.7, 5.0])
    def test_inverse_fifth_power(self, p):
        a, b = 1.0, 3.0
        g = np.linspace(a, b, 20001)
        num = laplace_transform(g, g ** -5.0, p)
        closed = transform_inverse_power(4, p, a, b)
        oracle = float(mp.quad(lambda x: x ** -5 * mp.e ** (-p * x), [a, b]))
        assert closed == pytest.approx(oracle, rel=1e-12)
        assert num == pytest.approx(oracle, rel=1e-7)

    def test_inverse_power_zero(self):
        assert transform_inverse_power(0, 0.0, 0.5, 2.0) == pytest.approx(math.log(4.0))
        assert e_hat_zero(4, 0.5, 2.0) == pytest.approx((0.5 ** -4 - 2.0 ** -4) / 4)
        assert transform_inverse_power(4, 0.0, 0.5, 2.0) == pytest.approx(e_hat_zero(4, 0.5, 2.0), rel=1e-13)

    @pytest.mark.parametrize("omega,p", [(3.0, 0.5), (3.0, 3j), (-2.0, 1 + 1j)])
    def test_oscillation(self, omega, p):
        a, b = 0.3, 2.2
        exact = complex(mp.quad(lambda x: mp.e ** (1j * omega * x - p * x), [a, b]))
        assert abs(complex(transform_oscillation(omega, p, a, b)) - exact) < 1e-13
        # removable point p = i omega
        assert complex(transform_oscillation(omega, 1j * omega, a, b)) == pytest.approx(b - a)

    def test_refinement_check(self):
        coarse = np.linspace(0.3, 2.2, 9)
        with pytest.raises(CoarseGridError):
            laplace_transform(coarse, np.cos(12 * coarse), 0.5, check=True)
        fine = np.linspace(0.3, 2.2, 4001)
        laplace_transform(fine, np.cos(12 * fine), 0.5, check=True, rtol=1e-5)


class TestFindFrequency:
    def setup_method(self):
        self.op = LaplaceOperator.for_grid(SYN_GRID)

    def _find(self, f, **kw):
        return find_frequency(self.op.imag_axis(f), self.op.q_imag, SYN_GRID, W_imag=self.op.W_imag, **kw)

    @pytest.mark.parametrize("w0", [2.2, 3.0, 5.7])
    def test_single_tone(self, w0):
        w, c1, c2 = self._find(np.cos(w0 * SYN_GRID + 0.4))
        assert abs(w - w0) <= self.op.q_imag[1]
        assert c1 * c1 + c2 * c2 == pytest.approx(1.0)

    def test_two_tone_stronger_first(self):
        w, _, _ = self._find(0.3 * np.cos(3.0 * SYN_GRID) + np.sin(7.0 * SYN_GRID))
        assert abs(w - 7.0) <= self.op.q_imag[1]
        w, _, _ = self._find(np.cos(3.0 * SYN_GRID) + 0.3 * np.sin(7.0 * SYN_GRID))
        assert abs(w - 3.0) <= self.op.q_imag[1]

    def test_explicit_neighbourhood(self):
        f = np.cos(3.0 * SYN_GRID) + 0.3 * np.sin(7.0 * SYN_GRID)
        w, _, _ = self._find(f, neighbourhood=(6.5, 7.5))
        assert abs(w - 7.0) <= self.op.q_imag[1]

    def test_no_spike(self):
        with pytest.raises(NoSpikeError):
            self._find(np.exp(-SYN_GRID))
        with pytest.raises(NoSpikeError):
            self._find(np.zeros_like(SYN_GRID))


class TestDecompose:
    def test_synthetic_recovery(self):
        d = decompose(SYN_GRID, synthetic(SYN_GRID), 0.0)
        assert d.c1 == pytest.approx(0.3, rel=1e-2)
        assert d.w1 == pytest.approx(2.0, rel=1e-2)
        assert d.w5 == pytest.approx(0.05, rel=1e-2)
        assert len(d.oscillations) == 1
        w, c = d.oscillations[0]
        assert w == pytest.approx(3.0, rel=1e-2)
        assert c == pytest.approx(0.05, abs=1e-3)
        assert d.remainder_norm <= 0.1

    def test_uehling_alone(self):
        g = np.linspace(0.264, 2.164, 200)
        d = decompose(g, u_position(g, GAMMA), GAMMA)
        assert d.uehling_sign == 1
        for v in (d.c1, d.c2, d.w1, d.w5):
            assert abs(v) < 1e-3
        assert d.oscillations == []

    def test_uehling_sign_fixed(self):
        g = np.linspace(0.264, 2.164, 200)
        y = 0.5 * g - u_position(g, GAMMA)
        d = decompose(g, y, GAMMA, uehling_sign=-1)
        assert d.uehling_sign == -1 and d.c1 == pytest.approx(0.5, rel=1e-6)
        assert decompose(g, y, GAMMA).uehling_sign == -1
        with pytest.raises(ValueError):
            decompose(g, y, GAMMA, uehling_sign=2)

    def test_reconstruction_identity(self):
        d = decompose(SYN_GRID, synthetic(SYN_GRID) + 1e-3 * np.exp(-SYN_GRID), 0.0)
        recon = d.smooth_part(SYN_GRID, 0.0)
        assert np.max(np.abs(synthetic(SYN_GRID) + 1e-3 * np.exp(-SYN_GRID) - recon - d.remainder)) < 1e-12

    def test_symmetric_frequencies_real_oscillation(self):
        d = decompose(SYN_GRID, synthetic(SYN_GRID), 0.0)
        om = d.frequencies
        assert sorted(-w for w in om) == om
        s = d.oscillation_part(SYN_GRID)
        assert s.dtype.kind == "f"
        assert np.max(np.abs(s - 0.1 * np.cos(3.0 * SYN_GRID))) < 1e-3

    def test_delta_term_has_no_support(self):
        d = decompose(SYN_GRID, synthetic(SYN_GRID), 0.0)
        moved = Decomposition(**{**d.__dict__, "c2": d.c2 + 5.0})
        assert np.array_equal(moved.smooth_part(SYN_GRID, 0.0), d.smooth_part(SYN_GRID, 0.0))

    def test_failure_to_converge(self):
        rng = np.random.default_rng(0)
        noisy = synthetic(SYN_GRID) + rng.normal(0, 1.0, SYN_GRID.size)
        with pytest.raises(DecompositionError):
            decompose(SYN_GRID, noisy, 0.0, tol=1e-6, max_frequencies=2)

    def test_more_frequencies_never_hurt(self):
        from vacpol.decomp import _Fitter
        f = np.cos(2.5 * SYN_GRID) + 0.5 * np.cos(4.0 * SYN_GRID) + 1.0 / SYN_GRID
        fitter = _Fitter(SYN_GRID, f, np.zeros_like(SYN_GRID), LaplaceOperator.for_grid(SYN_GRID))
        lsq = [fitter.fit(ws).lsq for ws in ([], [2.5], [2.5, 4.0], [2.5, 4.0, 6.1])]
        assert all(b <= a * (1 + 1e-12) + 1e-20 * lsq[0] for a, b in zip(lsq, lsq[1:]))
        assert lsq[2] < 1e-12 * lsq[0]

    def test_input_validation(self):
        with pytest.raises(ValueError):
            decompose(SYN_GRID[:5], synthetic(SYN_GRID[:5]), 0.0)
        with pytest.raises(ValueError):
            decompose(SYN_GRID[::-1], synthetic(SYN_GRID), 0.0)

    def test_json_round_trip(self, tmp_path):
        d = decompose(SYN_GRID, synthetic(SYN_GRID), 0.0)
        back = Decomposition.load(d.save(tmp_path / "d.json"))
        assert back.oscillations == d.oscillations
        assert (back.c1, back.w1, back.w5) == (d.c1, d.w1, d.w5)
        assert np.array_equal(back.remainder, d.remainder)


class TestNorms:
    a, b = 0.5, 2.0

    def test_zero_remainder(self):
        g = np.linspace(self.a, self.b, 50)
        l2, osc = norms(np.zeros_like(g), g, [], self.a, self.b)
        assert l2 == 0.0 and osc == 0.0

    def test_unit_bump(self):
        # O = e4(0) sin(pi (x - a) / (b - a)): ||O||^2 (b - a)^2 e4^2 = e4^2 (b - a) / 2
        g = np.linspace(self.a, self.b, 20001)
        e4 = e_hat_zero(4, self.a, self.b)
        O = e4 * np.sin(math.pi * (g - self.a) / (self.b - self.a))
        l2, _ = norms(O, g, [], self.a, self.b)
        assert l2 == pytest.approx(math.sqrt((self.b - self.a) / 2) / (self.b - self.a), rel=1e-7)

    def test_single_oscillation(self):
        # c = 1/2: c s_w(0) + conj(c) s_-w(0) = int_a^b cos(w x) dx
        w = 2.7
        g = np.linspace(self.a, self.b, 10)
        _, osc = norms(np.zeros_like(g), g, [(w, 0.5 + 0j)], self.a, self.b)
        closed = abs(math.sin(w * self.b) - math.sin(w * self.a)) / w
        assert osc == pytest.approx(closed / e_hat_zero(4, self.a, self.b), rel=1e-13)
