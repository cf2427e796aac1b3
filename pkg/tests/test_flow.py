import math

import numpy as np
import pytest

from vacpol.extrapolation import PUBLISHED_FIT, PiecewiseW5, eval_w5
from vacpol.flow import (WICHMANN_KROLL_DENSITY, SpectrumTable, coulomb_spectrum, density,
                         density_limit, dilatation_ratios, integrate_flow, remainder_estimate,
                         uranium_spectrum)
from vacpol.radial import ALPHA

GAMMA = 92 * ALPHA


def test_bundled_spectrum():
    sp = uranium_spectrum()
    assert len(sp) == 7
    assert sp.lam(1) == pytest.approx(0.67466)
    assert sp.label == "uranium"


def test_uranium_flow_reference():
    res = integrate_flow(PUBLISHED_FIT, uranium_spectrum(), GAMMA, 6, Z=92)
    assert res.nu5_final == pytest.approx(0.015, abs=1e-3)
    assert res.nu5_final == pytest.approx(0.0145, abs=5e-4)
    assert density_limit(res.nu5_final) == pytest.approx(6e-4, abs=0.5e-4)
    assert res.remainder_estimate == pytest.approx(4.7e-4, abs=0.2e-4)
    assert res.nu5_with_remainder == pytest.approx(res.nu5_final - res.remainder_estimate)
    # trajectory starts at w5(1) and only decreases (all drops positive)
    traj = res.trajectory
    assert traj[0, 2] == eval_w5(PUBLISHED_FIT, 1.0)
    assert all(d > 0 for d in res.drops)
    assert np.all(np.diff(traj[:, 2]) <= 0)
    assert traj[-1, 2] == pytest.approx(res.nu5_final, rel=1e-14)


def test_coulomb_ratios_exactly_one():
    for g in (0.1, GAMMA, 0.9):
        ratios = dilatation_ratios(coulomb_spectrum(g, 30), g, 29)
        # lambda_n - lambda_{n+1} cancels about log2(n + 1) bits
        eps = np.finfo(float).eps
        assert all(abs(r - 1.0) <= 4 * (n + 1) * eps for n, r in enumerate(ratios, 1))


def test_coulomb_flow_one_electron():
    res = integrate_flow(PUBLISHED_FIT, coulomb_spectrum(GAMMA, 7), GAMMA, 6, tail_ratio=1.0)
    assert res.nu5_final == pytest.approx(eval_w5(PUBLISHED_FIT, 1 / 7), rel=1e-12)
    assert res.nu5_zero == pytest.approx(PUBLISHED_FIT.chi, abs=1e-14)
    assert density_limit(res.nu5_zero) == pytest.approx(1.2e-3, abs=0.05e-3)


def test_atom_below_ion():
    atom = integrate_flow(PUBLISHED_FIT, uranium_spectrum(), GAMMA, 6)
    ion = integrate_flow(PUBLISHED_FIT, coulomb_spectrum(GAMMA, 7), GAMMA, 6, tail_ratio=1.0)
    assert atom.nu5_final < ion.nu5_zero
    assert atom.nu5_final / ion.nu5_zero == pytest.approx(0.5, abs=0.05)
    assert density_limit(ion.nu5_zero) < WICHMANN_KROLL_DENSITY


def test_ratio_bound():
    res = integrate_flow(PUBLISHED_FIT, uranium_spectrum(), GAMMA, 6)
    R = max(res.ratios)
    w1 = eval_w5(PUBLISHED_FIT, 1.0)
    assert res.nu5_final >= w1 - R * (w1 - PUBLISHED_FIT.chi)


def test_zero_intervals():
    res = integrate_flow(PUBLISHED_FIT, uranium_spectrum(), GAMMA, 0)
    assert res.nu5_final == eval_w5(PUBLISHED_FIT, 1.0)
    assert res.ratios == [] and res.drops == []


def test_spectrum_too_short():
    with pytest.raises(ValueError):
        integrate_flow(PUBLISHED_FIT, uranium_spectrum(), GAMMA, 7)
    with pytest.raises(ValueError):
        integrate_flow(PUBLISHED_FIT, uranium_spectrum(), GAMMA, -1)


def test_trajectory_omega_axis():
    sp = uranium_spectrum()
    res = integrate_flow(PUBLISHED_FIT, sp, GAMMA, 3, samples_per_interval=10)
    x, om = res.trajectory[:, 0], res.trajectory[:, 1]
    # x = 1/n maps to lambda_n: interval ends land on spectral points
    for n in (1, 2, 3):
        i = int(np.argmin(np.abs(x - 1.0 / (n + 1))))
        assert om[i] == pytest.approx(sp.lam(n + 1), rel=1e-12)
    assert np.all(np.diff(om) < 0)


class TestRemainder:
    def test_reference(self):
        r = remainder_estimate(PUBLISHED_FIT, 92, 7)
        assert r == pytest.approx((eval_w5(PUBLISHED_FIT, 1 / 8) - 0.03) / 92, rel=1e-14)
        assert r == pytest.approx(4.7e-4, abs=0.2e-4)

    def test_large_Z(self):
        assert remainder_estimate(PUBLISHED_FIT, 10 ** 9, 7) < 1e-9

    def test_constant_w5(self):
        flat = PiecewiseW5(0.0, 0.2, (0.0, 1.0), (1.0,))
        assert remainder_estimate(flat, 92, 7) == 0.0

    def test_errors(self):
        with pytest.raises(ValueError):
            remainder_estimate(PUBLISHED_FIT, 92, 0)
        with pytest.raises(ValueError):
            remainder_estimate(PUBLISHED_FIT, 0, 3)


class TestDensity:
    def test_reference_rows(self):
        assert density_limit(0.015) == pytest.approx(5.97e-4, abs=5e-7)
        assert density_limit(0.03) == pytest.approx(1.19e-3, abs=5e-6)
        assert density(0.015, 1 + 1e-12) == pytest.approx(density_limit(0.015), rel=1e-10)

    def test_scaling(self):
        assert density(0.015, 2.0) == pytest.approx(density_limit(0.015) / 2 ** 7, rel=1e-14)
        assert density(0.015, -2.0) == density(0.015, 2.0)
        assert np.allclose(density(0.015, [2.0, 3.0]), [density(0.015, 2.0), density(0.015, 3.0)])

    def test_domain(self):
        for r in (1.0, 0.5, -1.0):
            with pytest.raises(ValueError):
                density(0.015, r)


class TestSpectrumTable:
    def test_validation(self):
        with pytest.raises(ValueError):
            SpectrumTable(())
        with pytest.raises(ValueError):
            SpectrumTable((0.5, 0.6))
        with pytest.raises(ValueError):
            SpectrumTable((1.2, 0.5))

    def test_csv_round_trip(self, tmp_path):
        sp = uranium_spectrum()
        back = SpectrumTable.from_csv(sp.to_csv(tmp_path / "u.csv"))
        assert back.p == sp.p and back.label == "u"

    def test_csv_with_comments(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("# s-orbitals\nn,p_n\n2,0.3\n1,0.6\n\n3,0.1\n")
        assert SpectrumTable.from_csv(path).p == (0.6, 0.3, 0.1)
        path.write_text("n,p_n\n1,0.6\n3,0.1\n")
        with pytest.raises(ValueError):
            SpectrumTable.from_csv(path)
