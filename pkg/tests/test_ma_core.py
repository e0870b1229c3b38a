"""Mixed measures, comparison principle, cone checks, smoothing probes."""

import numpy as np
import pytest

from torusma.errors import ScheduleInvalid
from torusma.fields import (
    ScalarField,
    TorusGrid,
    constant_form,
    flat_form,
    form_mass,
    integrate,
)
from torusma.ma_core import (
    comparison_check,
    cone_check,
    mixed_ma_measure,
    monotone_convergence_probe,
    potential_in_class,
)
from torusma.samples import cone_interior_potential, named_rng, random_band_limited
from torusma.spectral import ma_density, spectral_dd_bar


def grid2(res=16):
    return TorusGrid(2, res)


def grid1(res=32):
    return TorusGrid(1, res)


class TestMixedMaMeasure:
    def test_pure_power_reduces_to_ma_density(self):
        g = grid2()
        omega = flat_form(g)
        phi = cone_interior_potential(g, named_rng(20, "mixed-pure"), kmax=3)
        gphi = omega + spectral_dd_bar(phi)
        mixed = mixed_ma_measure([(gphi, 2)], omega)
        direct = ma_density(gphi, omega)
        assert np.max(np.abs(mixed.values - direct.values)) == 0.0

    def test_symmetry_bit_for_bit(self):
        g = grid2()
        omega = flat_form(g)
        rng = named_rng(21, "mixed-sym")
        p1 = potential_in_class(omega, cone_interior_potential(g, rng, kmax=3))
        T = omega + spectral_dd_bar(cone_interior_potential(g, rng, kmax=3))
        a = mixed_ma_measure([(p1, 1), (T, 1)], omega)
        b = mixed_ma_measure([(T, 1), (p1, 1)], omega)
        assert np.array_equal(a.values, b.values)

    def test_power_sum_mismatch(self):
        g = grid2()
        omega = flat_form(g)
        with pytest.raises(ValueError):
            mixed_ma_measure([(omega, 1)], omega)

    def test_multilinear_mass_expansion(self):
        # int (gamma_phi ^ T) equals the product-free expansion predicted by
        # the discrete Stokes identity:  int gamma ^ T  (cross Hessian terms
        # integrate to zero mode by mode)
        g = grid2()
        omega = flat_form(g)
        rng = named_rng(22, "mixed-mass")
        for _ in range(5):
            phi = cone_interior_potential(g, rng, kmax=3)
            psi = cone_interior_potential(g, rng, kmax=3)
            gphi = omega + spectral_dd_bar(phi)
            T = omega + spectral_dd_bar(psi)
            mixed = mixed_ma_measure([(gphi, 1), (T, 1)], omega)
            expected = integrate(mixed_ma_measure([(omega, 1), (omega, 1)], omega))
            assert integrate(mixed) == pytest.approx(expected, abs=1e-10)


class TestComparison:
    def test_equal_potentials_empty_set(self):
        g = grid1()
        omega = flat_form(g)
        phi = potential_in_class(omega, cone_interior_potential(g, named_rng(23, "cmp"), kmax=3))
        lhs, rhs, margin = comparison_check(omega, phi, phi)
        assert lhs == rhs == 0.0

    def test_constant_shift_full_set(self):
        g = grid1()
        omega = flat_form(g)
        rng = named_rng(24, "cmp-shift")
        base_phi = cone_interior_potential(g, rng, kmax=3)
        phi = potential_in_class(omega, base_phi)
        psi = potential_in_class(omega, base_phi + 1.5)
        lhs, rhs, margin = comparison_check(omega, phi, psi)
        total = form_mass(omega)
        assert lhs == pytest.approx(total, abs=1e-12)
        assert rhs == pytest.approx(total, abs=1e-12)

    @pytest.mark.parametrize("make_grid", [grid1, grid2])
    def test_randomized_margin(self, make_grid):
        g = make_grid()
        omega = flat_form(g)
        rng = named_rng(25, f"cmp-rand-{g.complex_dim}")
        for _ in range(20):
            phi = potential_in_class(omega, cone_interior_potential(g, rng, kmax=3))
            psi = potential_in_class(omega, cone_interior_potential(g, rng, kmax=3))
            lhs, rhs, margin = comparison_check(omega, phi, psi)
            assert margin >= -1e-8


class TestConeCheck:
    def test_flat_form(self):
        g = grid2()
        ok, me = cone_check(flat_form(g, 2.0))
        assert ok and me == pytest.approx(2.0, abs=1e-14)

    def test_large_cosine_exits_cone(self):
        g = grid1()
        x = g.axes()[0]
        big = ScalarField(g, np.broadcast_to(np.cos(2 * np.pi * x), g.shape) * 2.0)
        ok, me = cone_check(flat_form(g) + spectral_dd_bar(big))
        assert not ok and me < -1.0

    def test_homogeneity(self):
        g = grid2()
        f = flat_form(g) + spectral_dd_bar(
            cone_interior_potential(g, named_rng(26, "cone-scale"), kmax=2)
        )
        _, me1 = cone_check(f)
        _, me2 = cone_check(2.0 * f)
        assert me2 == pytest.approx(2 * me1, rel=1e-12)


class TestMonotoneProbe:
    def test_zero_potential_constant_pairings(self):
        # phi = 0 smooths to itself: the potential pairing is identically 0
        # and the power pairing carries only the explicit eps*omega inflation
        g = grid1()
        omega = flat_form(g)
        phi = potential_in_class(omega, ScalarField(g, np.zeros(g.shape)))
        chi = ScalarField(g, np.ones(g.shape))
        sched = [0.2, 0.1, 0.05]
        rows = monotone_convergence_probe(omega, phi, sched, [(chi, None, 0, 0)], omega=omega)
        for eps, r in zip(sched, rows):
            assert r.pairing_potential == 0.0
            assert r.gap_potential == 0.0
            assert r.pairing_power == pytest.approx(1.0 + eps, abs=1e-13)

    def test_k0_reduces_to_l1_convergence(self):
        g = grid1()
        omega = flat_form(g)
        phi = potential_in_class(
            omega, cone_interior_potential(g, named_rng(27, "probe-l1"), kmax=2)
        )
        chi = ScalarField(g, np.ones(g.shape))
        sched = [0.2 / 2 ** i for i in range(23)]
        rows = monotone_convergence_probe(omega, phi, sched, [(chi, None, 0, 0)], omega=omega)
        gaps = [r.gap_potential for r in rows]
        assert gaps[-1] < 1e-6
        assert gaps[-1] <= gaps[0] + 1e-15

    def test_k1_pairing_converges_n2(self):
        g = grid2()
        omega = flat_form(g)
        rng = named_rng(28, "probe-k1")
        phi = potential_in_class(omega, cone_interior_potential(g, rng, kmax=2))
        chi = random_band_limited(g, rng, kmax=2) + 2.0
        sched = [0.2 / 2 ** i for i in range(23)]
        rows = monotone_convergence_probe(omega, phi, sched, [(chi, None, 1, 0)], omega=omega)
        assert rows[-1].gap_potential < 1e-6
        assert rows[-1].gap_power < 1e-6
        # Cauchy in eps: successive pairing distances shrink
        vals = [r.pairing_potential for r in rows]
        diffs = [abs(b - a) for a, b in zip(vals, vals[1:])]
        assert diffs[-1] <= diffs[0] + 1e-15

    def test_bad_schedule_rejected(self):
        g = grid1()
        omega = flat_form(g)
        phi = potential_in_class(omega, ScalarField(g, np.zeros(g.shape)))
        chi = ScalarField(g, np.ones(g.shape))
        with pytest.raises(ScheduleInvalid):
            monotone_convergence_probe(omega, phi, [0.1, 0.2], [(chi, None, 0, 0)])
        with pytest.raises(ScheduleInvalid):
            monotone_convergence_probe(omega, phi, [0.1, 0.0], [(chi, None, 0, 0)])
