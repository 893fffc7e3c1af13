import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from dkmlmc.dk import DkState, dk_step, simulate_coupled_pair, simulate_path
from dkmlmc.grid import Field, VectorField, interpolate, mass
from dkmlmc.noise import CouplingKind, NoiseStream, white_increment
from dkmlmc.pde import make_level, mfl_endpoint, solve_mfl, theta_step
from dkmlmc.qoi import builtin_density

MU = 0.001 * 4**6 / np.pi**2
T = 1.024
NN = CouplingKind.NEAREST_NEIGHBOUR


def reg_init(level):
    return interpolate(builtin_density("reg"), level.grid)


class TestDkStep:
    def test_zero_noise_matches_theta_step(self):
        lv = make_level(0, 2, 16, MU, T)
        rho = reg_init(lv)
        dw = VectorField(lv.grid, np.zeros((2,) + lv.grid.shape))
        out = dk_step(DkState(rho, 0, lv, 1e6), dw)
        assert np.array_equal(out.rho.values, theta_step(rho, lv).values)

    def test_infinite_particles_ignores_noise(self):
        lv = make_level(0, 2, 16, MU, T)
        rho = reg_init(lv)
        dw = white_increment(NoiseStream(3, 0, 0), lv)
        out = dk_step(DkState(rho, 0, lv, math.inf), dw)
        assert np.array_equal(out.rho.values, theta_step(rho, lv).values)

    def test_mass_preserved_single_step(self):
        lv = make_level(0, 2, 16, MU, T)
        rho = reg_init(lv)
        dw = white_increment(NoiseStream(4, 0, 0), lv)
        out = dk_step(DkState(rho, 0, lv, 1e4), dw)
        assert abs(mass(out.rho) - mass(rho)) <= 1e-12 * abs(mass(rho))

    def test_zero_density_is_absorbing(self):
        lv = make_level(0, 2, 8, MU, T)
        rho = Field(lv.grid, np.zeros(lv.grid.shape))
        dw = white_increment(NoiseStream(5, 0, 0), lv)
        out = dk_step(DkState(rho, 0, lv, 100.0), dw)
        assert np.array_equal(out.rho.values, np.zeros(lv.grid.shape))

    def test_grid_mismatch_rejected(self):
        lv = make_level(0, 2, 8, MU, T)
        other = make_level(0, 2, 16, MU, T)
        dw = white_increment(NoiseStream(6, 0, 0), other)
        with pytest.raises(ValueError):
            dk_step(DkState(reg_init(lv), 0, lv, 100.0), dw)


class TestSimulatePath:
    def test_zero_noise_reproduces_mfl_bitwise(self):
        lv = make_level(0, 2, 16, MU, T)
        rho0 = reg_init(lv)
        out = simulate_path(rho0, lv, math.inf, NoiseStream(7, 0, 0))
        assert np.array_equal(out.values, mfl_endpoint(rho0, lv).values)

    def test_mass_conserved_along_rough_path(self):
        lv = make_level(0, 2, 16, MU, T)
        rho0 = reg_init(lv)
        masses = []
        simulate_path(
            rho0, lv, 1e5, NoiseStream(8, 0, 0),
            observer=lambda m, f: masses.append(mass(f)),
        )
        drift = np.max(np.abs(np.array(masses) - masses[0]))
        assert drift <= 1e-12 * abs(masses[0])

    def test_replicate_reproducibility(self):
        lv = make_level(0, 2, 8, MU, T)
        rho0 = reg_init(lv)
        a = simulate_path(rho0, lv, 1e6, NoiseStream(9, 2, 13))
        b = simulate_path(rho0, lv, 1e6, NoiseStream(9, 2, 13))
        assert np.array_equal(a.values, b.values)

    def test_observer_sees_every_step(self):
        lv = make_level(0, 2, 8, MU, T)
        seen = []
        simulate_path(reg_init(lv), lv, 1e6, NoiseStream(10, 0, 0), observer=lambda m, f: seen.append(m))
        assert seen == list(range(lv.steps + 1))

    def test_unit_mass_required(self):
        lv = make_level(0, 2, 8, MU, T)
        bad = Field(lv.grid, 2.0 * reg_init(lv).values)
        with pytest.raises(ValueError, match="unit mass"):
            simulate_path(bad, lv, 1e6, NoiseStream(11, 0, 0))

    def test_role_misuse_rejected(self):
        lv = make_level(0, 2, 8, MU, T)
        with pytest.raises(ValueError, match="single"):
            simulate_path(reg_init(lv), lv, 1e6, NoiseStream(12, 0, 0, role="fine"))

    def test_high_density_paths_concentrate_near_mfl(self):
        # With N >= 2e9 the sup-norm deviation from the noiseless solve should
        # stay below rho_min/2 in at least 99% of paths.
        lv = make_level(0, 2, 16, MU, T)
        rho0 = reg_init(lv)
        mfl = solve_mfl(rho0, lv)
        rho_min = mfl.min()
        n_paths = 1000
        exceed = 0
        for rep in range(n_paths):
            sup = 0.0

            def track(m, f):
                nonlocal sup
                sup = max(sup, float(np.max(np.abs(f.values - mfl[m]))))

            simulate_path(rho0, lv, 2e9, NoiseStream(13, 0, rep), observer=track)
            exceed += sup >= rho_min / 2
        assert exceed <= 0.01 * n_paths


class TestReferenceScalePath:
    def test_rough_but_conservative_at_moderate_density(self):
        # n=128, tau=1e-3, N=2e6: the endpoint is strongly rough relative to the
        # noiseless solve while mass stays exact.
        level = make_level(0, 2, 128, MU, T)
        assert level.tau == pytest.approx(1e-3, rel=1e-12)
        rho0 = reg_init(level)
        out = simulate_path(rho0, level, 2e6, NoiseStream(19, 0, 0))
        assert abs(mass(out) - mass(rho0)) <= 1e-12
        smooth = mfl_endpoint(rho0, level)
        roughness = float(np.max(np.abs(out.values - smooth.values))) / float(np.mean(smooth.values))
        assert roughness > 0.2


class TestCoupledPair:
    def _levels(self, n_fine=16):
        fine = make_level(1, 2, n_fine, MU, T)
        coarse = make_level(0, 2, n_fine // 2, MU, T)
        return fine, coarse

    def test_zero_noise_matches_both_mfls(self):
        fine, coarse = self._levels()
        rf, rc = reg_init(fine), reg_init(coarse)
        out_f, out_c = simulate_coupled_pair(
            rf, rc, fine, coarse, NN, math.inf, NoiseStream(14, 1, 0, role="fine")
        )
        assert np.array_equal(out_f.values, mfl_endpoint(rf, fine).values)
        assert np.array_equal(out_c.values, mfl_endpoint(rc, coarse).values)

    def test_reproducible_pair(self):
        fine, coarse = self._levels(8)
        rf, rc = reg_init(fine), reg_init(coarse)
        runs = [
            simulate_coupled_pair(rf, rc, fine, coarse, NN, 1e6, NoiseStream(15, 1, 3, role="fine"))
            for _ in range(2)
        ]
        assert np.array_equal(runs[0][0].values, runs[1][0].values)
        assert np.array_equal(runs[0][1].values, runs[1][1].values)

    def test_mass_conserved_both_levels(self):
        fine, coarse = self._levels(8)
        rf, rc = reg_init(fine), reg_init(coarse)
        out_f, out_c = simulate_coupled_pair(
            rf, rc, fine, coarse, NN, 1e5, NoiseStream(16, 1, 0, role="fine")
        )
        assert abs(mass(out_f) - mass(rf)) <= 1e-12
        assert abs(mass(out_c) - mass(rc)) <= 1e-12

    def test_ratio_mismatch_rejected(self):
        fine = make_level(1, 2, 16, MU, T)
        coarse = make_level(0, 2, 4, MU, T)
        with pytest.raises(ValueError):
            simulate_coupled_pair(
                reg_init(fine), reg_init(coarse), fine, coarse, NN, 1e6,
                NoiseStream(17, 1, 0, role="fine"),
            )

    def test_role_misuse_rejected(self):
        fine, coarse = self._levels(8)
        with pytest.raises(ValueError, match="fine"):
            simulate_coupled_pair(
                reg_init(fine), reg_init(coarse), fine, coarse, NN, 1e6,
                NoiseStream(18, 1, 0, role="single"),
            )

    def test_marginal_laws_match_single_level(self):
        # Two-sample check: the fine/coarse outputs of coupled pairs share the
        # law of the corresponding single-level paths.
        from dkmlmc.grid import inner, interpolate as interp
        from dkmlmc.qoi import phi_sinsum

        fine, coarse = self._levels(16)
        n_samples = 400
        N = 1e6
        rho0_f, rho0_c = reg_init(fine), reg_init(coarse)
        phi_f = interp(phi_sinsum, fine.grid)
        phi_c = interp(phi_sinsum, coarse.grid)

        coupled_f, coupled_c, single_f, single_c = [], [], [], []
        for rep in range(n_samples):
            out_f, out_c = simulate_coupled_pair(
                rho0_f, rho0_c, fine, coarse, NN, N, NoiseStream(40, 1, rep, role="fine")
            )
            coupled_f.append(inner(out_f, phi_f))
            coupled_c.append(inner(out_c, phi_c))
            single_f.append(inner(simulate_path(rho0_f, fine, N, NoiseStream(41, 1, rep)), phi_f))
            single_c.append(inner(simulate_path(rho0_c, coarse, N, NoiseStream(42, 0, rep)), phi_c))

        for a, b in ((coupled_f, single_f), (coupled_c, single_c)):
            a, b = np.array(a), np.array(b)
            z = abs(a.mean() - b.mean()) / np.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
            assert z < 4.0
            ratio = a.var(ddof=1) / b.var(ddof=1)
            assert 0.6 < ratio < 1.7  # chi-square band for 400 samples

    def test_coupling_shrinks_difference_variance(self):
        # A/B: Var[P_f - P_c] under coupled noise is far below the
        # independent-stream difference variance; that is the method's point.
        from dkmlmc.qoi import QoISpec, evaluate_P, phi_sinsum, psi_square

        fine, coarse = self._levels(16)
        N = 1e8
        spec = QoISpec(N=N, T=T, psi=psi_square, phi=phi_sinsum, rho0bar=builtin_density("reg"))
        rho0_f, rho0_c = reg_init(fine), reg_init(coarse)
        rhobar_f = mfl_endpoint(rho0_f, fine)
        rhobar_c = mfl_endpoint(rho0_c, coarse)

        coupled_diff, indep_diff = [], []
        for rep in range(300):
            out_f, out_c = simulate_coupled_pair(
                rho0_f, rho0_c, fine, coarse, NN, N, NoiseStream(43, 1, rep, role="fine")
            )
            coupled_diff.append(
                evaluate_P(out_f, rhobar_f, spec, fine) - evaluate_P(out_c, rhobar_c, spec, coarse)
            )
            ind_f = simulate_path(rho0_f, fine, N, NoiseStream(44, 1, rep))
            ind_c = simulate_path(rho0_c, coarse, N, NoiseStream(45, 0, rep))
            indep_diff.append(
                evaluate_P(ind_f, rhobar_f, spec, fine) - evaluate_P(ind_c, rhobar_c, spec, coarse)
            )
        v_coupled = float(np.var(coupled_diff, ddof=1))
        v_indep = float(np.var(indep_diff, ddof=1))
        assert v_coupled < 0.25 * v_indep
