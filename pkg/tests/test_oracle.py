import numpy as np
import pytest

from dpim.model import builtin_arch2, builtin_duffing, random_rayleigh_model
from dpim.oracle import DuffingMultipleScales, HBConfig, hbm_full, modal_observable, time_integrate_full

ONE = np.array([1.0])


class TestMultipleScales:
    def test_cubic_gamma(self):
        assert DuffingMultipleScales(1.0, 0.0, 0.0, 1.0).gamma == pytest.approx(3 / 8)

    def test_quadratic_softens(self):
        assert DuffingMultipleScales(1.0, 0.0, 0.4, 0.0).gamma < 0

    def test_linear_zero(self):
        assert DuffingMultipleScales(1.0, 0.01).gamma == 0.0

    def test_primary_peak_on_backbone(self):
        ms = DuffingMultipleScales(1.0, 0.01, 0.0, 1.0)
        K = 0.004
        a_peak = K / (2 * ms.mu)
        roots = ms.primary(K, float(ms.backbone(a_peak)))
        assert np.isclose(roots.max(), a_peak, rtol=1e-6)

    def test_fold_threshold_counts_roots(self):
        ms = DuffingMultipleScales(1.0, 0.01, 0.0, 1.0)
        Kc = ms.fold_threshold()
        grid = np.linspace(0.98, 1.05, 2001)
        assert max(len(ms.primary(1.2 * Kc, w)) for w in grid) == 3
        assert max(len(ms.primary(0.8 * Kc, w)) for w in grid) == 1

    def test_superharmonic2_scales_with_g(self):
        a1 = DuffingMultipleScales(1.0, 0.005, 0.2, 0.0).superharmonic2(0.05, 0.5)
        a2 = DuffingMultipleScales(1.0, 0.005, 0.4, 0.0).superharmonic2(0.05, 0.5)
        assert np.isclose(a2 / a1, 2.0)


class TestHBFull:
    def test_linear_matches_frf(self):
        m = random_rayleigh_model(seed=2, g_scale=0.0, h_scale=0.0)
        F = m.forcing_spec(1.0).force_vector(m)
        w = np.sqrt(np.linalg.eigvalsh(np.linalg.solve(m.M, m.K)))
        obs = modal_observable(m, 1)
        br = hbm_full(m, F, (0.8 * w[0], 1.2 * w[0]), HBConfig(harmonics=3), observable=obs)
        ref = [abs(obs @ np.linalg.solve(m.K - om**2 * m.M + 1j * om * m.C, F)) for om in br.omega]
        np.testing.assert_allclose(br.amplitude, ref, rtol=1e-8)

    def test_duffing_peak_matches_multiple_scales(self):
        ms = DuffingMultipleScales(1.0, 0.01, 0.0, 1.0)
        K = 0.003
        br = hbm_full(builtin_duffing(1.0, 0.01, 0.0, 1.0), K * ONE, (0.95, 1.05), observable=ONE)
        a_peak = K / (2 * ms.mu)
        om, amp = br.peak()
        assert abs(amp / a_peak - 1) < 0.01
        assert abs(om / ms.backbone(a_peak) - 1) < 0.01

    def test_zero_forcing_gives_zero_branch(self):
        br = hbm_full(builtin_duffing(1.0, 0.01, 0.0, 1.0), 0 * ONE, (0.9, 1.1), observable=ONE)
        assert np.all(br.amplitude == 0)
        assert br.omega[-1] >= 1.1

    def test_harmonic_convergence(self):
        m = builtin_duffing(1.0, 0.01, 0.0, 1.0)
        peaks = [hbm_full(m, 0.01 * ONE, (0.9, 1.15), HBConfig(harmonics=H), observable=ONE).peak()[1]
                 for H in (7, 9)]
        assert abs(peaks[0] / peaks[1] - 1) < 0.005

    def test_sampling_guard(self):
        with pytest.raises(ValueError):
            HBConfig(harmonics=9, n_fourier=35).samples()


class TestTimeIntegration:
    def test_linear_frf(self):
        xi, om = 0.02, 0.9
        amp = time_integrate_full(builtin_duffing(1.0, xi), ONE, om, n_periods=300, observable=ONE)
        assert abs(amp * abs(1 - om**2 + 2j * xi * om) - 1) < 0.005

    def test_agrees_with_hb_off_fold(self):
        m = builtin_duffing(1.0, 0.02, 0.0, 1.0)
        br = hbm_full(m, 0.01 * ONE, (0.85, 0.95), observable=ONE)
        om = br.omega[len(br) // 2]
        amp = time_integrate_full(m, 0.01 * ONE, om, n_periods=250, observable=ONE)
        hb_amp = np.interp(om, br.omega, br.amplitude)
        assert abs(amp / hb_amp - 1) < 0.01

    def test_two_dof_agrees_with_hb(self):
        m = builtin_arch2()
        F = m.forcing_spec(1.0).force_vector(m)
        br = hbm_full(m, F, (0.93, 0.98))
        om = br.omega[len(br) // 2]
        amp = time_integrate_full(m, F, om, n_periods=900)
        assert abs(amp / np.interp(om, br.omega, br.amplitude) - 1) < 0.01

    @pytest.mark.filterwarnings("ignore:response not settled")
    def test_zero_forcing_decays(self):
        amp = time_integrate_full(builtin_duffing(1.0, 0.05), 0 * ONE, 1.0, n_periods=100, observable=ONE,
                                  x0=np.array([0.5, 0.0]))
        assert amp < 1e-6

    def test_unsettled_warning(self):
        with pytest.warns(RuntimeWarning, match="not settled"):
            time_integrate_full(builtin_duffing(1.0, 0.001), ONE, 0.9, n_periods=30, measure_periods=5,
                                observable=ONE)
