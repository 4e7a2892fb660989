import numpy as np
import pytest

from dpim.continuation import FRCBranch, HarmonicBalance, HBProblem, continue_branch, hill_exponents
from dpim.model import builtin_duffing
from dpim.oracle import DuffingMultipleScales, full_hb_problem


def linear_problem(w0=1.0, xi=0.02, F=1.0):
    m = builtin_duffing(w0, xi)
    return m, full_hb_problem(m, np.array([F]))


class TestHarmonicBalance:
    def test_linear_frf(self):
        m, pb = linear_problem()
        hb = HarmonicBalance(pb, H=3)
        br = continue_branch(hb, (0.5, 1.5), stability=False)
        H = 1.0 / np.abs(1.0 - br.omega**2 + 2j * 0.02 * br.omega)
        np.testing.assert_allclose(br.amplitude, H, rtol=1e-8)

    def test_sampling_guard(self):
        _, pb = linear_problem()
        with pytest.raises(ValueError):
            HarmonicBalance(pb, H=5, n_fourier=9)

    def test_time_samples_roundtrip(self):
        _, pb = linear_problem()
        hb = HarmonicBalance(pb, H=4)
        X = np.random.default_rng(0).standard_normal(hb.size)
        np.testing.assert_allclose(hb.from_samples(hb.time_samples(X)), X, atol=1e-13)

    def test_hill_exponents_linear(self):
        m, pb = linear_problem(xi=0.05)
        hb = HarmonicBalance(pb, H=5)
        X = hb.solve_fixed(np.zeros(hb.size), 0.8)
        s = hill_exponents(hb, X, 0.8)
        np.testing.assert_allclose(np.sort(s.real), [-0.05, -0.05], atol=1e-9)

    def test_first_order_problem(self):
        # x' = -a x + cos(tau): amplitude 1/sqrt(a^2 + Omega^2)
        a = 0.3
        pb = HBProblem(1, np.eye(1), lambda x, tau, om: a * x - np.cos(tau)[None, :],
                       lambda x, tau, om: np.full((1, 1, x.shape[1]), a))
        hb = HarmonicBalance(pb, H=2)
        br = continue_branch(hb, (0.2, 2.0), stability=True)
        np.testing.assert_allclose(br.amplitude, 1 / np.sqrt(a**2 + br.omega**2), rtol=1e-9)
        assert all(br.stable)


class TestDuffingBranch:
    def setup_method(self):
        self.ms = DuffingMultipleScales(1.0, 0.01, 0.0, 1.0)

    def _branch(self, K):
        m = builtin_duffing(1.0, 0.01, 0.0, 1.0)
        hb = HarmonicBalance(full_hb_problem(m, np.array([K])), H=5)
        return continue_branch(hb, (0.9, 1.15))

    def test_two_folds_above_threshold(self):
        br = self._branch(3 * self.ms.fold_threshold())
        assert len(br.fold_points()) == 2

    def test_stability_changes_at_folds(self):
        br = self._branch(3 * self.ms.fold_threshold())
        st = np.array([bool(s) for s in br.stable])
        changes = np.flatnonzero(st[1:] != st[:-1])
        assert len(changes) == 2
        folds = np.flatnonzero(br.fold)
        for c, f in zip(changes, folds):
            assert abs(c - f) <= 1
        assert not st[changes[0] + 1 : changes[1] + 1].any()

    def test_no_fold_below_threshold(self):
        br = self._branch(0.5 * self.ms.fold_threshold())
        assert not br.fold.any()
        assert all(br.stable)


def test_csv_roundtrip(tmp_path):
    br = FRCBranch(np.array([1.0, 1.1]), np.array([0.1, 0.2]), np.array([True, False], dtype=object),
                   np.array([False, True]))
    path = br.to_csv(tmp_path / "b.csv")
    assert path.read_text().splitlines()[0] == "omega,amplitude,stable,fold"
    back = FRCBranch.from_csv(path)
    np.testing.assert_array_equal(back.omega, br.omega)
    assert list(back.stable) == [True, False]
    assert list(back.fold) == [False, True]


def test_peak_refinement():
    w = np.linspace(0.9, 1.1, 21)
    a = 1 - 50 * (w - 1.003) ** 2
    br = FRCBranch(w, a, np.array([None] * 21, dtype=object), np.zeros(21, bool))
    om, amp = br.peak()
    assert abs(om - 1.003) < 1e-3
    assert abs(amp - 1.0) < 1e-4


def test_peak_refinement_lopsided_spacing():
    # samples bunched against a turning point must not extrapolate upwards
    w = np.array([0.54478916, 0.54491682, 0.54500254, 0.54504593, 0.54504695, 0.54500597, 0.54492376])
    a = np.array([0.24411101, 0.24556406, 0.24640893, 0.24664362, 0.24626749, 0.24528122, 0.24368689])
    br = FRCBranch(w, a, np.array([None] * 7, dtype=object), np.zeros(7, bool))
    om, amp = br.peak()
    assert a.max() <= amp < a.max() + 1e-4
    assert w[2] <= om <= w[4] + 1e-5
