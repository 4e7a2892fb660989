import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpim.model import (
    ForcingSpec,
    ForcingTerm,
    ModelError,
    PolyTensor,
    builtin_arch2,
    builtin_duffing,
    builtin_vk_beam,
    epsilon_load,
    export_csv,
    parse_model,
    random_rayleigh_model,
    rayleigh,
    undamped_modes,
)

GOOD = """
# two masses
[M]
1 1 1.0
2 2 2.0
[K]
1 1 3.0
1 2 -1.0
2 1 -1.0
2 2 2.0
[C]
1 1 0.01
[G]
1 1 2 0.5
[H]
2 2 2 2 0.25
[FORCING]
vector 1 0.3
vector 2 0.1
"""


class TestParser:
    def test_good_file(self):
        m = parse_model(GOOD)
        assert m.N == 2
        assert m.M[1, 1] == 2.0
        u = np.array([1.0, 2.0])
        np.testing.assert_allclose(m.G(u, u), [0.5 * 2 * 1, 0.0])
        np.testing.assert_allclose(m.H(u, u, u), [0.0, 0.25 * 8])
        np.testing.assert_allclose(m.forcing_spec(1.0).force_vector(m), [0.3, 0.1])

    def test_error_has_line_number(self):
        bad = GOOD.replace("2 2 2 2 0.25", "2 2 2 0.25")
        with pytest.raises(ModelError, match="line 16"):
            parse_model(bad)

    def test_dimension_mismatch(self):
        with pytest.raises(ModelError, match="dimension mismatch"):
            parse_model(GOOD.replace("1 1 2 0.5", "1 1 3 0.5"))

    def test_unknown_section(self):
        with pytest.raises(ModelError, match="unknown section"):
            parse_model("[Q]\n1 1 1\n")

    def test_missing_mass(self):
        with pytest.raises(ModelError):
            parse_model("[K]\n1 1 1\n")

    def test_nonsymmetric_rejected(self):
        with pytest.raises(ModelError):
            parse_model(GOOD.replace("2 1 -1.0", "2 1 -2.0"))

    def test_export_csv(self, tmp_path):
        files = export_csv(parse_model(GOOD), tmp_path)
        names = {p.name for p in files}
        assert {"M.csv", "K.csv", "G.csv", "H.csv", "F.csv"} <= names
        assert np.loadtxt(tmp_path / "M.csv", delimiter=",")[1, 1] == 2.0


class TestPolyTensor:
    def test_symmetrised_value(self):
        G = PolyTensor(2, 2, [[0, 0, 1]], [1.0])
        np.testing.assert_allclose(G(np.array([1.0, 0]), np.array([0, 1.0])), [0.5, 0])
        np.testing.assert_allclose(G(np.array([2.0, 3.0]), np.array([2.0, 3.0])), [6.0, 0])

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 1000))
    def test_jacobian_matches_finite_difference(self, seed):
        rng = np.random.default_rng(seed)
        n = 3
        idx = rng.integers(0, n, size=(12, 4))
        H = PolyTensor(n, 3, idx, rng.standard_normal(12))
        u = rng.standard_normal(n)
        J = H.jacobian(u)
        h = 1e-6
        for k in range(n):
            e = np.zeros(n)
            e[k] = h
            fd = (H(u + e, u + e, u + e) - H(u - e, u - e, u - e)) / (2 * h)
            np.testing.assert_allclose(J[:, k], fd, atol=1e-7)

    def test_batched_matches_columns(self):
        rng = np.random.default_rng(1)
        G = PolyTensor(3, 2, rng.integers(0, 3, (8, 3)), rng.standard_normal(8))
        U = rng.standard_normal((3, 5)) + 1j * rng.standard_normal((3, 5))
        out = G(U, U)
        for t in range(5):
            np.testing.assert_allclose(out[:, t], G(U[:, t], U[:, t]))

    def test_jacobian_batched(self):
        rng = np.random.default_rng(2)
        H = PolyTensor(2, 3, rng.integers(0, 2, (6, 4)), rng.standard_normal(6))
        U = rng.standard_normal((2, 4))
        J = H.jacobian(U)
        for t in range(4):
            np.testing.assert_allclose(J[:, :, t], H.jacobian(U[:, t]))

    def test_dense_roundtrip(self):
        H = PolyTensor(2, 3, [[0, 0, 1, 1]], [3.0])
        D = H.dense()
        assert np.isclose(D.sum(), 3.0)
        assert np.isclose(D[0, 1, 0, 1], 1.0)

    def test_bad_index(self):
        with pytest.raises(ModelError):
            PolyTensor(2, 2, [[0, 0, 2]], [1.0])


class TestBuiltins:
    def test_duffing(self):
        m = builtin_duffing(2.0, 0.05, 0.3, 1.0)
        assert m.K[0, 0] == 4.0
        assert np.isclose(m.C[0, 0], 0.2)

    def test_arch2_loads(self):
        m = builtin_arch2()
        assert m.N == 2
        w, _ = undamped_modes(m.M, m.K)
        np.testing.assert_allclose(w, [1.0, 2.5])
        assert m.forcing

    def test_random_model_is_valid(self):
        m = random_rayleigh_model(seed=4)
        m.validate()
        assert m.N == 3

    def test_beam_frequencies_follow_clamped_roots(self):
        m = builtin_vk_beam(4)
        w, _ = undamped_modes(m.M, m.K)
        # clamped-clamped roots beta_k L
        roots = np.array([4.730040745, 7.853204624, 10.99560784, 14.13716549])
        np.testing.assert_allclose(w / w[0], (roots / roots[0]) ** 2, rtol=1e-6)

    def test_beam_mass_normalised_and_hardening(self):
        m = builtin_vk_beam(3)
        np.testing.assert_allclose(m.M, np.eye(3), atol=1e-8)
        assert m.H(np.array([1.0, 0, 0]), np.array([1.0, 0, 0]), np.array([1.0, 0, 0]))[0] > 0
        assert not m.G

    def test_beam_symmetric_modes_decouple_from_antisymmetric(self):
        m = builtin_vk_beam(4)
        u = np.array([1.0, 0.0, 0.0, 0.0])
        out = m.H(u, u, u)
        # even modes (antisymmetric shapes) receive no cubic force from mode 1 alone
        assert abs(out[1]) < 1e-10 * abs(out[0])
        assert abs(out[3]) < 1e-10 * abs(out[0])

    def test_rayleigh_and_forcing(self):
        m = builtin_duffing(1.0, 0.0, 0.0, 1.0)
        m2 = m.with_damping(rayleigh(m.M, m.K, 0.1, 0.0))
        assert m2.C[0, 0] == 0.1
        F = ForcingSpec((ForcingTerm("mode", 2.0, 1),), 1.0).force_vector(m2)
        np.testing.assert_allclose(F, [2.0])

    def test_epsilon_load(self):
        assert np.isclose(epsilon_load(2.0, 0.5, 10.0, 2.0), 0.025)
