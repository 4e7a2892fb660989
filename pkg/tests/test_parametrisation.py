import numpy as np
import pytest

from dpim.model import builtin_duffing, random_rayleigh_model
from dpim.numerics import Backend
from dpim.parametrisation import (
    ParametrisationError,
    coefficient_mismatch,
    compute_parametrisation,
    invariance_residual,
    load_json,
    resonance_set,
    residual_slope,
    save_json,
)
from dpim.polyalgebra import TruncationRule, conjugate_index
from dpim.spectral import solve_real_mode_basis


def duffing_param(o=3, o_eps=0, g=0.0, h=1.0, xi=0.0, E=0.0, omega=1.0, style="cnf", mode="coupled", **kw):
    m = builtin_duffing(1.0, xi, g, h)
    b = solve_real_mode_basis(m, [1], backend=kw.pop("backend", None))
    rule = TruncationRule(mode, o, o_eps)
    return m, compute_parametrisation(m, b, np.array([E]), omega, style=style, rule=rule, **kw)


def backbone_gamma(p):
    return float(np.imag(p.coefficient((2, 1, 0, 0)).f[0])) / 4


class TestBackbone:
    def test_cubic(self):
        _, p = duffing_param(3)
        assert abs(backbone_gamma(p) - 3 / 8) < 1e-12

    @pytest.mark.parametrize("g", [0.3, 0.7])
    def test_quadratic_softening(self, g):
        _, p = duffing_param(3, g=g)
        expected = 3 / 8 - 5 * g**2 / 12
        assert abs(backbone_gamma(p) - expected) < 1e-10 * abs(expected)

    def test_cnf_drops_nonresonant_terms(self):
        _, p = duffing_param(3)
        kept = {a for a, _ in p.reduced_terms()}
        assert kept == {(1, 0, 0, 0), (0, 1, 0, 0), (2, 1, 0, 0), (1, 2, 0, 0)}

    def test_graph_keeps_more_terms(self):
        _, cnf = duffing_param(3, g=0.5)
        _, graph = duffing_param(3, g=0.5, style="graph")
        assert len(graph.reduced_terms()) > len(cnf.reduced_terms())


class TestForcing:
    def test_nonresonant_linear_response(self):
        xi, Om, E = 0.01, 0.6, 0.2
        _, p = duffing_param(3, 1, xi=xi, E=E, omega=Om)
        e = p.coefficient((0, 0, 1, 0))
        expected = E / (1 - Om**2 + 2j * xi * Om)
        assert abs(e.psi[0] - expected) < 1e-12 * abs(expected)
        assert abs(e.ups[0] - 1j * Om * expected) < 1e-12 * abs(expected)
        assert np.all(e.f == 0)

    def test_primary_resonance_moves_forcing_to_dynamics(self):
        _, p = duffing_param(3, 1, xi=0.01, E=0.2, omega=1.0)
        assert abs(p.coefficient((0, 0, 1, 0)).f[0]) > 0.05

    def test_superharmonic_resonance_detected(self):
        m = builtin_duffing(1.0, 0.002, 0.0, 1.0)
        b = solve_real_mode_basis(m, [1])
        res = resonance_set((0, 0, 3, 0), b, 1 / 3, "cnf")
        assert 0 in res.members
        assert not resonance_set((0, 0, 2, 0), b, 1 / 3, "cnf").members

    def test_legacy_mode(self):
        _, p = duffing_param(5, 0, xi=0.01, E=0.1, style="graph")
        assert p.legacy_forcing
        assert (0, 0, 1, 0) not in p.entries
        kept = {a for a, _ in p.reduced_terms()}
        assert (0, 0, 1, 0) in kept and (0, 0, 0, 1) in kept
        assert p.stats["legacy_forcing"]


def test_conjugate_symmetry():
    m = random_rayleigh_model(seed=7)
    b = solve_real_mode_basis(m, [1, 2])
    p = compute_parametrisation(m, b, m.forcing_spec(1.3).shape(m), 1.3, rule=TruncationRule("coupled", 3, 1))
    n = p.n
    for a in p.order:
        c = conjugate_index(a, n)
        np.testing.assert_allclose(p.entries[c].psi, np.conj(p.entries[a].psi), atol=1e-13)
        np.testing.assert_allclose(np.roll(p.entries[c].f, n), np.conj(p.entries[a].f), atol=1e-13)


class TestSolverEquivalence:
    def test_cnf_fast_path(self):
        _, ref = duffing_param(7, g=0.4, xi=0.02)
        _, fast = duffing_param(7, g=0.4, xi=0.02, solver="cnf")
        assert coefficient_mismatch(ref, fast) < 1e-10

    @pytest.mark.parametrize("style", ["graph", "cnf", "rnf"])
    @pytest.mark.parametrize("masters", [[1], [1, 2]])
    def test_modal_oracle(self, style, masters):
        m = random_rayleigh_model(seed=11)
        b = solve_real_mode_basis(m, masters)
        E = m.forcing_spec(0.8).shape(m)
        rule = TruncationRule("coupled", 4, 2)
        ref = compute_parametrisation(m, b, E, 0.8, style=style, rule=rule)
        alt = compute_parametrisation(m, b, E, 0.8, style=style, rule=rule, solver="modal")
        assert coefficient_mismatch(ref, alt) < 1e-8

    def test_cnf_solver_requires_single_master(self):
        m = random_rayleigh_model(seed=1)
        b = solve_real_mode_basis(m, [1, 2])
        with pytest.raises(ParametrisationError):
            compute_parametrisation(m, b, np.zeros(3), 1.0, rule=TruncationRule("coupled", 3, 0), solver="cnf")


class TestResidual:
    def test_slope_order3(self):
        m, p = duffing_param(3, g=0.5, xi=0.01)
        rho = np.logspace(-3, -1, 7)
        res = invariance_residual(p, m, [(np.array([r]), 0.0, 0.0) for r in rho])
        assert 3.5 <= residual_slope(rho, res) <= 4.5

    def test_forced_residual_decreases_with_eps_order(self):
        out = []
        for oe in (1, 3):
            m, p = duffing_param(3, oe, mode="disjoint", xi=0.01, E=0.5, omega=0.5)
            out.append(invariance_residual(p, m, [(np.array([0.0]), 0.3, 0.05)])[0])
        assert out[1] < 0.1 * out[0]

    def test_extended_precision_matches(self):
        _, ref = duffing_param(5, g=0.3, xi=0.01)
        _, ext = duffing_param(5, g=0.3, xi=0.01, backend=Backend(30))
        assert coefficient_mismatch(ref, ext) < 1e-12


class TestJson:
    def test_roundtrip(self, tmp_path):
        _, p = duffing_param(5, 2, g=0.3, xi=0.01, E=0.1, omega=0.9)
        path = save_json(p, tmp_path / "p.json")
        q = load_json(path)
        assert q.order == p.order
        assert coefficient_mismatch(p, q) == 0.0
        assert q.rule == p.rule

    def test_bit_identical(self, tmp_path):
        _, p1 = duffing_param(5, 2, g=0.3, xi=0.01, E=0.1, omega=0.9)
        _, p2 = duffing_param(5, 2, g=0.3, xi=0.01, E=0.1, omega=0.9)
        a = save_json(p1, tmp_path / "a.json").read_bytes()
        b = save_json(p2, tmp_path / "b.json").read_bytes()
        assert a == b

    def test_schema_version_checked(self, tmp_path):
        _, p = duffing_param(3)
        path = save_json(p, tmp_path / "p.json")
        path.write_text(path.read_text().replace('"schema_version": 1', '"schema_version": 99'))
        with pytest.raises(ValueError, match="schema"):
            load_json(path)
