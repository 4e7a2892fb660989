import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpim.polyalgebra import (
    TruncationRule,
    conjugate_index,
    derivative_index,
    forcing_order,
    kept_cells,
    monomial_count,
    monomial_index,
    monomials_of_order,
    product_index,
    truncation_keep,
    unit,
)


class TestCount:
    def test_examples(self):
        assert monomial_count(3, 1) == 4
        assert monomial_count(2, 2) == 6
        for d in range(1, 6):
            assert monomial_count(1, d) == d + 1

    def test_overflow(self):
        with pytest.raises(OverflowError):
            monomial_count(200, 200)

    def test_bad_args(self):
        with pytest.raises(ValueError):
            monomial_count(0, 2)

    @given(st.integers(1, 6), st.integers(1, 6))
    def test_length_matches_count(self, p, n_vars):
        nf = min(2, n_vars)
        if n_vars == 1:
            assert len(monomials_of_order(p, 1, 0)) == 1
            return
        assert len(monomials_of_order(p, n_vars, nf)) == monomial_count(p, n_vars - 1)


class TestOrdering:
    def test_order1(self):
        assert monomials_of_order(1, 4) == [unit(i, 4) for i in range(4)]

    def test_single_forcing(self):
        assert monomials_of_order(2, 2, n_forcing=1) == [(2, 0), (1, 1), (0, 2)]

    @given(st.integers(1, 6), st.integers(2, 6))
    def test_forcing_power_monotone(self, p, n_vars):
        monos = monomials_of_order(p, n_vars)
        fp = [forcing_order(a) for a in monos]
        assert fp == sorted(fp)

    @given(st.integers(1, 6), st.integers(2, 6))
    def test_roundtrip(self, p, n_vars):
        for k, a in enumerate(monomials_of_order(p, n_vars)):
            assert monomial_index(a) == (p, k)

    @pytest.mark.parametrize("n_vars", [3, 4, 5, 6])
    def test_dependency_acyclic(self, n_vars):
        n_master = n_vars - 2
        for p in range(1, 7):
            for k, a in enumerate(monomials_of_order(p, n_vars)):
                for c in (n_vars - 2, n_vars - 1):
                    if a[c] == 0:
                        continue
                    for s in range(n_master):
                        b = list(a)
                        b[c] -= 1
                        b[s] += 1
                        assert monomial_index(b)[1] < k


class TestTruncation:
    def test_table_counts(self):
        assert len(kept_cells(TruncationRule("asymptotic", 6, 0, m=3))) == 12
        assert len(kept_cells(TruncationRule("coupled", 6, 3))) == 22
        assert len(kept_cells(TruncationRule("disjoint", 6, 3))) == 28

    def test_invalid(self):
        with pytest.raises(ValueError):
            TruncationRule("coupled", 3, 4)
        with pytest.raises(ValueError):
            TruncationRule("nonsense", 3, 1)
        with pytest.raises(ValueError):
            TruncationRule("coupled", 0, 0)

    @given(st.integers(1, 7), st.integers(0, 7), st.lists(st.integers(0, 4), min_size=4, max_size=4))
    @settings(max_examples=200)
    def test_coupled_is_intersection(self, o, o_eps, alpha):
        o_eps = min(o_eps, o)
        c = truncation_keep(alpha, TruncationRule("coupled", o, o_eps))
        d = truncation_keep(alpha, TruncationRule("disjoint", o, o_eps))
        a = truncation_keep(alpha, TruncationRule("asymptotic", o, o_eps, m=1))
        assert c == (d and a)

    def test_max_order(self):
        assert TruncationRule("disjoint", 6, 3).max_order == 9
        assert TruncationRule("coupled", 6, 3).max_order == 6


class TestCalculus:
    def test_derivative(self):
        a = (2, 0, 1)
        assert derivative_index(a, 0) == (2, (1, 0, 1))
        assert derivative_index(a, 1) == (0, None)
        assert derivative_index((0, 3), 1) == (3, (0, 2))

    def test_product(self):
        assert product_index((1, 0), (1, 0)) == (2, 0)
        assert product_index((1, 1), (0, 1)) == (1, 2)
        assert sum(product_index((2, 0, 0), (1, 1, 1))) == 5
        with pytest.raises(ValueError):
            product_index((1,), (1, 0))

    def test_conjugate(self):
        assert conjugate_index((2, 1, 1, 0), 1) == (1, 2, 0, 1)
        assert conjugate_index((1, 0, 0, 2, 0, 0), 2) == (0, 2, 1, 0, 0, 0)
