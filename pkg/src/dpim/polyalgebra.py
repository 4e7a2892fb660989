"""Multi-index bookkeeping for polynomials in the augmented normal coordinates.

A monomial is stored as a tuple of non-negative integer exponents over
``n_vars`` coordinates. In the parametrisation engine the coordinates are
ordered as the 2n master coordinates followed by the two forcing variables
``z+`` and ``z-``; the forcing variables are always the trailing entries.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement
from typing import Iterator, Optional, Sequence

MultiIndex = tuple

__all__ = [
    "MultiIndex",
    "TruncationRule",
    "monomial_count",
    "monomials_of_order",
    "monomial_index",
    "forcing_order",
    "master_order",
    "truncation_keep",
    "kept_cells",
    "derivative_index",
    "product_index",
    "unit",
    "conjugate_index",
    "iter_kept",
]


def monomial_count(p: int, d: int) -> int:
    """Number of monomials of total order ``p`` in ``d + 1`` variables.

    Parameters
    ----------
    p : int
        Total order, ``p >= 1``.
    d : int
        Number of variables minus one, ``d >= 1``.

    Returns
    -------
    int
        ``(p + d)! / (p! d!)``.

    Raises
    ------
    OverflowError
        If the count does not fit in a platform integer.
    """
    if p < 1 or d < 1:
        raise ValueError(f"monomial_count needs p >= 1 and d >= 1, got p={p}, d={d}")
    value = math.comb(p + d, d)
    if value > sys.maxsize:
        raise OverflowError(f"monomial count for p={p}, d={d} exceeds the platform integer range")
    return value


def forcing_order(alpha: Sequence[int], n_forcing: int = 2) -> int:
    """Sum of the exponents carried by the trailing forcing variables."""
    if n_forcing == 0:
        return 0
    return int(sum(alpha[-n_forcing:]))


def master_order(alpha: Sequence[int], n_forcing: int = 2) -> int:
    """Sum of the exponents carried by the master coordinates."""
    return int(sum(alpha[: len(alpha) - n_forcing]))


def _sort_key(alpha: MultiIndex, n_forcing: int):
    # ascending forcing power, then descending exponent tuple (z1 before z2)
    return (forcing_order(alpha, n_forcing), tuple(-a for a in alpha))


@lru_cache(maxsize=None)
def _table(p: int, n_vars: int, n_forcing: int):
    monos = []
    for combo in combinations_with_replacement(range(n_vars), p):
        expo = [0] * n_vars
        for c in combo:
            expo[c] += 1
        monos.append(tuple(expo))
    monos.sort(key=lambda a: _sort_key(a, n_forcing))
    lookup = {a: k for k, a in enumerate(monos)}
    return tuple(monos), lookup


def monomials_of_order(p: int, n_vars: int, n_forcing: int = 2) -> list[MultiIndex]:
    """Ordered list of all monomials of total order ``p``.

    The list is sorted by ascending power of the last ``n_forcing``
    variables; ties are broken so that larger leading exponents come first
    (so ``e1`` precedes ``e2``). With this ordering every monomial
    ``alpha - e_forcing + e_master`` of the same order appears before
    ``alpha``.

    Parameters
    ----------
    p : int
        Total order, ``p >= 1``.
    n_vars : int
        Number of coordinates.
    n_forcing : int, optional
        Number of trailing forcing variables, by default 2.

    Returns
    -------
    list of tuple
    """
    if p < 1 or n_vars < 1:
        raise ValueError(f"monomials_of_order needs p >= 1 and n_vars >= 1, got p={p}, n_vars={n_vars}")
    if not 0 <= n_forcing <= n_vars:
        raise ValueError(f"n_forcing must lie in [0, n_vars], got {n_forcing}")
    return list(_table(p, n_vars, n_forcing)[0])


def monomial_index(alpha: Sequence[int], n_forcing: int = 2) -> tuple[int, int]:
    """Return ``(p, k)`` such that ``monomials_of_order(p, len(alpha))[k] == alpha``."""
    alpha = tuple(int(a) for a in alpha)
    if any(a < 0 for a in alpha):
        raise ValueError(f"negative exponent in {alpha}")
    p = sum(alpha)
    if p < 1:
        raise ValueError("the constant monomial is not indexed")
    return p, _table(p, len(alpha), n_forcing)[1][alpha]


def unit(s: int, n_vars: int) -> MultiIndex:
    """Exponent vector of the coordinate ``s`` (0-based)."""
    e = [0] * n_vars
    e[s] = 1
    return tuple(e)


def derivative_index(alpha: Sequence[int], s: int) -> tuple[int, Optional[MultiIndex]]:
    """Power rule: ``d z^alpha / d z_s = c * z^alpha'``.

    Returns ``(alpha[s], alpha - e_s)`` when ``alpha[s] > 0`` and ``(0, None)``
    otherwise. ``s`` is 0-based.
    """
    c = int(alpha[s])
    if c == 0:
        return 0, None
    out = list(alpha)
    out[s] -= 1
    return c, tuple(out)


def product_index(alpha1: Sequence[int], alpha2: Sequence[int]) -> MultiIndex:
    """Exponent vector of ``z^alpha1 * z^alpha2``."""
    if len(alpha1) != len(alpha2):
        raise ValueError("monomials have different numbers of variables")
    return tuple(int(a) + int(b) for a, b in zip(alpha1, alpha2))


def conjugate_index(alpha: Sequence[int], n_master: int) -> MultiIndex:
    """Swap each master pair ``(k, k + n)`` and the two forcing variables."""
    a = list(alpha)
    n = n_master
    out = a[n : 2 * n] + a[:n]
    if len(a) == 2 * n + 2:
        out += [a[2 * n + 1], a[2 * n]]
    elif len(a) != 2 * n:
        raise ValueError(f"length {len(a)} inconsistent with {n} master modes")
    return tuple(out)


@dataclass(frozen=True)
class TruncationRule:
    """Which ``(master order, forcing order)`` cells are retained.

    Attributes
    ----------
    mode : str
        ``"asymptotic"``, ``"coupled"`` or ``"disjoint"``.
    o : int
        Maximum order in the master coordinates (total order for coupled).
    o_eps : int
        Maximum order in the forcing variables (unused by asymptotic mode).
    m : int
        Weight of the forcing order in asymptotic mode.
    """

    mode: str = "coupled"
    o: int = 3
    o_eps: int = 1
    m: int = 1

    def __post_init__(self):
        if self.mode not in ("asymptotic", "coupled", "disjoint"):
            raise ValueError(f"unknown truncation mode {self.mode!r}")
        if self.o < 1:
            raise ValueError(f"o must be >= 1, got {self.o}")
        if self.o_eps < 0:
            raise ValueError(f"o_eps must be >= 0, got {self.o_eps}")
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if self.mode == "coupled" and self.o_eps > self.o:
            raise ValueError(f"coupled mode requires o_eps <= o, got o_eps={self.o_eps} > o={self.o}")

    def keep_cell(self, p_bar: int, p_tilde: int) -> bool:
        if self.mode == "asymptotic":
            return p_bar + self.m * p_tilde <= self.o
        if self.mode == "coupled":
            return p_bar + p_tilde <= self.o and p_tilde <= self.o_eps
        return p_bar <= self.o and p_tilde <= self.o_eps

    @property
    def max_order(self) -> int:
        """Largest total order holding at least one kept monomial."""
        if self.mode == "disjoint":
            return self.o + self.o_eps
        return self.o

    def describe(self) -> str:
        if self.mode == "asymptotic":
            return f"asymptotic(m={self.m}), o={self.o}"
        return f"{self.mode}, O(z^{self.o}, eps^{self.o_eps})"


def truncation_keep(alpha: Sequence[int], rule: TruncationRule, n_forcing: int = 2) -> bool:
    """Whether monomial ``alpha`` is retained under ``rule``."""
    return rule.keep_cell(master_order(alpha, n_forcing), forcing_order(alpha, n_forcing))


def kept_cells(rule: TruncationRule) -> list[tuple[int, int]]:
    """All kept ``(p_bar, p_tilde)`` cells, the empty cell ``(0, 0)`` included."""
    top = rule.max_order
    return [
        (pb, pt)
        for pt in range(top + 1)
        for pb in range(top + 1)
        if rule.keep_cell(pb, pt)
    ]


def iter_kept(rule: TruncationRule, n_vars: int, n_forcing: int = 2) -> Iterator[tuple[int, int, MultiIndex]]:
    """Yield ``(p, k, alpha)`` for every kept monomial in processing order."""
    for p in range(1, rule.max_order + 1):
        for k, alpha in enumerate(monomials_of_order(p, n_vars, n_forcing)):
            if truncation_keep(alpha, rule, n_forcing):
                yield p, k, alpha
