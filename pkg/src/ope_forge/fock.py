"""Mode-space combinatorics: multi-indices, signed-mode multisets, ladders.

States of the free-field mode space are labeled by multi-indices: finite
maps from angular labels (l, m) to occupation numbers.  The engine works in
the monomial (unnormalized) convention throughout: a creation operator
contributes factor 1, an annihilation operator contributes the occupation
it removes.  This is equivalent to the normalized sqrt-convention under the
rescaling by sqrt(prod a_lm!), which a test verifies on random instances.

Signed-mode multisets record which ladder operators a term applies; their
index sets, symmetry factors and partitions drive the coefficient
assemblies.
"""

from __future__ import annotations

import math
import re
from fractions import Fraction
from itertools import combinations_with_replacement
from typing import Iterable, Iterator, Mapping

AngularPair = tuple[int, int]
SignedMode = tuple[int, int, int]  # (sign, l, m), sign in {+1, -1}


def _check_pair(l: int, m: int) -> None:
    if l < 0 or abs(m) > l:
        raise ValueError(f"malformed mode (l={l}, m={m})")


class MultiIndex:
    """Occupation map (l, m) -> count >= 1, canonical and immutable."""

    __slots__ = ("_occ",)

    def __init__(self, occupations: Mapping[AngularPair, int] | Iterable = ()):
        occ: dict[AngularPair, int] = {}
        items = occupations.items() if isinstance(occupations, Mapping) else occupations
        for (l, m), c in items:
            _check_pair(l, m)
            if c < 0:
                raise ValueError("occupation counts must be nonnegative")
            if c:
                occ[(l, m)] = occ.get((l, m), 0) + c
        self._occ = dict(sorted(occ.items()))

    # -- constructors ------------------------------------------------------

    @classmethod
    def phi_power(cls, p: int) -> "MultiIndex":
        return cls({(0, 0): p} if p else {})

    @classmethod
    def parse(cls, text: str) -> "MultiIndex":
        """Parse the ';'-joined text syntax.

        Entries: "l,m:count", the shorthand "phi^p" (meaning "0,0:p"),
        bare "phi", and "d<l>phi@<m>" for a single derivative mode with an
        explicit m.  "d<l>phi" without m is rejected: files need a fixed m.
        """
        occ: dict[AngularPair, int] = {}

        def add(l: int, m: int, c: int) -> None:
            _check_pair(l, m)
            occ[(l, m)] = occ.get((l, m), 0) + c

        for raw in text.split(";"):
            part = raw.strip()
            if not part or part == "1":
                continue
            if part == "phi":
                add(0, 0, 1)
                continue
            mt = re.fullmatch(r"phi\^(\d+)", part)
            if mt:
                add(0, 0, int(mt.group(1)))
                continue
            mt = re.fullmatch(r"d(\d+)phi@(-?\d+)", part)
            if mt:
                add(int(mt.group(1)), int(mt.group(2)), 1)
                continue
            if re.fullmatch(r"d(\d+)phi", part):
                raise ValueError(f"{part!r} needs an explicit m: write 'l,m:1' or 'd<l>phi@<m>'")
            mt = re.fullmatch(r"(\d+)\s*,\s*(-?\d+)\s*:\s*(\d+)", part)
            if mt:
                add(int(mt.group(1)), int(mt.group(2)), int(mt.group(3)))
                continue
            raise ValueError(f"cannot parse multi-index entry {part!r}")
        return cls(occ)

    @classmethod
    def from_json(cls, data) -> "MultiIndex":
        return cls({(int(l), int(m)): int(c) for l, m, c in data})

    # -- views -------------------------------------------------------------

    @property
    def occupations(self) -> dict[AngularPair, int]:
        return dict(self._occ)

    def count(self, l: int, m: int) -> int:
        return self._occ.get((l, m), 0)

    def support(self) -> list[AngularPair]:
        return list(self._occ)

    def total(self) -> int:
        return sum(self._occ.values())

    def to_json(self) -> list[list[int]]:
        return [[l, m, c] for (l, m), c in self._occ.items()]

    def to_text(self) -> str:
        if not self._occ:
            return "1"
        return ";".join(f"{l},{m}:{c}" for (l, m), c in self._occ.items())

    def shifted(self, l: int, m: int, delta: int) -> "MultiIndex":
        occ = dict(self._occ)
        occ[(l, m)] = occ.get((l, m), 0) + delta
        if occ[(l, m)] < 0:
            raise ValueError("occupation went negative")
        return MultiIndex(occ)

    def __eq__(self, other) -> bool:
        return isinstance(other, MultiIndex) and self._occ == other._occ

    def __hash__(self) -> int:
        return hash(tuple(self._occ.items()))

    def __repr__(self) -> str:
        return f"MultiIndex({self.to_text()!r})"


class Multiset:
    """A multiset of hashable elements (stored as element -> multiplicity)."""

    __slots__ = ("_mult",)

    def __init__(self, items: Mapping | Iterable = ()):
        mult: dict = {}
        if isinstance(items, Mapping):
            for x, c in items.items():
                if c < 0:
                    raise ValueError("multiplicities must be nonnegative")
                if c:
                    mult[x] = mult.get(x, 0) + c
        else:
            for x in items:
                mult[x] = mult.get(x, 0) + 1
        self._mult = dict(sorted(mult.items()))

    @property
    def multiplicities(self) -> dict:
        return dict(self._mult)

    def cardinality(self) -> int:
        return sum(self._mult.values())

    def elements(self) -> Iterator:
        for x, c in self._mult.items():
            for _ in range(c):
                yield x

    def __iter__(self) -> Iterator:
        return self.elements()

    def __len__(self) -> int:
        return self.cardinality()

    def __eq__(self, other) -> bool:
        return isinstance(other, Multiset) and self._mult == other._mult

    def __hash__(self) -> int:
        return hash(tuple(self._mult.items()))

    def __repr__(self) -> str:
        inner = ", ".join(f"{x}x{c}" if c > 1 else f"{x}" for x, c in self._mult.items())
        return f"Multiset({inner})"


ModeMultiset = Multiset


def multiset_ops(A: Multiset, B: Multiset | None, op: str):
    """Appendix-style multiset algebra: sum, union, intersection, cardinality."""
    if op == "cardinality":
        return A.cardinality()
    if B is None:
        raise ValueError(f"op {op!r} needs two multisets")
    ka, kb = A.multiplicities, B.multiplicities
    keys = set(ka) | set(kb)
    if op == "sum":
        return Multiset({x: ka.get(x, 0) + kb.get(x, 0) for x in keys})
    if op == "union":
        return Multiset({x: max(ka.get(x, 0), kb.get(x, 0)) for x in keys})
    if op == "intersection":
        return Multiset({x: min(ka.get(x, 0), kb.get(x, 0)) for x in keys})
    raise ValueError(f"unknown multiset op {op!r}")


# ---------------------------------------------------------------------------
# Ladder action
# ---------------------------------------------------------------------------

def ladder_apply(mode: SignedMode, a: MultiIndex) -> tuple[Fraction, MultiIndex | None]:
    """One ladder step in the monomial convention.

    Creation: factor 1, occupation +1.  Annihilation: factor equal to the
    current occupation, occupation -1; an absent mode annihilates the state
    (factor 0, result None).
    """
    sign, l, m = mode
    _check_pair(l, m)
    if sign >= 0:
        return Fraction(1), a.shifted(l, m, +1)
    occ = a.count(l, m)
    if occ == 0:
        return Fraction(0), None
    return Fraction(occ), a.shifted(l, m, -1)


def dimension(a: MultiIndex) -> Fraction:
    """Canonical dimension: each (l, m) quantum contributes l + 1/2."""
    return sum((Fraction(2 * l + 1, 2) * c for (l, m), c in a.occupations.items()),
               Fraction(0))


def metric_g(a: MultiIndex, b: MultiIndex) -> int:
    """Occupation-difference metric Sum |a_lm - b_lm|."""
    ka, kb = a.occupations, b.occupations
    return sum(abs(ka.get(x, 0) - kb.get(x, 0)) for x in set(ka) | set(kb))


def symmetry_factor(A: Multiset) -> int:
    """Number of distinct orderings: card! / prod(multiplicity!)."""
    n = A.cardinality()
    val = math.factorial(n)
    for c in A.multiplicities.values():
        val //= math.factorial(c)
    return val


def ladder_prefactor(a: MultiIndex, b: MultiIndex, A: Multiset) -> Fraction:
    """Normal-ordered matrix element factor f^b_a[A].

    All annihilators of A act on `a` first, then all creators; the result
    is the product of step factors, or 0 if a step vanishes or the final
    index differs from `b`.
    """
    factor = Fraction(1)
    state: MultiIndex | None = a
    for mode in sorted(A, key=lambda sm: sm[0]):  # annihilators (sign -1) first
        f, state = ladder_apply(mode, state)
        if state is None:
            return Fraction(0)
        factor *= f
    if state != b:
        return Fraction(0)
    return factor


def d_of_multiset(A: Multiset) -> Fraction:
    """Scaling degree of a signed-mode multiset.

    Creation modes add l + 1/2, annihilation modes subtract l + 1/2, and a
    constant 1/2 is subtracted (the weight of the field slot itself).
    """
    d = Fraction(-1, 2)
    for sign, l, m in A:
        d += sign * Fraction(2 * l + 1, 2)
    return d


# ---------------------------------------------------------------------------
# Index sets and partitions
# ---------------------------------------------------------------------------

def _bounded_compositions(total: int, bounds: list[int]) -> Iterator[tuple[int, ...]]:
    """All tuples t with 0 <= t_i <= bounds_i and sum(t) = total."""
    if not bounds:
        if total == 0:
            yield ()
        return
    head = bounds[0]
    for t0 in range(min(head, total) + 1):
        for rest in _bounded_compositions(total - t0, bounds[1:]):
            yield (t0,) + rest


def index_sets(a: MultiIndex, b: MultiIndex, n: int) -> list[Multiset]:
    """All cardinality-n signed-mode multisets with nonzero element a -> b.

    Per mode, the net occupation change fixes creators minus annihilators;
    the leftover (n - g)/2 splits into creator/annihilator pairs bounded by
    the occupations available to annihilate.  Empty when g(a, b) > n or
    g(a, b) + n is odd; a single multiset when g(a, b) = n.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    g = metric_g(a, b)
    if g > n or (g + n) % 2:
        return []
    ka, kb = a.occupations, b.occupations
    modes = sorted(set(ka) | set(kb))
    extra = (n - g) // 2
    bounds = []
    for x in modes:
        net = kb.get(x, 0) - ka.get(x, 0)
        # annihilators = t + max(0, -net) cannot exceed the occupation
        bounds.append(ka.get(x, 0) - max(0, -net))
    out = []
    for t in _bounded_compositions(extra, bounds):
        mult: dict[SignedMode, int] = {}
        for x, tx in zip(modes, t):
            net = kb.get(x, 0) - ka.get(x, 0)
            ann = tx + max(0, -net)
            cre = net + ann
            l, m = x
            if ann:
                mult[(-1, l, m)] = ann
            if cre:
                mult[(+1, l, m)] = cre
        out.append(Multiset(mult))
    return out


def partitions(A: Multiset, sizes: list[int]) -> list[tuple[Multiset, ...]]:
    """All distinct ordered splits of A into parts of the given cardinalities."""
    if any(s < 0 for s in sizes):
        raise ValueError("part sizes must be nonnegative")
    if sum(sizes) != A.cardinality():
        raise ValueError("part sizes must sum to the cardinality")

    def sub_multisets(mult: dict, size: int) -> Iterator[dict]:
        items = list(mult.items())
        bounds = [c for _, c in items]
        for take in _bounded_compositions(size, bounds):
            yield {x: t for (x, _), t in zip(items, take) if t}

    def rec(mult: dict, remaining: list[int]) -> Iterator[tuple[Multiset, ...]]:
        if not remaining:
            yield ()
            return
        for part in sub_multisets(mult, remaining[0]):
            rest = {x: c - part.get(x, 0) for x, c in mult.items() if c - part.get(x, 0) > 0}
            for tail in rec(rest, remaining[1:]):
                yield (Multiset(part),) + tail

    return list(rec(A.multiplicities, list(sizes)))
