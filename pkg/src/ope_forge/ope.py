"""Coefficient constructors for the iterative operator product expansion.

A coefficient C_n^c_{b a}(x) is the order-n piece of the expansion of the
vertex at b acting between the mode states a and c.  At zeroth order it is
a pure ladder matrix element; at higher orders the field equation converts
each order-(n-1) coefficient of the phi^5 vertex into a radial Poisson
problem whose canonical solution is encoded by ``yring.d_factor``.  The
constructors below assemble those solutions from three ingredients:

* index multisets ``fock.index_sets`` enumerating the transferred modes,
* coupling tensors ``angular.product_tensor`` carrying the angular algebra,
* remainder operators ``special.r1_phi2`` / ``special.r1_phi3`` for the
  contracted low-transfer blocks that the recursion alone cannot reach.

Every value is a ``yring.RingElement`` whose terms all sit at the identity
ladder monomial: the operator content is fixed by the query labels and only
scalars times ``r^d (log r)^p S_JM`` survive.  Results are exact whenever
every contributing block is; a coefficient touching the q = 2 remainder
block degrades to guarded high-precision numerics and is flagged ``approx``.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb, factorial
from typing import Callable, Iterable, Iterator, Optional

from .angular import clebsch_gordan, product_tensor, product_tensor_canonical
from .exactnum import ONE, ZERO, ApproxScalar, RadicalScalar, Scalar
from .fock import (
    MultiIndex,
    Multiset,
    d_of_multiset,
    dimension,
    index_sets,
    ladder_prefactor,
    metric_g,
    partitions,
    symmetry_factor,
)
from .special import RemainderValue, UnsupportedError, r1_phi2, r1_phi3
from .yring import IDENTITY, LogPolynomial, RingElement, d_factor, encode_ring_element

__all__ = [
    "CoefficientQuery",
    "OpeCoefficient",
    "UnsupportedCoefficientError",
    "KnownRemainderFacts",
    "KNOWN_REMAINDER_FACTS",
    "delta0",
    "delta1",
    "lambda1",
    "c0_phik",
    "c0_general",
    "c1_phi",
    "c1_phi2",
    "c1_phik",
    "c2_phi",
    "cn_max",
    "vanishes",
    "structural_checks",
    "coefficient",
    "coefficient_report",
    "clear_cache",
]


class UnsupportedCoefficientError(UnsupportedError):
    """A query whose assembly needs a remainder operator we do not have."""


# ---------------------------------------------------------------------------
# queries and packaged results


@dataclass(frozen=True)
class CoefficientQuery:
    """Labels of one coefficient: order n, left power k, states a and c."""

    n: int
    k: int
    a: MultiIndex
    c: MultiIndex

    def __post_init__(self) -> None:
        if self.n < 0:
            raise ValueError("order n must be nonnegative")
        if self.k < 1:
            raise ValueError("left power k must be positive")

    def radial_degree(self) -> Fraction:
        return dimension(self.c) - dimension(self.a) - Fraction(self.k, 2)

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "a": self.a.to_text(),
            "c": self.c.to_text(),
        }


@dataclass(frozen=True)
class OpeCoefficient:
    """A constructed coefficient together with its exactness status."""

    value: RingElement
    status: str
    query: Optional[CoefficientQuery] = None

    def to_json(self) -> dict:
        return {
            "query": self.query.to_json() if self.query else None,
            "value": encode_ring_element(self.value),
            "status": self.status,
        }


def _status_of(value: RingElement) -> str:
    if value.is_zero():
        return "zero"
    if any(isinstance(s, ApproxScalar) for s in value.terms.values()):
        return "approx"
    return "exact"


def _package(query: Optional[CoefficientQuery], value: RingElement) -> OpeCoefficient:
    return OpeCoefficient(value=value, status=_status_of(value), query=query)


class _TermBag:
    """Accumulates (p, J, M) -> scalar at one uniform radial degree."""

    def __init__(self, degree: Fraction):
        self.degree = Fraction(degree)
        self._data: dict[tuple[int, int, int], Scalar] = {}

    def add(self, p: int, J: int, M: int, scalar: Scalar) -> None:
        if isinstance(scalar, RadicalScalar) and scalar.is_zero():
            return
        key = (p, J, M)
        cur = self._data.get(key)
        self._data[key] = scalar if cur is None else cur + scalar

    def element(self) -> RingElement:
        terms = {}
        for (p, J, M), s in self._data.items():
            if isinstance(s, RadicalScalar) and s.is_zero():
                continue
            terms[(int(self.degree), p, J, M, IDENTITY)] = s
        if terms and self.degree.denominator != 1:
            raise ValueError("nonzero coefficient at half-integer radial degree")
        return RingElement(terms)


# ---------------------------------------------------------------------------
# multiset bookkeeping helpers


def _frac(q: Fraction | int) -> RadicalScalar:
    return RadicalScalar.from_rational(q)


def _homogeneity(modes: Multiset) -> int:
    """Radial degree of the product of vertex mode functions in the multiset."""
    h = 0
    for (sign, l, _m), mult in modes.multiplicities.items():
        h += mult * (l if sign > 0 else -(l + 1))
    return h


def _annihilator_count(modes: Multiset) -> int:
    return sum(m for (sign, _l, _mm), m in modes.multiplicities.items() if sign < 0)


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def _poly_product(polys: Iterable[LogPolynomial]) -> LogPolynomial:
    acc: dict[int, Scalar] = {0: ONE}
    for poly in polys:
        nxt: dict[int, Scalar] = {}
        for p1, c1 in acc.items():
            for p2, c2 in poly.coefficients.items():
                key = p1 + p2
                term = c1 * c2
                nxt[key] = term if key not in nxt else nxt[key] + term
        acc = nxt
    return LogPolynomial(acc)


# ---------------------------------------------------------------------------
# the three block factors of the recursion


def delta0(modes: Multiset, J: int) -> RadicalScalar:
    """Weight of the bare mode multiset at total angular momentum J.

    Symmetry factor times the coupling-tensor entry; the tensor of a fixed
    multiset is supported on a single magnetic label, so the J-slice has at
    most one entry.
    """
    total = ZERO
    for (JJ, _M), w in product_tensor_canonical(modes).items():
        if JJ == J:
            total = total + w
    return symmetry_factor(modes) * total


def delta1(modes: Multiset, J: int) -> LogPolynomial:
    """First-order block: the bare weight pushed through one radial inversion."""
    if modes.cardinality() != 5:
        raise ValueError("first-order blocks carry exactly five modes")
    base = delta0(modes, J)
    if base.is_zero():
        return LogPolynomial()
    degree = d_of_multiset(modes)
    if degree.denominator != 1:
        raise ValueError("five-mode multisets have integer degree")
    poly = d_factor(int(degree), J)
    return LogPolynomial({p: base * cp for p, cp in poly.coefficients.items()})


def lambda1(power: int, modes: Multiset, J: int) -> RemainderValue:
    """Contracted first-order block for a phi^power insertion.

    The multiset holds the uncontracted modes (four for power 2, three for
    power 3); the contracted lines are resummed inside the remainder
    operators, indexed by the multiset's homogeneity and annihilator count.
    """
    if power not in (2, 3):
        raise ValueError("contracted blocks exist for powers 2 and 3 only")
    need = 4 if power == 2 else 3
    if modes.cardinality() != need:
        raise ValueError(f"power-{power} blocks carry exactly {need} modes")
    q = _annihilator_count(modes)
    if power == 3 and q in (1, 2):
        raise UnsupportedCoefficientError(
            "unsupported: needs the remainder operator (R_1)_{phi^3} "
            "with mixed ladder direction (q in {1, 2})"
        )
    weight = delta0(modes, J)
    if weight.is_zero():
        return RemainderValue(log_coeff=ZERO, const_part=ZERO)
    if power == 2:
        rem = r1_phi2(_homogeneity(modes), J, q)
        weight = 5 * weight
    else:
        rem = r1_phi3(_homogeneity(modes), J, q)
    return RemainderValue(
        log_coeff=weight * rem.log_coeff, const_part=weight * rem.const_part
    )


def _block_delta1(modes: Multiset) -> dict[tuple[int, int], LogPolynomial]:
    degree = d_of_multiset(modes)
    s = symmetry_factor(modes)
    out = {}
    for (J, M), w in product_tensor_canonical(modes).items():
        base = s * w
        if base.is_zero():
            continue
        poly = d_factor(int(degree), J)
        out[(J, M)] = LogPolynomial({p: base * cp for p, cp in poly.coefficients.items()})
    return out


def _block_lambda(power: int, modes: Multiset) -> dict[tuple[int, int], LogPolynomial]:
    q = _annihilator_count(modes)
    if power == 3 and q in (1, 2):
        raise UnsupportedCoefficientError(
            "unsupported: needs the remainder operator (R_1)_{phi^3} "
            "with mixed ladder direction (q in {1, 2})"
        )
    h = _homogeneity(modes)
    s = symmetry_factor(modes) * (5 if power == 2 else 1)
    out = {}
    for (J, M), w in product_tensor_canonical(modes).items():
        base = s * w
        if base.is_zero():
            continue
        rem = r1_phi2(h, J, q) if power == 2 else r1_phi3(h, J, q)
        if rem.is_zero():
            continue
        coeffs: dict[int, Scalar] = {}
        if not (isinstance(rem.const_part, RadicalScalar) and rem.const_part.is_zero()):
            coeffs[0] = base * rem.const_part
        if not (isinstance(rem.log_coeff, RadicalScalar) and rem.log_coeff.is_zero()):
            coeffs[1] = base * rem.log_coeff
        if coeffs:
            out[(J, M)] = LogPolynomial(coeffs)
    return out


def _spectator(modes: Multiset) -> dict[tuple[int, int], RadicalScalar]:
    s = symmetry_factor(modes)
    out = {}
    for (J, M), w in product_tensor_canonical(modes).items():
        val = s * w
        if not val.is_zero():
            out[(J, M)] = val
    return out


# ---------------------------------------------------------------------------
# line assembler shared by the order-1 and order-2 constructors


def _pair_line(
    bag: _TermBag,
    a: MultiIndex,
    c: MultiIndex,
    total_card: int,
    block_size: int,
    factor_fn: Callable[[Multiset], dict[tuple[int, int], LogPolynomial]],
    prefactor: Fraction,
    outer_degree: Optional[int] = None,
) -> None:
    """One assembly line: a block factor coupled to a spectator multiset.

    With ``outer_degree`` unset the block polynomial multiplies directly
    (first order); otherwise each log grade p of the block is reinverted
    through ``d_factor(outer_degree, J, p)`` (second order).
    """
    for modes in index_sets(a, c, total_card):
        f = ladder_prefactor(a, c, modes) * prefactor
        if f == 0:
            continue
        if block_size == total_card:
            splits = [(modes, None)]
        else:
            splits = partitions(modes, [block_size, total_card - block_size])
        for part1, part2 in splits:
            blocks = factor_fn(part1)
            if not blocks:
                continue
            spect = {(0, 0): ONE} if part2 is None else _spectator(part2)
            for (j1, m1), poly in blocks.items():
                for (j2, m2), w2 in spect.items():
                    pair = product_tensor([(-1, j1, m1), (-1, j2, m2)])
                    for (J, M), tj in pair.items():
                        base = _frac(f) * tj * w2
                        if base.is_zero():
                            continue
                        if outer_degree is None:
                            for p, cp in poly.coefficients.items():
                                bag.add(p, J, M, base * cp)
                        else:
                            for p, cp in poly.coefficients.items():
                                outer = d_factor(outer_degree, J, p)
                                for pp, cop in outer.coefficients.items():
                                    bag.add(pp, J, M, base * cp * cop)


# ---------------------------------------------------------------------------
# order 0


def c0_phik(a: MultiIndex, c: MultiIndex, k: int) -> OpeCoefficient:
    """Bare matrix element of the phi^k vertex between the states a and c."""
    query = CoefficientQuery(0, k, a, c)
    bag = _TermBag(query.radial_degree())
    for modes in index_sets(a, c, k):
        f = ladder_prefactor(a, c, modes)
        if f == 0:
            continue
        w = f * symmetry_factor(modes)
        for (J, M), t in product_tensor_canonical(modes).items():
            bag.add(0, J, M, _frac(w) * t)
    return _package(query, bag.element())


def _double_factorial(l: int) -> int:
    out = 1
    for i in range(1, l + 1):
        out *= 2 * i - 1
    return out


def _beta(l: int) -> RadicalScalar:
    # leading coefficient of the solid harmonic along the stretched axis
    sq = Fraction(factorial(2 * l), (2 ** l * factorial(l)) ** 2)
    return (-1) ** l * RadicalScalar.sqrt_rational(sq)


@lru_cache(maxsize=None)
def _creation_weight(l: int, L: int) -> RadicalScalar:
    """m-independent part of a derivative factor creating a mode with L >= l.

    Normalized so the diagonal L = l case reproduces the bare ladder weight;
    the residual polynomial identity fixes the rest through one stretched
    coupling coefficient.
    """
    falling = Fraction(factorial(L), factorial(L - l))
    num = _beta(l) * _beta(L) * _frac(falling * 2 ** l)
    den = _beta(L - l) * clebsch_gordan(L, L, l, -l, L - l, L - l)
    return (-1) ** l * (num / den) / _frac(_double_factorial(l))


@lru_cache(maxsize=None)
def _annihilation_weight(l: int, L: int) -> RadicalScalar:
    """m-independent part of a derivative factor annihilating a mode."""
    rat = Fraction(comb(L + l, l), _double_factorial(l))
    for i in range(L + 1, L + l + 1):
        rat *= 2 * i - 1
    sq = Fraction(factorial(2 * l) * factorial(2 * L), factorial(2 * l + 2 * L))
    return ((-1) ** l * rat) * RadicalScalar.sqrt_rational(sq)


def _slot_choices(
    l: int, m: int, a: MultiIndex, c: MultiIndex
) -> list[tuple[tuple[int, int, int], RadicalScalar, tuple[int, int, int]]]:
    """All single-mode actions of one derivative factor.

    Returns (signed ladder mode, scalar weight, signed residual mode); the
    residual carries the leftover angular dependence of the factor.
    """
    out = []
    for (L, mu), _cnt in a.occupations.items():
        cg = clebsch_gordan(L, mu, l, m, L + l, mu + m)
        w = _annihilation_weight(l, L) * cg
        if not w.is_zero():
            out.append(((-1, L, mu), w, (-1, L + l, mu + m)))
    for (L, mu), _cnt in c.occupations.items():
        if L < l or abs(m - mu) > L - l:
            continue
        cg = clebsch_gordan(L, -mu, l, m, L - l, m - mu)
        w = _creation_weight(l, L) * ((-1) ** (m & 1)) * cg
        if not w.is_zero():
            out.append(((1, L, mu), w, (1, L - l, mu - m)))
    return out


def c0_general(a: MultiIndex, b: MultiIndex, c: MultiIndex) -> OpeCoefficient:
    """Bare matrix element for a general (derivative-decorated) left slot b.

    Each factor of b expands into ladder actions on single modes with exact
    radical weights; the per-factor residual harmonics recouple through the
    product tensor.  Reduces to :func:`c0_phik` when b is a pure power and
    to the identity when b is empty.
    """
    occs = b.occupations
    if not occs:
        value = RingElement.single(ONE, 0) if a == c else RingElement()
        return _package(None, value)
    if set(occs) == {(0, 0)}:
        return c0_phik(a, c, b.count(0, 0))

    slots: list[tuple[int, int]] = []
    for (l, m), cnt in sorted(occs.items()):
        slots.extend([(l, m)] * cnt)
    choices = [_slot_choices(l, m, a, c) for l, m in slots]

    support = set(a.occupations) | set(c.occupations)
    bag = _TermBag(dimension(c) - dimension(a) - dimension(b))
    for combo in itertools.product(*choices):
        used: dict[tuple[int, int, int], int] = {}
        for mode, _w, _res in combo:
            used[mode] = used.get(mode, 0) + 1
        balanced = all(
            a.count(l, m)
            - used.get((-1, l, m), 0)
            + used.get((1, l, m), 0)
            == c.count(l, m)
            for (l, m) in support
        )
        if not balanced:
            continue
        ladder = Multiset(used)
        f = ladder_prefactor(a, c, ladder)
        if f == 0:
            continue
        weight = _frac(f)
        for _mode, w, _res in combo:
            weight = weight * w
        residual = [res for _mode, _w, res in combo]
        for (J, M), t in product_tensor(residual).items():
            bag.add(0, J, M, weight * t)
    return _package(None, bag.element())


# ---------------------------------------------------------------------------
# order 1


def c1_phi(a: MultiIndex, c: MultiIndex) -> OpeCoefficient:
    """First-order coefficient of the basic field insertion."""
    query = CoefficientQuery(1, 1, a, c)
    if vanishes(1, 1, a, c):
        return _package(query, RingElement())
    bag = _TermBag(query.radial_degree())
    _pair_line(bag, a, c, 5, 5, _block_delta1, Fraction(1))
    return _package(query, bag.element())


def c1_phi2(a: MultiIndex, c: MultiIndex) -> OpeCoefficient:
    """First-order coefficient of the phi^2 insertion.

    The diagonal g = 0 sector cancels identically between the two assembly
    lines, so it short-circuits to zero alongside the parity-forbidden and
    over-transferred sectors.
    """
    query = CoefficientQuery(1, 2, a, c)
    g = metric_g(a, c)
    if g > 6 or g % 2 == 1 or g == 0:
        return _package(query, RingElement())
    bag = _TermBag(query.radial_degree())
    _pair_line(bag, a, c, 6, 5, _block_delta1, Fraction(2))
    _pair_line(bag, a, c, 4, 4, lambda ms: _block_lambda(2, ms), Fraction(1))
    return _package(query, bag.element())


def c1_phik(a: MultiIndex, c: MultiIndex, k: int) -> OpeCoefficient:
    """First-order coefficient of a phi^k insertion for k in {3, 4, 5}.

    Transfers at or below g = k - 2 retain fully contracted blocks whose
    remainder operators are not part of the computed set and raise.
    """
    if k not in (3, 4, 5):
        raise ValueError("direct first-order construction covers k in {3, 4, 5}")
    query = CoefficientQuery(1, k, a, c)
    if vanishes(1, k, a, c):
        return _package(query, RingElement())
    g = metric_g(a, c)
    if g <= k - 2:
        raise UnsupportedCoefficientError(
            f"unsupported: transfer g = {g} at k = {k} needs the remainder "
            f"operator (R_1)_{{phi^{k}}}"
        )
    bag = _TermBag(query.radial_degree())
    _pair_line(bag, a, c, k + 4, 5, _block_delta1, Fraction(k))
    _pair_line(bag, a, c, k + 2, 4, lambda ms: _block_lambda(2, ms), Fraction(comb(k, 2)))
    _pair_line(bag, a, c, k, 3, lambda ms: _block_lambda(3, ms), Fraction(comb(k, 3)))
    return _package(query, bag.element())


# ---------------------------------------------------------------------------
# order 2


def c2_phi(a: MultiIndex, c: MultiIndex) -> OpeCoefficient:
    """Second-order coefficient of the basic field insertion.

    Each first-order block enters graded by log power p and is reinverted
    through ``d_factor(d, J, p)`` at the query's radial degree.  Transfers
    g <= 3 keep unknown second-order remainders and raise.
    """
    query = CoefficientQuery(2, 1, a, c)
    if vanishes(2, 1, a, c):
        return _package(query, RingElement())
    g = metric_g(a, c)
    if g <= 3:
        raise UnsupportedCoefficientError(
            f"unsupported: transfer g = {g} at second order needs the "
            "remainder operators (R_1)_{phi^4} and (R_2)_{phi^k}"
        )
    degree = query.radial_degree()
    if degree.denominator != 1:
        raise ValueError("second-order queries sit at integer radial degree")
    bag = _TermBag(degree)
    outer = int(degree)
    _pair_line(bag, a, c, 9, 5, _block_delta1, Fraction(5), outer)
    _pair_line(bag, a, c, 7, 4, lambda ms: _block_lambda(2, ms), Fraction(10), outer)
    _pair_line(bag, a, c, 5, 3, lambda ms: _block_lambda(3, ms), Fraction(10), outer)
    return _package(query, bag.element())


# ---------------------------------------------------------------------------
# maximal transfer at any order


@lru_cache(maxsize=None)
def _delta_n_spectrum(
    modes: Multiset, n: int
) -> tuple[tuple[tuple[int, int], LogPolynomial], ...]:
    """Graded block of order n on a pair-free multiset of 4n + 1 modes.

    The recursion splits the multiset into five ordered sub-blocks of orders
    summing to n - 1, multiplies their log polynomials, recouples the
    angular labels, and applies one radial inversion per log grade.
    """
    if n == 0:
        s = symmetry_factor(modes)
        return tuple(
            ((J, M), LogPolynomial({0: s * w}))
            for (J, M), w in product_tensor_canonical(modes).items()
            if not (s * w).is_zero()
        )
    if modes.cardinality() != 4 * n + 1:
        raise ValueError("order-n blocks carry exactly 4n + 1 modes")
    degree = d_of_multiset(modes)
    acc: dict[tuple[int, int], dict[int, Scalar]] = {}
    for comp in _compositions(n - 1, 5):
        sizes = [4 * ni + 1 for ni in comp]
        for blocks in partitions(modes, sizes):
            spectra = [_delta_n_spectrum(blk, ni) for blk, ni in zip(blocks, comp)]
            if any(not s for s in spectra):
                continue
            for chosen in itertools.product(*spectra):
                sub = [(-1, J, M) for (J, M), _poly in chosen]
                poly = _poly_product(pl for _jm, pl in chosen)
                for (J, M), tj in product_tensor(sub).items():
                    slot = acc.setdefault((J, M), {})
                    for p, cp in poly.coefficients.items():
                        outer = d_factor(int(degree), J, p)
                        for pp, cop in outer.coefficients.items():
                            term = tj * cp * cop
                            slot[pp] = term if pp not in slot else slot[pp] + term
    out = []
    for (J, M), coeffs in acc.items():
        poly = LogPolynomial(coeffs)
        if not poly.is_zero():
            out.append(((J, M), poly))
    return tuple(out)


def cn_max(a: MultiIndex, c: MultiIndex, n: int, k: int) -> OpeCoefficient:
    """Order-n coefficient at the maximal transfer g = 4n + k.

    The single pair-free index multiset splits into k ordered blocks of
    orders summing to n; no contracted remainder can appear, so the result
    is exact at every order.
    """
    query = CoefficientQuery(n, k, a, c)
    g = metric_g(a, c)
    if g != 4 * n + k:
        raise ValueError("maximal-transfer construction needs g(a, c) = 4n + k")
    sets = index_sets(a, c, g)
    bag = _TermBag(query.radial_degree())
    if sets:
        (modes,) = sets
        f = ladder_prefactor(a, c, modes)
        if f != 0:
            for comp in _compositions(n, k):
                sizes = [4 * ni + 1 for ni in comp]
                for blocks in partitions(modes, sizes):
                    spectra = [
                        _delta_n_spectrum(blk, ni) for blk, ni in zip(blocks, comp)
                    ]
                    if any(not s for s in spectra):
                        continue
                    for chosen in itertools.product(*spectra):
                        sub = [(-1, J, M) for (J, M), _poly in chosen]
                        poly = _poly_product(pl for _jm, pl in chosen)
                        for (J, M), tj in product_tensor(sub).items():
                            base = _frac(f) * tj
                            if base.is_zero():
                                continue
                            for p, cp in poly.coefficients.items():
                                bag.add(p, J, M, base * cp)
    return _package(query, bag.element())


# ---------------------------------------------------------------------------
# structure predicates and stored facts


def vanishes(n: int, k: int, a: MultiIndex, c: MultiIndex) -> bool:
    """Whether the coefficient is zero by transfer bound or mode parity."""
    g = metric_g(a, c)
    return g > 4 * n + k or (g + k) % 2 == 1


def structural_checks(
    coeff: OpeCoefficient, query: Optional[CoefficientQuery] = None
) -> dict:
    """Validate log-power and grading constraints, reporting violations.

    Every term must sit at the identity ladder monomial and at the radial
    degree fixed by the query labels, with log power at most the order n.
    """
    query = query or coeff.query
    violations: list[str] = []
    expected = query.radial_degree() if query else None
    for (d, p, J, M, ladder), _s in coeff.value.terms.items():
        if ladder != IDENTITY:
            violations.append(f"residual ladder content at (d={d}, p={p}, J={J})")
        if query is not None and p > query.n:
            violations.append(
                f"log power {p} exceeds the order {query.n} at (d={d}, J={J}, M={M})"
            )
        if expected is not None and Fraction(d) != expected:
            violations.append(
                f"radial degree {d} breaks the uniform grading {expected}"
            )
    return {"ok": not violations, "violations": violations}


@dataclass(frozen=True)
class RemainderFact:
    """One externally determined matrix element, stored verbatim."""

    operator: str
    upper: str
    lower: str
    value: str
    opaque_symbols: tuple[str, ...] = ()


class KnownRemainderFacts:
    """Registry of remainder matrix elements taken as given, never recomputed."""

    def __init__(self, facts: Iterable[RemainderFact]):
        self._facts = tuple(facts)

    @property
    def facts(self) -> tuple[RemainderFact, ...]:
        return self._facts

    def lookup(self, operator: str, upper: str, lower: str) -> Optional[RemainderFact]:
        for fact in self._facts:
            if (fact.operator, fact.upper, fact.lower) == (operator, upper, lower):
                return fact
        return None


KNOWN_REMAINDER_FACTS = KnownRemainderFacts(
    [
        RemainderFact(
            operator="(R_1)_{phi^4}",
            upper="phi^3",
            lower="phi",
            value="0",
        ),
        RemainderFact(
            operator="(R_1)_{phi^4}",
            upper="phi^2 phi_{1m}",
            lower="phi",
            value="-160 * S^{1m} * (log r + c)",
            opaque_symbols=("c",),
        ),
    ]
)


# ---------------------------------------------------------------------------
# dispatch and cache


_CACHE: dict[CoefficientQuery, OpeCoefficient] = {}
_CACHE_LOCK = threading.Lock()


def clear_cache() -> None:
    with _CACHE_LOCK:
        _CACHE.clear()
    _delta_n_spectrum.cache_clear()


def _dispatch(query: CoefficientQuery) -> OpeCoefficient:
    n, k, a, c = query.n, query.k, query.a, query.c
    if vanishes(n, k, a, c):
        return _package(query, RingElement())
    if n == 0:
        return c0_phik(a, c, k)
    if n == 1 and k == 1:
        return c1_phi(a, c)
    if n == 1 and k == 2:
        return c1_phi2(a, c)
    if n == 1 and k in (3, 4, 5):
        return c1_phik(a, c, k)
    if n == 2 and k == 1:
        return c2_phi(a, c)
    if metric_g(a, c) == 4 * n + k:
        return cn_max(a, c, n, k)
    raise UnsupportedCoefficientError(
        f"unsupported: order n = {n}, power k = {k} below the maximal transfer "
        f"needs remainder operators outside the computed set"
    )


def coefficient(n: int, k: int, a: MultiIndex, c: MultiIndex) -> OpeCoefficient:
    """Construct (or fetch from cache) the coefficient for the given labels.

    Constructors are pure, so a lost cache race only repeats work; reads
    take the lock briefly and never hold it during assembly.
    """
    query = CoefficientQuery(n, k, a, c)
    with _CACHE_LOCK:
        hit = _CACHE.get(query)
    if hit is not None:
        return hit
    result = _dispatch(query)
    with _CACHE_LOCK:
        _CACHE[query] = result
    return result


def coefficient_report(n: int, k: int, a: MultiIndex, c: MultiIndex) -> dict:
    """JSON-ready report; unsupported queries become a status, not an error."""
    try:
        return coefficient(n, k, a, c).to_json()
    except UnsupportedError as exc:
        return {
            "query": CoefficientQuery(n, k, a, c).to_json(),
            "value": None,
            "status": "unsupported",
            "detail": str(exc),
        }
