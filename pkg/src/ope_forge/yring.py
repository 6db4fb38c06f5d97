"""The function ring of radial powers, logs, harmonics, and ladder tags.

Elements are finite sums of terms

    scalar * r^d * (log r)^p * S_{JM}(xhat) [* normal-ordered ladder monomial]

with exact scalars.  The forward Laplacian acts termwise through the
spherical decomposition; its explicit right inverse multiplies by r^2 and a
log-polynomial factor.  The factor's resonant branch raises the log power
by one, the source of every logarithm in the constructed coefficients.

Everything here is at renormalization scale mu = 1; numeric evaluation may
substitute log r -> log(mu r) afterwards (only the cross-check needs it).
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping

from .exactnum import RadicalScalar, ZERO, ONE, Scalar, encode_scalar, decode_scalar
from .fock import MultiIndex, Multiset, ladder_prefactor

AngularPair = tuple[int, int]


class NormalMonomial:
    """A normal-ordered ladder monomial: creations left, annihilations right."""

    __slots__ = ("creations", "annihilations")

    def __init__(self, creations: Iterable[AngularPair] = (), annihilations: Iterable[AngularPair] = ()):
        self.creations: tuple[AngularPair, ...] = tuple(sorted(tuple(x) for x in creations))
        self.annihilations: tuple[AngularPair, ...] = tuple(sorted(tuple(x) for x in annihilations))

    def is_identity(self) -> bool:
        return not self.creations and not self.annihilations

    def as_mode_multiset(self) -> Multiset:
        return Multiset([(+1, l, m) for l, m in self.creations]
                        + [(-1, l, m) for l, m in self.annihilations])

    def __eq__(self, other) -> bool:
        return (isinstance(other, NormalMonomial)
                and self.creations == other.creations
                and self.annihilations == other.annihilations)

    def __hash__(self) -> int:
        return hash((self.creations, self.annihilations))

    def __repr__(self) -> str:
        cre = "".join(f"b+{x}" for x in self.creations) or ""
        ann = "".join(f"b{x}" for x in self.annihilations) or ""
        return f"NormalMonomial({cre}{ann or 'id' if not cre else ann})"


IDENTITY = NormalMonomial()

TermKey = tuple[int, int, int, int, NormalMonomial]  # (d, p, J, M, ladder)


class RingElement:
    """Canonical finite sum of ring terms, keyed by (d, p, J, M, ladder)."""

    __slots__ = ("_terms",)

    def __init__(self, terms: Mapping[TermKey, Scalar] | Iterable = ()):
        data: dict[TermKey, Scalar] = {}
        items = terms.items() if isinstance(terms, Mapping) else terms
        for key, scalar in items:
            d, p, J, M, ladder = key
            if p < 0 or J < 0 or abs(M) > J:
                raise ValueError(f"malformed ring term key {key}")
            if isinstance(scalar, RadicalScalar) and scalar.is_zero():
                continue
            if key in data:
                data[key] = data[key] + scalar
                if isinstance(data[key], RadicalScalar) and data[key].is_zero():
                    del data[key]
            else:
                data[key] = scalar
        self._terms = dict(sorted(data.items(), key=lambda kv: _term_sort_key(kv[0])))

    @classmethod
    def single(cls, scalar: Scalar, d: int, p: int = 0, J: int = 0, M: int = 0,
               ladder: NormalMonomial = IDENTITY) -> "RingElement":
        return cls({(d, p, J, M, ladder): scalar})

    @property
    def terms(self) -> dict[TermKey, Scalar]:
        return dict(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def __add__(self, other: "RingElement") -> "RingElement":
        merged = list(self._terms.items()) + list(other._terms.items())
        return RingElement(merged)

    def __sub__(self, other: "RingElement") -> "RingElement":
        return self + other.scale(RadicalScalar.from_rational(-1))

    def scale(self, scalar) -> "RingElement":
        if isinstance(scalar, (int, Fraction)):
            scalar = RadicalScalar.from_rational(scalar)
        if isinstance(scalar, RadicalScalar) and scalar.is_zero():
            return RingElement()
        return RingElement({k: scalar * v for k, v in self._terms.items()})

    def __eq__(self, other) -> bool:
        if not isinstance(other, RingElement):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self) -> int:
        return hash(tuple(self._terms.items()))

    def map_keys(self, fn) -> "RingElement":
        return RingElement([(fn(k), v) for k, v in self._terms.items()])

    def __repr__(self) -> str:
        if not self._terms:
            return "RingElement(0)"
        bits = []
        for (d, p, J, M, ladder), s in self._terms.items():
            piece = f"({s})"
            if d:
                piece += f"*r^{d}"
            if p:
                piece += f"*log^{p}"
            if (J, M) != (0, 0):
                piece += f"*S[{J},{M}]"
            if not ladder.is_identity():
                piece += f"*{ladder!r}"
            bits.append(piece)
        return " + ".join(bits)


def _term_sort_key(key: TermKey):
    d, p, J, M, ladder = key
    return (d, p, J, M, ladder.creations, ladder.annihilations)


# ---------------------------------------------------------------------------
# Log polynomials
# ---------------------------------------------------------------------------

class LogPolynomial:
    """Finite polynomial in log r with exact coefficients."""

    __slots__ = ("_coeffs",)

    def __init__(self, coefficients: Mapping[int, Scalar] | Iterable = ()):
        data: dict[int, Scalar] = {}
        items = coefficients.items() if isinstance(coefficients, Mapping) else coefficients
        for p, c in items:
            if isinstance(c, (int, Fraction)):
                c = RadicalScalar.from_rational(c)
            if p < 0:
                raise ValueError("log powers must be nonnegative")
            if p in data:
                data[p] = data[p] + c
            else:
                data[p] = c
        self._coeffs = {p: c for p, c in sorted(data.items())
                        if not (isinstance(c, RadicalScalar) and c.is_zero())}

    @property
    def coefficients(self) -> dict[int, Scalar]:
        return dict(self._coeffs)

    def coefficient(self, p: int) -> Scalar:
        return self._coeffs.get(p, ZERO)

    def degree(self) -> int:
        return max(self._coeffs, default=0)

    def is_zero(self) -> bool:
        return not self._coeffs

    def __eq__(self, other) -> bool:
        return isinstance(other, LogPolynomial) and self._coeffs == other._coeffs

    def evaluate_float(self, log_r: float) -> float:
        return math.fsum(float(c) * log_r**p for p, c in self._coeffs.items())

    def __repr__(self) -> str:
        if not self._coeffs:
            return "0"
        return " + ".join(f"({c})*log^{p}" if p else f"({c})"
                          for p, c in self._coeffs.items())


# ---------------------------------------------------------------------------
# Laplacian and its right inverse
# ---------------------------------------------------------------------------

def laplacian(e: RingElement, D: int = 3) -> RingElement:
    """Forward Laplacian, termwise in the spherical decomposition.

    box[r^d (log r)^p S_JM] = (d-J)(d+D-2+J) r^{d-2} (log r)^p S_JM
                            + p(2d+D-2) r^{d-2} (log r)^{p-1} S_JM
                            + p(p-1) r^{d-2} (log r)^{p-2} S_JM
    """
    out: list[tuple[TermKey, Scalar]] = []
    for (d, p, J, M, ladder), s in e.terms.items():
        alpha = (d - J) * (d + D - 2 + J)
        if alpha:
            out.append(((d - 2, p, J, M, ladder), s * Fraction(alpha)))
        if p:
            beta = 2 * d + D - 2
            if beta:
                out.append(((d - 2, p - 1, J, M, ladder), s * Fraction(p * beta)))
        if p >= 2:
            out.append(((d - 2, p - 2, J, M, ladder), s * Fraction(p * (p - 1))))
    return RingElement(out)


@lru_cache(maxsize=None)
def d_factor(d: int, J: int, p: int = 0, D: int = 3) -> LogPolynomial:
    """The inverse-Laplacian weight, returned as the full product
    (log r)^p * D^(p)(d, J, r) expanded in log powers.

    Resonant branch iff (d-J)(d+D-2+J) = 0 (the radial power r^{d-2} S_JM is
    annihilated by the forward operator); there the log power rises by one
    and beta = 2d+D-2 enters (beta != 0 whenever the resonance condition
    holds at integer d for D in {3,4,5}).  Otherwise the double-sum branch
    in inverse powers of (d-J) and (d+D-2+J).
    """
    if J < 0 or p < 0:
        raise ValueError("J and p must be nonnegative")
    fact = math.factorial
    coeffs: dict[int, Fraction] = {}
    if (d - J) * (d + D - 2 + J) == 0:
        beta = 2 * d + D - 2
        assert beta != 0, "resonant term with vanishing beta cannot occur at integer d"
        for i in range(p + 1):
            c = Fraction((-1) ** i * fact(p), fact(p + 1 - i) * beta ** (i + 1))
            coeffs[p + 1 - i] = coeffs.get(p + 1 - i, Fraction(0)) + c
    else:
        u, v = d - J, d + D - 2 + J
        for i in range(p + 1):
            for n in range(i + 1):
                c = Fraction((-1) ** i * fact(p),
                             fact(p - i) * u ** (n + 1) * v ** (i - n + 1))
                coeffs[p - i] = coeffs.get(p - i, Fraction(0)) + c
    return LogPolynomial({q: RadicalScalar.from_rational(c) for q, c in coeffs.items() if c})


def inverse_laplacian(e: RingElement, D: int = 3) -> RingElement:
    """The explicit right inverse: r^d (log r)^p S_JM gains r^2 and the
    d_factor log polynomial at degree d+2.  Exact round trip with
    `laplacian` by construction of the two branches."""
    out: list[tuple[TermKey, Scalar]] = []
    for (d, p, J, M, ladder), s in e.terms.items():
        poly = d_factor(d + 2, J, p, D)
        for q, c in poly.coefficients.items():
            out.append(((d + 2, q, J, M, ladder), s * c))
    return RingElement(out)


# ---------------------------------------------------------------------------
# Ladder algebra
# ---------------------------------------------------------------------------

def normal_order_product(a: NormalMonomial, b: NormalMonomial) -> list[tuple[NormalMonomial, int]]:
    """Wick expansion of the concatenation a*b.

    Annihilations of `a` contract against creations of `b` in all matched
    ways; k contractions on a label with x annihilators and y creators come
    with multiplicity C(x,k) C(y,k) k!.
    """
    ann_counts: dict[AngularPair, int] = {}
    for x in a.annihilations:
        ann_counts[x] = ann_counts.get(x, 0) + 1
    cre_counts: dict[AngularPair, int] = {}
    for x in b.creations:
        cre_counts[x] = cre_counts.get(x, 0) + 1
    shared = sorted(set(ann_counts) & set(cre_counts))

    results: list[tuple[NormalMonomial, int]] = []

    def rec(idx: int, contracted: dict[AngularPair, int], mult: int) -> None:
        if idx == len(shared):
            creations = list(a.creations)
            for x, n in cre_counts.items():
                creations.extend([x] * (n - contracted.get(x, 0)))
            annihilations = list(b.annihilations)
            for x, n in ann_counts.items():
                annihilations.extend([x] * (n - contracted.get(x, 0)))
            results.append((NormalMonomial(creations, annihilations), mult))
            return
        x = shared[idx]
        nx, ny = ann_counts[x], cre_counts[x]
        for k in range(min(nx, ny) + 1):
            ways = math.comb(nx, k) * math.comb(ny, k) * math.factorial(k)
            rec(idx + 1, {**contracted, x: k}, mult * ways)

    rec(0, {}, 1)
    return results


def matrix_element(e: RingElement, a: MultiIndex, b: MultiIndex) -> RingElement:
    """Replace ladder tags by their monomial-convention matrix elements.

    Ladder-free terms survive only between equal indices (identity
    operator); the output carries scalar terms only.
    """
    out: list[tuple[TermKey, Scalar]] = []
    for (d, p, J, M, ladder), s in e.terms.items():
        if ladder.is_identity():
            if a == b:
                out.append(((d, p, J, M, IDENTITY), s))
            continue
        f = ladder_prefactor(a, b, ladder.as_mode_multiset())
        if f:
            out.append(((d, p, J, M, IDENTITY), s * f))
    return RingElement(out)


# ---------------------------------------------------------------------------
# JSON encoding
# ---------------------------------------------------------------------------

def encode_ring_element(e: RingElement) -> dict:
    terms = []
    for (d, p, J, M, ladder), s in e.terms.items():
        obj = {"scalar": encode_scalar(s), "d": d, "p": p, "J": J, "M": M}
        if not ladder.is_identity():
            obj["ladder"] = {"create": [[l, m] for l, m in ladder.creations],
                             "annihilate": [[l, m] for l, m in ladder.annihilations]}
        terms.append(obj)
    return {"terms": terms}


def decode_ring_element(data: Mapping) -> RingElement:
    items = []
    for t in data["terms"]:
        ladder = IDENTITY
        if "ladder" in t:
            ladder = NormalMonomial([tuple(x) for x in t["ladder"].get("create", [])],
                                    [tuple(x) for x in t["ladder"].get("annihilate", [])])
        items.append(((int(t["d"]), int(t["p"]), int(t["J"]), int(t["M"]), ladder),
                      decode_scalar(t["scalar"])))
    return RingElement(items)
