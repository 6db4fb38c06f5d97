"""Exact scalar arithmetic: rationals, quadratic radicals, guarded numerics.

Every coefficient the engine constructs lives in the ring

    Q[sqrt(n) : n squarefree]

of finite rational combinations of square roots.  A value is stored as a
map from squarefree positive integers to rational coefficients, with the
key 1 holding the purely rational part.  Because the square roots of
distinct squarefree integers are linearly independent over Q, equality on
the canonical form is exact equality.

Quantities with no closed rational form (hypergeometric finite parts) are
carried as :class:`ApproxScalar`, a high-precision value with an explicit
error bound.  Mixing an exact value into approximate arithmetic promotes
it with a propagated bound.
"""

from __future__ import annotations

import math
import os
from fractions import Fraction
from typing import Iterable, Mapping, Union

import mpmath

RationalLike = Union[int, Fraction]

_SMALL_PRIMES: list[int] = []
_SIEVED_TO = 0


def _primes_up_to(limit: int) -> list[int]:
    """Cached ascending primes up to at least `limit` (simple sieve)."""
    global _SMALL_PRIMES, _SIEVED_TO
    # Compare against the sieved bound, not the last prime: limits at the
    # cap sit in the gap above it and would force a rebuild every call.
    if _SIEVED_TO >= limit:
        return _SMALL_PRIMES
    sieve_to = max(limit, 1000)
    sieve = bytearray([1]) * (sieve_to + 1)
    sieve[0:2] = b"\x00\x00"
    for p in range(2, math.isqrt(sieve_to) + 1):
        if sieve[p]:
            sieve[p * p :: p] = b"\x00" * len(sieve[p * p :: p])
    _SMALL_PRIMES = [i for i, flag in enumerate(sieve) if flag]
    _SIEVED_TO = sieve_to
    return _SMALL_PRIMES


def squarefree_decompose(n: int) -> tuple[int, int]:
    """Write n = s^2 * f with f squarefree; return (s, f).

    Radicands in this engine are built from factorials of small integers,
    so trial division by small primes almost always finishes the job; a
    perfect-square check mops up any large cofactor.
    """
    if n <= 0:
        raise ValueError(f"radicand must be positive, got {n}")
    s, f = 1, 1
    rem = n
    for p in _primes_up_to(min(max(math.isqrt(n), 3), 100_000)):
        if p * p > rem:
            break
        if rem % p == 0:
            e = 0
            while rem % p == 0:
                rem //= p
                e += 1
            s *= p ** (e // 2)
            if e % 2:
                f *= p
    if rem > 1:
        r = math.isqrt(rem)
        if r * r == rem:
            s *= r
        else:
            f *= rem
    return s, f


class RadicalScalar:
    """A finite sum sum_i q_i sqrt(n_i) with q_i rational, n_i squarefree.

    Immutable; arithmetic returns new instances in canonical form (keys
    squarefree and ascending, no zero coefficients).
    """

    __slots__ = ("_terms",)

    def __init__(self, terms: Mapping[int, RationalLike] | None = None):
        canon: dict[int, Fraction] = {}
        if terms:
            for n, q in terms.items():
                q = Fraction(q)
                if q == 0:
                    continue
                s, f = squarefree_decompose(n)
                canon[f] = canon.get(f, Fraction(0)) + q * s
        self._terms = {n: q for n, q in sorted(canon.items()) if q != 0}

    # -- construction helpers -------------------------------------------

    @classmethod
    def from_rational(cls, q: RationalLike) -> "RadicalScalar":
        return cls({1: Fraction(q)})

    @classmethod
    def sqrt_rational(cls, q: RationalLike) -> "RadicalScalar":
        """The exact square root of a nonnegative rational."""
        q = Fraction(q)
        if q < 0:
            raise ValueError("negative radicand")
        if q == 0:
            return cls()
        # sqrt(a/b) = sqrt(a*b)/b
        s, f = squarefree_decompose(q.numerator * q.denominator)
        return cls({f: Fraction(s, q.denominator)})

    # -- inspection ------------------------------------------------------

    @property
    def terms(self) -> dict[int, Fraction]:
        return dict(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def is_rational(self) -> bool:
        return all(n == 1 for n in self._terms)

    def rational_part(self) -> Fraction:
        return self._terms.get(1, Fraction(0))

    def as_fraction(self) -> Fraction:
        if not self.is_rational():
            raise ValueError(f"{self} is irrational")
        return self.rational_part()

    def as_float(self) -> float:
        return math.fsum(float(q) * math.sqrt(n) for n, q in self._terms.items())

    def __float__(self) -> float:
        return self.as_float()

    def __bool__(self) -> bool:
        return bool(self._terms)

    # -- arithmetic ------------------------------------------------------

    @staticmethod
    def _coerce(other) -> "RadicalScalar | None":
        if isinstance(other, RadicalScalar):
            return other
        if isinstance(other, (int, Fraction)):
            return RadicalScalar.from_rational(other)
        return None

    def __add__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        merged = dict(self._terms)
        for n, q in o._terms.items():
            merged[n] = merged.get(n, Fraction(0)) + q
        return RadicalScalar(merged)

    __radd__ = __add__

    def __neg__(self):
        return RadicalScalar({n: -q for n, q in self._terms.items()})

    def __sub__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return self + (-o)

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return o + (-self)

    def __mul__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        out: dict[int, Fraction] = {}
        for n1, q1 in self._terms.items():
            for n2, q2 in o._terms.items():
                # sqrt(n1)*sqrt(n2) = g*sqrt((n1/g)*(n2/g)) with g = gcd
                g = math.gcd(n1, n2)
                key = (n1 // g) * (n2 // g)
                out[key] = out.get(key, Fraction(0)) + q1 * q2 * g
        return RadicalScalar(out)

    __rmul__ = __mul__

    def inverse(self) -> "RadicalScalar":
        """Exact inverse for rationals and single-term radicals.

        General sums would need algebraic-field rationalization, which the
        constructed coefficients never require.
        """
        if not self._terms:
            raise ZeroDivisionError("inverse of zero")
        if len(self._terms) == 1:
            ((n, q),) = self._terms.items()
            # 1/(q sqrt(n)) = sqrt(n)/(q n)
            return RadicalScalar({n: Fraction(1, 1) / (q * n)})
        raise ValueError("inverse of a multi-term radical sum is unsupported")

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return self * o.inverse()

    def __rtruediv__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return o * self.inverse()

    def __pow__(self, k: int):
        if not isinstance(k, int):
            return NotImplemented
        if k < 0:
            return self.inverse() ** (-k)
        out = RadicalScalar.from_rational(1)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    # -- equality --------------------------------------------------------

    def __eq__(self, other) -> bool:
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return self._terms == o._terms

    def __hash__(self) -> int:
        return hash(tuple(self._terms.items()))

    def __repr__(self) -> str:
        if not self._terms:
            return "0"
        parts = []
        for n, q in self._terms.items():
            if n == 1:
                parts.append(str(q))
            elif q == 1:
                parts.append(f"sqrt({n})")
            else:
                parts.append(f"{q}*sqrt({n})")
        return " + ".join(parts).replace("+ -", "- ")


ZERO = RadicalScalar()
ONE = RadicalScalar.from_rational(1)


class ApproxScalar:
    """High-precision value with an explicit absolute error bound."""

    __slots__ = ("value", "error_bound")

    def __init__(self, value, error_bound=0):
        self.value = mpmath.mpf(value)
        self.error_bound = mpmath.mpf(error_bound)
        if not mpmath.isfinite(self.error_bound) or self.error_bound < 0:
            raise ValueError("error bound must be finite and nonnegative")

    @staticmethod
    def _coerce(other, precision: int | None = None) -> "ApproxScalar | None":
        if isinstance(other, ApproxScalar):
            return other
        if isinstance(other, RadicalScalar):
            return to_approx(other, precision or default_precision())
        if isinstance(other, (int, Fraction, float)):
            return ApproxScalar(mpmath.mpf(other) if not isinstance(other, Fraction)
                                else mpmath.mpf(other.numerator) / other.denominator, 0)
        return None

    def __add__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return ApproxScalar(self.value + o.value, self.error_bound + o.error_bound)

    __radd__ = __add__

    def __neg__(self):
        return ApproxScalar(-self.value, self.error_bound)

    def __sub__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return self + (-o)

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return o + (-self)

    def __mul__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        err = (abs(self.value) * o.error_bound
               + abs(o.value) * self.error_bound
               + self.error_bound * o.error_bound)
        return ApproxScalar(self.value * o.value, err)

    __rmul__ = __mul__

    def as_float(self) -> float:
        return float(self.value)

    def __float__(self) -> float:
        return float(self.value)

    def agrees_with(self, other, tolerance) -> bool:
        o = self._coerce(other)
        return abs(self.value - o.value) <= mpmath.mpf(tolerance) + self.error_bound + o.error_bound

    def __repr__(self) -> str:
        return f"ApproxScalar({self.value}, err<={self.error_bound})"


Scalar = Union[RadicalScalar, ApproxScalar]


def default_precision() -> int:
    """Working precision in digits, overridable via OPE_FORGE_PRECISION."""
    raw = os.environ.get("OPE_FORGE_PRECISION", "")
    try:
        p = int(raw)
    except ValueError:
        return 30
    return max(p, 16)


# ---------------------------------------------------------------------------
# Module operations
# ---------------------------------------------------------------------------

def radical_normalize(terms: Mapping[int, RationalLike]) -> RadicalScalar:
    """Canonicalize a raw radicand->coefficient map.

    Square factors move into the coefficients, zero entries drop, and keys
    merge: {8: 1/2} becomes {2: 1}.
    """
    for n in terms:
        if not isinstance(n, int) or n <= 0:
            raise ValueError(f"malformed radicand key {n!r}: must be a positive integer")
    return RadicalScalar(terms)


def radical_arith(a: RadicalScalar, b: RadicalScalar | None, op: str) -> RadicalScalar:
    """Exact ring operation: op in {'add', 'mul', 'neg'}."""
    if op == "add":
        return a + b
    if op == "mul":
        return a * b
    if op == "neg":
        return -a
    raise ValueError(f"unknown op {op!r}")


def to_approx(a: RadicalScalar, precision: int = 30) -> ApproxScalar:
    """Evaluate a radical sum with a certified error bound.

    The bound satisfies error_bound <= 10^(1-precision) * |value| for
    nonzero input (absolute 10^-precision at zero).  Working precision is
    raised until the relative target is met, which always terminates since
    a nonzero canonical radical sum is bounded away from zero.
    """
    if precision < 16:
        raise ValueError("precision below 16 digits is not supported")
    if a.is_zero():
        return ApproxScalar(mpmath.mpf(0), 0)
    guard = 10
    while True:
        with mpmath.workdps(precision + guard):
            total = mpmath.mpf(0)
            abs_total = mpmath.mpf(0)
            for n, q in a.terms.items():
                term = mpmath.mpf(q.numerator) / q.denominator * mpmath.sqrt(n)
                total += term
                abs_total += abs(term)
            # each term carries relative rounding error ~10^-(precision+guard);
            # a small constant covers accumulation across the sum
            bound = abs_total * mpmath.mpf(10) ** (-(precision + guard) + 2)
            target = abs(total) * mpmath.mpf(10) ** (1 - precision)
            if total != 0 and bound <= target:
                return ApproxScalar(+total, +bound)
        guard *= 2
        if guard > 10_000:
            raise ArithmeticError("failed to certify precision (unexpected cancellation)")


# ---------------------------------------------------------------------------
# JSON encoding
# ---------------------------------------------------------------------------

def encode_scalar(s: Scalar) -> dict:
    """JSON-ready form: {"exact": {...}} or {"approx": {...}}."""
    if isinstance(s, RadicalScalar):
        return {"exact": {"terms": [[n, f"{q.numerator}/{q.denominator}"]
                                    for n, q in s.terms.items()]}}
    if isinstance(s, ApproxScalar):
        return {"approx": {"value": mpmath.nstr(s.value, 25),
                           "err": mpmath.nstr(s.error_bound, 5)}}
    raise TypeError(f"not a scalar: {s!r}")


def decode_scalar(obj: Mapping) -> Scalar:
    if "exact" in obj:
        terms = {}
        for n, q in obj["exact"]["terms"]:
            terms[int(n)] = terms.get(int(n), Fraction(0)) + Fraction(q)
        return RadicalScalar(terms)
    if "approx" in obj:
        return ApproxScalar(mpmath.mpf(obj["approx"]["value"]),
                            mpmath.mpf(obj["approx"]["err"]))
    raise ValueError("scalar JSON must contain 'exact' or 'approx'")


def scalar_sum(values: Iterable[Scalar]) -> Scalar:
    """Sum a mixed iterable, promoting to ApproxScalar if any value is approximate."""
    exact = RadicalScalar()
    approx: ApproxScalar | None = None
    for v in values:
        if isinstance(v, RadicalScalar):
            exact = exact + v
        else:
            approx = v if approx is None else approx + v
    if approx is None:
        return exact
    return approx + exact
