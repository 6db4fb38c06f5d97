"""Digamma values, hypergeometric finite parts, and the first-order
remainder functions.

The characteristic sum S(l1, l2; a) collects the Clebsch-Gordan weighted
reciprocal denominators produced by the inverse Laplacian; it is rational
in every parameter regime and each regime has its own closed form.  The
remainder functions attach the pieces of the squared and cubed field
products that survive normal ordering: finite sums of characteristic-sum
type, logarithm coefficients, and (in the hard cases) one-balanced 4F3
values and zero-balanced finite parts.

Convention note: the logarithm coefficients in the phi^2 remainder carry
*squared* 3j symbols.  An unsquared variant can be found in some displays
of the same result; it disagrees with the truncated defining contraction
sum already at (d, j) = (0, 1), where the squared form gives 2/3 log r
and the unsquared form gives 0.  The squared form is implemented here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence, Union

import mpmath

from .exactnum import ApproxScalar, RadicalScalar, Scalar, ZERO
from .angular import (
    _gamma_half,
    legendre_poly_coeffs,
    legendre_pq_integral,
    legendre_triple_integral,
)

RationalLike = Union[int, Fraction]


class DivergenceError(ValueError):
    """A hypergeometric series was requested outside its convergence domain."""


class UnsupportedError(NotImplementedError):
    """No closed form is available for the requested grading."""


def _sign(x: int) -> int:
    return (x > 0) - (x < 0)


def _to_mpf(q: RationalLike):
    q = Fraction(q)
    return mpmath.mpf(q.numerator) / q.denominator


@lru_cache(maxsize=None)
def _cg00_sq(l1: int, l2: int, J: int) -> Fraction:
    # <l1 l2 00|J0>^2 = (2J+1)/2 * Integral(P_l1 P_l2 P_J)
    return Fraction(2 * J + 1, 2) * legendre_triple_integral(l1, l2, J)


@lru_cache(maxsize=None)
def _w3j00_sq(l1: int, l2: int, l3: int) -> Fraction:
    # squared 3j symbol with zero projections
    if l3 < abs(l1 - l2) or l3 > l1 + l2:
        return Fraction(0)
    return legendre_triple_integral(l1, l2, l3) / 2


# ---------------------------------------------------------------------------
# Digamma with symbolic constants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymbolicDigamma:
    """rational + gamma_coeff * (Euler gamma) + log2_coeff * log 2.

    Keeping gamma and log 2 symbolic lets differences of digamma values
    cancel exactly; only genuinely transcendental leftovers go numeric.
    """

    rational: Fraction = Fraction(0)
    gamma_coeff: Fraction = Fraction(0)
    log2_coeff: Fraction = Fraction(0)

    def __add__(self, other: "SymbolicDigamma") -> "SymbolicDigamma":
        if isinstance(other, (int, Fraction)):
            other = SymbolicDigamma(Fraction(other))
        return SymbolicDigamma(self.rational + other.rational,
                               self.gamma_coeff + other.gamma_coeff,
                               self.log2_coeff + other.log2_coeff)

    __radd__ = __add__

    def __sub__(self, other: "SymbolicDigamma") -> "SymbolicDigamma":
        if isinstance(other, (int, Fraction)):
            other = SymbolicDigamma(Fraction(other))
        return SymbolicDigamma(self.rational - other.rational,
                               self.gamma_coeff - other.gamma_coeff,
                               self.log2_coeff - other.log2_coeff)

    def __rmul__(self, c: RationalLike) -> "SymbolicDigamma":
        c = Fraction(c)
        return SymbolicDigamma(c * self.rational, c * self.gamma_coeff,
                               c * self.log2_coeff)

    def is_rational(self) -> bool:
        return self.gamma_coeff == 0 and self.log2_coeff == 0

    def as_mpf(self):
        return (mpmath.mpf(self.rational.numerator) / self.rational.denominator
                + self.gamma_coeff.numerator * mpmath.euler / self.gamma_coeff.denominator
                + self.log2_coeff.numerator * mpmath.log(2) / self.log2_coeff.denominator)

    def __float__(self) -> float:
        return float(self.as_mpf())


def digamma_exact(x):
    """psi(x) for positive integer or half-integer x, with gamma and log 2
    kept symbolic.  Other arguments fall back to a numeric value."""
    q = Fraction(x) if not isinstance(x, float) else None
    if q is not None and q > 0 and q.denominator == 1:
        n = q.numerator - 1
        harmonic = sum(Fraction(1, k) for k in range(1, n + 1))
        return SymbolicDigamma(harmonic, Fraction(-1), Fraction(0))
    if q is not None and q > 0 and q.denominator == 2:
        n = (q.numerator - 1) // 2
        odd_harmonic = sum(Fraction(2, 2 * k - 1) for k in range(1, n + 1))
        return SymbolicDigamma(odd_harmonic, Fraction(-1), Fraction(-2))
    return float(mpmath.digamma(x))


# ---------------------------------------------------------------------------
# Hypergeometric series at unity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HyperParams:
    """Parameter lists of a generalized hypergeometric series."""

    upper: tuple
    lower: tuple

    def __init__(self, upper: Sequence[RationalLike], lower: Sequence[RationalLike]):
        up = tuple(Fraction(a) for a in upper)
        low = tuple(Fraction(b) for b in lower)
        for b in low:
            if b.denominator == 1 and b <= 0:
                raise ValueError(f"lower parameter {b} is a nonpositive integer")
        object.__setattr__(self, "upper", up)
        object.__setattr__(self, "lower", low)

    @property
    def omega(self) -> Fraction:
        return sum(self.lower, Fraction(0)) - sum(self.upper, Fraction(0))

    def cancelled(self) -> "HyperParams":
        """Strike parameters common to both lists; the series is unchanged."""
        up = list(self.upper)
        low = []
        for b in self.lower:
            if b in up:
                up.remove(b)
            else:
                low.append(b)
        return HyperParams(up, low)


def _pfq_mpf(upper, lower, z=1):
    return mpmath.hyper([mpmath.mpf(a.numerator) / a.denominator for a in map(Fraction, upper)],
                        [mpmath.mpf(b.numerator) / b.denominator for b in map(Fraction, lower)],
                        z)


def pfq_at_unity(params: HyperParams, tolerance: float = 1e-12) -> ApproxScalar:
    """Value of pFq at z = 1 for a positively balanced series.

    Direct partial summation with a tail certificate from the term-ratio
    bound r_n <= ((n+1)/(n+2))^(1+omega/2); series that converge too
    slowly for that route are delegated to mpmath's accelerated evaluator.
    """
    if len(params.upper) != len(params.lower) + 1:
        raise ValueError("at-unity evaluation needs p = q + 1")
    if any(a == 0 for a in params.upper):
        return ApproxScalar(mpmath.mpf(1), 0)
    trunc = [a for a in params.upper if a.denominator == 1 and a < 0]
    omega = params.omega
    if not trunc and omega <= 0:
        raise DivergenceError(
            f"series balance {omega} <= 0 does not converge at unity; "
            "use finite_part_L for the zero-balanced finite part")
    if trunc or any(a < 0 for a in params.upper) or any(b < 0 for b in params.lower):
        # truncating or alternating cases: no positivity to certify with
        with mpmath.workdps(30):
            val = _pfq_mpf(params.upper, params.lower)
            return ApproxScalar(val, abs(val) * mpmath.mpf(10) ** -25 + mpmath.mpf(10) ** -30)

    s = float(omega) / 2
    up = [float(a) for a in params.upper]
    low = [float(b) for b in params.lower]
    term, total = 1.0, 1.0
    n = 0
    max_terms = 400_000
    while n < max_terms:
        num = 1.0
        for a in up:
            num *= n + a
        den = float(n + 1)
        for b in low:
            den *= n + b
        ratio = num / den
        term *= ratio
        total += term
        n += 1
        if n >= 50 and ratio <= ((n + 1) / (n + 2)) ** (1 + s):
            tail = term * (n + 2) / s
            if tail <= tolerance / 4:
                bound = tail + abs(total) * 1e-14 * math.log(n + 2)
                return ApproxScalar(mpmath.mpf(total), mpmath.mpf(bound))
    with mpmath.workdps(30):
        val = _pfq_mpf(params.upper, params.lower)
    return ApproxScalar(val, mpmath.mpf(tolerance) / 4)


def finite_part_L(params: HyperParams) -> ApproxScalar:
    """The finite part L of a zero-balanced series at unity:

        Gamma-prod * F(z) = L [1 + O(1-z)] - log(1-z) [1 + O(1-z)]

    computed as L = 2 psi(1) - psi(a1) - psi(a2) + B with the nested B
    sum.  Parameters appearing in both lists are cancelled first; the
    value is symmetric under parameter reordering, so the survivors are
    sorted ascending to make the B rows decay fastest.
    """
    if len(params.upper) != len(params.lower) + 1:
        raise ValueError("zero-balanced finite part needs p = q + 1")
    if params.omega != 0:
        raise ValueError(f"series balance is {params.omega}, not zero-balanced")
    reduced = params.cancelled()
    upper = sorted(reduced.upper)
    lower = sorted(reduced.lower)
    if len(upper) < 2 or any(a <= 0 for a in upper) or any(b <= 0 for b in lower):
        raise ValueError("finite part needs at least two positive upper parameters")
    p = len(lower)

    psi_a1, psi_a2 = _psi(upper[0]), _psi(upper[1])
    b_val, b_err = _buehring_B(upper, lower)
    if isinstance(psi_a1, SymbolicDigamma) and isinstance(psi_a2, SymbolicDigamma):
        psi_part = 2 * _psi(1) - psi_a1 - psi_a2
        assert psi_part.gamma_coeff == 0, "Euler gamma must cancel in the finite part"
        if psi_part.is_rational() and b_err == 0 and b_val == 0:
            num, den = psi_part.rational.numerator, psi_part.rational.denominator
            if den & (den - 1) == 0:
                # dyadic rationals are exact binary floats
                return ApproxScalar(mpmath.mpf(num) / den, 0)
            with mpmath.workdps(40):
                v = mpmath.mpf(num) / den
                return ApproxScalar(v, abs(v) * mpmath.mpf(10) ** -38)
        psi_val = psi_part.as_mpf()
    else:
        with mpmath.workdps(30):
            psi_val = (-2 * mpmath.euler
                       - mpmath.digamma(_to_mpf(upper[0]))
                       - mpmath.digamma(_to_mpf(upper[1])))
    with mpmath.workdps(30):
        total = psi_val + b_val
    return ApproxScalar(total, b_err + abs(total) * mpmath.mpf(10) ** -22 + mpmath.mpf(10) ** -26)


def _psi(x: RationalLike):
    return digamma_exact(Fraction(x))


def _buehring_B(upper, lower):
    """The B term of the finite part, for sorted positive parameters.

    Returns (value, error_bound) as mpf.  B(1) = 0; for p >= 2 the leading
    4F3 row is always present and rows k = 3..p carry one nested series
    each.
    """
    p = len(lower)
    if p <= 1:
        return mpmath.mpf(0), mpmath.mpf(0)
    with mpmath.workdps(30):
        a1, a2, a3 = upper[0], upper[1], upper[2]
        b1 = lower[0]
        # zero balance gives sum(lower[1:]) - sum(upper[2:]) = a1 + a2 - b1
        x2 = a1 + a2 - b1
        total = mpmath.mpf(0)
        if b1 != a3 and x2 != 0:
            f = _pfq_mpf([b1 - a3 + 1, x2 + 1, 1, 1], [a1 + 1, a2 + 1, 2])
            total += _to_mpf((b1 - a3) * x2 / (a1 * a2)) * f
        err = mpmath.mpf(0)
        for k in range(3, p + 1):
            xk = sum(lower[k - 1:], Fraction(0)) - sum(upper[k:], Fraction(0))
            yk = xk + lower[k - 2]
            c = lower[k - 2] - upper[k]
            if c == 0 or xk == 0:
                continue
            pref = _to_mpf(c * xk)
            for a in upper[:k]:
                pref *= mpmath.gamma(_to_mpf(a))
            for b in lower[:k - 2]:
                pref /= mpmath.gamma(_to_mpf(b))
            pref /= mpmath.gamma(_to_mpf(yk + 1))
            inner_lowers = list(lower[:k - 2])
            acc = mpmath.mpf(0)
            coeff = mpmath.mpf(1)
            piece = mpmath.mpf(0)
            l = 0
            while l < 500:
                f = _pfq_mpf(upper[:k], inner_lowers + [yk + 1 + l])
                piece = coeff * f
                acc += piece
                if l > 4 and abs(piece) < mpmath.mpf(10) ** -26 * (1 + abs(acc)):
                    break
                coeff *= _to_mpf((c + 1 + l) * (xk + 1 + l) / ((l + 2) * (yk + 1 + l)))
                l += 1
            else:
                err += abs(piece) * abs(pref) * 100
            total += pref * acc
        return total, err


def dougall_rhs(nu: float, y: float) -> float:
    """pi / sin(pi nu) * P_nu(-y), the closed form of the shifted Legendre
    reciprocal sum.  Integer degrees sit on the poles and are rejected."""
    if float(nu) == int(nu):
        raise ValueError("Dougall's formula requires a non-integer degree")
    if not -1 < y < 1:
        raise ValueError("argument must lie in (-1, 1)")
    with mpmath.workdps(25):
        pnu = mpmath.hyp2f1(-nu, nu + 1, 1, (1 + y) / 2)
        return float(mpmath.pi / mpmath.sin(mpmath.pi * nu) * pnu)


# ---------------------------------------------------------------------------
# The characteristic sum
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _triple_product_coeffs(l1: int, l2: int, a: int) -> tuple:
    p = legendre_poly_coeffs(l1)
    q = legendre_poly_coeffs(l2)
    r = legendre_poly_coeffs(a)
    pq = [Fraction(0)] * (len(p) + len(q) - 1)
    for i, ci in enumerate(p):
        if ci:
            for j, cj in enumerate(q):
                if cj:
                    pq[i + j] += ci * cj
    out = [Fraction(0)] * (len(pq) + len(r) - 1)
    for i, ci in enumerate(pq):
        if ci:
            for j, cj in enumerate(r):
                if cj:
                    out[i + j] += ci * cj
    return tuple(out)


@lru_cache(maxsize=None)
def _power_log_integral(k: int) -> tuple:
    """Integral of y^k log(1-y) over [-1, 1] as (rational, log2 coefficient)."""
    even_part = sum(Fraction(1, i + 1) for i in range(0, k + 1, 2))
    rational = Fraction(-2, k + 1) * even_part
    log2 = Fraction(2, k + 1) if k % 2 == 0 else Fraction(0)
    return rational, log2


def _triple_log_integral(l1: int, l2: int, a: int) -> tuple:
    """Integral of P_l1 P_l2 P_a log(1-y) as (rational, log2 coefficient)."""
    rational, log2 = Fraction(0), Fraction(0)
    for k, c in enumerate(_triple_product_coeffs(l1, l2, a)):
        if c:
            r, t = _power_log_integral(k)
            rational += c * r
            log2 += c * t
    return rational, log2


@lru_cache(maxsize=None)
def char_sum(l1: int, l2: int, a: int) -> RadicalScalar:
    """The characteristic sum S(l1, l2; a): the CG-weighted sum of
    1/(a(a+1) - J(J+1)) over the coupling range with resonant J excluded.

    Rational in all four parameter regimes: odd total inside the triangle
    vanishes, odd outside has a Gamma-ratio closed form, even outside is a
    log-weighted triple Legendre integral, and even inside follows the
    degree-derivative formula with the digamma combination rational.
    """
    if min(l1, l2, a) < 0:
        raise ValueError("labels must be nonnegative")
    inside = abs(l1 - l2) <= a <= l1 + l2
    if (l1 + l2 + a) % 2:
        if inside:
            return ZERO
        return RadicalScalar.from_rational(legendre_pq_integral(l1, l2, a))
    if not inside:
        rational, log2 = _triple_log_integral(l1, l2, a)
        assert log2 == 0, "log 2 must drop out when the triple integral vanishes"
        half = rational / 2
        return RadicalScalar.from_rational(half if a < abs(l1 - l2) else -half)
    acc = Fraction(0)
    for k in range(abs(l1 - l2), a):
        t = legendre_triple_integral(l1, l2, k)
        if t:
            acc += Fraction(2 * (2 * k + 1), 1) * t / (a * (a + 1) - k * (k + 1))
    log_rat, log_two = _triple_log_integral(l1, l2, a)
    t_a = legendre_triple_integral(l1, l2, a)
    # the log 2 from log((1-y)/2) cancels the log 2 content of the
    # log(1-y) integral, leaving the purely rational part
    assert log_two == t_a, "log 2 pieces must cancel against the explicit log 2 term"
    psi_combo = (sum(Fraction(1, k) for k in range(1, 2 * a + 2))
                 + sum(Fraction(1, k) for k in range(1, 2 * a + 1))
                 - 2 * sum(Fraction(1, k) for k in range(1, a + 1)))
    total = (acc + log_rat + psi_combo * t_a) / 2
    return RadicalScalar.from_rational(total)


def char_sum_bruteforce(l1: int, l2: int, a: int, L_max: int) -> RadicalScalar:
    """The defining sum, term by term.  The coupling range is finite, so
    this is exact whenever L_max covers it."""
    if L_max < l1 + l2:
        raise ValueError("L_max must cover the coupling range")
    total = Fraction(0)
    for J in range(abs(l1 - l2), min(l1 + l2, L_max) + 1):
        if J == a:
            continue
        w = _cg00_sq(l1, l2, J)
        if w:
            total += w / (a * (a + 1) - J * (J + 1))
    return RadicalScalar.from_rational(total)


# ---------------------------------------------------------------------------
# Remainder functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RemainderValue:
    """A remainder matrix element: const_part + log_coeff * log r."""

    log_coeff: Scalar
    const_part: Scalar

    def is_zero(self) -> bool:
        return (isinstance(self.log_coeff, RadicalScalar) and self.log_coeff.is_zero()
                and isinstance(self.const_part, RadicalScalar) and self.const_part.is_zero())

    def scaled(self, c: RationalLike) -> "RemainderValue":
        factor = RadicalScalar.from_rational(Fraction(c))
        return RemainderValue(factor * self.log_coeff, factor * self.const_part)


_ZERO_REMAINDER = RemainderValue(ZERO, ZERO)


def _fold_at(log_coeff: Scalar, const: Scalar, at) -> RemainderValue:
    if at is None:
        return RemainderValue(log_coeff, const)
    if isinstance(at, (int, Fraction)):
        return RemainderValue(ZERO, const + log_coeff * Fraction(at))
    return RemainderValue(ZERO, const + ApproxScalar(mpmath.mpf(at), 0) * log_coeff)


def _integer_grading(d) -> int:
    """Half-integer multiset gradings carry an extra 3/2 relative to the
    radial power the remainder tables are indexed by; shift them down."""
    q = Fraction(d)
    if q.denominator == 1:
        return q.numerator
    if q.denominator == 2:
        shifted = q - Fraction(3, 2)
        if shifted.denominator == 1:
            return shifted.numerator
    raise ValueError(f"grading {d} is neither integer nor half-integer")


def _log_3j_sum(d: int, j: int) -> Fraction:
    a = abs(d + 2)
    total = Fraction(0)
    for l in range(a):
        total += _w3j00_sq(j, l, a - 1 - l)
    return _sign(d + 2) * total


def phi2_log_divergence(d: int, j: int) -> RadicalScalar:
    """Coefficient of the would-be log(1-eta) divergence in the squared
    field remainder at q = 2; the two pole families cancel exactly."""
    total = Fraction(0)
    for J in range(j + 1):
        w_num, pi_num = _gamma_half(2 * J + 1)
        w_num2, pi_num2 = _gamma_half(2 * (j - J) + 1)
        w = w_num * w_num2 / (math.factorial(J) * math.factorial(j - J))
        assert pi_num + pi_num2 == 2
        if 2 * J != j + d + 2:
            total += w / (j + d + 2 - 2 * J)
        if 2 * J != j - d - 2:
            total += w / (j - d - 2 - 2 * J)
    return RadicalScalar.from_rational(total)


@lru_cache(maxsize=None)
def r1_phi2(d, j: int, q: int, at: Optional[float] = None) -> RemainderValue:
    """The contraction remainder of the squared field at one grading.

    d may be the integer radial power or the half-integer multiset grading
    (shifted internally).  q counts annihilators among the four spectator
    legs: q in {0, 4} vanishes, q in {1, 3} is exact rational, and q = 2
    needs one-balanced 4F3 values.
    """
    if q not in range(5):
        raise ValueError("q must lie in 0..4")
    d = _integer_grading(d)
    if q in (0, 4):
        return _ZERO_REMAINDER
    log_coeff = RadicalScalar.from_rational(_log_3j_sum(d, j))
    if q in (1, 3):
        const = RadicalScalar.from_rational(_r_q13(d, j))
    else:
        const = _r_q2(d, j)
    return _fold_at(log_coeff, const, at)


def _r_q13(d: int, j: int) -> Fraction:
    """Exact odd-grading bracket.

    Away from the triangle edge (|d+2| > j) only the l < |d+2| rows
    survive; each is a characteristic sum at a = |d+2|-1-l.  Once
    |d+2| <= j the large-l rows no longer vanish termwise below the
    triangle threshold l = (j-|d+2|+1)/2, leaving a second finite sum of
    outside-triangle characteristic sums in paired index order.
    """
    sigma = abs(d + 2)
    acc = Fraction(0)
    for l in range(sigma):
        acc += char_sum(j, l, sigma - 1 - l).as_fraction()
    for l in range((j - sigma + 1) // 2):
        acc += char_sum(j, l, l + sigma).as_fraction()
        acc += char_sum(j, l + sigma, l).as_fraction()
    return acc


def _r_q2(d: int, j: int) -> Scalar:
    """The q = 2 bracket: exact double sum over the l < j rows plus the
    resummed hypergeometric blocks."""
    block_a = Fraction(0)
    for l in range(j):
        for J in range(abs(l - j), l + j + 1):
            w = _cg00_sq(j, l, J)
            if not w:
                continue
            d_plus = (l + d + 2) * (l + d + 3) - J * (J + 1)
            if d_plus:
                block_a += w / d_plus
            d_minus = (l - d - 2) * (l - d - 1) - J * (J + 1)
            if d_minus:
                block_a += w / d_minus
    if all(2 * J == j + d + 2 and 2 * J == j - d - 2 for J in range(j + 1)):
        # every hypergeometric block sits on an excluded resonance
        return RadicalScalar.from_rational(block_a)
    with mpmath.workdps(25):
        total = mpmath.mpf(block_a.numerator) / block_a.denominator
        err = mpmath.mpf(0)
        for J in range(j + 1):
            # Gamma-ratio weights; the squared Clebsch-Gordan translation
            # carries a 1/(2 pi), so both weights are rational multiples of
            # the leading coupling <j,j,0,0|2J,0>^2 / (4J+1).
            w1 = (mpmath.gamma(J + mpmath.mpf(1) / 2) * mpmath.gamma(j - J + mpmath.mpf(1) / 2)
                  / (mpmath.gamma(J + 1) * mpmath.gamma(j - J + 1))) / (2 * mpmath.pi)
            w2 = w1 * mpmath.gamma(J + mpmath.mpf(1) / 2) * mpmath.gamma(J + j + 1) / (
                mpmath.gamma(J + 1) * mpmath.gamma(J + j + mpmath.mpf(3) / 2))
            half = Fraction(1, 2)
            if 2 * J != j + d + 2:
                f_b = _pfq_mpf([1, J + half, Fraction(J + j + 1), Fraction(2 * J + j + d + 3, 2)],
                               [Fraction(J + 1), J + j + Fraction(3, 2),
                                Fraction(2 * J + j + d + 5, 2)])
                total -= w2 * f_b / (2 * J + j + d + 3)
            if 2 * J != j - d - 2:
                f_c = _pfq_mpf([1, J + half, Fraction(J + j + 1), Fraction(2 * J + j - d - 1, 2)],
                               [Fraction(J + 1), J + j + Fraction(3, 2),
                                Fraction(2 * J + j - d + 1, 2)])
                total -= w2 * f_c / (2 * J + j - d - 1)
            poles = mpmath.mpf(0)
            if 2 * J != j + d + 2:
                poles += mpmath.mpf(1) / (j + d + 2 - 2 * J)
            if 2 * J != j - d - 2:
                poles += mpmath.mpf(1) / (j - d - 2 - 2 * J)
            if poles:
                mh = mpmath.mpf(1) / 2
                f_d = _pfq_mpf([1, 1, Fraction(J + 1), J + j + Fraction(3, 2)],
                               [2, J + Fraction(3, 2), Fraction(J + j + 2)])
                bracket = (f_d * J * (J + j + mh)
                           / ((J + mh) * (J + j + 1))
                           + 2 * mpmath.digamma(1) - mpmath.digamma(J + mh)
                           - mpmath.digamma(J + j + 1))
                total += bracket * w1 * poles
        err += abs(total) * mpmath.mpf(10) ** -20 + mpmath.mpf(10) ** -24
    return ApproxScalar(total, err)


def phi3_divergence_prefactor(d, j: int, q: int) -> RadicalScalar:
    """Exact coefficient of the log divergence the cubed-field counterterm
    removes; the Gamma-ratio weights sum to 2, giving 10 * 2 = 20."""
    dd = _phi3_internal_grading(_integer_grading(d), j, q)
    total = Fraction(0)
    for k in range(j + 1):
        top = j - 2 * k + dd
        if top < 0:
            continue
        for lp in range(top // 2 + 1):
            total += _phi3_gamma_ratio(dd, j, k, lp)
    return RadicalScalar.from_rational(10 * total)


def _phi3_internal_grading(d: int, j: int, q: int) -> int:
    if q == 0:
        if d < j or (d + j) % 2:
            raise ValueError("the all-creator branch needs d >= j with d + j even")
        return d
    if q == 3:
        dd = -d - 3
        if dd < j or (dd + j) % 2:
            raise ValueError("the all-annihilator branch needs d <= -j-3 with d + j odd")
        return dd
    raise UnsupportedError(f"no closed form is available for q = {q}")


def _phi3_gamma_ratio(d: int, j: int, k: int, lp: int) -> Fraction:
    """Gamma(k+1/2) Gamma(j-k+1/2) Gamma((d+j-2k+1)/2 - l') Gamma((d+j-2k)/2 + 1)
    over the four lower Gammas, divided by pi (the powers cancel)."""
    m = d + j - 2 * k
    n1, p1 = _gamma_half(2 * k + 1)
    n2, p2 = _gamma_half(2 * (j - k) + 1)
    n3, p3 = _gamma_half(m + 1 - 2 * lp)
    n4, p4 = _gamma_half(m + 2)
    d1, q1 = _gamma_half(2 * k + 2)
    d2, q2 = _gamma_half(2 * (j - k) + 2)
    d3, q3 = _gamma_half(m - 2 * lp + 2)
    d4, q4 = _gamma_half(m + 3)
    assert (p1 + p2 + p3 + p4) - (q1 + q2 + q3 + q4) == 2
    return n1 * n2 * n3 * n4 / (d1 * d2 * d3 * d4)


@lru_cache(maxsize=None)
def r1_phi3(d, j: int, q: int, at: Optional[float] = None) -> RemainderValue:
    """The two-contraction remainder of the cubed field.

    Only the all-creator (q = 0) and all-annihilator (q = 3) gradings have
    closed forms; the mixed cases raise UnsupportedError.
    """
    d = _integer_grading(d)
    dd = _phi3_internal_grading(d, j, q)

    s1 = Fraction(0)
    for l in range(dd + 1):
        for lp in range(dd - l + 1):
            for J1 in range(abs(j - l), j + l + 1):
                w1 = _cg00_sq(j, l, J1)
                if w1:
                    s1 += w1 * _w3j00_sq(J1, lp, dd - l - lp)
    log_coeff = 20 * (s1 - 1) if q == 0 else -20 * (s1 + 1)

    t2 = Fraction(0)
    for l in range(dd + 1):
        for J1 in range(abs(j - l), j + l + 1):
            w1 = _cg00_sq(j, l, J1)
            if not w1:
                continue
            ranges = [(lp, 1) for lp in range(dd - l + 1)]
            ranges += [(lp, 2) for lp in range(dd + 1 - l, (J1 + dd - l) // 2 + 1)]
            for lp, mult in ranges:
                base = (l + lp - dd - 1) * (l + lp - dd)
                for J2 in range(abs(J1 - lp), J1 + lp + 1):
                    denom = base - J2 * (J2 + 1)
                    if denom == 0:
                        continue
                    w2 = _cg00_sq(J1, lp, J2)
                    if w2:
                        t2 += mult * w1 * w2 / denom

    with mpmath.workdps(25):
        numeric = mpmath.mpf(0)
        numeric_err = mpmath.mpf(0)
        exact_only = True
        for k in range(j + 1):
            m = dd + j - 2 * k
            if m < 0:
                continue
            for lp in range(m // 2 + 1):
                ratio = _phi3_gamma_ratio(dd, j, k, lp)
                if not ratio:
                    continue
                half = Fraction(1, 2)
                params = HyperParams(
                    [1, m + Fraction(5, 2), dd - k + Fraction(3, 2), Fraction(dd + j - k + 2),
                     Fraction(m - lp + 2, 2), Fraction(m + lp + 3, 2)],
                    [m + Fraction(3, 2), Fraction(dd - k + 2), dd + j - k + Fraction(5, 2),
                     Fraction(m - lp + 3, 2), Fraction(m + lp + 4, 2)])
                l5 = finite_part_L(params)
                if l5.error_bound == 0 and l5.value == 0:
                    continue
                exact_only = False
                numeric += -10 * (mpmath.mpf(ratio.numerator) / ratio.denominator) * l5.value
                numeric_err += 10 * abs(mpmath.mpf(ratio.numerator) / ratio.denominator) * l5.error_bound

    log_part = RadicalScalar.from_rational(log_coeff)
    if exact_only:
        const: Scalar = RadicalScalar.from_rational(20 * t2)
    else:
        base = mpmath.mpf((20 * t2).numerator) / (20 * t2).denominator
        const = ApproxScalar(base + numeric, numeric_err + mpmath.mpf(10) ** -22)
    return _fold_at(log_part, const, at)
