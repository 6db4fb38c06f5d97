"""Exact three-dimensional angular-momentum machinery.

Clebsch-Gordan coefficients are computed through the finite Racah sum with
exact factorials, giving values of the form (rational) * sqrt(rational).
The parity coefficient <l1 l2 0 0|J 0> has an independent closed Gamma-ratio
form, implemented separately so the two paths cross-validate.

The harmonics are unit-normalized so that the addition theorem reads

    sum_m conj(S_lm(x)) S_lm(y) = P_l(x.y)

and products expand as

    S_{l1 m1} S_{l2 m2} = sum_J <l1 l2 m1 m2|J M> <l1 l2 0 0|J 0> S_{JM}.

Coupling tensors chain this rule pairwise.  `couple_tensor` attaches the
parity factor to the summed intermediate labels only (the final label keeps
the bare Clebsch-Gordan factor); `product_tensor` carries it at every step
and therefore gives the true expansion coefficients of an iterated product,
which is what the coefficient assemblies consume.
"""

from __future__ import annotations

import cmath
import math
from fractions import Fraction
from functools import lru_cache

from .exactnum import RadicalScalar, ZERO, ONE

SignedMode = tuple[int, int, int]  # (sign, l, m) with sign in {+1, -1}


def _check_label(l: int, m: int) -> None:
    if l < 0 or abs(m) > l:
        raise ValueError(f"malformed angular label (l={l}, m={m})")


@lru_cache(maxsize=None)
def _factorial(n: int) -> int:
    return math.factorial(n)


# ---------------------------------------------------------------------------
# Clebsch-Gordan, parity coefficient, 3j
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def clebsch_gordan(l1: int, m1: int, l2: int, m2: int, J: int, M: int) -> RadicalScalar:
    """Exact <l1 m1, l2 m2 | J M> in the Condon-Shortley convention."""
    _check_label(l1, m1)
    _check_label(l2, m2)
    _check_label(J, M)
    if M != m1 + m2 or J < abs(l1 - l2) or J > l1 + l2:
        return ZERO
    # Racah's single-sum form, all factorials exact.
    radicand = (
        Fraction(2 * J + 1)
        * _factorial(l1 + l2 - J) * _factorial(l1 - l2 + J) * _factorial(-l1 + l2 + J)
        * _factorial(J + M) * _factorial(J - M)
        * _factorial(l1 - m1) * _factorial(l1 + m1)
        * _factorial(l2 - m2) * _factorial(l2 + m2)
        / _factorial(l1 + l2 + J + 1)
    )
    k_min = max(0, l2 - J - m1, l1 - J + m2)
    k_max = min(l1 + l2 - J, l1 - m1, l2 + m2)
    acc = Fraction(0)
    for k in range(k_min, k_max + 1):
        den = (
            _factorial(k) * _factorial(l1 + l2 - J - k)
            * _factorial(l1 - m1 - k) * _factorial(l2 + m2 - k)
            * _factorial(J - l2 + m1 + k) * _factorial(J - l1 - m2 + k)
        )
        acc += Fraction((-1) ** k, den)
    if acc == 0:
        return ZERO
    return RadicalScalar.from_rational(acc) * RadicalScalar.sqrt_rational(radicand)


def _gamma_half(k: int) -> tuple[Fraction, int]:
    """Gamma(k/2) for positive integer k as (rational, power of sqrt(pi))."""
    if k <= 0:
        raise ValueError("Gamma argument must be positive")
    if k % 2 == 0:
        return Fraction(_factorial(k // 2 - 1)), 0
    n = (k - 1) // 2  # Gamma(n + 1/2) = (2n)!/(4^n n!) sqrt(pi)
    return Fraction(_factorial(2 * n), 4**n * _factorial(n)), 1


@lru_cache(maxsize=None)
def parity_cg(l1: int, l2: int, J: int) -> RadicalScalar:
    """<l1 l2 0 0|J 0> through its closed Gamma-ratio form.

    Vanishes for odd l1+l2+J or a triangle violation; otherwise

        (-1)^((l1+l2+3J)/2) sqrt((2J+1)/(2 pi) * Gamma ratio)

    where the pi from the half-integer Gamma values cancels exactly.
    """
    if min(l1, l2, J) < 0:
        return ZERO
    if (l1 + l2 + J) % 2 or not abs(l1 - l2) <= J <= l1 + l2:
        return ZERO
    num_args = (l1 + l2 - J + 1, l1 - l2 + J + 1, l2 - l1 + J + 1, l1 + l2 + J + 2)
    den_args = (l1 + l2 - J + 2, l1 - l2 + J + 2, l2 - l1 + J + 2, l1 + l2 + J + 3)
    # pi powers tracked in units of sqrt(pi); the 1/(2 pi) contributes -2
    ratio, pi_pow = Fraction(2 * J + 1, 2), -2
    for a in num_args:
        q, p = _gamma_half(a)
        ratio *= q
        pi_pow += p
    for a in den_args:
        q, p = _gamma_half(a)
        ratio /= q
        pi_pow -= p
    assert pi_pow == 0, "pi powers must cancel in the parity coefficient"
    sign = -1 if ((l1 + l2 + J) // 2 + J) % 2 else 1
    return sign * RadicalScalar.sqrt_rational(ratio)


def wigner3j(j1: int, j2: int, J: int, m1: int, m2: int, M: int) -> RadicalScalar:
    """3j symbol (j1 j2 J; m1 m2 M) = (-1)^(j1-j2-M) <j1 j2 m1 m2|J -M>/sqrt(2J+1)."""
    for j, m in ((j1, m1), (j2, m2), (J, M)):
        if j < 0 or abs(m) > j:
            return ZERO
    cg = clebsch_gordan(j1, m1, j2, m2, J, -M)
    if cg.is_zero():
        return ZERO
    sign = -1 if (j1 - j2 - M) % 2 else 1
    return sign * cg / RadicalScalar.sqrt_rational(2 * J + 1)


def parity_cg_sq_float(l1: int, l2: int, J: int) -> float:
    """Floating <l1 l2 00|J 0>^2 via log-Gammas, stable at large labels.

    This is the workhorse of the truncated contraction oracles, where labels
    reach a few thousand and exact arithmetic would be wasteful.
    """
    if min(l1, l2, J) < 0 or (l1 + l2 + J) % 2 or not abs(l1 - l2) <= J <= l1 + l2:
        return 0.0
    num = (l1 + l2 - J + 1, l1 - l2 + J + 1, l2 - l1 + J + 1, l1 + l2 + J + 2)
    den = (l1 + l2 - J + 2, l1 - l2 + J + 2, l2 - l1 + J + 2, l1 + l2 + J + 3)
    s = sum(math.lgamma(a / 2) for a in num) - sum(math.lgamma(a / 2) for a in den)
    return (2 * J + 1) / (2 * math.pi) * math.exp(s)


def wigner3j_sq_float(j1: int, j2: int, j3: int) -> float:
    """Floating (j1 j2 j3; 0 0 0)^2 = parity_cg^2/(2 j3 + 1)."""
    if j3 < 0:
        return 0.0
    return parity_cg_sq_float(j1, j2, j3) / (2 * j3 + 1)


# ---------------------------------------------------------------------------
# Coupling tensors
# ---------------------------------------------------------------------------

def _normalize_modes(sequence) -> tuple[list[tuple[int, int]], int]:
    """Convert signed modes to plain-harmonic labels with the conjugation phase.

    A '+' entry stands for the conjugate harmonic S^{lm} = (-1)^m S_{l,-m},
    so it enters the plain-basis chain as (l, -m) and contributes (-1)^m.
    """
    modes: list[tuple[int, int]] = []
    sign = 1
    for s, l, m in sequence:
        _check_label(l, m)
        if s >= 0:
            modes.append((l, -m))
            if m % 2:
                sign = -sign
        else:
            modes.append((l, m))
    return modes, sign


def _chain(modes: list[tuple[int, int]], parity_on_final: bool) -> dict[tuple[int, int], RadicalScalar]:
    """Left-to-right pairwise coupling of plain harmonics.

    Intermediate labels always carry CG * parity factors; the final label
    carries the parity factor only when `parity_on_final` is set.
    """
    acc: dict[tuple[int, int], RadicalScalar] = {(0, 0): ONE}
    for idx, (l, m) in enumerate(modes):
        last = idx == len(modes) - 1
        nxt: dict[tuple[int, int], RadicalScalar] = {}
        for (la, ma), w in acc.items():
            M = ma + m
            for J in range(abs(la - l), la + l + 1):
                if abs(M) > J:
                    continue
                f = clebsch_gordan(la, ma, l, m, J, M)
                if f.is_zero():
                    continue
                if parity_on_final or not last:
                    f = f * parity_cg(la, l, J)
                    if f.is_zero():
                        continue
                cur = nxt.get((J, M), ZERO) + w * f
                if cur.is_zero():
                    nxt.pop((J, M), None)
                else:
                    nxt[(J, M)] = cur
        acc = nxt
    return acc


def couple_tensor(sequence) -> dict[tuple[int, int], RadicalScalar]:
    """Coupling tensor of an ordered signed-mode sequence.

    Empty input gives the trivial tensor {(0,0): 1}.  Zero modes (0,0) are
    transparent and may be dropped by the caller; they couple trivially here
    anyway.
    """
    modes, sign = _normalize_modes(sequence)
    out = _chain(modes, parity_on_final=False)
    if sign == 1:
        return out
    return {k: -v for k, v in out.items()}


def product_tensor(sequence) -> dict[tuple[int, int], RadicalScalar]:
    """Expansion coefficients of the iterated harmonic product.

    Unlike `couple_tensor`, the parity factor is attached at every coupling
    step, so the result is independent of association order and equals the
    coefficient of S_{JM} in the pointwise product of the input harmonics.
    """
    modes, sign = _normalize_modes(sequence)
    out = _chain(modes, parity_on_final=True)
    if sign == 1:
        return out
    return {k: -v for k, v in out.items()}


def _canonical_order(multiset, contraction: bool):
    """Descending-l order; under a contraction context, drop matched +/- pairs."""
    entries = list(multiset)
    if contraction:
        remaining: list[SignedMode] = []
        minus_pool: dict[tuple[int, int], int] = {}
        for s, l, m in entries:
            if s < 0:
                minus_pool[(l, m)] = minus_pool.get((l, m), 0) + 1
        dropped: dict[tuple[int, int], int] = {}
        for s, l, m in entries:
            if s >= 0 and minus_pool.get((l, m), 0) > dropped.get((l, m), 0):
                dropped[(l, m)] = dropped.get((l, m), 0) + 1
            else:
                remaining.append((s, l, m))
        pool = dict(dropped)
        filtered = []
        for s, l, m in remaining:
            if s < 0 and pool.get((l, m), 0) > 0:
                pool[(l, m)] -= 1
            else:
                filtered.append((s, l, m))
        entries = filtered
    entries.sort(key=lambda e: (-e[1], e[2], -e[0]))
    return entries


def couple_tensor_canonical(multiset, contraction: bool = False) -> dict[tuple[int, int], RadicalScalar]:
    """Order-insensitive coupling tensor of a mode multiset.

    Modes are sorted by descending l before chaining.  With `contraction`
    set, matched conjugate/plain pairs of equal (l, m) are removed first;
    that encodes the addition theorem and is only valid when the caller sums
    over the shared m.
    """
    return couple_tensor(_canonical_order(multiset, contraction))


def product_tensor_canonical(multiset, contraction: bool = False) -> dict[tuple[int, int], RadicalScalar]:
    """Order-insensitive product tensor (see `product_tensor`)."""
    return product_tensor(_canonical_order(multiset, contraction))


# ---------------------------------------------------------------------------
# Legendre integrals
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def legendre_poly_coeffs(l: int) -> tuple[Fraction, ...]:
    """Exact monomial coefficients of P_l, ascending powers."""
    if l == 0:
        return (Fraction(1),)
    if l == 1:
        return (Fraction(0), Fraction(1))
    pm2 = legendre_poly_coeffs(l - 2)
    pm1 = legendre_poly_coeffs(l - 1)
    out = [Fraction(0)] * (l + 1)
    for i, c in enumerate(pm1):  # (2l-1) x P_{l-1}
        out[i + 1] += Fraction(2 * l - 1, l) * c
    for i, c in enumerate(pm2):
        out[i] -= Fraction(l - 1, l) * c
    return tuple(out)


def _poly_mul(a, b):
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, ca in enumerate(a):
        if ca:
            for j, cb in enumerate(b):
                if cb:
                    out[i + j] += ca * cb
    return out


def legendre_triple_integral(l1: int, l2: int, J: int) -> Fraction:
    """Exact integral of P_J P_l1 P_l2 over [-1, 1], by polynomial expansion."""
    if (l1 + l2 + J) % 2 or not abs(l1 - l2) <= J <= l1 + l2:
        return Fraction(0)
    prod = _poly_mul(_poly_mul(legendre_poly_coeffs(l1), legendre_poly_coeffs(l2)),
                     legendre_poly_coeffs(J))
    # odd powers integrate to zero on the symmetric interval
    return sum((2 * c / (k + 1) for k, c in enumerate(prod) if k % 2 == 0),
               Fraction(0))


def _pq_gamma_ratio(j: int, la: int, lb: int) -> Fraction:
    """Gamma(j+1/2)Gamma(j+la+1)Gamma(j+lb+1)Gamma(j+la+lb+3/2) /
    (2 Gamma(j+1)Gamma(j+la+3/2)Gamma(j+lb+3/2)Gamma(j+la+lb+2)), exactly."""
    ratio = Fraction(1, 2)
    pi_pow = 0
    for arg, up in (((2 * j + 1), True), ((2 * (j + la) + 2), True),
                    ((2 * (j + lb) + 2), True), ((2 * (j + la + lb) + 3), True),
                    ((2 * j + 2), False), ((2 * (j + la) + 3), False),
                    ((2 * (j + lb) + 3), False), ((2 * (j + la + lb) + 4), False)):
        q, p = _gamma_half(arg)
        if up:
            ratio *= q
            pi_pow += p
        else:
            ratio /= q
            pi_pow -= p
    assert pi_pow == 0
    return ratio


def legendre_pq_integral(l1: int, l2: int, a: int) -> Fraction:
    """-(1/2) * Integral of P_l1 P_l2 Q_a over [-1, 1], for odd l1+l2+a.

    Zero inside the triangle; outside, the closed Gamma-ratio form.  The
    below-triangle case follows by reflecting the roles of the largest
    label (with a sign), which was checked against the defining sum.
    """
    if min(l1, l2, a) < 0:
        raise ValueError("labels must be nonnegative")
    if (l1 + l2 + a) % 2 == 0:
        raise ValueError("even-parity P P Q integral is outside this formula's domain")
    if abs(l1 - l2) <= a <= l1 + l2:
        return Fraction(0)
    # the Gamma ratio equals -Integral(P P Q); this op returns -(1/2) Integral
    if a > l1 + l2:
        j = (a - l1 - l2 - 1) // 2
        return _pq_gamma_ratio(j, l1, l2) / 2
    # a below the triangle: reflect onto the largest label with a sign flip
    big, small = max(l1, l2), min(l1, l2)
    j = (big - small - a - 1) // 2
    return -_pq_gamma_ratio(j, small, a) / 2


# ---------------------------------------------------------------------------
# Dimension-dependent constants
# ---------------------------------------------------------------------------

def dim_constants(l: int, D: int) -> tuple[int, RadicalScalar, RadicalScalar]:
    """(N, c_l, F) for the degree-l harmonic sector in D dimensions.

    N(l, D) counts independent harmonics: 1 at l=0, else
    (2l+D-2)(l+D-3)!/((D-2)! l!).

    c_l is returned in the sphere-normalized convention c_l*sqrt(sigma_D)
    = sqrt(2^l Gamma(l+D/2)/(l! Gamma(D/2))), whose square is rational;
    the bare value would carry 1/sqrt(sigma_D), which never survives in
    D=3 unit-normalized results.

    F(l) = sqrt(Gamma(D/2-1)/(2^l l! Gamma(l+D/2-1))) is exactly
    representable as printed (the pi parts cancel).
    """
    if l < 0:
        raise ValueError("l must be nonnegative")
    if D < 3:
        raise ValueError("D must be at least 3")
    if l == 0:
        N = 1
    else:
        N = (2 * l + D - 2) * _factorial(l + D - 3) // (_factorial(D - 2) * _factorial(l))
    # Gamma(l + D/2)/Gamma(D/2) = prod_{i<l} (D/2 + i), always rational
    ratio_c = Fraction(1)
    for i in range(l):
        ratio_c *= Fraction(D + 2 * i, 2)
    c_l = RadicalScalar.sqrt_rational(Fraction(2**l) * ratio_c / _factorial(l))
    ratio_f = Fraction(1)  # Gamma(l + D/2 - 1)/Gamma(D/2 - 1)
    for i in range(l):
        ratio_f *= Fraction(D - 2 + 2 * i, 2)
    F = RadicalScalar.sqrt_rational(Fraction(1, 2**l * _factorial(l)) / ratio_f)
    return N, c_l, F


# ---------------------------------------------------------------------------
# Numeric harmonics (for quadrature-style checks only)
# ---------------------------------------------------------------------------

def legendre_p_float(l: int, x: float) -> float:
    """P_l(x) by the standard three-term recurrence."""
    if l == 0:
        return 1.0
    pm1, p = 1.0, x
    for k in range(2, l + 1):
        pm1, p = p, ((2 * k - 1) * x * p - (k - 1) * pm1) / k
    return p


def _racah_legendre(l: int, m: int, x: float) -> float:
    """sqrt((l-m)!/(l+m)!) P_l^m(x) with the Condon-Shortley phase, m >= 0.

    The normalization is folded into the recurrence so every intermediate
    stays bounded by 1; the bare P_l^m overflows near l ~ 150.
    """
    s = math.sqrt(max(0.0, 1.0 - x * x))
    nmm = 1.0
    for k in range(1, m + 1):
        nmm *= -s * math.sqrt((2 * k - 1) / (2 * k))
    if l == m:
        return nmm
    prev, cur = 0.0, nmm
    for k in range(m + 1, l + 1):
        prev, cur = cur, (
            x * (2 * k - 1) * cur - math.sqrt((k - m - 1) * (k + m - 1)) * prev
        ) / math.sqrt((k - m) * (k + m))
    return cur


def harmonic_value(l: int, m: int, theta: float, phi: float) -> complex:
    """Unit-normalized S_lm so that sum_m |S_lm|^2 = 1 on each degree."""
    _check_label(l, m)
    if m < 0:
        return (-1) ** m * harmonic_value(l, -m, theta, phi).conjugate()
    return _racah_legendre(l, m, math.cos(theta)) * cmath.exp(1j * m * phi)
