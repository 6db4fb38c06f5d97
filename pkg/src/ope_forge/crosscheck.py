"""Cross-validation against the direct three-point computation.

The order-one coefficient of phi^3 between three unit fields can be
computed two ways: directly, as a renormalized convolution of free
propagators reduced to a Legendre series, and indirectly, by factorizing
the three-point function over a complete set of intermediate modes and
inserting the two-point coefficients produced by :mod:`ope_forge.ope`.
Both routes yield the same Legendre series; they may differ only by the
constant that a shift of the renormalization scale mu absorbs.

``customary_3pt`` evaluates the direct result, ``factorized_3pt``
assembles the factorized sum from live engine output (refusing to run if
any fetched coefficient disagrees with its known closed form), and
``compare`` checks that their difference is the expected constant
10 (log mu^2 - 2) uniformly over a grid of kinematic points.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

from .angular import harmonic_value
from .exactnum import RadicalScalar
from .fock import MultiIndex
from .ope import coefficient
from .yring import IDENTITY, RingElement

__all__ = [
    "CoefficientIntegrityError",
    "ThreePointConfig",
    "customary_3pt",
    "factorized_3pt",
    "factorization_bruteforce",
    "compare",
    "default_grid",
]


class CoefficientIntegrityError(RuntimeError):
    """An engine coefficient disagrees with its published closed form."""


@dataclass(frozen=True)
class ThreePointConfig:
    """Kinematics of one three-point evaluation.

    ``s`` is the radius ratio r13/r23 and ``c`` the cosine of the angle
    between the two separation vectors.  The factorization is derived for
    r13 <= r23, so s must stay below one.
    """

    s: float
    c: float
    r23: float = 1.0
    mu: float = 1.0
    N: int = 500

    def __post_init__(self) -> None:
        if not 0.0 < self.s < 1.0:
            raise ValueError("radius ratio s must lie strictly inside (0, 1)")
        if not -1.0 <= self.c <= 1.0:
            raise ValueError("angle cosine c must lie in [-1, 1]")
        if self.r23 <= 0.0:
            raise ValueError("outer radius r23 must be positive")
        if self.mu <= 0.0:
            raise ValueError("renormalization scale mu must be positive")
        if self.N < 1:
            raise ValueError("truncation order N must be at least 1")


def _legendre_row(c: float, top: int) -> list[float]:
    """P_0(c) .. P_top(c) by the three-term recurrence."""
    values = [1.0, c]
    for n in range(1, top):
        values.append(((2 * n + 1) * c * values[n] - n * values[n - 1]) / (n + 1))
    return values[: top + 1]


def customary_3pt(cfg: ThreePointConfig) -> float:
    """Direct evaluation: renormalized propagator integral as a series.

    Returns 10 (sum_{n<=N} s^{n+1}/(n+1) (P_n(c) - P_{n+1}(c))
    + log(mu^2 r23^2) - 2).
    """
    p = _legendre_row(cfg.c, cfg.N + 1)
    total = 0.0
    # Summed smallest-first so the float accumulation stays tight.
    for n in range(cfg.N, -1, -1):
        total += cfg.s ** (n + 1) / (n + 1) * (p[n] - p[n + 1])
    return 10.0 * (total + math.log(cfg.mu * cfg.mu * cfg.r23 * cfg.r23) - 2.0)


# ---------------------------------------------------------------------------
# the four two-point families entering the factorization

_PHI = MultiIndex.phi_power(1)
_PHI2 = MultiIndex.phi_power(2)
_PHI3 = MultiIndex.phi_power(3)


def _mode_state(n: int, m: int, spectators: int) -> MultiIndex:
    if n == 0:
        return MultiIndex.phi_power(spectators + 1)
    return MultiIndex({(0, 0): spectators, (n, m): 1})


def _single_term(element: RingElement, label: str):
    terms = element.terms
    if len(terms) != 1:
        raise CoefficientIntegrityError(f"{label}: expected a single ring term")
    (key, scalar), = terms.items()
    if key[4] != IDENTITY:
        raise CoefficientIntegrityError(f"{label}: nontrivial ladder content")
    return key, scalar


def _check(element: RingElement, label: str, scalar: Fraction, key) -> float:
    """Verify one fetched coefficient against its closed form."""
    expected = RingElement.single(RadicalScalar.from_rational(scalar), *key)
    if element != expected:
        raise CoefficientIntegrityError(
            f"{label}: engine value {element!r} differs from closed form"
        )
    got_key, got_scalar = _single_term(element, label)
    return float(got_scalar)


@lru_cache(maxsize=None)
def _pair_weights(n: int) -> tuple[float, float]:
    """Scalar products of the two coefficient pairings at mode rank n.

    Fetches the four two-point families from the engine at a
    representative azimuthal label, checks each against its closed form
    and returns (w_up, w_down): the scalar weight multiplying s^{n+1}
    P_n(c) and, for n >= 1, the one multiplying s^n P_n(c).  The n = 0
    down pairing is the pure-log term handled by the caller.
    """
    m = 1 if n else 0
    phase = -1 if m & 1 else 1

    # C_1 of the unit field, phi -> (d^n phi) phi^3: creation weight.
    up_left = coefficient(1, 1, _PHI, _mode_state(n, m, 3)).value
    # Creation-side scalars carry the (-1)^m of the dual harmonic; the
    # azimuthal sum absorbs it, so it is stripped from the reduced weight.
    w_up_left = phase * _check(
        up_left,
        f"C1[phi -> mode({n}) phi^3]",
        Fraction(phase * (10 if n else 5), (n + 1) * (1 if n else 2)),
        (n + 1, 0, n, -m),
    )
    # C_0 of the unit field, (d^n phi) phi^3 -> phi^3: annihilation weight.
    up_right = coefficient(0, 1, _mode_state(n, m, 3), _PHI3).value
    w_up_right = _check(
        up_right,
        f"C0[mode({n}) phi^3 -> phi^3]",
        Fraction(4 if n == 0 else 1),
        (-n - 1, 0, n, m),
    )
    # C_0 of the unit field, phi -> (d^n phi) phi: creation weight.
    down_left = coefficient(0, 1, _PHI, _mode_state(n, m, 1)).value
    w_down_left = phase * _check(
        down_left,
        f"C0[phi -> mode({n}) phi]",
        Fraction(phase),
        (n, 0, n, -m),
    )
    if n == 0:
        # C_1 of the unit field, phi^2 -> phi^3: the 20 log r term.
        down_right = coefficient(1, 1, _PHI2, _PHI3).value
        w_down_right = _check(down_right, "C1[phi^2 -> phi^3]", Fraction(20), (0, 1, 0, 0))
    else:
        # C_1 of the unit field, (d^n phi) phi -> phi^3: annihilation weight.
        down_right = coefficient(1, 1, _mode_state(n, m, 1), _PHI3).value
        w_down_right = _check(
            down_right,
            f"C1[mode({n}) phi -> phi^3]",
            Fraction(-10, n),
            (-n, 0, n, m),
        )
    return w_up_left * w_up_right, w_down_left * w_down_right


def factorized_3pt(cfg: ThreePointConfig) -> float:
    """Factorized evaluation assembled from engine coefficients.

    Sums, over intermediate mode rank n, the product of the order-one
    coefficient at the inner separation with the order-zero coefficient at
    the outer one, plus the transposed pairing.  The azimuthal sum in each
    pairing collapses to a Legendre polynomial by the addition theorem.
    The renormalization scale never enters.
    """
    p = _legendre_row(cfg.c, cfg.N + 1)
    weights = [_pair_weights(n) for n in range(cfg.N + 2)]
    total = 0.0
    # Pairings regrouped by power of s so truncation matches customary_3pt.
    for n in range(cfg.N, -1, -1):
        up = weights[n][0] * p[n]
        down = weights[n + 1][1] * p[n + 1]
        total += cfg.s ** (n + 1) * (up + down)
    # The rank-0 down pairing is the fetched 20 log r term at the outer radius.
    return total + weights[0][1] * math.log(cfg.r23)


def _element_value(element: RingElement, r: float, theta: float, phi: float) -> complex:
    """Numeric value of a ring element at a concrete point."""
    log_r = math.log(r)
    total = 0.0 + 0.0j
    for (d, power, J, M, ladder), scalar in element.terms.items():
        if ladder != IDENTITY:
            raise ValueError("element carries unevaluated ladder content")
        total += float(scalar) * r**d * log_r**power * harmonic_value(J, M, theta, phi)
    return total


def factorization_bruteforce(
    cfg: ThreePointConfig, hat13: tuple[float, float], hat23: tuple[float, float]
) -> complex:
    """Factorized sum evaluated mode by mode, with no angular shortcut.

    ``hat13`` and ``hat23`` are (theta, phi) direction angles of the two
    separation vectors; their enclosed angle must be consistent with
    cfg.c.  Every coefficient of every intermediate mode (n, m) is
    fetched from the engine and evaluated numerically, so this is slow
    and meant for validation only.
    """
    r13 = cfg.s * cfg.r23
    total = 0.0 + 0.0j
    for n in range(cfg.N + 1):
        for m in range(-n, n + 1):
            up_left = coefficient(1, 1, _PHI, _mode_state(n, m, 3)).value
            up_right = coefficient(0, 1, _mode_state(n, m, 3), _PHI3).value
            total += _element_value(up_left, r13, *hat13) * _element_value(
                up_right, cfg.r23, *hat23
            )
            if n == 0:
                down_right = coefficient(1, 1, _PHI2, _PHI3).value
            else:
                down_right = coefficient(1, 1, _mode_state(n, m, 1), _PHI3).value
            down_left = coefficient(0, 1, _PHI, _mode_state(n, m, 1)).value
            total += _element_value(down_left, r13, *hat13) * _element_value(
                down_right, cfg.r23, *hat23
            )
            if n == 0:
                break  # the two n = 0 coefficients carry no azimuthal label
    return total


def default_grid(N: int = 500, mu: float = 1.0, r23: float = 1.0) -> list[ThreePointConfig]:
    """Standard comparison grid: s in 0.1..0.8, c in -0.9..0.9."""
    return [
        ThreePointConfig(s=round(0.1 * i, 1), c=round(-0.9 + 0.2 * j, 1), r23=r23, mu=mu, N=N)
        for i in range(1, 9)
        for j in range(10)
    ]


def compare(grid: Sequence[ThreePointConfig], tolerance: float = 1e-8) -> dict:
    """Check customary - factorized = 10 (log mu^2 - 2) over a grid.

    The truncation tail 2 s^(N+1)/(N+1) of the worst grid point widens the
    tolerance, since both series are cut at the same order.  Returns a
    report with the per-point values, the estimated constant, the largest
    deviation from the predicted one and the overall verdict.
    """
    if not grid:
        raise ValueError("comparison grid must be nonempty")

    def evaluate(cfg: ThreePointConfig) -> dict:
        direct = customary_3pt(cfg)
        factorized = factorized_3pt(cfg)
        difference = direct - factorized
        predicted = 10.0 * (math.log(cfg.mu * cfg.mu) - 2.0)
        return {
            "s": cfg.s,
            "c": cfg.c,
            "r23": cfg.r23,
            "mu": cfg.mu,
            "N": cfg.N,
            "customary": direct,
            "factorized": factorized,
            "difference": difference,
            "deviation": difference - predicted,
        }

    # Pure per-point work, so a thread pool is safe; the engine cache is shared.
    with ThreadPoolExecutor(max_workers=min(8, len(grid))) as pool:
        points = list(pool.map(evaluate, grid))

    tail = max(2.0 * cfg.s ** (cfg.N + 1) / (cfg.N + 1) for cfg in grid)
    max_deviation = max(abs(pt["deviation"]) for pt in points)
    return {
        "grid": points,
        "constant_estimate": sum(pt["difference"] for pt in points) / len(points),
        "max_deviation": max_deviation,
        "pass": max_deviation <= tolerance + tail,
    }
