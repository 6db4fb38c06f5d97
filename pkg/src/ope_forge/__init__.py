"""Exact symbolic-numeric engine for perturbative OPE coefficients.

The package constructs operator product expansion coefficients of the
massless phi^6 model in three Euclidean dimensions through an iterative
field-equation scheme on a bosonic mode space, entirely in exact
rational-radical arithmetic, with guarded high-precision numerics for the
hypergeometric remainder pieces.

Modules
-------
exactnum
    Rationals, quadratic radicals, guarded approximation.
angular
    Clebsch-Gordan machinery and spherical-harmonic coupling tensors.
fock
    Mode multisets, ladder combinatorics, index sets.
yring
    The vertex-operator ring: radial powers, log polynomials, Laplacian.
special
    Hypergeometric finite parts, characteristic sums, remainder operators.
ope
    Coefficient constructors at orders 0, 1, 2 and the maximal class.
crosscheck
    Conventional three-point computation and the factorized comparison.
cli
    Command-line front end.
"""

__version__ = "0.1.0"

__all__ = [
    "exactnum",
    "angular",
    "fock",
    "yring",
    "special",
    "ope",
    "crosscheck",
    "cli",
]
