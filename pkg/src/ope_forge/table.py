"""Bundled reference table of closed-form coefficients, with a checker.

The data file ``data/reference_table.json`` stores one entry per closed
coefficient family.  Rows are parametric: occupation numbers and mode
labels are expressions over the symbols p (spectator zero modes), q and
k (vertex powers) and l (derivative label), evaluated exactly over small
integer ranges.  ``check_rows`` instantiates every family on a grid,
recomputes each instance with the live engine and demands exact ring
equality, so a single wrong rational anywhere in the pipeline shows up
as a named row failure.

Stored magnitudes follow the engine's ladder normalization (creation
weight one, annihilation weight equal to the occupancy), creation modes
pair with conjugated harmonics and annihilation modes with plain ones.
Rows marked ``rederived`` carry values rederived from the field-equation
recursion where the customary tabulations are inconsistent with it; the
derivations live in the repository notes.
"""

from __future__ import annotations

import ast
import json
import operator
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from typing import Iterator, Mapping, Optional, Sequence

from .exactnum import RadicalScalar
from .fock import MultiIndex, Multiset, ladder_prefactor, symmetry_factor
from .angular import product_tensor_canonical
from .ope import coefficient
from .special import r1_phi2
from .yring import IDENTITY, RingElement

__all__ = [
    "TableRow",
    "load_rows",
    "families",
    "instantiate",
    "check_rows",
    "render_value",
]

_DATA_FILE = "data/reference_table.json"

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: lambda a, b: Fraction(a) / Fraction(b),
    ast.Pow: operator.pow,
}


def _falling(base: Fraction, count: Fraction) -> Fraction:
    """ff(b, j) = b (b-1) ... (b-j+1), the descending product of j factors."""
    j = int(count)
    if j != count or j < 0:
        raise ValueError("ff needs a nonnegative integer count")
    out = Fraction(1)
    for i in range(j):
        out *= base - i
    return out


def eval_expr(expr: str, env: Mapping[str, int]) -> Fraction:
    """Evaluate a row expression exactly.

    Supported: integers, + - * / ** and unary minus, the symbols given in
    env, and the falling factorial ff(base, count).
    """

    def walk(node: ast.AST) -> Fraction:
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant):
            if isinstance(node.value, int):
                return Fraction(node.value)
            raise ValueError(f"non-integer literal {node.value!r}")
        if isinstance(node, ast.Name):
            if node.id in env:
                return Fraction(env[node.id])
            raise ValueError(f"unknown symbol {node.id!r}")
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            return -walk(node.operand)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](walk(node.left), walk(node.right))
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
            if node.func.id == "ff" and len(node.args) == 2:
                return _falling(walk(node.args[0]), walk(node.args[1]))
            raise ValueError(f"unknown function {node.func.id!r}")
        raise ValueError(f"unsupported syntax {ast.dump(node)}")

    return walk(ast.parse(expr, mode="eval"))


@dataclass(frozen=True)
class TableRow:
    """One parametric family of the reference table."""

    id: str
    family: str
    display: str
    n: int = 0
    vertex: str = "1"
    state_zeros: str = "0"
    out_zeros: str = "0"
    state_mode: int = 0
    out_mode: int = 0
    symbols: Sequence[str] = ()
    p_min: int = 0
    l_min: int = 1
    terms: Sequence[Mapping] = ()
    remainders: Sequence[Mapping] = ()
    rederived: bool = False
    kind: str = "closed"


def load_rows(reference: Optional[str] = None) -> list[TableRow]:
    """Rows of the bundled data file, or of an explicit replacement file."""
    if reference is None:
        text = resources.files("ope_forge").joinpath(_DATA_FILE).read_text("utf-8")
    else:
        with open(reference, "r", encoding="utf-8") as fh:
            text = fh.read()
    payload = json.loads(text)
    return [TableRow(**entry) for entry in payload["rows"]]


def families() -> list[str]:
    return [row.family for row in load_rows()]


def _assignments(
    row: TableRow, p_max: int, l_max: int, q_max: int, k_max: int
) -> Iterator[dict[str, int]]:
    ranges = []
    for name in row.symbols:
        if name == "p":
            ranges.append(("p", range(row.p_min, p_max + 1)))
        elif name == "l":
            ranges.append(("l", range(row.l_min, l_max + 1)))
        elif name == "q":
            ranges.append(("q", range(1, q_max + 1)))
        elif name == "k":
            ranges.append(("k", range(1, k_max + 1)))
        else:
            raise ValueError(f"row {row.id}: unknown symbol {name!r}")

    def rec(i: int, env: dict[str, int]) -> Iterator[dict[str, int]]:
        if i == len(ranges):
            yield dict(env)
            return
        name, values = ranges[i]
        for value in values:
            env[name] = value
            yield from rec(i + 1, env)
        env.pop(name, None)

    yield from rec(0, {})


def _state(zeros_expr: str, mode_count: int, env: Mapping[str, int], m: int) -> MultiIndex:
    zeros = int(eval_expr(zeros_expr, env))
    occ: dict[tuple[int, int], int] = {}
    if zeros:
        occ[(0, 0)] = zeros
    if mode_count:
        l = env["l"]
        occ[(l, m)] = occ.get((l, m), 0) + mode_count
    return MultiIndex(occ)


def _expected_element(row: TableRow, env: Mapping[str, int], m: int) -> RingElement:
    entries: list[tuple[tuple, RadicalScalar]] = []
    l = env.get("l", 0)
    net = row.out_mode - row.state_mode  # +1 creates the mode, -1 annihilates it
    phase = -1 if (net > 0 and m & 1) else 1
    J = l if (row.state_mode or row.out_mode) else 0
    M = -m if net > 0 else m

    def push(coeff: Fraction, d: int, log_power: int) -> None:
        if coeff == 0:
            return
        entries.append(
            ((d, log_power, J, M, IDENTITY), RadicalScalar.from_rational(coeff * phase))
        )

    for term in row.terms:
        push(
            eval_expr(term["coeff"], env),
            int(eval_expr(term["d"], env)),
            int(term.get("log", 0)),
        )
    for rem in row.remainders:
        coeff = eval_expr(rem["coeff"], env)
        d = int(eval_expr(rem["d"], env))
        value = r1_phi2(
            int(eval_expr(rem["args"][0], env)),
            int(eval_expr(rem["args"][1], env)),
            int(eval_expr(rem["args"][2], env)),
        )
        weight = RadicalScalar.from_rational(coeff * phase)
        entries.append(((d, 1, J, M, IDENTITY), weight * value.log_coeff))
        entries.append(((d, 0, J, M, IDENTITY), weight * value.const_part))

    return RingElement(entries)


def instantiate(
    row: TableRow, env: Mapping[str, int], m: int = 0
) -> tuple[int, int, MultiIndex, MultiIndex, RingElement]:
    """Concrete (n, k, a, c, expected value) for one assignment."""
    k = int(eval_expr(row.vertex, env))
    a = _state(row.state_zeros, row.state_mode, env, m)
    c = _state(row.out_zeros, row.out_mode, env, m)
    return row.n, k, a, c, _expected_element(row, env, m)


def _azimuthals(row: TableRow, env: Mapping[str, int]) -> Sequence[int]:
    if not (row.state_mode or row.out_mode):
        return (0,)
    l = env["l"]
    return tuple(sorted({0, min(1, l), l}))


def render_value(row: TableRow, env: Mapping[str, int], m: int = 0) -> str:
    return repr(_expected_element(row, env, m))


# ---------------------------------------------------------------------------
# the general zeroth-order formula row


def _formula_cases(p_max: int, l_max: int) -> Iterator[tuple[int, Multiset, str]]:
    """Concrete multisets instantiating the general zeroth-order row."""
    for l in range(1, min(l_max, 3) + 1):
        for p in range(0, min(p_max, 2) + 1):
            yield p, Multiset([(+1, l, 0), (+1, 0, 0)]), f"create ({l},0)+(0,0)"
            yield p, Multiset([(+1, l, 0), (+1, 1, 0), (+1, 0, 0)]), f"create ({l},0)+(1,0)+(0,0)"
            if p >= 1:
                yield p, Multiset([(+1, l, 1), (-1, 0, 0)]), f"create ({l},1), annihilate (0,0)"


def _formula_expected(p: int, modes: Multiset) -> tuple[MultiIndex, MultiIndex, RingElement]:
    """Direct evaluation of the general ladder formula for one multiset."""
    occ_a: dict[tuple[int, int], int] = {(0, 0): p} if p else {}
    occ_c = dict(occ_a)
    degree = 0
    for sign, l, m in modes:
        key = (l, m)
        occ_c[key] = occ_c.get(key, 0) + sign
        degree += l if sign > 0 else -(l + 1)
        if occ_c[key] == 0:
            del occ_c[key]
    a = MultiIndex(occ_a)
    c = MultiIndex(occ_c)
    s = symmetry_factor(modes)
    f = ladder_prefactor(a, c, modes)
    tensor = product_tensor_canonical(modes)
    scale = RadicalScalar.from_rational(s * f)
    entries = [
        ((degree, 0, J, M, IDENTITY), scale * value) for (J, M), value in tensor.items()
    ]
    return a, c, RingElement(entries)


# ---------------------------------------------------------------------------
# checking


def check_rows(
    p_max: int = 5,
    l_max: int = 4,
    q_max: int = 4,
    k_max: int = 5,
    family: Optional[str] = None,
    reference: Optional[str] = None,
) -> dict:
    """Compare every bundled row against the engine on the given ranges.

    Returns {"pass", "checked", "failures", "rows"} where rows is a list
    of per-family summaries and failures lists every mismatching
    instantiation with both values rendered.
    """
    results: list[dict] = []
    failures: list[dict] = []
    checked = 0
    for row in load_rows(reference):
        if family is not None and row.family != family:
            continue
        row_checked = 0
        row_failures = 0
        if row.kind == "formula":
            for p, modes, label in _formula_cases(p_max, l_max):
                a, c, expected = _formula_expected(p, modes)
                got = coefficient(0, len(modes), a, c)
                row_checked += 1
                ok = got.value == expected and got.status == "exact"
                if not ok:
                    row_failures += 1
                    failures.append(
                        {
                            "id": row.id,
                            "family": row.family,
                            "assignment": {"p": p, "modes": label},
                            "expected": repr(expected),
                            "got": repr(got.value),
                        }
                    )
        else:
            for env in _assignments(row, p_max, l_max, q_max, k_max):
                for m in _azimuthals(row, env):
                    n, k, a, c, expected = instantiate(row, env, m)
                    got = coefficient(n, k, a, c)
                    row_checked += 1
                    ok = got.value == expected and got.status == "exact"
                    if not ok:
                        row_failures += 1
                        failures.append(
                            {
                                "id": row.id,
                                "family": row.family,
                                "assignment": dict(env, m=m),
                                "expected": repr(expected),
                                "got": repr(got.value),
                            }
                        )
        checked += row_checked
        results.append(
            {
                "id": row.id,
                "family": row.family,
                "checked": row_checked,
                "failed": row_failures,
                "rederived": row.rederived,
            }
        )
    if family is not None and not results:
        raise KeyError(f"no table family matches {family!r}")
    return {
        "pass": not failures,
        "checked": checked,
        "failures": failures,
        "rows": results,
    }
