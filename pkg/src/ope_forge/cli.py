"""Command-line front end for the coefficient engine.

Subcommands: ``coeff`` computes one coefficient, ``table`` instantiates
or checks the bundled reference table, ``verify`` runs named invariant
suites, ``sum`` evaluates the characteristic sum with its method tag,
and ``export`` writes results to JSON or CSV files that re-import
byte-identically.

Exit codes are stable for CI use: 0 success, 1 a verification failed,
2 usage or missing-reference errors, 3 the requested coefficient needs
an unsupported remainder operator, 4 file I/O trouble.  Output is
deterministic: identical invocations print identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import random
import sys
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import click

from . import __version__
from .exactnum import RadicalScalar, decode_scalar, default_precision, encode_scalar
from .fock import MultiIndex
from .yring import (
    IDENTITY,
    RingElement,
    decode_ring_element,
    encode_ring_element,
    inverse_laplacian,
    laplacian,
)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_UNSUPPORTED = 3
EXIT_IO = 4

_FORMATS = ("text", "json", "csv")
_SUITES = ("angular", "ring", "sums", "remainders", "crosscheck", "all")


@dataclass(frozen=True)
class RunConfig:
    """Settings shared by every subcommand."""

    precision: int = 30
    truncation: int = 200
    mu: float = 1.0
    output_format: str = "text"
    cache_path: Optional[str] = None

    def __post_init__(self) -> None:
        if self.precision < 16:
            raise ValueError("precision must be at least 16 digits")
        if self.truncation < 1:
            raise ValueError("truncation must be at least 1")
        if self.output_format not in _FORMATS:
            raise ValueError(f"output_format must be one of {_FORMATS}")


# ---------------------------------------------------------------------------
# rendering


def _pure_rational(scalar: RadicalScalar) -> Optional[Fraction]:
    data = encode_scalar(scalar)
    if "exact" not in data:
        return None
    terms = data["exact"]["terms"]
    if not terms:
        return Fraction(0)
    if len(terms) == 1 and terms[0][0] == 1:
        return Fraction(terms[0][1])
    return None


def _term_factors(d: int, p: int, J: int, M: int) -> list[str]:
    factors = []
    if d:
        factors.append("r" if d == 1 else f"r^{d}")
    if p:
        factors.append("log r" if p == 1 else f"log^{p} r")
    if (J, M) != (0, 0):
        factors.append(f"S[{J},{M}]")
    return factors


def render_element(element: RingElement) -> str:
    """Human-readable exact form, e.g. ``r^2/6`` or ``20 log r + 5``."""
    if element.is_zero():
        return "0"
    rendered: list[tuple[bool, str]] = []
    for (d, p, J, M, ladder), scalar in sorted(
        element.terms.items(), key=lambda kv: kv[0][:4], reverse=True
    ):
        factors = _term_factors(d, p, J, M)
        if not ladder.is_identity():
            factors.append(f"[{ladder}]")
        value = _pure_rational(scalar)
        if value is None:
            body = f"({scalar})" + ("" if not factors else " " + " ".join(factors))
            rendered.append((False, body))
            continue
        negative = value < 0
        num, den = abs(value.numerator), value.denominator
        body = " ".join(factors)
        if num != 1 or not body:
            body = f"{num} {body}".strip()
        if den != 1:
            body += f"/{den}"
        rendered.append((negative, body))
    out = []
    for i, (negative, body) in enumerate(rendered):
        if i == 0:
            out.append(("-" if negative else "") + body)
        else:
            out.append(("- " if negative else "+ ") + body)
    return " ".join(out)


def _csv_text(reports: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n", "k", "a", "c", "term_scalar", "d", "p", "J", "M"])
    for rep in reports:
        q = rep["query"]
        for term in sorted(
            rep["value"]["terms"], key=lambda t: (t["d"], t["p"], t["J"], t["M"])
        ):
            s = decode_scalar(term["scalar"])
            writer.writerow(
                [q["n"], q["k"], q["a"], q["c"], str(s), term["d"], term["p"], term["J"], term["M"]]
            )
    return buf.getvalue()


def _json_text(payload: object) -> str:
    return json.dumps(payload, sort_keys=True, indent=1) + "\n"


# ---------------------------------------------------------------------------
# query plumbing


def _parse_state(text: str, flag: str) -> MultiIndex:
    try:
        return MultiIndex.parse(text)
    except ValueError as exc:
        raise click.UsageError(f"{flag}: {exc}")


def _vertex_power(text: str) -> int:
    try:
        mi = MultiIndex.parse(text)
    except ValueError as exc:
        raise click.UsageError(f"--left: {exc}")
    k = mi.total()
    if k < 1 or mi != MultiIndex.phi_power(k):
        raise click.UsageError("--left must be a pure field power such as phi^3")
    return k


def _query_digest(n: int, k: int, a: MultiIndex, c: MultiIndex, precision: int) -> str:
    key = f"{n}|{k}|{a.to_text()}|{c.to_text()}|prec={precision}"
    return hashlib.sha256(key.encode("utf-8")).hexdigest()


def _load_cache(path: str) -> dict:
    if not os.path.exists(path):
        return {"engine": __version__, "entries": {}}
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if data.get("engine") != __version__:
        return {"engine": __version__, "entries": {}}
    return data


def _cached_report(cfg: RunConfig, n: int, k: int, a: MultiIndex, c: MultiIndex) -> dict:
    from .ope import coefficient_report

    if cfg.cache_path is None:
        return coefficient_report(n, k, a, c)
    try:
        cache = _load_cache(cfg.cache_path)
        digest = _query_digest(n, k, a, c, cfg.precision)
        hit = cache["entries"].get(digest)
        if hit is not None:
            return hit
        report = coefficient_report(n, k, a, c)
        cache["entries"][digest] = report
        with open(cfg.cache_path, "w", encoding="utf-8") as fh:
            json.dump(cache, fh, sort_keys=True)
        return report
    except OSError as exc:
        click.echo(f"cache I/O error: {exc}", err=True)
        sys.exit(EXIT_IO)


def _emit_report(cfg: RunConfig, report: dict) -> None:
    if report["status"] == "unsupported":
        click.echo(report["detail"])
        sys.exit(EXIT_UNSUPPORTED)
    if cfg.output_format == "json":
        click.echo(_json_text(report), nl=False)
    elif cfg.output_format == "csv":
        click.echo(_csv_text([report]), nl=False)
    else:
        click.echo(render_element(decode_ring_element(report["value"])))


# ---------------------------------------------------------------------------
# commands


@click.group()
@click.version_option(__version__)
@click.option("--precision", type=int, default=None, help="working digits (>= 16)")
@click.option("--truncation", type=int, default=200, help="series cutoff for numeric suites")
@click.option("--mu", type=float, default=1.0, help="renormalization scale for the crosscheck")
@click.option("--format", "output_format", type=click.Choice(_FORMATS), default="text")
@click.option("--cache", "cache_path", type=click.Path(dir_okay=False), default=None,
              help="JSON cache for computed coefficients")
@click.pass_context
def main(ctx: click.Context, precision: Optional[int], truncation: int, mu: float,
         output_format: str, cache_path: Optional[str]) -> None:
    """Exact coefficient engine for the massless cubic-scalar expansion."""
    env = os.environ.get("OPE_FORGE_PRECISION")
    if env is not None:
        chosen = int(env)
    elif precision is not None:
        chosen = precision
        os.environ["OPE_FORGE_PRECISION"] = str(precision)
    else:
        chosen = default_precision()
    try:
        ctx.obj = RunConfig(chosen, truncation, mu, output_format, cache_path)
    except ValueError as exc:
        raise click.UsageError(str(exc))


@main.command("coeff")
@click.option("--n", type=int, required=True, help="perturbative order")
@click.option("--left", required=True, help="vertex power, e.g. phi^2")
@click.option("--a", "a_text", required=True, help="incoming basis label")
@click.option("--c", "c_text", required=True, help="outgoing basis label")
@click.pass_obj
def cmd_coeff(cfg: RunConfig, n: int, left: str, a_text: str, c_text: str) -> None:
    """Compute one coefficient C_n^c(left; a)."""
    if n < 0:
        raise click.UsageError("--n must be nonnegative")
    k = _vertex_power(left)
    a = _parse_state(a_text, "--a")
    c = _parse_state(c_text, "--c")
    _emit_report(cfg, _cached_report(cfg, n, k, a, c))


@main.command("table")
@click.option("--p-max", type=int, default=5, help="largest spectator power")
@click.option("--l-max", type=int, default=4, help="largest derivative label")
@click.option("--q-max", type=int, default=4, help="largest transfer power")
@click.option("--k-max", type=int, default=5, help="largest vertex power")
@click.option("--family", default=None, help="restrict to one family string")
@click.option("--check", is_flag=True, help="recompute each row with the engine")
@click.option("--reference", type=click.Path(dir_okay=False), default=None,
              help="override the bundled reference file")
@click.pass_obj
def cmd_table(cfg: RunConfig, p_max: int, l_max: int, q_max: int, k_max: int,
              family: Optional[str], check: bool, reference: Optional[str]) -> None:
    """List or check the bundled closed-form reference table."""
    from . import table as table_mod

    try:
        rows = table_mod.load_rows(reference)
    except (FileNotFoundError, json.JSONDecodeError, KeyError, TypeError) as exc:
        click.echo(f"reference table unavailable: {exc}", err=True)
        sys.exit(EXIT_USAGE)
    if family is not None:
        rows = [row for row in rows if row.family == family]
        if not rows:
            raise click.UsageError(f"no table family matches {family!r}")

    if check:
        result = table_mod.check_rows(p_max, l_max, q_max, k_max, family, reference)
        if cfg.output_format == "json":
            click.echo(_json_text(result), nl=False)
        else:
            for row in result["rows"]:
                state = "pass" if row["failed"] == 0 else "FAIL"
                click.echo(f"{state}  {row['family']}  ({row['checked']} instances)")
            for failure in result["failures"]:
                click.echo(
                    f"mismatch {failure['family']} at {failure['assignment']}: "
                    f"expected {failure['expected']}, engine {failure['got']}"
                )
            click.echo(f"checked {result['checked']} instances")
        sys.exit(EXIT_OK if result["pass"] else EXIT_FAIL)

    if cfg.output_format == "json":
        payload = [
            {"id": row.id, "family": row.family, "display": row.display,
             "rederived": row.rederived}
            for row in rows
        ]
        click.echo(_json_text(payload), nl=False)
        return
    for row in rows:
        click.echo(f"{row.family}  ->  {row.display}")


@main.command("verify")
@click.argument("suite", type=click.Choice(_SUITES))
@click.pass_obj
def cmd_verify(cfg: RunConfig, suite: str) -> None:
    """Run one named invariant suite (or all of them)."""
    names = list(_SUITES[:-1]) if suite == "all" else [suite]
    results = [_run_suite(name, cfg) for name in names]
    payload = results[0] if len(results) == 1 else {
        "suite": "all",
        "pass": all(r["pass"] for r in results),
        "suites": results,
    }
    click.echo(_json_text(payload), nl=False)
    sys.exit(EXIT_OK if payload["pass"] else EXIT_FAIL)


@main.command("sum")
@click.option("--l1", type=int, required=True)
@click.option("--l2", type=int, required=True)
@click.option("--a", "a_", type=int, required=True)
@click.pass_obj
def cmd_sum(cfg: RunConfig, l1: int, l2: int, a_: int) -> None:
    """Evaluate the characteristic sum S(l1, l2; a) with its method tag."""
    from .special import char_sum

    if l1 < 0 or l2 < 0 or a_ < 0:
        raise click.UsageError("labels must be nonnegative")
    value = char_sum(l1, l2, a_)
    inside = abs(l1 - l2) <= a_ <= l1 + l2
    odd = (l1 + l2 + a_) % 2 == 1
    if odd and inside:
        tag = "i: odd total in triangle, vanishes"
    elif odd:
        tag = "ii: odd total outside, Gamma-ratio form"
    elif not inside:
        tag = "iii: even total outside, log-weighted integral"
    else:
        tag = "iv: even total in triangle, degree derivative"
    if cfg.output_format == "json":
        click.echo(_json_text({"l1": l1, "l2": l2, "a": a_,
                               "value": str(value), "case": tag.split(":")[0]}), nl=False)
    else:
        click.echo(f"S({l1},{l2};{a_}) = {value}  [case {tag}]")


@main.command("export")
@click.option("--n", type=int, default=None)
@click.option("--left", default=None)
@click.option("--a", "a_text", default=None)
@click.option("--c", "c_text", default=None)
@click.option("--from", "source", type=click.Path(dir_okay=False), default=None,
              help="re-export a previously exported JSON report")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.pass_obj
def cmd_export(cfg: RunConfig, n: Optional[int], left: Optional[str],
               a_text: Optional[str], c_text: Optional[str],
               source: Optional[str], out: str) -> None:
    """Write a coefficient report to a JSON or CSV file."""
    if source is not None:
        try:
            with open(source, "r", encoding="utf-8") as fh:
                report = json.load(fh)
            report["value"] = encode_ring_element(
                decode_ring_element(report["value"])
            )
        except OSError as exc:
            click.echo(f"export I/O error: {exc}", err=True)
            sys.exit(EXIT_IO)
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            click.echo(f"cannot re-import {source}: {exc}", err=True)
            sys.exit(EXIT_USAGE)
    else:
        if None in (n, left, a_text, c_text):
            raise click.UsageError("export needs --n/--left/--a/--c or --from FILE")
        k = _vertex_power(left)
        a = _parse_state(a_text, "--a")
        c = _parse_state(c_text, "--c")
        report = _cached_report(cfg, n, k, a, c)
        if report["status"] == "unsupported":
            click.echo(report["detail"])
            sys.exit(EXIT_UNSUPPORTED)
    text = _csv_text([report]) if cfg.output_format == "csv" else _json_text(report)
    try:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        click.echo(f"export I/O error: {exc}", err=True)
        sys.exit(EXIT_IO)
    click.echo(f"wrote {out}")


# ---------------------------------------------------------------------------
# verification suites


def _check(name: str, ok: bool, detail: str = "") -> dict:
    return {"name": name, "pass": bool(ok), "detail": detail}


def _suite_angular(cfg: RunConfig) -> dict:
    from .angular import (
        clebsch_gordan,
        harmonic_value,
        legendre_p_float,
        legendre_triple_integral,
        parity_cg,
    )

    checks = []
    rng = random.Random(20260814)
    worst = 0.0
    for _ in range(20):
        t1, t2 = rng.uniform(0, math.pi), rng.uniform(0, math.pi)
        f1, f2 = rng.uniform(0, 2 * math.pi), rng.uniform(0, 2 * math.pi)
        cosang = (
            math.sin(t1) * math.sin(t2) * math.cos(f1 - f2)
            + math.cos(t1) * math.cos(t2)
        )
        for l in range(11):
            total = 0.0
            for m in range(-l, l + 1):
                total += (
                    harmonic_value(l, m, t1, f1).conjugate()
                    * harmonic_value(l, m, t2, f2)
                ).real
            worst = max(worst, abs(total - legendre_p_float(l, cosang)))
    checks.append(_check("addition-theorem l<=10", worst < 1e-12, f"max dev {worst:.3e}"))

    ortho_ok = True
    for l1 in range(3):
        for l2 in range(3):
            for J in range(abs(l1 - l2), l1 + l2 + 1):
                for Jp in range(abs(l1 - l2), l1 + l2 + 1):
                    for M in range(-J, J + 1):
                        if abs(M) > Jp:
                            continue
                        acc = RadicalScalar.from_rational(Fraction(0))
                        for m1 in range(-l1, l1 + 1):
                            m2 = M - m1
                            if abs(m2) > l2:
                                continue
                            acc = acc + clebsch_gordan(l1, m1, l2, m2, J, M) * \
                                clebsch_gordan(l1, m1, l2, m2, Jp, M)
                        want = Fraction(1 if J == Jp else 0)
                        if acc != RadicalScalar.from_rational(want):
                            ortho_ok = False
    checks.append(_check("cg-orthogonality l<=2", ortho_ok))

    parity_ok = True
    for l1 in range(5):
        for l2 in range(5):
            for J in range(abs(l1 - l2), l1 + l2 + 1):
                got = parity_cg(l1, l2, J) * parity_cg(l1, l2, J)
                want = Fraction(2 * J + 1, 2) * legendre_triple_integral(l1, l2, J)
                if got != RadicalScalar.from_rational(want):
                    parity_ok = False
    checks.append(_check("parity-cg squared l<=4", parity_ok))
    return {"suite": "angular", "pass": all(c["pass"] for c in checks), "checks": checks}


def _suite_ring(cfg: RunConfig) -> dict:
    rng = random.Random(20260814)
    failures = 0
    for _ in range(200):
        d = rng.randint(-10, 10)
        J = rng.randint(0, 8)
        M = rng.randint(-J, J)
        p = rng.randint(0, 3)
        D = rng.choice((3, 4, 5))
        scalar = RadicalScalar.from_rational(
            Fraction(rng.randint(1, 60), rng.randint(1, 12))
        )
        term = RingElement.single(scalar, d, p, J, M)
        if laplacian(inverse_laplacian(term, D), D) != term:
            failures += 1
    checks = [_check("laplacian round trip 200 random terms", failures == 0,
                     f"{failures} failures")]
    return {"suite": "ring", "pass": failures == 0, "checks": checks}


def _suite_sums(cfg: RunConfig) -> dict:
    from .special import char_sum, char_sum_bruteforce, dougall_rhs
    from .angular import legendre_p_float

    checks = []
    mismatch = 0
    for l1 in range(4):
        for l2 in range(4):
            for a_ in range(7):
                if char_sum(l1, l2, a_) != char_sum_bruteforce(l1, l2, a_, l1 + l2):
                    mismatch += 1
    checks.append(_check("char_sum vs brute force l<=3 a<=6", mismatch == 0,
                         f"{mismatch} mismatches"))
    checks.append(_check("odd-in-triangle zero", str(char_sum(2, 1, 2)) == "0"))

    nu, y = 0.5, 0.3
    partial = sum(
        (2 * k_ + 1) * legendre_p_float(k_, y) / (nu * (nu + 1) - k_ * (k_ + 1))
        for k_ in range(2000)
    )
    dev = abs(partial - dougall_rhs(nu, y))
    checks.append(_check("dougall partial sum", dev < 5e-2, f"dev {dev:.3e}"))
    return {"suite": "sums", "pass": all(c["pass"] for c in checks), "checks": checks}


def _suite_remainders(cfg: RunConfig) -> dict:
    from .special import (
        phi2_log_divergence,
        phi3_divergence_prefactor,
        r1_phi2,
        r1_phi3,
    )

    zero = RadicalScalar.from_rational(Fraction(0))
    checks = []
    trivial = all(
        r1_phi2(d, j, q).log_coeff == zero and r1_phi2(d, j, q).const_part == zero
        for q in (0, 4)
        for d, j in ((0, 0), (2, 1), (-3, 2))
    )
    checks.append(_check("squared-field remainder vanishes at q in {0,4}", trivial))
    div = all(phi2_log_divergence(d, j) == zero for d, j in ((1, 2), (0, 1), (3, 0)))
    checks.append(_check("squared-field log divergence coefficient is zero", div))
    v0 = r1_phi3(0, 0, 0)
    checks.append(_check("cubed-field remainder at origin labels",
                         v0.log_coeff == zero and v0.const_part == zero))
    v1 = r1_phi3(-3, 0, 3)
    checks.append(_check("cubed-field remainder pure log value",
                         v1.const_part == zero and
                         v1.log_coeff == RadicalScalar.from_rational(Fraction(-40))))
    pref = phi3_divergence_prefactor(2, 0, 0)
    checks.append(_check("cubed-field divergence prefactor",
                         pref == RadicalScalar.from_rational(Fraction(20))))
    return {"suite": "remainders", "pass": all(c["pass"] for c in checks),
            "checks": checks}


def _suite_crosscheck(cfg: RunConfig) -> dict:
    from .crosscheck import ThreePointConfig, compare

    grid = [
        ThreePointConfig(s, c, mu=cfg.mu, N=cfg.truncation)
        for s in (0.2, 0.5, 0.8)
        for c in (-0.5, 0.0, 0.5)
    ]
    report = compare(grid)
    checks = [
        _check(
            "three-point factorization vs customary",
            report["pass"],
            f"constant {report['constant_estimate']:.9f}, "
            f"max dev {report['max_deviation']:.3e}",
        )
    ]
    return {"suite": "crosscheck", "pass": report["pass"], "checks": checks}


_SUITE_RUNNERS = {
    "angular": _suite_angular,
    "ring": _suite_ring,
    "sums": _suite_sums,
    "remainders": _suite_remainders,
    "crosscheck": _suite_crosscheck,
}


def _run_suite(name: str, cfg: RunConfig) -> dict:
    return _SUITE_RUNNERS[name](cfg)


if __name__ == "__main__":
    main()
