"""Command line: ``delta2 <command> ...``.

Exit codes: 0 ok, 2 parse or usage error, 3 certificate or audit failure,
4 resource budget exhausted.  Failures print a JSON object to stderr.
"""
from __future__ import annotations

import argparse
import json
import os
import re
import sys
import tempfile
from pathlib import Path
from typing import List, Optional, Sequence

from . import __version__
from .ershov import (find_limit, limit_lemma_witness, read_trace_csv, trace_csv, trace_rows, verdicts_json,
                     window_verdicts)
from .herbrand import (CertificateError, boolean_decomposition, change_bound_check, check_certificate,
                       herbrand_pair, load_d2)
from .limr import load_phi, nested_limit
from .omega_deriv import (DerivationBudgetError, DerivationError, audit_local_correctness, canonical_derivation,
                          check_forall_block_changes, derivation_pair, dump_derivation, settle,
                          sigma_bound_violation, trace, trace_csv as deriv_trace_csv)
from .ordinal import (NotationError, OrdinalBudgetError, OrdinalSyntaxError, add, compare, omega_tower,
                      parse_ordinal, render_ordinal, scale_finite)
from .spec_lang import DSLSyntaxError, Truth, brute_truth

EXIT_OK, EXIT_PARSE, EXIT_AUDIT, EXIT_BUDGET = 0, 2, 3, 4


class CLIError(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code, self.kind = code, kind


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CLIError(EXIT_PARSE, "usage", message)


def _c_range(text: str) -> List[int]:
    m = re.fullmatch(r"\s*(\d+)\s*(?:(?:\.\.|-|:)\s*(\d+))?\s*", text)
    if not m:
        raise argparse.ArgumentTypeError(f"expected N or N..M, got {text!r}")
    lo = int(m.group(1))
    hi = int(m.group(2)) if m.group(2) is not None else lo
    if hi < lo:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return list(range(lo, hi + 1))


def _positive(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fp:
        fp.write(text)
    os.replace(tmp, path)


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise CLIError(EXIT_PARSE, "io", f"cannot read {path}: {exc.strerror}")


def _emit(args, text: str, name: str) -> str:
    if args.out:
        _write_atomic(Path(args.out) / name, text)
    return text


# -- commands ---------------------------------------------------------------------

def cmd_ordinal(args) -> str:
    op, vals = args.op, args.operands
    need = {"cmp": 2, "add": 2, "scale": 2, "tower": 1, "parse": 1}[op]
    if len(vals) != need:
        raise CLIError(EXIT_PARSE, "usage", f"ordinal {op} takes {need} operand(s)")
    if op == "cmp":
        result = str(compare(parse_ordinal(vals[0]), parse_ordinal(vals[1])))
    elif op == "add":
        result = render_ordinal(add(parse_ordinal(vals[0]), parse_ordinal(vals[1])))
    elif op == "scale":
        result = render_ordinal(scale_finite(_positive(vals[0]), parse_ordinal(vals[1])))
    elif op == "tower":
        result = render_ordinal(omega_tower(int(vals[0])))
    else:
        result = render_ordinal(parse_ordinal(vals[0]))
    return _dump({"op": op, "result": result}) if args.format == "json" else result + "\n"


def _load(path: str):
    return load_d2(_read(path))


def cmd_approximate(args) -> str:
    cs = _load(args.spec)
    W, cs_range = args.window, args.c_range
    if args.method == "herbrand":
        if cs.certificate is None:
            raise CLIError(EXIT_PARSE, "usage", f"{args.spec} has no herbrand block; use --method baseline")
        verdict = check_certificate(cs.certificate, cs.spec, cs_range, args.cert_window)
        if not verdict.ok:
            raise CLIError(EXIT_AUDIT, "certificate", f"certificate fails at {verdict.counterexample}")
        pair = herbrand_pair(cs.certificate, cs.spec)
    else:
        pair = limit_lemma_witness(cs.spec)
    lowering = args.method != "baseline"
    verdicts, reports = {}, []
    for c in cs_range:
        rows = trace_rows(pair, [c], W)
        fs, hs = pair.sample(c, W)
        verdicts[c] = window_verdicts(fs, hs, pair.K, c, lowering)
        rep = find_limit(pair, c, W).to_json()
        truth = brute_truth(cs.spec, c, W)
        rep["brute_truth"] = str(truth)
        rep["agrees"] = None if truth is Truth.UNKNOWN else (truth is Truth.TRUE) == (rep["observed_limit"] == 0)
        reports.append(rep)
        if args.out:
            _write_atomic(Path(args.out) / f"trace_c{c}.csv", trace_csv(rows))
    summary = {"method": args.method, "window": W, "K": None if pair.K is None else render_ordinal(pair.K),
               "seed": args.seed, "limits": reports}
    if cs.certificate is not None and args.method == "herbrand":
        summary["change_bound"] = change_bound_check(pair.f, cs.certificate.r, cs_range, W).to_json()
    if args.out:
        _write_atomic(Path(args.out) / "verdicts.json", verdicts_json(verdicts))
        _write_atomic(Path(args.out) / "summary.json", _dump(summary))
    if args.format == "csv":
        return trace_csv(trace_rows(pair, cs_range, W))
    return _dump(summary)


def _derivation(args, c: int):
    cs = _load(args.spec)
    X = args.witness_bound
    X = "auto" if X == "auto" else int(X)
    return cs, canonical_derivation(cs.spec, c, X, args.form, args.audit_window)


def cmd_derive(args) -> str:
    results = []
    for c in args.c_range:
        cs, d = _derivation(args, c)
        audit = audit_local_correctness(d, args.depth, args.width)
        results.append({"c": c, "X": d.X, "K": render_ordinal(d.K), "root_ord": render_ordinal(d.root.ord),
                        "form": d.form, "audit": audit.to_json()})
        if args.out:
            _write_atomic(Path(args.out) / f"derivation_c{c}.jsonl", dump_derivation(d, args.depth, args.width))
        if not audit.ok:
            raise CLIError(EXIT_AUDIT, "audit", f"c={c}: {audit.clause} at {list(audit.address or ())}")
    return _emit(args, _dump({"derivations": results}), "derive.json")


def cmd_trace(args) -> str:
    out, csvs = [], []
    for c in args.c_range:
        cs, d = _derivation(args, c)
        tr = trace(d, args.window)
        pair = derivation_pair(d)
        vs = window_verdicts(list(tr.f), list(tr.h), pair.K, c)
        item = {"c": c, "X": d.X, "bound": render_ordinal(pair.K), "window": args.window,
                "sigma_bound_violation": sigma_bound_violation(tr),
                "forall_blocks": check_forall_block_changes(d, args.window).to_json(),
                "verdicts": [v.to_json() for v in vs]}
        if args.settle:
            s = settle(d, args.settle)
            item["settled"] = {"w": s.w, "value": s.value, "candidate": s.candidate}
            truth = brute_truth(cs.spec, c, args.window)
            item["brute_truth"] = str(truth)
        out.append(item)
        csvs.append(deriv_trace_csv(tr))
        if args.out:
            _write_atomic(Path(args.out) / f"deriv_trace_c{c}.csv", csvs[-1])
    if args.format == "csv":
        return "".join(csvs)
    return _emit(args, _dump({"traces": out}), "trace.json")


def cmd_decompose(args) -> str:
    cs = _load(args.spec)
    if cs.certificate is None:
        raise CLIError(EXIT_PARSE, "usage", f"{args.spec} has no herbrand block")
    pair = herbrand_pair(cs.certificate, cs.spec)
    rep = boolean_decomposition(pair, cs.certificate.r)
    rows = []
    for c in args.c_range:
        row = rep.table(c, args.window)
        row["observed_limit"] = pair.f(c, args.window)
        row["equivalent"] = row["combination"] == (row["observed_limit"] == 0)
        rows.append(row)
    return _emit(args, _dump({"r": cs.certificate.r, "rows": rows}), "decompose.json")


def cmd_limr(args) -> str:
    try:
        inst = load_phi(_read(args.phi))
    except ValueError as exc:
        raise CLIError(EXIT_PARSE, "usage", str(exc))
    k = inst.k if args.k is None else args.k
    if len(inst.phi.params) != k + 1:
        raise CLIError(EXIT_PARSE, "usage",
                       f"{inst.phi.name} has {len(inst.phi.params)} variables, expected k+1 = {k + 1}")
    res = nested_limit(inst.phi, k, args.window, box=args.box)
    return _emit(args, _dump(res.to_json()), "limr.json")


def cmd_verify(args) -> str:
    K = None if args.K.lower() == "none" else parse_ordinal(args.K)
    try:
        with open(args.pair, newline="") as fp:
            per_c = read_trace_csv(fp)
    except OSError as exc:
        raise CLIError(EXIT_PARSE, "io", f"cannot read {args.pair}: {exc.strerror}")
    except (ValueError, KeyError) as exc:
        raise CLIError(EXIT_PARSE, "trace", str(exc))
    verdicts = {c: window_verdicts(fs, hs, K, c, not args.no_lowering) for c, (fs, hs) in per_c.items()}
    return _emit(args, verdicts_json(verdicts), "verdicts.json")


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--window", type=_positive, default=100, help="window W (default 100)")
    common.add_argument("--c-range", type=_c_range, default=[0], help="parameter range, N or N..M (default 0)")
    common.add_argument("--format", choices=("json", "csv"), default=None,
                        help="output format (default json; plain text for ordinal)")
    common.add_argument("--seed", type=int, default=0, help="recorded in reports; runs are deterministic")
    common.add_argument("--out", help="directory for output files")

    p = _Parser(prog="delta2", description="Witness pairs, derivations and nested limits at desk scale.")
    p.add_argument("--version", action="version", version=f"delta2 {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    o = sub.add_parser("ordinal", parents=[common], help="ordinal arithmetic")
    o.add_argument("op", choices=("cmp", "add", "scale", "tower", "parse"))
    o.add_argument("operands", nargs="*")
    o.set_defaults(run=cmd_ordinal)

    a = sub.add_parser("approximate", parents=[common], help="build (f,h) and report limits")
    a.add_argument("--spec", required=True)
    a.add_argument("--method", choices=("herbrand", "baseline"), default="herbrand")
    a.add_argument("--cert-window", type=_positive, default=12, help="grid bound for the certificate check")
    a.set_defaults(run=cmd_approximate)

    for name, fn, helptext in (("derive", cmd_derive, "generate and audit canonical derivations"),
                               ("trace", cmd_trace, "trace sigma, f, h through a derivation")):
        d = sub.add_parser(name, parents=[common], help=helptext)
        d.add_argument("--spec", required=True)
        d.add_argument("--c", dest="c_range", type=_c_range, help="alias for --c-range")
        d.add_argument("--witness-bound", default="auto", help="candidate bound X or 'auto'")
        d.add_argument("--form", choices=("delta2", "sigma2"), default="delta2")
        d.add_argument("--audit-window", type=_positive, default=None)
        d.add_argument("--depth", type=_positive, default=6)
        d.add_argument("--width", type=_positive, default=8)
        if name == "trace":
            d.add_argument("--settle", type=int, default=0,
                           help="also run sigma until this many children of a surviving block")
        d.set_defaults(run=fn)

    dc = sub.add_parser("decompose", parents=[common], help="Y_k / N_k decomposition")
    dc.add_argument("--spec", required=True)
    dc.set_defaults(run=cmd_decompose)

    lm = sub.add_parser("limr", parents=[common], help="nested limit versus brute-force lex-minimum")
    lm.add_argument("--phi", required=True)
    lm.add_argument("--k", type=_positive)
    lm.add_argument("--box", type=_positive, help="brute-force box (default min(window, 24))")
    lm.set_defaults(run=cmd_limr)

    v = sub.add_parser("verify", parents=[common], help="re-check an exported (c,w,f,h) trace")
    v.add_argument("--pair", required=True, help="CSV trace with columns c,w,f,h")
    v.add_argument("--K", required=True, help="bound K, or 'none'")
    v.add_argument("--no-lowering", action="store_true", help="skip the lowering check (baseline pairs)")
    v.set_defaults(run=cmd_verify)
    return p


def main(argv: Optional[Sequence[str]] = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        stdout.write(args.run(args))
        return EXIT_OK
    except CLIError as exc:
        code, kind, msg = exc.code, exc.kind, str(exc)
    except (DSLSyntaxError, OrdinalSyntaxError, NotationError, CertificateError) as exc:
        code, kind, msg = EXIT_PARSE, "parse", str(exc)
    except (OrdinalBudgetError, DerivationBudgetError) as exc:
        code, kind, msg = EXIT_BUDGET, "budget", str(exc)
    except DerivationError as exc:
        code, kind, msg = EXIT_AUDIT, "derivation", str(exc)
    except ValueError as exc:
        code, kind, msg = EXIT_PARSE, "value", str(exc)
    stderr.write(json.dumps({"error": kind, "message": msg, "exit_code": code}, sort_keys=True) + "\n")
    return code


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
