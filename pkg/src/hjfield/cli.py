"""Command-line front end.

Subcommands:

* ``analyze``  -- run the full pipeline and emit a report
* ``brackets`` -- fundamental and generalized bracket tables only
* ``validate`` -- numeric cross-check of the generalized brackets
* ``parse``    -- lint a model file

Exit codes: 0 success, 1 analysis failure (non-closure, singular
C-matrix, oracle disagreement), 2 usage or parse errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .brackets import BracketError, build_c_matrix, star_kernel
from .dsl import ParseError, canonical_str
from .hj import Options, PipelineError, analyze, bracket_tables, classify
from .oracle import OracleError, cross_validate
from .phase import BUILTIN_MODELS, ModelError, builtin_model, load_model
from .report import emit


def _load(selector: str):
    if selector in BUILTIN_MODELS:
        return builtin_model(selector)
    path = Path(selector)
    if not path.exists():
        raise ModelError("unknown model %r (not a built-in name or file)" % selector)
    return load_model(path.read_text(), name=path.stem)


def _write(text: str, out_path):
    if out_path:
        Path(out_path).write_text(text)
    else:
        sys.stdout.write(text)


def make_parser():
    p = argparse.ArgumentParser(
        prog="hjfield",
        description="Hamilton-Jacobi constraint analysis of first-order "
                    "field theories on a 3d slice")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--model", required=True,
                        help="built-in name (%s) or a model file path"
                        % ", ".join(BUILTIN_MODELS))
        sp.add_argument("--emit", default="text",
                        choices=("text", "structured", "latex"))
        sp.add_argument("-o", "--output", default=None)

    a = sub.add_parser("analyze", help="full constraint analysis")
    common(a)
    a.add_argument("--ansatz-degree", type=int, default=1)
    a.add_argument("--max-generations", type=int, default=10)
    a.add_argument("--check-reducibility", action="store_true",
                   help="re-verify discovered reducibility relations by "
                        "expansion (also done during analysis)")

    b = sub.add_parser("brackets", help="bracket tables only")
    common(b)

    v = sub.add_parser("validate", help="numeric oracle cross-check")
    v.add_argument("--model", required=True)
    v.add_argument("--oracle-trials", type=int, default=100)
    v.add_argument("--oracle-tol", type=float, default=1e-10)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("-o", "--output", default=None)

    pa = sub.add_parser("parse", help="lint a model file")
    pa.add_argument("--model", required=True)
    return p


def run(argv) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0

    try:
        if args.command == "parse":
            model = _load(args.model)
            print("ok: model %s, %d fields, %d primary constraints"
                  % (model.name, len(model.fields), len(model.primary())))
            return 0

        model = _load(args.model)

        if args.command == "brackets":
            part = classify(model.primary(), model)
            C = build_c_matrix(part.noninvolutive, model)
            fund, gen = bracket_tables(model, C)
            lines = ["Fundamental brackets (%s)" % model.name]
            for e in fund:
                lines.append("  {%s[%s](x), %s[%s](y)} = %s" % (
                    e.a, ",".join(e.a_labels), e.b, ",".join(e.b_labels),
                    canonical_str(e.kernel)))
            lines.append("Generalized brackets")
            for e in gen:
                lines.append("  {%s[%s](x), %s[%s](y)}* = %s" % (
                    e.a, ",".join(e.a_labels), e.b, ",".join(e.b_labels),
                    canonical_str(e.kernel)))
            _write("\n".join(lines) + "\n", args.output)
            return 0

        if args.command == "validate":
            part = classify(model.primary(), model)
            C = build_c_matrix(part.noninvolutive, model)
            fund, gen = bracket_tables(model, C)
            pairs = [(e.a, e.a_labels, e.b, e.b_labels, e.kernel) for e in gen]
            rep = cross_validate(model, part.noninvolutive, pairs,
                                 trials=args.oracle_trials,
                                 tol=args.oracle_tol, seed=args.seed)
            lines = ["oracle cross-validation (%s): %d trials, %d checks"
                     % (model.name, rep.trials, rep.checks),
                     "max deviation: %g" % rep.max_deviation]
            for f in rep.failures:
                lines.append("FAIL %s seed=%d comps=%s symbolic=%g numeric=%g"
                             % (f.pair, f.seed, f.components, f.symbolic,
                                f.numeric))
            lines.append("result: %s" % ("PASS" if rep.passed else "FAIL"))
            _write("\n".join(lines) + "\n", args.output)
            return 0 if rep.passed else 1

        # analyze
        options = Options(max_generations=args.max_generations,
                          ansatz_degree=args.ansatz_degree)
        report = analyze(model, options)
        if args.check_reducibility:
            from .hj import verify_reducibility
            for r in report.reducibility:
                resid = verify_reducibility(r.lhs, r.rhs, report.secondaries,
                                            model)
                if not resid.is_zero():
                    print("reducibility verification failed for %s" % r.family,
                          file=sys.stderr)
                    return 1
        if not report.algebra.closed:
            _write(emit(report, args.emit), args.output)
            print("constraint algebra failed to close", file=sys.stderr)
            return 1
        _write(emit(report, args.emit), args.output)
        return 0

    except (ParseError, ModelError) as e:
        print("error: %s" % e, file=sys.stderr)
        return 2
    except (BracketError, PipelineError, OracleError) as e:
        print("analysis error: %s" % e, file=sys.stderr)
        return 1


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
