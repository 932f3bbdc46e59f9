"""Command-line driver.

Subcommands: check, run, diff, opt, emit-c, bench, dump-prelude.
Exit codes: 0 success, 1 source diagnostics, 2 I/O problems, 3 internal
assertion failures.  Identical arguments and seed produce byte-identical
output.
"""

import argparse
import sys

from .errors import FsmError, InternalError
from .interp import evaluate, show_value
from .pipeline import OptConfig, PipelineTrace, run_pipeline
from .prelude import PRELUDE_SOURCE
from .printer import pretty
from .unit import assemble, expand_macros


def _read(path):
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as ex:
        print(f"error: cannot read {path}: {ex.strerror}", file=sys.stderr)
        raise SystemExit(2)


def _assemble(args):
    return assemble(_read(args.input), args.input,
                    prelude_path=getattr(args, "prelude", None))


def cmd_check(args):
    from .printer import print_type
    unit = _assemble(args)
    print(f"ok: {print_type(unit.ty)}")
    return 0


def cmd_run(args):
    unit = expand_macros(_assemble(args))
    value = evaluate(unit.expr, fuel=args.fuel)
    print(show_value(value))
    return 0


def cmd_diff(args):
    unit = run_pipeline(_assemble(args), OptConfig.parse("none"))
    _print_unit(unit, args)
    return 0


def _print_unit(unit, args):
    defs, body = unit.split()
    if getattr(args, "full", False):
        for name, bound in defs:
            print(f"let {name} = {pretty(bound)}")
    print(pretty(body))


def cmd_opt(args):
    trace = PipelineTrace() if args.dump_after else None
    unit = run_pipeline(_assemble(args), OptConfig.parse(args.opt), trace)
    if args.dump_after:
        for phase, expr in trace.entries:
            if phase == args.dump_after:
                node = expr
                from .syntax import Let
                while isinstance(node, Let):
                    node = node.body
                print(pretty(node))
                return 0
        print(f"error: no phase named {args.dump_after!r} ran",
              file=sys.stderr)
        return 1
    _print_unit(unit, args)
    return 0


def cmd_emit_c(args):
    from .codegen import emit_c
    unit = run_pipeline(_assemble(args), OptConfig.parse(args.opt))
    prog = emit_c(unit, args.name, args.layout)
    text = prog.source
    if args.shim:
        from .shim import shim_main_source, shim_soa_main_source
        from .syntax import VECTOR_D
        if args.layout == "soa" and prog.result_type == VECTOR_D:
            text += "\n" + shim_soa_main_source(prog)
        else:
            text += "\n" + shim_main_source(prog)
    if args.out:
        try:
            with open(args.out, "w") as fh:
                fh.write(text)
        except OSError as ex:
            print(f"error: cannot write {args.out}: {ex.strerror}",
                  file=sys.stderr)
            return 2
    else:
        print(text, end="")
    return 0


def cmd_bench(args):
    from .bench import ALL_CASES, CSV_HEADER, run_bench
    sizes = [int(s) for s in args.sizes.split(",") if s]
    names = list(ALL_CASES) if args.case == "all" else [args.case]
    rows = [CSV_HEADER]
    for name in names:
        case = ALL_CASES[name]
        variants = args.variants.split("/") if args.variants else None
        rows.extend(run_bench(case, sizes, repeats=args.repeats,
                              seed=args.seed, variants=variants))
    text = "\n".join(rows) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        print(text, end="")
    return 0


def cmd_dump_prelude(args):
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(PRELUDE_SOURCE)
    else:
        print(PRELUDE_SOURCE, end="")
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="fsmc",
        description="Compiler for a small typed functional array language "
                    "with forward-mode differentiation")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, **kw):
        sp = sub.add_parser(name, **kw)
        sp.set_defaults(fn=fn)
        return sp

    sp = add("check", cmd_check, help="typecheck a source file")
    sp.add_argument("input")
    sp.add_argument("--prelude", help="alternative library file")

    sp = add("run", cmd_run, help="interpret a source file and print the value")
    sp.add_argument("input")
    sp.add_argument("--prelude")
    sp.add_argument("--fuel", type=int, default=10**9,
                    help="evaluation step budget (default 1e9)")

    sp = add("diff", cmd_diff,
             help="expand derivative macros and print the translated term")
    sp.add_argument("input")
    sp.add_argument("--prelude")
    sp.add_argument("--full", action="store_true",
                    help="also print library/definition bindings")

    sp = add("opt", cmd_opt, help="run the optimisation pipeline and print")
    sp.add_argument("input")
    sp.add_argument("--prelude")
    sp.add_argument("--opt", default="all",
                    help="preset (none|lf|lf+ln|all) or comma toggles "
                         "(lf,fission,simplify,ln,licm,anf,dps)")
    sp.add_argument("--dump-after", metavar="PHASE",
                    help="print the term after the named phase")
    sp.add_argument("--full", action="store_true")

    sp = add("emit-c", cmd_emit_c, help="emit C for the optimised program")
    sp.add_argument("input")
    sp.add_argument("--prelude")
    sp.add_argument("--opt", default="all")
    sp.add_argument("--name", default="program")
    sp.add_argument("--layout", choices=["aos", "soa"], default="aos")
    sp.add_argument("--out")
    sp.add_argument("--shim", action="store_true",
                    help="append a main() reading the wire format")

    sp = add("bench", cmd_bench, help="run benchmark cases, print CSV")
    sp.add_argument("--case", default="all",
                    help="dot-grad|max-grad|add-jacob|smul-jacob|"
                         "nnmf-grad|ba-jacobian|all")
    sp.add_argument("--sizes", default="256,1024,4096")
    sp.add_argument("--repeats", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--variants", default="",
                    help="slash-separated optimisation settings")
    sp.add_argument("--out")

    sp = add("dump-prelude", cmd_dump_prelude, help="print the library source")
    sp.add_argument("--out")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except FsmError as ex:
        print(ex.render(), file=sys.stderr)
        return 1
    except InternalError as ex:
        print(f"internal error: {ex}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
