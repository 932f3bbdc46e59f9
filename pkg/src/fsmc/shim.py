"""Per-program C main() generator for differential testing.

The emitted main reads arguments in the wire format (first line the arity,
then one line per argument: `D x`, `I k`, `V n x1 .. xn`, or
`M r c row-major`), calls the emitted function, and prints the result in
the interpreter's value syntax so outputs compare textually.  Parsing and
printing live in the runtime library; this glue just sequences them for
one signature.
"""

from .codegen import CProgram
from .syntax import DOUBLE, INDEX, BOOL, VECTOR, MATRIX, VECTOR_D, MATRIX_D

_READERS = {
    DOUBLE: ("double", "fsm_read_double"),
    INDEX: ("int64_t", "fsm_read_index"),
    BOOL: ("bool", "fsm_read_bool"),
    VECTOR: ("fsm_vector*", "fsm_read_vector"),
    MATRIX: ("fsm_matrix*", "fsm_read_matrix"),
}

_PRINTERS = {
    DOUBLE: "fsm_print_double",
    INDEX: "fsm_print_index",
    BOOL: "fsm_print_bool",
    VECTOR: "fsm_print_vector",
    MATRIX: "fsm_print_matrix",
    VECTOR_D: "fsm_print_dvector",
    MATRIX_D: "fsm_print_dmatrix",
}


def shim_main_source(prog: CProgram, pool_mb: int = 64) -> str:
    lines = [
        "#include <stdio.h>",
        "#include <stdlib.h>",
        "",
        "int main(int argc, char** argv) {",
        "  FILE* in = argc > 1 ? fopen(argv[1], \"r\") : stdin;",
        "  if (!in) return 2;",
        f"  fsm_storage* s_ = fsm_storage_new({pool_mb} << 20);",
        "  int64_t arity;",
        f"  if (fsm_read_arity(in, &arity) || arity != "
        f"{len(prog.param_types)}) return 2;",
    ]
    for name, t in zip(prog.param_names, prog.param_types):
        ctype, reader = _READERS[t]
        lines.append(f"  {ctype} {name};")
        lines.append(f"  if ({reader}(s_, in, &{name})) return 2;")
    call_args = ", ".join(("s_",) + prog.param_names)
    rt = prog.result_type
    if rt in (DOUBLE, INDEX, BOOL):
        ctype = _READERS[rt][0]
        lines.append(f"  {ctype} res = {prog.name}({call_args});")
        lines.append(f"  {_PRINTERS[rt]}(res);")
    elif rt in (VECTOR, MATRIX, VECTOR_D, MATRIX_D):
        ctype = {VECTOR: "fsm_vector*", MATRIX: "fsm_matrix*",
                 VECTOR_D: "fsm_dvector*", MATRIX_D: "fsm_dmatrix*"}[rt]
        lines.append(f"  {ctype} res = {prog.name}({call_args});")
        lines.append(f"  {_PRINTERS[rt]}(res);")
    else:
        raise ValueError(f"no shim printer for {rt!r}")
    lines += [
        "  printf(\"\\n\");",
        "  fsm_storage_free(s_);",
        "  return 0;",
        "}",
        "",
    ]
    return "\n".join(lines)


def shim_soa_main_source(prog: CProgram, pool_mb: int = 64) -> str:
    """Main for split-layout results: prints the same value text as the
    array-of-pairs layout, so both layouts compare equal."""
    lines = [
        "#include <stdio.h>",
        "#include <stdlib.h>",
        "",
        "int main(int argc, char** argv) {",
        "  FILE* in = argc > 1 ? fopen(argv[1], \"r\") : stdin;",
        "  if (!in) return 2;",
        f"  fsm_storage* s_ = fsm_storage_new({pool_mb} << 20);",
        "  int64_t arity;",
        f"  if (fsm_read_arity(in, &arity) || arity != "
        f"{len(prog.param_types)}) return 2;",
    ]
    for name, t in zip(prog.param_names, prog.param_types):
        ctype, reader = _READERS[t]
        lines.append(f"  {ctype} {name};")
        lines.append(f"  if ({reader}(s_, in, &{name})) return 2;")
    call_args = ", ".join(("s_",) + prog.param_names)
    lines += [
        f"  fsm_dsplit res = {prog.name}({call_args});",
        "  fsm_print_dsplit(res);",
        "  printf(\"\\n\");",
        "  fsm_storage_free(s_);",
        "  return 0;",
        "}",
        "",
    ]
    return "\n".join(lines)


def write_wire_args(fh, args):
    """Serialise Python values (floats, ints, bools, nested lists) in the
    shim wire format; floats as hex so the round-trip is exact."""
    print(len(args), file=fh)
    for a in args:
        if isinstance(a, bool):
            print(f"B {int(a)}", file=fh)
        elif isinstance(a, float):
            print(f"D {a.hex()}", file=fh)
        elif isinstance(a, int):
            print(f"I {a}", file=fh)
        elif isinstance(a, list) and a and isinstance(a[0], list):
            flat = " ".join(x.hex() for row in a for x in row)
            print(f"M {len(a)} {len(a[0])} {flat}", file=fh)
        elif isinstance(a, list):
            print(f"V {len(a)} {' '.join(x.hex() for x in a)}", file=fh)
        else:
            raise ValueError(f"cannot serialise {a!r}")
