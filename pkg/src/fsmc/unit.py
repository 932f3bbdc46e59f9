"""Compilation units: program source + library assembled into one term.

A unit is a chain of top-level `let`s (library definitions first, then the
program's own definitions) around the program body.  Each stage returns a
fully elaborated tree, so later passes can rely on binder annotations and
resolved operator instances.
"""

from dataclasses import dataclass

from .errors import FsmError
from .parser import parse_program
from .prelude import PRELUDE_SOURCE, load_prelude
from .syntax import Expr, Let, NameSource, Ty, alpha_rename_unit, strip_types
from .typecheck import typecheck
from .ad import macro_expand


@dataclass
class Unit:
    expr: Expr          # elaborated let-chain around the body
    ty: Ty              # type of the body
    ns: NameSource      # fresh-name state shared by later passes
    filename: str = "<input>"

    def split(self):
        """Returns (defs, body) views of the let spine."""
        defs = []
        node = self.expr
        while isinstance(node, Let):
            defs.append((node.name, node.bound))
            node = node.body
        return defs, node


def assemble(source: str, filename: str = "<input>",
             with_prelude: bool = True, prelude_path: str = None) -> Unit:
    """Parse program text (with the library prepended), uniquify binders,
    and typecheck.  Deriv macros are still present in the result."""
    if with_prelude:
        pre = load_prelude(prelude_path)
        pre_defs = list(pre.defs)
    else:
        pre_defs = []
    defs, body = parse_program(source, filename)
    if body is None:
        raise FsmError("program has no body expression", filename=filename)
    chain = body
    for name, bound in reversed(pre_defs + defs):
        chain = Let(name, bound, chain)
    ns = NameSource()
    chain = alpha_rename_unit(chain, ns)
    checked = typecheck(chain, {}, filename)
    return Unit(checked.expr, checked.ty, ns, filename)


def expand_macros(unit: Unit) -> Unit:
    """Expand deriv macros and re-elaborate."""
    expanded = macro_expand(unit.expr, unit.ns)
    checked = typecheck(strip_types(expanded), {}, unit.filename,
                        expect=unit.ty)
    return Unit(checked.expr, checked.ty, unit.ns, unit.filename)


def reelaborate(unit: Unit) -> Unit:
    """Re-infer annotations, keeping the unit's established body type."""
    checked = typecheck(strip_types(unit.expr), {}, unit.filename,
                        expect=unit.ty)
    return Unit(checked.expr, checked.ty, unit.ns, unit.filename)


def compile_source(source: str, filename: str = "<input>",
                   with_prelude: bool = True, prelude_path: str = None) -> Unit:
    """assemble + expand_macros in one step."""
    return expand_macros(assemble(source, filename, with_prelude, prelude_path))
