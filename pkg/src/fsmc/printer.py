"""Pretty-printer; inverse of the parser up to alpha-equivalence."""

import math

from .syntax import (
    DOUBLE, INDEX, BOOL, VECTOR, MATRIX, DOUBLE_D, VECTOR_D, MATRIX_D,
    ArrT, PairT, FunT,
    App, ArrayLit, BoolLit, Const, Deriv, If, IndexLit, Lam, Let, Region,
    ScalarLit, Var, ARITH_OPS, CMP_OPS,
)

# Precedence levels, matching the grammar.
_LOW, _OR, _AND, _CMP, _ADD, _MUL, _UNARY, _POW, _APP, _POSTFIX, _ATOM = range(11)

_INFIX_LEVEL = {
    "||": _OR, "&&": _AND,
    ">": _CMP, "<": _CMP, "==": _CMP, "<>": _CMP,
    "+": _ADD, "-": _ADD, "*": _MUL, "/": _MUL, "**": _POW,
}

_TY_SUGAR = {DOUBLE: "Double", INDEX: "Index", BOOL: "Bool",
             VECTOR: "Vector", MATRIX: "Matrix", DOUBLE_D: "DoubleD",
             VECTOR_D: "VectorD", MATRIX_D: "MatrixD"}


def print_type(t) -> str:
    if t in _TY_SUGAR:
        return _TY_SUGAR[t]
    if isinstance(t, ArrT):
        inner = print_type(t.elem)
        if isinstance(t.elem, (PairT, FunT)) or " " in inner:
            inner = f"({inner})"
        return f"Array {inner}"
    if isinstance(t, PairT):
        return f"{_ty_atom(t.fst)} * {_ty_atom(t.snd)}"
    if isinstance(t, FunT):
        parts = [_ty_atom(p) for p in t.params] + [_ty_atom(t.ret)]
        return " => ".join(parts)
    return repr(t)


def _ty_atom(t) -> str:
    s = print_type(t)
    if isinstance(t, (PairT, FunT)) and t not in _TY_SUGAR:
        return f"({s})"
    if isinstance(t, ArrT) and t not in _TY_SUGAR:
        return f"({s})"
    return s


def _float_text(v: float) -> str:
    if math.isinf(v) or math.isnan(v):
        # No literal syntax; only reachable from debug dumps.
        return repr(v)
    text = repr(float(v))
    return text


def pretty(e, indent: bool = False) -> str:
    """Render `e` as concrete syntax; `parse(pretty(e))` is alpha-equal to e."""
    return _show(e, _LOW)


def _paren(s, need):
    return f"({s})" if need else s


def _show(e, level):
    if isinstance(e, Region):
        return _show(e.expr, level)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Const):
        return e.name if e.name != "neg" else "(fun neg$x -> -neg$x)"
    if isinstance(e, ScalarLit):
        s = _float_text(e.val)
        if e.val < 0 or s.startswith("-"):
            return _paren(s, level > _UNARY)
        return s
    if isinstance(e, IndexLit):
        return str(e.val)
    if isinstance(e, BoolLit):
        return "true" if e.val else "false"
    if isinstance(e, ArrayLit):
        return "[" + ", ".join(_show(x, _LOW) for x in e.items) + "]"
    if isinstance(e, Lam):
        ps = " ".join(
            f"({p}: {print_type(t)})" if t is not None else p
            for p, t in e.params)
        return _paren(f"fun {ps} -> {_show(e.body, _LOW)}", level > _LOW)
    if isinstance(e, Let):
        s = f"let {e.name} = {_show(e.bound, _LOW)} in {_show(e.body, _LOW)}"
        return _paren(s, level > _LOW)
    if isinstance(e, If):
        s = (f"if {_show(e.cond, _LOW)} then {_show(e.then, _LOW)} "
             f"else {_show(e.els, _LOW)}")
        return _paren(s, level > _LOW)
    if isinstance(e, Deriv):
        s = f"deriv {_show(e.target, _POSTFIX)} {e.wrt}"
        return _paren(s, level > _LOW)
    if isinstance(e, App):
        return _show_app(e, level)
    raise TypeError(f"cannot print {e!r}")


def _show_app(e, level):
    fn, args = e.fn, e.args
    if isinstance(fn, Const):
        name = fn.name
        if name == "get" and len(args) == 2:
            base = _show(args[0], _POSTFIX)
            return f"{base}.[{_show(args[1], _LOW)}]"
        if name == "pair" and len(args) == 2:
            return f"({_show(args[0], _LOW)}, {_show(args[1], _LOW)})"
        if name == "neg" and len(args) == 1:
            return _paren(f"-{_show(args[0], _UNARY)}", level > _UNARY)
        if name == "not" and len(args) == 1:
            return _paren(f"not {_show(args[0], _UNARY)}", level > _UNARY)
        if name in _INFIX_LEVEL and len(args) == 2:
            lvl = _INFIX_LEVEL[name]
            if name == "**":
                s = f"{_show(args[0], _APP)} ** {_show(args[1], _UNARY)}"
            elif lvl == _CMP:
                s = f"{_show(args[0], _ADD)} {name} {_show(args[1], _ADD)}"
            else:
                # Left-associative chain: right operand one level tighter.
                s = f"{_show(args[0], lvl)} {name} {_show(args[1], lvl + 1)}"
            return _paren(s, level > lvl)
    parts = [_show(fn, _POSTFIX)] + [_show(a, _POSTFIX) for a in args]
    return _paren(" ".join(parts), level > _APP)
