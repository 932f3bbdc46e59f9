"""Core term and type representation for the fsmc array language.

Terms are immutable trees shared freely between the checker, interpreter,
differentiation pass, rewriter, and C backend.  Structural equality (`==`)
compares trees exactly, including binder names; use `alpha_equal` for
comparison modulo bound names.
"""

from dataclasses import dataclass, field
from typing import Optional, Union


# --------------------------------------------------------------------------
# Types
# --------------------------------------------------------------------------

class Ty:
    pass


@dataclass(frozen=True)
class BaseT(Ty):
    name: str

    def __repr__(self):
        return self.name


DOUBLE = BaseT("Double")
INDEX = BaseT("Index")
BOOL = BaseT("Bool")


@dataclass(frozen=True)
class ArrT(Ty):
    elem: Ty

    def __repr__(self):
        return f"Array {self.elem!r}" if isinstance(self.elem, BaseT) else f"Array ({self.elem!r})"


@dataclass(frozen=True)
class PairT(Ty):
    fst: Ty
    snd: Ty

    def __repr__(self):
        return f"({self.fst!r} * {self.snd!r})"


@dataclass(frozen=True)
class FunT(Ty):
    params: tuple
    ret: Ty

    def __repr__(self):
        parts = [repr(p) for p in self.params] + [repr(self.ret)]
        return "(" + " => ".join(parts) + ")"


VECTOR = ArrT(DOUBLE)
MATRIX = ArrT(VECTOR)
DOUBLE_D = PairT(DOUBLE, DOUBLE)
VECTOR_D = ArrT(DOUBLE_D)
MATRIX_D = ArrT(VECTOR_D)


def is_data_type(t: Ty) -> bool:
    """True for types that may flow into arrays, pairs, branches, returns."""
    return not isinstance(t, FunT)


def ground_rank(t: Ty) -> Optional[int]:
    """0 for Double, 1 for Vector, 2 for Matrix, else None."""
    if t == DOUBLE:
        return 0
    if t == VECTOR:
        return 1
    if t == MATRIX:
        return 2
    return None


# --------------------------------------------------------------------------
# Expressions
# --------------------------------------------------------------------------

class Expr:
    pass


@dataclass(frozen=True)
class Var(Expr):
    name: str
    pos: Optional[tuple] = field(default=None, compare=False)


@dataclass(frozen=True)
class Const(Expr):
    """Builtin function constant; `inst` is the numeric instance the checker
    resolved an overloaded operator to (DOUBLE or INDEX)."""
    name: str
    inst: Optional[Ty] = None
    pos: Optional[tuple] = field(default=None, compare=False)


@dataclass(frozen=True)
class ScalarLit(Expr):
    val: float
    pos: Optional[tuple] = field(default=None, compare=False)


@dataclass(frozen=True)
class IndexLit(Expr):
    val: int
    # Undotted numeric literals may still be resolved to Double by the
    # checker; `flex` is cleared once elaboration pins the instance.
    flex: bool = False
    pos: Optional[tuple] = field(default=None, compare=False)


@dataclass(frozen=True)
class BoolLit(Expr):
    val: bool
    pos: Optional[tuple] = field(default=None, compare=False)


@dataclass(frozen=True)
class ArrayLit(Expr):
    items: tuple
    pos: Optional[tuple] = field(default=None, compare=False)


@dataclass(frozen=True)
class App(Expr):
    fn: Expr
    args: tuple
    pos: Optional[tuple] = field(default=None, compare=False)


@dataclass(frozen=True)
class Lam(Expr):
    params: tuple  # tuple of (name, Ty | None)
    body: Expr
    pos: Optional[tuple] = field(default=None, compare=False)


@dataclass(frozen=True)
class Let(Expr):
    name: str
    bound: Expr
    body: Expr
    pos: Optional[tuple] = field(default=None, compare=False)


@dataclass(frozen=True)
class If(Expr):
    cond: Expr
    then: Expr
    els: Expr
    pos: Optional[tuple] = field(default=None, compare=False)


@dataclass(frozen=True)
class Deriv(Expr):
    """`deriv e x` macro node; eliminated by expansion before optimisation."""
    target: Expr
    wrt: str
    pos: Optional[tuple] = field(default=None, compare=False)


@dataclass(frozen=True)
class Region(Expr):
    """Transparent marker around a differentiated subexpression; the first
    optimisation phases run inside these before the whole-program phases."""
    expr: Expr
    pos: Optional[tuple] = field(default=None, compare=False)


# Constant names understood by the checker/interpreter/backends.
ARITH_OPS = ("+", "-", "*", "/", "**")
CMP_OPS = (">", "<", "==", "<>")
BOOL_OPS = ("&&", "||")
CONST_NAMES = frozenset(
    ARITH_OPS + CMP_OPS + BOOL_OPS
    + ("neg", "not", "sin", "cos", "tan", "log", "exp",
       "build", "ifold", "get", "length", "pair", "fst", "snd")
)

UNARY_MATH = ("sin", "cos", "tan", "log", "exp")


# --------------------------------------------------------------------------
# Traversal helpers
# --------------------------------------------------------------------------

def children(e: Expr):
    if isinstance(e, App):
        return (e.fn,) + e.args
    if isinstance(e, Lam):
        return (e.body,)
    if isinstance(e, Let):
        return (e.bound, e.body)
    if isinstance(e, If):
        return (e.cond, e.then, e.els)
    if isinstance(e, ArrayLit):
        return e.items
    if isinstance(e, Deriv):
        return (e.target,)
    if isinstance(e, Region):
        return (e.expr,)
    return ()


def rebuild(e: Expr, kids) -> Expr:
    """Rebuild `e` with replaced children (same order as `children`)."""
    kids = tuple(kids)
    if isinstance(e, App):
        return App(kids[0], kids[1:], pos=e.pos)
    if isinstance(e, Lam):
        return Lam(e.params, kids[0], pos=e.pos)
    if isinstance(e, Let):
        return Let(e.name, kids[0], kids[1], pos=e.pos)
    if isinstance(e, If):
        return If(kids[0], kids[1], kids[2], pos=e.pos)
    if isinstance(e, ArrayLit):
        return ArrayLit(kids, pos=e.pos)
    if isinstance(e, Deriv):
        return Deriv(kids[0], e.wrt, pos=e.pos)
    if isinstance(e, Region):
        return Region(kids[0], pos=e.pos)
    assert not kids
    return e


def size(e: Expr) -> int:
    n = 1
    stack = [e]
    total = 0
    while stack:
        node = stack.pop()
        total += 1
        stack.extend(children(node))
    return total if total else n


def fvs(e: Expr) -> frozenset:
    """Free variables, cached on the node (nodes are immutable).

    Iterative post-order so arbitrarily deep let chains cannot overflow the
    interpreter stack."""
    cached = getattr(e, "_fvs", None)
    if cached is not None:
        return cached
    stack = [(e, False)]
    while stack:
        node, ready = stack.pop()
        if getattr(node, "_fvs", None) is not None:
            continue
        if not ready:
            stack.append((node, True))
            for c in children(node):
                if getattr(c, "_fvs", None) is None:
                    stack.append((c, False))
            continue
        if isinstance(node, Var):
            out = frozenset((node.name,))
        elif isinstance(node, Lam):
            out = node.body._fvs - frozenset(p for p, _ in node.params)
        elif isinstance(node, Let):
            out = node.bound._fvs | (node.body._fvs - frozenset((node.name,)))
        elif isinstance(node, Deriv):
            out = node.target._fvs | frozenset((node.wrt,))
        else:
            out = frozenset()
            for c in children(node):
                out |= c._fvs
        object.__setattr__(node, "_fvs", out)
    return e._fvs


def count_occurrences(e: Expr, name: str) -> int:
    if name not in fvs(e):
        return 0
    if isinstance(e, Var):
        return 1 if e.name == name else 0
    if isinstance(e, Deriv):
        return count_occurrences(e.target, name) + (1 if e.wrt == name else 0)
    return sum(count_occurrences(c, name) for c in children(e))


class NameSource:
    """Monotone counter for globally-unique binder names."""

    def __init__(self, start: int = 0):
        self.n = start

    def fresh(self, base: str = "x") -> str:
        self.n += 1
        root = base.split("$", 1)[0] or "x"
        return f"{root}${self.n}"


def subst(e: Expr, mapping: dict) -> Expr:
    """Capture-free substitution.

    Assumes binders in `e` are distinct from the free variables of the
    replacement terms (guaranteed after `alpha_rename`).
    """
    if not mapping:
        return e
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if not (fvs(e) & mapping.keys()):
        return e
    if isinstance(e, Lam):
        inner = {k: v for k, v in mapping.items()
                 if k not in (p for p, _ in e.params)}
        return Lam(e.params, subst(e.body, inner), pos=e.pos)
    if isinstance(e, Let):
        bound = subst(e.bound, mapping)
        inner = {k: v for k, v in mapping.items() if k != e.name}
        return Let(e.name, bound, subst(e.body, inner), pos=e.pos)
    if isinstance(e, Deriv):
        # `wrt` names a variable; renaming substitutions must follow it.
        wrt = e.wrt
        if wrt in mapping and isinstance(mapping[wrt], Var):
            wrt = mapping[wrt].name
        return Deriv(subst(e.target, mapping), wrt, pos=e.pos)
    return rebuild(e, (subst(c, mapping) for c in children(e)))


def alpha_rename(e: Expr, ns: NameSource, env: Optional[dict] = None) -> Expr:
    """Give every binder a globally-unique name drawn from `ns`."""
    env = env or {}

    def go(e, env):
        if isinstance(e, Var):
            return Var(env.get(e.name, e.name), pos=e.pos)
        if isinstance(e, Lam):
            new = dict(env)
            params = []
            for p, t in e.params:
                np = ns.fresh(p)
                new[p] = np
                params.append((np, t))
            return Lam(tuple(params), go(e.body, new), pos=e.pos)
        if isinstance(e, Let):
            bound = go(e.bound, env)
            new = dict(env)
            nn = ns.fresh(e.name)
            new[e.name] = nn
            return Let(nn, bound, go(e.body, new), pos=e.pos)
        if isinstance(e, Deriv):
            return Deriv(go(e.target, env), env.get(e.wrt, e.wrt), pos=e.pos)
        return rebuild(e, (go(c, env) for c in children(e)))

    return go(e, env)


def refresh_binders(e: Expr, ns: NameSource) -> Expr:
    """Alpha-rename only the binders inside `e`, leaving free names alone."""
    return alpha_rename(e, ns)


def alpha_rename_unit(unit: Expr, ns: NameSource) -> Expr:
    """Alpha-rename a whole program unit, keeping top-level binding names.

    The top-level `let` spine names (library and program definitions) stay
    as written so generated code can refer to them; they must be pairwise
    distinct.  Everything beneath gets globally-unique names.
    """
    seen = set()
    spine = []
    node = unit
    while isinstance(node, Let):
        if node.name in seen:
            from .errors import FsmError
            raise FsmError(f"duplicate top-level definition {node.name!r}")
        seen.add(node.name)
        spine.append((node.name, node.bound, node.pos))
        node = node.body
    out = alpha_rename(node, ns)
    for name, bound, pos in reversed(spine):
        out = Let(name, alpha_rename(bound, ns), out, pos=pos)
    return out


def strip_types(e: Expr) -> Expr:
    """Drop inferred binder annotations and operator instances.

    Re-elaboration always starts from a stripped tree: annotations are
    derived data once the unit has been checked, and keeping stale defaults
    would pin reusable definitions to one instance.
    """
    if isinstance(e, Lam):
        return Lam(tuple((p, None) for p, _ in e.params), strip_types(e.body),
                   pos=e.pos)
    if isinstance(e, Const):
        return Const(e.name, pos=e.pos) if e.inst is not None else e
    return rebuild(e, (strip_types(c) for c in children(e)))


def alpha_equal(a: Expr, b: Expr) -> bool:
    """Structural equality modulo bound names (and source positions)."""

    def go(a, b, ea, eb):
        if type(a) is not type(b):
            return False
        if isinstance(a, Var):
            return ea.get(a.name, a.name) == eb.get(b.name, b.name)
        if isinstance(a, Const):
            if a.name != b.name:
                return False
            return a.inst is None or b.inst is None or a.inst == b.inst
        if isinstance(a, ScalarLit):
            return a.val == b.val
        if isinstance(a, IndexLit):
            return a.val == b.val
        if isinstance(a, BoolLit):
            return a.val == b.val
        if isinstance(a, Lam):
            if len(a.params) != len(b.params):
                return False
            ea, eb = dict(ea), dict(eb)
            for i, ((pa, ta), (pb, tb)) in enumerate(zip(a.params, b.params)):
                if ta != tb and ta is not None and tb is not None:
                    return False
                ea[pa] = eb[pb] = f"!{len(ea)}#{i}"
            return go(a.body, b.body, ea, eb)
        if isinstance(a, Let):
            if not go(a.bound, b.bound, ea, eb):
                return False
            ea, eb = dict(ea), dict(eb)
            ea[a.name] = eb[b.name] = f"!{len(ea)}"
            return go(a.body, b.body, ea, eb)
        if isinstance(a, Deriv):
            if ea.get(a.wrt, a.wrt) != eb.get(b.wrt, b.wrt):
                return False
            return go(a.target, b.target, ea, eb)
        ca, cb = children(a), children(b)
        if len(ca) != len(cb):
            return False
        return all(go(x, y, ea, eb) for x, y in zip(ca, cb))

    return go(a, b, {}, {})


# Convenience constructors used across passes and tests.

def app(fn, *args) -> App:
    return App(fn, tuple(args))


def prim(name, *args, inst: Optional[Ty] = None) -> App:
    return App(Const(name, inst=inst), tuple(args))


def lam(params, body) -> Lam:
    return Lam(tuple(params), body)


def let(name, bound, body) -> Let:
    return Let(name, bound, body)


def pair_of(a, b) -> App:
    return prim("pair", a, b)


def fst_of(a) -> App:
    return prim("fst", a)


def snd_of(a) -> App:
    return prim("snd", a)
