"""Reference call-by-value evaluator.

This is the ground-truth oracle: every rewrite, the differentiation pass,
and the C backend are judged against it.  Values use host doubles (IEEE-754)
and unbounded nonnegative integers for indices.  Partial primitives return
the absorbing `Bottom` marker instead of raising, so undefinedness is an
ordinary value the test harnesses can compare.

Evaluation order is left to right; `build` materialises its elements
eagerly; `ifold f z n` runs f over 0..n-1 threading the state.  Steps count
primitive applications plus beta reductions and are deterministic.
"""

import math
from dataclasses import dataclass

from .errors import InternalError
from .syntax import (
    App, ArrayLit, BoolLit, Const, Expr, If, IndexLit, Lam, Let, Region,
    ScalarLit, Var, INDEX,
)


@dataclass
class Closure:
    params: tuple
    body: Expr
    env: "Env"

    def __repr__(self):
        return f"<closure/{len(self.params)}>"


@dataclass(frozen=True)
class Bottom:
    reason: str = ""

    def __repr__(self):
        return f"⊥({self.reason})"


@dataclass
class ConstFn:
    """Partially known builtin, e.g. a bare `pair` passed as an argument."""
    name: str
    inst: object = None


class Env:
    __slots__ = ("frame", "parent")

    def __init__(self, frame=None, parent=None):
        self.frame = frame or {}
        self.parent = parent

    def lookup(self, name):
        env = self
        while env is not None:
            v = env.frame.get(name, _MISSING)
            if v is not _MISSING:
                return v
            env = env.parent
        raise InternalError(f"unbound variable at runtime: {name}")

    def extend(self, frame):
        return Env(frame, self)


_MISSING = object()


class EvalFuelExhausted(Exception):
    pass


class Interp:
    def __init__(self, fuel=10**9):
        self.fuel = fuel
        self.steps = 0

    def _tick(self):
        self.steps += 1
        if self.steps > self.fuel:
            raise EvalFuelExhausted(f"step budget {self.fuel} exceeded")

    # -- primitive application ---------------------------------------------

    def apply_const(self, name, inst, args):
        for a in args:
            if isinstance(a, Bottom):
                return a
        self._tick()
        try:
            return _PRIMS[name](self, inst, args)
        except KeyError:
            raise InternalError(f"unknown primitive {name}")

    def apply(self, fn, args):
        if isinstance(fn, Bottom):
            return fn
        for a in args:
            if isinstance(a, Bottom):
                return a
        if isinstance(fn, ConstFn):
            return self.apply_const(fn.name, fn.inst, args)
        if not isinstance(fn, Closure):
            raise InternalError(f"cannot apply value {fn!r}")
        if len(args) != len(fn.params):
            raise InternalError("arity mismatch at runtime")
        self._tick()  # beta reduction
        frame = {p: a for (p, _), a in zip(fn.params, args)}
        return self.eval(fn.body, fn.env.extend(frame))

    # -- evaluator ----------------------------------------------------------

    def eval(self, e, env):
        while True:
            if isinstance(e, Var):
                return env.lookup(e.name)
            if isinstance(e, ScalarLit):
                return e.val
            if isinstance(e, IndexLit):
                return e.val
            if isinstance(e, BoolLit):
                return e.val
            if isinstance(e, Lam):
                return Closure(e.params, e.body, env)
            if isinstance(e, Const):
                return ConstFn(e.name, e.inst)
            if isinstance(e, ArrayLit):
                out = []
                for item in e.items:
                    v = self.eval(item, env)
                    if isinstance(v, Bottom):
                        return v
                    out.append(v)
                return out
            if isinstance(e, Let):
                v = self.eval(e.bound, env)
                if isinstance(v, Bottom):
                    return v
                env = env.extend({e.name: v})
                e = e.body
                continue
            if isinstance(e, If):
                c = self.eval(e.cond, env)
                if isinstance(c, Bottom):
                    return c
                e = e.then if c else e.els
                continue
            if isinstance(e, Region):
                e = e.expr
                continue
            if isinstance(e, App):
                fn = e.fn
                if isinstance(fn, Const):
                    # build/ifold control evaluation of their function arg.
                    if fn.name == "build":
                        return self._build(e.args, env)
                    if fn.name == "ifold":
                        return self._ifold(e.args, env)
                    args = []
                    for a in e.args:
                        v = self.eval(a, env)
                        if isinstance(v, Bottom):
                            return v
                        args.append(v)
                    return self.apply_const(fn.name, fn.inst, args)
                f = self.eval(fn, env)
                if isinstance(f, Bottom):
                    return f
                args = []
                for a in e.args:
                    v = self.eval(a, env)
                    if isinstance(v, Bottom):
                        return v
                    args.append(v)
                return self.apply(f, args)
            raise InternalError(f"cannot evaluate {e!r}")

    def _build(self, args, env):
        n = self.eval(args[0], env)
        if isinstance(n, Bottom):
            return n
        f = self.eval(args[1], env)
        if isinstance(f, Bottom):
            return f
        self._tick()
        out = []
        for i in range(n):
            v = self.apply(f, [i])
            if isinstance(v, Bottom):
                return v
            out.append(v)
        return out

    def _ifold(self, args, env):
        f = self.eval(args[0], env)
        if isinstance(f, Bottom):
            return f
        acc = self.eval(args[1], env)
        if isinstance(acc, Bottom):
            return acc
        n = self.eval(args[2], env)
        if isinstance(n, Bottom):
            return n
        self._tick()
        for i in range(n):
            acc = self.apply(f, [acc, i])
            if isinstance(acc, Bottom):
                return acc
        return acc


# -- primitives --------------------------------------------------------------

def _num_binop(fn_double, fn_index):
    def op(interp, inst, args):
        a, b = args
        if inst == INDEX:
            return fn_index(a, b)
        return fn_double(a, b)
    return op


def _bot(reason):
    return Bottom(reason)


def _div(interp, inst, args):
    a, b = args
    if inst == INDEX:
        if b == 0:
            return _bot("index division by zero")
        return a // b
    if b == 0.0:
        return _bot("division by zero")
    return a / b


def _sub(interp, inst, args):
    a, b = args
    r = a - b
    if inst == INDEX and r < 0:
        return _bot("negative index")
    return r


def _neg(interp, inst, args):
    (a,) = args
    if inst == INDEX:
        if a > 0:
            return _bot("negative index")
        return 0
    return -a


def _pow(interp, inst, args):
    a, b = args
    if inst == INDEX:
        return a ** b
    # Defined for positive base; zero base with positive exponent; or an
    # exact integer exponent (matching what the derivative rule needs).
    if a > 0.0 or (a == 0.0 and b > 0.0) or (math.isfinite(b) and b == int(b)):
        try:
            return math.pow(a, b)
        except OverflowError:
            return math.inf if (a > 0 or int(b) % 2 == 0) else -math.inf
        except ValueError:
            return _bot(f"pow domain ({a}, {b})")
    return _bot(f"pow domain ({a}, {b})")


def _tan(interp, inst, args):
    (a,) = args
    if math.cos(a) == 0.0:
        return _bot("tan at cos = 0")
    return math.tan(a)


def _log(interp, inst, args):
    (a,) = args
    if a <= 0.0:
        return _bot(f"log of {a}")
    return math.log(a)


def _exp(interp, inst, args):
    (a,) = args
    try:
        return math.exp(a)
    except OverflowError:
        return math.inf


def _get(interp, inst, args):
    arr, i = args
    if 0 <= i < len(arr):
        return arr[i]
    return _bot(f"index {i} out of bounds [0, {len(arr)})")


_PRIMS = {
    "+": _num_binop(lambda a, b: a + b, lambda a, b: a + b),
    "-": _sub,
    "*": _num_binop(lambda a, b: a * b, lambda a, b: a * b),
    "/": _div,
    "**": _pow,
    "neg": _neg,
    "sin": lambda i, t, a: math.sin(a[0]),
    "cos": lambda i, t, a: math.cos(a[0]),
    "tan": _tan,
    "log": _log,
    "exp": _exp,
    ">": lambda i, t, a: a[0] > a[1],
    "<": lambda i, t, a: a[0] < a[1],
    "==": lambda i, t, a: a[0] == a[1],
    "<>": lambda i, t, a: a[0] != a[1],
    "&&": lambda i, t, a: a[0] and a[1],
    "||": lambda i, t, a: a[0] or a[1],
    "not": lambda i, t, a: not a[0],
    "pair": lambda i, t, a: (a[0], a[1]),
    "fst": lambda i, t, a: a[0][0],
    "snd": lambda i, t, a: a[0][1],
    "length": lambda i, t, a: len(a[0]),
    "get": _get,
}


# -- public API ---------------------------------------------------------------

def evaluate(e: Expr, env: dict = None, fuel: int = 10**9):
    """Evaluate an elaborated closed-modulo-env term to a Value."""
    it = Interp(fuel)
    base = Env(dict(env or {}))
    return it.eval(e, base)


def eval_counted(e: Expr, env: dict = None, fuel: int = 10**9):
    """Like `evaluate` but also returns the deterministic step count."""
    it = Interp(fuel)
    base = Env(dict(env or {}))
    v = it.eval(e, base)
    return v, it.steps


def value_approx_eq(a, b, rel_tol=1e-9, abs_tol=1e-12) -> bool:
    """Structural comparison; reals compared with mixed tolerance; Bottom
    equals Bottom regardless of reason."""
    if isinstance(a, Bottom) or isinstance(b, Bottom):
        return isinstance(a, Bottom) and isinstance(b, Bottom)
    if isinstance(a, bool) or isinstance(b, bool):
        return a is b
    if isinstance(a, float) or isinstance(b, float):
        if not (isinstance(a, (int, float)) and isinstance(b, (int, float))):
            return False
        if math.isnan(a) and math.isnan(b):
            return True
        return abs(a - b) <= abs_tol + rel_tol * max(abs(a), abs(b))
    if isinstance(a, int) and isinstance(b, int):
        return a == b
    if isinstance(a, tuple) and isinstance(b, tuple):
        return (value_approx_eq(a[0], b[0], rel_tol, abs_tol)
                and value_approx_eq(a[1], b[1], rel_tol, abs_tol))
    if isinstance(a, list) and isinstance(b, list):
        if len(a) != len(b):
            return False
        return all(value_approx_eq(x, y, rel_tol, abs_tol)
                   for x, y in zip(a, b))
    return False


def value_matches_type(v, t) -> bool:
    """Shallow runtime typing used by the type-preservation property tests.

    `Bottom` inhabits every type; closures are accepted at any function type.
    """
    from .syntax import ArrT, FunT, PairT, DOUBLE, INDEX, BOOL
    if isinstance(v, Bottom):
        return True
    if t == DOUBLE:
        return isinstance(v, float) and not isinstance(v, bool)
    if t == INDEX:
        return isinstance(v, int) and not isinstance(v, bool)
    if t == BOOL:
        return isinstance(v, bool)
    if isinstance(t, PairT):
        return (isinstance(v, tuple) and len(v) == 2
                and value_matches_type(v[0], t.fst)
                and value_matches_type(v[1], t.snd))
    if isinstance(t, ArrT):
        return isinstance(v, list) and all(
            value_matches_type(x, t.elem) for x in v)
    if isinstance(t, FunT):
        return isinstance(v, (Closure, ConstFn))
    return False


def show_value(v) -> str:
    """Printer used by the CLI and the C test shim for comparisons."""
    if isinstance(v, Bottom):
        return f"⊥({v.reason})"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, tuple):
        return f"({show_value(v[0])}, {show_value(v[1])})"
    if isinstance(v, list):
        return "[" + ", ".join(show_value(x) for x in v) + "]"
    if isinstance(v, (Closure, ConstFn)):
        return "<fun>"
    raise InternalError(f"cannot print value {v!r}")
