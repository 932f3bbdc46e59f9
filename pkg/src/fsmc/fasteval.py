"""Compiling evaluator: translates an elaborated term to Python source.

Step-for-step and bit-for-bit equivalent to the tree-walking evaluator on
terminating runs (the differential tests in tests/test_fasteval.py pin
this), but one to two orders of magnitude faster, which is what makes the
large step-count measurements practical.  The undefined marker is carried
as an exception that the wrapper turns back into a `Bottom` value; step
counts on runs that end undefined may differ from the reference evaluator
because straight-line blocks pre-count their operations.
"""

import math

from .errors import InternalError
from .interp import Bottom, EvalFuelExhausted
from .syntax import (
    INDEX,
    App, ArrayLit, BoolLit, Const, Expr, If, IndexLit, Lam, Let, Region,
    ScalarLit, Var,
    ARITH_OPS, CMP_OPS,
)


class _Bt(Exception):
    def __init__(self, reason=""):
        self.reason = reason


def _bot(reason):
    raise _Bt(reason)


def _get(a, i):
    if 0 <= i < len(a):
        return a[i]
    raise _Bt(f"index {i} out of bounds [0, {len(a)})")


def _div(a, b):
    if b == 0.0:
        raise _Bt("division by zero")
    return a / b


def _idiv(a, b):
    if b == 0:
        raise _Bt("index division by zero")
    return a // b


def _isub(a, b):
    r = a - b
    if r < 0:
        raise _Bt("negative index")
    return r


def _ineg(a):
    if a > 0:
        raise _Bt("negative index")
    return 0


def _pow(a, b):
    if a > 0.0 or (a == 0.0 and b > 0.0) or (math.isfinite(b) and b == int(b)):
        try:
            return math.pow(a, b)
        except OverflowError:
            return math.inf if (a > 0 or int(b) % 2 == 0) else -math.inf
        except ValueError:
            raise _Bt(f"pow domain ({a}, {b})")
    raise _Bt(f"pow domain ({a}, {b})")


def _tan(a):
    if math.cos(a) == 0.0:
        raise _Bt("tan at cos = 0")
    return math.tan(a)


def _log(a):
    if a <= 0.0:
        raise _Bt(f"log of {a}")
    return math.log(a)


def _exp(a):
    try:
        return math.exp(a)
    except OverflowError:
        return math.inf


_GLOBALS = {
    "_bot": _bot, "_get": _get, "_div": _div, "_idiv": _idiv,
    "_isub": _isub, "_ineg": _ineg, "_pow": _pow, "_tan": _tan,
    "_log": _log, "_exp": _exp, "_sin": math.sin, "_cos": math.cos,
    "_Bt": _Bt, "_Fuel": EvalFuelExhausted,
}


def _mangle(name: str) -> str:
    return "v_" + name.replace("$", "_").replace("'", "_q")


class Emitter:
    def __init__(self):
        self.lines = []
        self.tmp = 0
        self.pending = 0  # batched step count for the current block

    def fresh(self, base="t"):
        self.tmp += 1
        return f"_{base}{self.tmp}"

    def emit(self, indent, text):
        self.lines.append("    " * indent + text)

    def count(self, k=1):
        self.pending += k

    def flush(self, indent):
        if self.pending:
            self.emit(indent, f"_S[0] += {self.pending}")
            self.pending = 0


class Compiler:
    """Expression compiler; every `compile_expr` returns a Python expression
    string whose evaluation is free of control flow (statements were emitted
    for anything that needed them)."""

    def __init__(self):
        self.em = Emitter()

    def compile_fn(self, name, params, body, indent):
        em = self.em
        em.flush(indent)
        args = ", ".join(_mangle(p) for p, _ in params)
        em.emit(indent, f"def {name}({args}):")
        expr = self.compile_expr(body, indent + 1)
        em.flush(indent + 1)
        em.emit(indent + 1, f"return {expr}")

    def compile_expr(self, e, indent):
        em = self.em
        if isinstance(e, Var):
            return _mangle(e.name)
        if isinstance(e, ScalarLit):
            return repr(e.val)
        if isinstance(e, IndexLit):
            return repr(e.val)
        if isinstance(e, BoolLit):
            return repr(e.val)
        if isinstance(e, Region):
            return self.compile_expr(e.expr, indent)
        if isinstance(e, ArrayLit):
            parts = [self.compile_expr(x, indent) for x in e.items]
            return "[" + ", ".join(parts) + "]"
        if isinstance(e, Lam):
            name = em.fresh("f")
            self.compile_fn(name, e.params, e.body, indent)
            return name
        if isinstance(e, Const):
            return self._const_value(e, indent)
        if isinstance(e, Let):
            val = self.compile_expr(e.bound, indent)
            em.emit(indent, f"{_mangle(e.name)} = {val}")
            return self.compile_expr(e.body, indent)
        if isinstance(e, If):
            cond = self.compile_expr(e.cond, indent)
            em.flush(indent)
            out = em.fresh()
            em.emit(indent, f"if {cond}:")
            t = self.compile_expr(e.then, indent + 1)
            em.flush(indent + 1)
            em.emit(indent + 1, f"{out} = {t}")
            em.emit(indent, "else:")
            f = self.compile_expr(e.els, indent + 1)
            em.flush(indent + 1)
            em.emit(indent + 1, f"{out} = {f}")
            return out
        if isinstance(e, App):
            return self._compile_app(e, indent)
        raise InternalError(f"fasteval cannot compile {e!r}")

    def _const_value(self, c, indent):
        """A builtin observed as a bare value: a plain lambda, uncounted
        inside (the call site charges the one primitive step)."""
        name = c.name
        table = {
            "+": "lambda a, b: a + b",
            "-": ("_isub" if c.inst == INDEX else "lambda a, b: a - b"),
            "*": "lambda a, b: a * b",
            "/": ("_idiv" if c.inst == INDEX else "_div"),
            "**": ("lambda a, b: a ** b" if c.inst == INDEX else "_pow"),
            "neg": ("_ineg" if c.inst == INDEX else "lambda a: -a"),
            ">": "lambda a, b: a > b",
            "<": "lambda a, b: a < b",
            "==": "lambda a, b: a == b",
            "<>": "lambda a, b: a != b",
            "&&": "lambda a, b: a and b",
            "||": "lambda a, b: a or b",
            "not": "lambda a: not a",
            "sin": "_sin", "cos": "_cos", "tan": "_tan", "log": "_log",
            "exp": "_exp",
            "pair": "lambda a, b: (a, b)",
            "fst": "lambda p: p[0]",
            "snd": "lambda p: p[1]",
            "length": "len",
            "get": "_get",
        }
        if name in table:
            return f"({table[name]})"
        raise InternalError(f"bare constant {name} not supported")

    def _atom(self, e, indent):
        """Compile and, if the result is syntactically compound, name it (so
        later uses in generated f-strings stay cheap & ordered)."""
        s = self.compile_expr(e, indent)
        if s.isidentifier() or s.replace(".", "").replace("-", "").isdigit():
            return s
        t = self.em.fresh()
        self.em.emit(indent, f"{t} = {s}")
        return t

    def _compile_app(self, e, indent):
        em = self.em
        fn = e.fn
        if isinstance(fn, Const):
            name = fn.name
            if name == "build":
                return self._compile_build(e, indent)
            if name == "ifold":
                return self._compile_ifold(e, indent)
            args = [self.compile_expr(a, indent) for a in e.args]
            em.count()
            if name in ("&&", "||"):
                named = []
                for a in args:
                    t = em.fresh()
                    em.emit(indent, f"{t} = {a}")
                    named.append(t)
                op = "and" if name == "&&" else "or"
                return f"({named[0]} {op} {named[1]})"
            simple = {"+": "+", "-": "-", "*": "*", ">": ">", "<": "<",
                      "==": "==", "<>": "!="}
            if name in ("+", "*") or (name in ("-",) and fn.inst != INDEX) \
                    or name in (">", "<", "==", "<>"):
                return f"({args[0]} {simple[name]} {args[1]})"
            if name == "-":
                return f"_isub({args[0]}, {args[1]})"
            if name == "/":
                h = "_idiv" if fn.inst == INDEX else "_div"
                return f"{h}({args[0]}, {args[1]})"
            if name == "**":
                if fn.inst == INDEX:
                    return f"({args[0]} ** {args[1]})"
                return f"_pow({args[0]}, {args[1]})"
            if name == "neg":
                if fn.inst == INDEX:
                    return f"_ineg({args[0]})"
                return f"(-{args[0]})"
            if name == "not":
                return f"(not {args[0]})"
            if name in ("sin", "cos", "tan", "log", "exp"):
                return f"_{name}({args[0]})"
            if name == "pair":
                return f"({args[0]}, {args[1]})"
            if name == "fst":
                return f"({args[0]})[0]"
            if name == "snd":
                return f"({args[0]})[1]"
            if name == "length":
                return f"len({args[0]})"
            if name == "get":
                return f"_get({args[0]}, {args[1]})"
            raise InternalError(f"fasteval: primitive {name}")
        # General application: one beta step at the call site.
        fexpr = self.compile_expr(fn, indent)
        args = [self.compile_expr(a, indent) for a in e.args]
        em.count()
        return f"{fexpr}({', '.join(args)})"

    def _compile_build(self, e, indent):
        em = self.em
        n, f = e.args
        nexpr = self._atom(n, indent)
        out = em.fresh("arr")
        em.count()  # the build application itself
        if isinstance(f, Lam):
            (iv, _), = f.params
            ivar = _mangle(iv)
            em.flush(indent)
            em.emit(indent, f"if _S[0] + {nexpr} > _FUEL: raise _Fuel()")
            em.emit(indent, f"{out} = [None] * {nexpr}")
            em.emit(indent, f"for {ivar} in range({nexpr}):")
            em.count()  # beta per element
            body = self.compile_expr(f.body, indent + 1)
            em.flush(indent + 1)
            em.emit(indent + 1, f"{out}[{ivar}] = {body}")
        else:
            fexpr = self._atom(f, indent)
            em.flush(indent)
            em.emit(indent, f"if _S[0] + {nexpr} > _FUEL: raise _Fuel()")
            em.emit(indent, f"{out} = [None] * {nexpr}")
            em.emit(indent, f"for _i in range({nexpr}):")
            em.emit(indent + 1, "_S[0] += 1")
            em.emit(indent + 1, f"{out}[_i] = {fexpr}(_i)")
        return out

    def _compile_ifold(self, e, indent):
        em = self.em
        f, z, n = e.args
        zexpr = self._atom(z, indent)
        nexpr = self._atom(n, indent)
        acc = em.fresh("acc")
        em.count()  # the ifold application itself
        em.flush(indent)
        em.emit(indent, f"{acc} = {zexpr}")
        em.emit(indent, f"if _S[0] + {nexpr} > _FUEL: raise _Fuel()")
        if isinstance(f, Lam):
            (sv, _), (iv, _) = f.params
            svar, ivar = _mangle(sv), _mangle(iv)
            em.emit(indent, f"for {ivar} in range({nexpr}):")
            em.emit(indent + 1, f"{svar} = {acc}")
            em.count()  # beta per iteration
            body = self.compile_expr(f.body, indent + 1)
            em.flush(indent + 1)
            em.emit(indent + 1, f"{acc} = {body}")
        else:
            fexpr = self._atom(f, indent)
            em.emit(indent, f"for _i in range({nexpr}):")
            em.emit(indent + 1, "_S[0] += 1")
            em.emit(indent + 1, f"{acc} = {fexpr}({acc}, _i)")
        return acc


def compile_program(e: Expr, free_names=()):
    """Compile an elaborated term into `fn(env_dict, fuel) -> (value, steps)`.

    The term's free variables must be listed in `free_names`; the returned
    callable reproduces the reference evaluator's values and step counts on
    terminating runs.
    """
    comp = Compiler()
    em = comp.em
    params = ", ".join(_mangle(n) for n in free_names)
    em.emit(0, f"def _main({params}):")
    expr = comp.compile_expr(e, 1)
    em.flush(1)
    em.emit(1, f"return {expr}")
    src = "\n".join(em.lines)
    ns = dict(_GLOBALS)
    cell = [0]
    ns["_S"] = cell
    ns["_FUEL"] = 10**18

    code = compile(src, "<fasteval>", "exec")
    exec(code, ns)
    main = ns["_main"]

    def run(env=None, fuel=10**9):
        env = env or {}
        ns["_FUEL"] = fuel
        cell[0] = 0
        try:
            v = main(**{_mangle(n): env[n] for n in free_names})
        except _Bt as b:
            return Bottom(b.reason), cell[0]
        return v, cell[0]

    run.source = src
    return run
