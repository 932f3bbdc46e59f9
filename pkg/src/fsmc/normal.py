"""Administrative normal form, common-subexpression elimination,
loop-invariant code motion, and dead-code elimination.

Hoisting a possibly-undefined computation past a loop that may run zero
times would change observable behaviour, so when the moved right-hand side
is not syntactically total and the loop extent is not a positive literal,
the hoisted binding is wrapped in `if extent > 0 then rhs else <unit of the
right type>`: the guarded value is only ever consumed when the loop body
ran, keeping evaluation equality exact while still lifting the work out of
the loop.
"""

from .errors import InternalError
from .syntax import (
    DOUBLE, INDEX, BOOL,
    ArrT, BaseT, FunT, PairT,
    App, ArrayLit, BoolLit, Const, Expr, If, IndexLit, Lam, Let, Region,
    ScalarLit, Var,
    NameSource, children, fvs, rebuild,
)
from .typecheck import synth_type

_TOTAL_UNARY = frozenset(("sin", "cos", "exp", "not"))
_TOTAL_BINARY = frozenset(("+", "*", ">", "<", "==", "<>", "&&", "||"))


def is_total(e: Expr) -> bool:
    """Conservative: True only when evaluation cannot reach the undefined
    marker (no division, log, tan, pow, indexing, or unknown calls)."""
    if isinstance(e, (Var, ScalarLit, IndexLit, BoolLit, Lam)):
        return True
    if isinstance(e, ArrayLit):
        return all(is_total(x) for x in e.items)
    if isinstance(e, Let):
        return is_total(e.bound) and is_total(e.body)
    if isinstance(e, If):
        return is_total(e.cond) and is_total(e.then) and is_total(e.els)
    if isinstance(e, Region):
        return is_total(e.expr)
    if isinstance(e, App):
        if isinstance(e.fn, Const):
            name = e.fn.name
            if name in ("-", "neg") and e.fn.inst == INDEX:
                return False  # may go negative
            if name in _TOTAL_UNARY or name in _TOTAL_BINARY \
                    or name in ("-", "neg", "pair", "fst", "snd", "length"):
                return all(is_total(a) for a in e.args)
            if name in ("build", "ifold"):
                ok_fn = True
                for a in e.args:
                    if isinstance(a, Lam):
                        ok_fn = ok_fn and is_total(a.body)
                    else:
                        ok_fn = ok_fn and is_total(a)
                return ok_fn
            return False  # /, **, log, tan, get
        if isinstance(e.fn, Lam):
            return is_total(e.fn.body) and all(is_total(a) for a in e.args)
        return False
    return False


_MATH_FNS = frozenset(("sin", "cos", "tan", "log", "exp", "**", "/"))


def _expensive(e: Expr) -> bool:
    """Worth lifting out of a loop: a loop, an array construction, a math
    function, or several arithmetic operations.  Bare reads and single
    operations stay put, so fully fused loop bodies keep their shape."""

    def walk(e, ops):
        if isinstance(e, App) and isinstance(e.fn, Const):
            name = e.fn.name
            if name in ("build", "ifold") or name in _MATH_FNS:
                return True, ops
            if name in ("+", "-", "*", "neg"):
                ops += 1
                if ops >= 3:
                    return True, ops
        if isinstance(e, ArrayLit):
            return True, ops
        for c in children(e):
            hit, ops = walk(c, ops)
            if hit:
                return True, ops
        return False, ops

    return walk(e, 0)[0]


def _unit_of(t, depth=0) -> Expr:
    """A cheap closed value of type t for the guarded-hoist else branch."""
    if t == DOUBLE:
        return ScalarLit(0.0)
    if t == INDEX:
        return IndexLit(0)
    if t == BOOL:
        return BoolLit(False)
    if isinstance(t, PairT):
        return App(Const("pair"),
                   (_unit_of(t.fst, depth), _unit_of(t.snd, depth)))
    if isinstance(t, ArrT):
        x = f"u$i{depth}"
        return App(Const("build"),
                   (IndexLit(0), Lam(((x, INDEX),),
                                     _unit_of(t.elem, depth + 1))))
    raise InternalError(f"no unit value for {t!r}")


# ---------------------------------------------------------------------------
# ANF conversion
# ---------------------------------------------------------------------------

def _atomic(e) -> bool:
    return isinstance(e, (Var, ScalarLit, IndexLit, BoolLit, Const))


def to_anf(e: Expr, ns: NameSource) -> Expr:
    """Name every compound argument; linearise let bindings.

    Conditional branches and loop bodies convert independently, so no
    computation moves across a control boundary.
    """

    def convert(e):
        binds, atom = norm(e, name_result=False)
        return _wrap(binds, atom)

    def norm(e, name_result=True):
        """Returns (bindings, expr); expr is atomic if name_result."""
        if _atomic(e):
            return [], e
        if isinstance(e, Region):
            binds, out = norm(e.expr, name_result)
            return binds, Region(out)
        if isinstance(e, Lam):
            return [], Lam(e.params, convert(e.body), pos=e.pos)
        if isinstance(e, Let):
            b1, bound = norm(e.bound, name_result=False)
            binds = b1 + [(e.name, bound)]
            b2, out = norm(e.body, name_result)
            return binds + b2, out
        if isinstance(e, If):
            cb, cond = norm(e.cond)
            out = If(cond, convert(e.then), convert(e.els), pos=e.pos)
            if not name_result:
                return cb, out
            t = ns.fresh("t")
            return cb + [(t, out)], Var(t)
        if isinstance(e, ArrayLit):
            binds, items = [], []
            for item in e.items:
                b, a = norm(item)
                binds += b
                items.append(a)
            return binds, _maybe_name(ArrayLit(tuple(items), pos=e.pos),
                                      binds, name_result)
        if isinstance(e, App):
            binds = []
            if isinstance(e.fn, (Const, Var)):
                fn = e.fn
            elif isinstance(e.fn, Lam):
                fn = Lam(e.fn.params, convert(e.fn.body), pos=e.fn.pos)
            else:
                b, fn = norm(e.fn)
                binds += b
            args = []
            for a in e.args:
                if isinstance(a, Lam):  # loop bodies stay in place
                    args.append(Lam(a.params, convert(a.body), pos=a.pos))
                    continue
                b, atom = norm(a)
                binds += b
                args.append(atom)
            return binds, _maybe_name(App(fn, tuple(args), pos=e.pos),
                                      binds, name_result)
        raise InternalError(f"to_anf: {e!r}")

    def _maybe_name(expr, binds, name_result):
        if not name_result:
            return expr
        t = ns.fresh("t")
        binds.append((t, expr))
        return Var(t)

    def _wrap(binds, out):
        for name, bound in reversed(binds):
            out = Let(name, bound, out)
        return out

    return convert(e)


# ---------------------------------------------------------------------------
# CSE
# ---------------------------------------------------------------------------

def cse(e: Expr, _table=None) -> Expr:
    """Unify syntactically identical let-bound right-hand sides.

    A binding is reusable anywhere it dominates (deeper lets, loop bodies,
    branches); sibling branches never share."""
    table = _table or {}

    def walk(e, table):
        if isinstance(e, Let):
            bound = walk(e.bound, table)
            if not _atomic(bound):
                prior = table.get(bound)
                if prior is not None:
                    from .syntax import subst
                    return walk(subst(e.body, {e.name: Var(prior)}), table)
                table = dict(table)
                table[bound] = e.name
            return Let(e.name, bound, walk(e.body, table), pos=e.pos)
        if isinstance(e, Lam):
            return Lam(e.params, walk(e.body, dict(table)), pos=e.pos)
        if isinstance(e, If):
            return If(walk(e.cond, table),
                      walk(e.then, dict(table)),
                      walk(e.els, dict(table)), pos=e.pos)
        kids = children(e)
        if not kids:
            return e
        return rebuild(e, (walk(k, table) for k in kids))

    return walk(e, table)


def split_pairs(e: Expr, ns: NameSource) -> Expr:
    """Split `let x = (a, b)` into component bindings when every use of x
    is a projection.

    Keeping value/tangent halves in one binding would make the value half
    look dependent on whatever the tangent half reads, which blocks code
    motion; after splitting, each half carries only its own dependencies.
    """
    from .syntax import subst

    def walk(e):
        if isinstance(e, Let):
            bound = walk(e.bound)
            body = walk(e.body)
            if isinstance(bound, App) and isinstance(bound.fn, Const) \
                    and bound.fn.name == "pair":
                uses_ok = _projection_uses_only(body, e.name)
                if uses_ok:
                    xf, xs = ns.fresh(e.name), ns.fresh(e.name)
                    body = _replace_projections(body, e.name, xf, xs)
                    return Let(xf, bound.args[0],
                               Let(xs, bound.args[1], body))
            return Let(e.name, bound, body, pos=e.pos)
        kids = children(e)
        if not kids:
            return e
        return rebuild(e, (walk(k) for k in kids))

    return walk(e)


def _projection_uses_only(body, name):
    def ok(e):
        if name not in fvs(e):
            return True
        if isinstance(e, Var):
            return e.name != name
        if isinstance(e, App) and isinstance(e.fn, Const) \
                and e.fn.name in ("fst", "snd") \
                and isinstance(e.args[0], Var) and e.args[0].name == name:
            return True
        return all(ok(c) for c in children(e))
    return ok(body)


def _replace_projections(body, name, xf, xs):
    def go(e):
        if name not in fvs(e):
            return e
        if isinstance(e, App) and isinstance(e.fn, Const) \
                and e.fn.name in ("fst", "snd") \
                and isinstance(e.args[0], Var) and e.args[0].name == name:
            return Var(xf if e.fn.name == "fst" else xs)
        return rebuild(e, (go(c) for c in children(e)))
    return go(body)


# ---------------------------------------------------------------------------
# Loop-invariant code motion
# ---------------------------------------------------------------------------

def licm(e: Expr, ns: NameSource, tenv: dict = None) -> Expr:
    """Float loop-independent bindings above `build`/`ifold`, guarded when
    the binding could be undefined and the loop could be empty.  Iterates
    until no binding moves, so nests float to the outermost legal level."""
    tenv = dict(tenv or {})
    for _ in range(100):
        out, moved = _licm_once(e, ns, tenv)
        if not moved:
            return out
        e = out
    raise InternalError("licm did not stabilise")


def _licm_once(e, ns, tenv):
    moved = [False]

    def walk(e, tenv):
        if isinstance(e, Let):
            inner = dict(tenv)
            inner[e.name] = synth_type(e.bound, tenv)
            return Let(e.name, walk(e.bound, tenv), walk(e.body, inner),
                       pos=e.pos)
        if isinstance(e, Lam):
            inner = dict(tenv)
            for p, t in e.params:
                inner[p] = t
            return Lam(e.params, walk(e.body, inner), pos=e.pos)
        if isinstance(e, App) and isinstance(e.fn, Const) \
                and e.fn.name in ("build", "ifold"):
            e = rebuild(e, (walk(kid, _lam_env(e, k, kid, tenv))
                            for k, kid in enumerate(children(e))))
            return _hoist(e, ns, tenv, moved)
        kids = children(e)
        if not kids:
            return e
        return rebuild(e, (walk(kid, _lam_env(e, i, kid, tenv))
                           for i, kid in enumerate(kids)))

    def _lam_env(parent, idx, kid, tenv):
        if isinstance(kid, Lam):
            inner = dict(tenv)
            for p, t in kid.params:
                inner[p] = t
            return inner
        return tenv

    return walk(e, tenv), moved[0]


def _hoist(loop, ns, tenv, moved):
    name = loop.fn.name
    if name == "build":
        extent, f = loop.args
        rebuild_loop = lambda lam: App(loop.fn, (extent, lam), pos=loop.pos)
    else:
        f, z, extent = loop.args
        rebuild_loop = lambda lam: App(loop.fn, (lam, z, extent), pos=loop.pos)
    if not isinstance(f, Lam):
        return loop
    binders = {p for p, _ in f.params}

    body = f.body
    chain = []
    while isinstance(body, Let):
        chain.append((body.name, body.bound))
        body = body.body
    if not chain:
        return loop
    # A binding is invariant when it mentions neither the loop binders nor
    # any variant binding; expensive invariants are hoisted, and the cheap
    # invariants they mention come along (they stay in scope for the loop).
    variant = set()
    invariant = []
    for bname, rhs in chain:
        deps = fvs(rhs)
        if deps & binders or deps & variant:
            variant.add(bname)
        else:
            invariant.append(bname)
    inv_set = set(invariant)
    lift = set()
    needed = set()
    for bname, rhs in reversed(chain):
        if bname not in inv_set:
            continue
        if _expensive(rhs) or bname in needed:
            lift.add(bname)
            needed |= fvs(rhs) & inv_set
    hoisted = [(b, r) for b, r in chain if b in lift]
    kept = [(b, r) for b, r in chain if b not in lift]
    if not hoisted:
        return loop
    moved[0] = True
    new_body = body
    for bname, rhs in reversed(kept):
        new_body = Let(bname, rhs, new_body)
    out = rebuild_loop(Lam(f.params, new_body))
    guard_free = isinstance(extent, IndexLit) and extent.val > 0
    env = dict(tenv)
    for bname, rhs in hoisted:
        env[bname] = synth_type(rhs, env)
    for bname, rhs in reversed(hoisted):
        if not guard_free and not is_total(rhs):
            cond = App(Const(">", inst=INDEX), (extent, IndexLit(0)))
            rhs = If(cond, rhs, _unit_of(env[bname]))
        out = Let(bname, rhs, out)
    return out


# ---------------------------------------------------------------------------
# DCE
# ---------------------------------------------------------------------------

def dce(e: Expr) -> Expr:
    """Remove unused bindings, bottom-up so whole dead chains disappear."""
    kids = children(e)
    if kids:
        e = rebuild(e, (dce(k) for k in kids))
    if isinstance(e, Let) and e.name not in fvs(e.body):
        return e.body
    return e
