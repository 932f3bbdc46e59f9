"""Forward-mode differentiation as a source-to-source transform.

Every scalar becomes a (value, tangent) pair, arrays become arrays of
translated elements, and functions map translated inputs to translated
outputs.  `Bool` and `Index` carry inert tangents (`false` / `0`).

The `deriv e x` macro expands to the translated function of e's free
variables applied to one-hot dual encodings: a single application for a
scalar independent variable, a `build` over one-hot basis vectors for a
vector one, and a double `build` with one-hot matrices for a matrix one.
Nested `deriv`s expand innermost first and every expansion draws fresh
tangent binder names, so distinct perturbations can never be confused.

Function-valued free variables (library or program definitions) are not
lambda-bound; instead a translated companion definition `g$d` is spliced in
right under `g`'s own binding and referenced from the translated body.
"""

from dataclasses import dataclass, field

from .errors import FsmError, InternalError
from .syntax import (
    DOUBLE, INDEX, BOOL, VECTOR, MATRIX,
    ArrT, BaseT, FunT, PairT, Ty,
    App, ArrayLit, BoolLit, Const, Deriv, Expr, If, IndexLit, Lam, Let,
    Region, ScalarLit, Var,
    ARITH_OPS, CMP_OPS, BOOL_OPS, UNARY_MATH,
    NameSource, fvs,
)
from .typecheck import synth_type


class AdError(FsmError):
    pass


def dual_type(t: Ty) -> Ty:
    """The type translation: Num -> Num×Num, Bool -> Bool×Bool, pointwise
    through arrays, pairs, and function types."""
    if isinstance(t, BaseT):
        return PairT(t, t)
    if isinstance(t, ArrT):
        return ArrT(dual_type(t.elem))
    if isinstance(t, PairT):
        return PairT(dual_type(t.fst), dual_type(t.snd))
    if isinstance(t, FunT):
        return FunT(tuple(dual_type(p) for p in t.params), dual_type(t.ret))
    raise InternalError(f"dual_type: {t!r}")


@dataclass
class AdContext:
    ns: NameSource
    defs: dict = field(default_factory=dict)       # global name -> (expr, ty)
    companions: dict = field(default_factory=dict)  # name -> translated def
    requested: list = field(default_factory=list)   # insertion order

    def dual_global(self, name: str) -> str:
        dual = f"{name}$d"
        if name not in self.companions:
            if name not in self.defs:
                raise AdError(f"cannot differentiate unknown function {name!r}")
            self.companions[name] = None  # break cycles defensively
            expr, ty = self.defs[name]
            tenv = {n: t for n, (_, t) in self.defs.items()}
            translated = ad_translate(expr, {}, tenv, self)
            self.companions[name] = translated
            self.defs[dual] = (translated, dual_type(ty))
            self.requested.append(name)
        return dual


def _let2(ns, base, bound, make_body):
    name = ns.fresh(base)
    return Let(name, bound, make_body(Var(name)))


def _dual_scalar_app(op: str, inst, args, ns: NameSource, ctx) -> Expr:
    """Translate an application of a scalar-function constant.

    Operands are bound to fresh variables first so the value and tangent
    components never duplicate computation.
    """
    names = [ns.fresh("x") for _ in args]
    p = [App(Const("fst"), (Var(n),)) for n in names]
    t = [App(Const("snd"), (Var(n),)) for n in names]

    def mk(name, *a, i=None):
        return App(Const(name, inst=i), tuple(a))

    if inst == INDEX and op in ARITH_OPS + ("neg",):
        val = mk(op, *p, i=INDEX)
        tan = IndexLit(0)
    elif op in CMP_OPS:
        val = mk(op, *p, i=inst)
        tan = BoolLit(False)
    elif op in BOOL_OPS or op == "not":
        val = mk(op, *p)
        tan = BoolLit(False)
    elif op == "+":
        val = mk("+", p[0], p[1], i=DOUBLE)
        tan = mk("+", t[0], t[1], i=DOUBLE)
    elif op == "-":
        val = mk("-", p[0], p[1], i=DOUBLE)
        tan = mk("-", t[0], t[1], i=DOUBLE)
    elif op == "*":
        val = mk("*", p[0], p[1], i=DOUBLE)
        tan = mk("+", mk("*", t[0], p[1], i=DOUBLE),
                 mk("*", p[0], t[1], i=DOUBLE), i=DOUBLE)
    elif op == "/":
        val = mk("/", p[0], p[1], i=DOUBLE)
        tan = mk("/",
                 mk("-", mk("*", t[0], p[1], i=DOUBLE),
                    mk("*", p[0], t[1], i=DOUBLE), i=DOUBLE),
                 mk("**", p[1], ScalarLit(2.0), i=DOUBLE), i=DOUBLE)
    elif op == "**":
        val = mk("**", p[0], p[1], i=DOUBLE)
        tan = mk("*",
                 mk("+",
                    mk("/", mk("*", p[1], t[0], i=DOUBLE), p[0], i=DOUBLE),
                    mk("*", mk("log", p[0]), t[1], i=DOUBLE), i=DOUBLE),
                 mk("**", p[0], p[1], i=DOUBLE), i=DOUBLE)
    elif op == "neg":
        val = mk("neg", p[0], i=DOUBLE)
        tan = mk("neg", t[0], i=DOUBLE)
    elif op == "sin":
        val = mk("sin", p[0])
        tan = mk("*", t[0], mk("cos", p[0]), i=DOUBLE)
    elif op == "cos":
        val = mk("cos", p[0])
        tan = mk("*", mk("neg", t[0], i=DOUBLE), mk("sin", p[0]), i=DOUBLE)
    elif op == "tan":
        val = mk("tan", p[0])
        tan = mk("/", t[0], mk("**", mk("cos", p[0]), ScalarLit(2.0), i=DOUBLE),
                 i=DOUBLE)
    elif op == "log":
        val = mk("log", p[0])
        tan = mk("/", t[0], p[0], i=DOUBLE)
    elif op == "exp":
        val = mk("exp", p[0])
        tan = mk("*", t[0], mk("exp", p[0]), i=DOUBLE)
    else:
        raise InternalError(f"no derivative rule for {op}")

    out = App(Const("pair"), (val, tan))
    for name, arg in zip(reversed(names), reversed(args)):
        out = Let(name, arg, out)
    return out


def _dual_const_value(c: Const, ns: NameSource) -> Expr:
    """Translate a builtin passed around as a bare function value."""
    name = c.name
    if name in ("pair", "fst", "snd"):
        return Const(name)
    if name in ARITH_OPS or name in CMP_OPS or name in BOOL_OPS:
        a, b = ns.fresh("a"), ns.fresh("b")
        body = _dual_scalar_app(name, c.inst, [Var(a), Var(b)], ns, None)
        dt = dual_type(c.inst if c.inst is not None else BOOL)
        return Lam(((a, dt), (b, dt)), body)
    if name in ("neg", "not") or name in UNARY_MATH:
        a = ns.fresh("a")
        body = _dual_scalar_app(name, c.inst, [Var(a)], ns, None)
        dt = dual_type(c.inst if name == "neg" else
                       (BOOL if name == "not" else DOUBLE))
        return Lam(((a, dt),), body)
    if name == "length":
        a = ns.fresh("a")
        return Lam(((a, None),),
                   App(Const("pair"),
                       (App(Const("length"), (Var(a),)), IndexLit(0))))
    if name == "get":
        a, i = ns.fresh("a"), ns.fresh("i")
        return Lam(((a, None), (i, PairT(INDEX, INDEX))),
                   App(Const("get"), (Var(a), App(Const("fst"), (Var(i),)))))
    raise AdError(f"builtin {name!r} cannot be differentiated as a bare value")


def ad_translate(e: Expr, dmap: dict, tenv: dict, ctx: AdContext) -> Expr:
    """The expression translation.  `dmap` maps bound names to their dual
    names; `tenv` gives the types of original variables for the few rules
    that need them; `ctx` resolves function-valued globals to companions."""
    ns = ctx.ns

    if isinstance(e, Var):
        if e.name in dmap:
            return Var(dmap[e.name])
        t = tenv.get(e.name)
        if isinstance(t, FunT) or e.name in ctx.defs:
            return Var(ctx.dual_global(e.name))
        raise InternalError(f"ad_translate: free data variable {e.name!r}")

    if isinstance(e, ScalarLit):
        return App(Const("pair"), (e, ScalarLit(0.0)))
    if isinstance(e, IndexLit):
        return App(Const("pair"), (e, IndexLit(0)))
    if isinstance(e, BoolLit):
        return App(Const("pair"), (e, BoolLit(False)))

    if isinstance(e, ArrayLit):
        return ArrayLit(tuple(ad_translate(x, dmap, tenv, ctx) for x in e.items))

    if isinstance(e, Lam):
        inner_d = dict(dmap)
        inner_t = dict(tenv)
        params = []
        for p, t in e.params:
            dp = ns.fresh(p)
            inner_d[p] = dp
            inner_t[p] = t
            params.append((dp, dual_type(t) if t is not None else None))
        return Lam(tuple(params), ad_translate(e.body, inner_d, inner_t, ctx))

    if isinstance(e, Let):
        bound = ad_translate(e.bound, dmap, tenv, ctx)
        dx = ns.fresh(e.name)
        inner_d = dict(dmap)
        inner_d[e.name] = dx
        inner_t = dict(tenv)
        inner_t[e.name] = synth_type(e.bound, tenv)
        return Let(dx, bound, ad_translate(e.body, inner_d, inner_t, ctx))

    if isinstance(e, If):
        cond = App(Const("fst"), (ad_translate(e.cond, dmap, tenv, ctx),))
        return If(cond,
                  ad_translate(e.then, dmap, tenv, ctx),
                  ad_translate(e.els, dmap, tenv, ctx))

    if isinstance(e, Region):
        return ad_translate(e.expr, dmap, tenv, ctx)

    if isinstance(e, Deriv):
        raise InternalError("ad_translate: unexpanded deriv macro")

    if isinstance(e, App):
        fn = e.fn
        if isinstance(fn, Const):
            name = fn.name
            if name == "build":
                n, f = e.args
                dn = ad_translate(n, dmap, tenv, ctx)
                df = ad_translate(f, dmap, tenv, ctx)
                i = ns.fresh("i")
                lam = Lam(((i, INDEX),),
                          App(df, (App(Const("pair"), (Var(i), IndexLit(0))),)))
                return App(Const("build"),
                           (App(Const("fst"), (dn,)), lam))
            if name == "ifold":
                f, z, n = e.args
                df = ad_translate(f, dmap, tenv, ctx)
                dz = ad_translate(z, dmap, tenv, ctx)
                dn = ad_translate(n, dmap, tenv, ctx)
                x, i = ns.fresh("x"), ns.fresh("i")
                state_t = dual_type(synth_type(z, tenv))
                lam = Lam(((x, state_t), (i, INDEX)),
                          App(df, (Var(x),
                                   App(Const("pair"), (Var(i), IndexLit(0))))))
                return App(Const("ifold"),
                           (lam, dz, App(Const("fst"), (dn,))))
            if name == "get":
                arr = ad_translate(e.args[0], dmap, tenv, ctx)
                idx = ad_translate(e.args[1], dmap, tenv, ctx)
                return App(Const("get"), (arr, App(Const("fst"), (idx,))))
            if name == "length":
                arr = ad_translate(e.args[0], dmap, tenv, ctx)
                return App(Const("pair"),
                           (App(Const("length"), (arr,)), IndexLit(0)))
            if name == "pair":
                return App(Const("pair"),
                           tuple(ad_translate(a, dmap, tenv, ctx)
                                 for a in e.args))
            if name in ("fst", "snd"):
                return App(Const(name),
                           (ad_translate(e.args[0], dmap, tenv, ctx),))
            # Scalar / boolean primitive application.
            args = [ad_translate(a, dmap, tenv, ctx) for a in e.args]
            return _dual_scalar_app(name, fn.inst, args, ns, ctx)
        dfn = (_dual_const_value(fn, ns) if isinstance(fn, Const)
               else ad_translate(fn, dmap, tenv, ctx))
        dargs = tuple(
            _dual_const_value(a, ns) if isinstance(a, Const)
            else ad_translate(a, dmap, tenv, ctx)
            for a in e.args)
        return App(dfn, dargs)

    raise InternalError(f"ad_translate: {e!r}")


# ---------------------------------------------------------------------------
# Zero / one-hot dual encodings
# ---------------------------------------------------------------------------

def zero_dual(e: Expr, t: Ty, ns: NameSource) -> Expr:
    """Dual encoding of `e` with an all-zero tangent, by type."""
    if t == DOUBLE:
        return App(Const("pair"), (e, ScalarLit(0.0)))
    if t == INDEX:
        return App(Const("pair"), (e, IndexLit(0)))
    if t == BOOL:
        return App(Const("pair"), (e, BoolLit(False)))
    if t == VECTOR:
        return App(Var("vectorZip"),
                   (e, App(Var("vectorZeros"),
                           (App(Const("length"), (e,)),))))
    if t == MATRIX:
        return App(Var("matrixZip"),
                   (e, App(Var("matrixZeros"),
                           (App(Var("matrixRows"), (e,)),
                            App(Var("matrixCols"), (e,))))))
    if isinstance(t, PairT):
        return App(Const("pair"),
                   (zero_dual(App(Const("fst"), (e,)), t.fst, ns),
                    zero_dual(App(Const("snd"), (e,)), t.snd, ns)))
    if isinstance(t, ArrT):
        i = ns.fresh("i")
        return App(Const("build"),
                   (App(Const("length"), (e,)),
                    Lam(((i, INDEX),),
                        zero_dual(App(Const("get"), (e, Var(i))), t.elem, ns))))
    raise AdError(f"cannot build a zero tangent for type {t!r}")


def _ordered_data_fvs(e: Expr, tenv: dict) -> list:
    """Free data-typed variables in first-occurrence (preorder) order."""
    seen = []

    def walk(e, bound):
        if isinstance(e, Var):
            if e.name not in bound and e.name not in seen \
                    and e.name in tenv and not isinstance(tenv[e.name], FunT):
                seen.append(e.name)
            return
        if isinstance(e, Lam):
            walk(e.body, bound | {p for p, _ in e.params})
            return
        if isinstance(e, Let):
            walk(e.bound, bound)
            walk(e.body, bound | {e.name})
            return
        if isinstance(e, Deriv):
            walk(e.target, bound)
            if e.wrt not in bound and e.wrt not in seen \
                    and e.wrt in tenv and not isinstance(tenv[e.wrt], FunT):
                seen.append(e.wrt)
            return
        from .syntax import children
        for c in children(e):
            walk(c, bound)

    walk(e, set())
    return seen


def expand_deriv_node(target: Expr, wrt: str, tenv: dict, ctx: AdContext) -> Expr:
    """Expand one `deriv` whose target contains no further deriv nodes."""
    ns = ctx.ns
    wt = tenv.get(wrt)
    if wt is None:
        raise AdError(f"unbound variable {wrt!r}")
    if isinstance(wt, FunT):
        raise AdError("cannot differentiate with respect to a function",
                      code="WrongRank")
    rank = {DOUBLE: 0, VECTOR: 1, MATRIX: 2}.get(wt)
    if rank is None:
        raise AdError(f"deriv variable must be scalar, vector, or matrix, "
                      f"got {wt!r}", code="WrongRank")

    frees = _ordered_data_fvs(target, tenv)
    for v in frees:
        if not isinstance(tenv[v], (BaseT, ArrT, PairT)):
            raise AdError(f"free variable {v!r} has a function type",
                          code="FunctionFreeVar")
    if wrt not in frees:
        frees.append(wrt)

    fn = Lam(tuple((v, tenv[v]) for v in frees), target)
    dual_fn = Region(ad_translate(fn, {}, dict(tenv), ctx))

    def encode(hot_args):
        args = []
        for v in frees:
            t = tenv[v]
            if v == wrt:
                args.append(hot_args)
            else:
                args.append(zero_dual(Var(v), t, ns))
        return App(dual_fn, tuple(args))

    if rank == 0:
        return encode(App(Const("pair"), (Var(wrt), ScalarLit(1.0))))
    if rank == 1:
        r = ns.fresh("r")
        hot = App(Var("vectorZip"),
                  (Var(wrt),
                   App(Var("vectorHot"),
                       (App(Const("length"), (Var(wrt),)), Var(r)))))
        return App(Const("build"),
                   (App(Const("length"), (Var(wrt),)),
                    Lam(((r, INDEX),), encode(hot))))
    r, c = ns.fresh("r"), ns.fresh("c")
    rows = App(Var("matrixRows"), (Var(wrt),))
    cols = App(Var("matrixCols"), (Var(wrt),))
    hot = App(Var("matrixZip"),
              (Var(wrt),
               App(Var("matrixHot"),
                   (App(Var("matrixRows"), (Var(wrt),)),
                    App(Var("matrixCols"), (Var(wrt),)),
                    Var(r), Var(c)))))
    inner = Lam(((c, INDEX),), encode(hot))
    return App(Const("build"),
               (rows,
                Lam(((r, INDEX),),
                    App(Const("build"), (cols, inner)))))


API_TABLE = {
    "diff": (DOUBLE, DOUBLE),
    "vdiff": (DOUBLE, VECTOR),
    "mdiff": (DOUBLE, MATRIX),
    "grad": (VECTOR, DOUBLE),
    "jacob": (VECTOR, VECTOR),
    "mgrad": (MATRIX, DOUBLE),
}


class KindTypeMismatch(FsmError):
    pass


def api_program(kind: str, fname: str, at_src: str) -> str:
    """Program text computing the `kind` derivative of top-level function
    `fname` at the point given by source `at_src`.

    Each API operator is the deriv macro specialised to one argument
    kind, so the expansion is the documented build-over-one-hot form
    (modulo one beta redex the optimiser removes)."""
    if kind not in API_TABLE:
        raise KindTypeMismatch(f"unknown derivative kind {kind!r}",
                               code="KindTypeMismatch")
    return f"let apiat = {at_src} in deriv ({fname} apiat) apiat"


def check_api_kind(kind: str, fty) -> None:
    want_in, want_out = API_TABLE[kind]
    ok = (isinstance(fty, FunT) and len(fty.params) == 1
          and fty.params[0] == want_in and fty.ret == want_out)
    if not ok:
        raise KindTypeMismatch(
            f"{kind} expects a {want_in!r} => {want_out!r} function, "
            f"got {fty!r}", code="KindTypeMismatch")


def macro_expand(unit: Expr, ns: NameSource) -> Expr:
    """Expand every deriv macro in an elaborated program, innermost first,
    splicing translated companion definitions under the bindings they
    differentiate.  The result still needs re-elaboration."""
    ctx = AdContext(ns)

    def walk(e, tenv):
        if isinstance(e, Let):
            bound = walk(e.bound, tenv)
            bty = synth_type(bound, {n: t for n, (_, t) in ctx.defs.items()}
                             | {n: t for n, t in tenv.items()})
            ctx.defs[e.name] = (bound, bty)
            inner_t = dict(tenv)
            inner_t[e.name] = bty
            body = walk(e.body, inner_t)
            out = Let(e.name, bound, body)
            if e.name in ctx.companions and ctx.companions[e.name] is not None:
                out = Let(e.name, bound,
                          Let(f"{e.name}$d", ctx.companions.pop(e.name), body))
            return out
        if isinstance(e, Lam):
            inner_t = dict(tenv)
            for p, t in e.params:
                inner_t[p] = t
            return Lam(e.params, walk(e.body, inner_t))
        if isinstance(e, Deriv):
            target = walk(e.target, tenv)
            return expand_deriv_node(target, e.wrt, tenv, ctx)
        from .syntax import children, rebuild
        if isinstance(e, If):
            return If(walk(e.cond, tenv), walk(e.then, tenv), walk(e.els, tenv))
        kids = children(e)
        if not kids:
            return e
        return rebuild(e, (walk(c, tenv) for c in kids))

    return walk(unit, {})
