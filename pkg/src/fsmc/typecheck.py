"""Type checker and elaborator.

Checking infers omitted binder annotations by unification over ground
monotypes.  Numeric literals written without a decimal point are instance
flexible: context makes them Index or Double, and anything still
unconstrained afterwards defaults to Double (so the one-hot / eye library
definitions produce Double tensors, as their callers require).

`let`-bound lambdas are re-instantiated at every use, which is what lets a
single `vectorMap` serve both plain and dual element types.  The language
itself stays first-order data / no-currying: functions never flow into
arrays, pairs, branches, or returns, and every application is saturated.

Elaboration returns a new tree in which every binder carries its resolved
type, every overloaded operator its numeric instance, and every flexible
literal its final form.  `synth_type` recomputes any subterm's type from
such a tree in one bottom-up pass.
"""

from dataclasses import dataclass

from .errors import TypecheckError, InternalError
from .syntax import (
    DOUBLE, INDEX, BOOL,
    ArrT, BaseT, FunT, PairT, Ty,
    App, ArrayLit, BoolLit, Const, Deriv, Expr, If, IndexLit, Lam, Let,
    Region, ScalarLit, Var,
    ARITH_OPS, CMP_OPS, BOOL_OPS, UNARY_MATH,
)

# Meta kinds, ordered by strength.
K_PARAM = 0   # any type, including functions
K_DATA = 1    # non-function
K_NUM = 2     # Double or Index


@dataclass(eq=False)
class Meta(Ty):
    id: int
    kind: int

    def __repr__(self):
        return f"?{self.id}"


@dataclass(frozen=True)
class Scheme:
    """Type of a let-bound lambda; `metas` are re-instantiated per use."""
    metas: tuple
    ty: Ty


@dataclass
class Checked:
    """Elaborated expression plus its type."""
    expr: Expr
    ty: Ty


class Checker:
    def __init__(self, filename="<input>"):
        self.filename = filename
        self._next = 0
        self._link = {}
        self._flex = {}  # id(IndexLit node) -> instance meta

    # -- unification -------------------------------------------------------

    def meta(self, kind=K_DATA) -> Meta:
        self._next += 1
        return Meta(self._next, kind)

    def find(self, t: Ty) -> Ty:
        while isinstance(t, Meta) and t.id in self._link:
            t = self._link[t.id]
        return t

    def _occurs(self, m: Meta, t: Ty) -> bool:
        t = self.find(t)
        if t is m:
            return True
        if isinstance(t, ArrT):
            return self._occurs(m, t.elem)
        if isinstance(t, PairT):
            return self._occurs(m, t.fst) or self._occurs(m, t.snd)
        if isinstance(t, FunT):
            return any(self._occurs(m, p) for p in t.params) or self._occurs(m, t.ret)
        return False

    def _bind(self, m: Meta, t: Ty, pos):
        if t is m:
            return
        if self._occurs(m, t):
            self.err("cannot construct an infinite type", pos)
        if isinstance(t, Meta):
            if t.kind < m.kind:
                t.kind = m.kind
        else:
            self._check_kind(m.kind, t, pos)
        self._link[m.id] = t

    def _check_kind(self, kind, t: Ty, pos):
        if kind >= K_DATA and isinstance(t, FunT):
            self.err("function used as data", pos, code="FunctionInDataPosition")
        if kind >= K_NUM and t not in (DOUBLE, INDEX):
            self.err(f"numeric operand has type {t!r}", pos)

    def unify(self, a: Ty, b: Ty, pos, code=None):
        a, b = self.find(a), self.find(b)
        if a is b or a == b:
            return
        if isinstance(a, Meta):
            self._bind(a, b, pos)
            return
        if isinstance(b, Meta):
            self._bind(b, a, pos)
            return
        if isinstance(a, ArrT) and isinstance(b, ArrT):
            self.unify(a.elem, b.elem, pos, code)
            return
        if isinstance(a, PairT) and isinstance(b, PairT):
            self.unify(a.fst, b.fst, pos, code)
            self.unify(a.snd, b.snd, pos, code)
            return
        if isinstance(a, FunT) and isinstance(b, FunT):
            if len(a.params) != len(b.params):
                self.err(f"function arity mismatch: {a!r} vs {b!r}", pos, code)
            for pa, pb in zip(a.params, b.params):
                self.unify(pa, pb, pos, code)
            self.unify(a.ret, b.ret, pos, code)
            return
        self.err(f"type mismatch: {self.zonk(a)!r} vs {self.zonk(b)!r}", pos, code)

    def zonk(self, t: Ty, default=False) -> Ty:
        t = self.find(t)
        if isinstance(t, Meta):
            if default:
                self._link[t.id] = DOUBLE
                return DOUBLE
            return t
        if isinstance(t, ArrT):
            return ArrT(self.zonk(t.elem, default))
        if isinstance(t, PairT):
            return PairT(self.zonk(t.fst, default), self.zonk(t.snd, default))
        if isinstance(t, FunT):
            return FunT(tuple(self.zonk(p, default) for p in t.params),
                        self.zonk(t.ret, default))
        return t

    def err(self, msg, pos, code=None):
        raise TypecheckError(msg, pos, self.filename, code=code)

    # -- constants ---------------------------------------------------------

    def const_type(self, name: str, pos) -> tuple:
        """Returns (type, instance-meta-or-fixed) for a constant occurrence."""
        if name in ARITH_OPS:
            a = self.meta(K_NUM)
            return FunT((a, a), a), a
        if name == "neg":
            a = self.meta(K_NUM)
            return FunT((a,), a), a
        if name in CMP_OPS:
            a = self.meta(K_NUM)
            return FunT((a, a), BOOL), a
        if name in BOOL_OPS:
            return FunT((BOOL, BOOL), BOOL), BOOL
        if name == "not":
            return FunT((BOOL,), BOOL), BOOL
        if name in UNARY_MATH:
            return FunT((DOUBLE,), DOUBLE), DOUBLE
        if name == "build":
            m = self.meta(K_DATA)
            return FunT((INDEX, FunT((INDEX,), m)), ArrT(m)), None
        if name == "ifold":
            m = self.meta(K_DATA)
            return FunT((FunT((m, INDEX), m), m, INDEX), m), None
        if name == "get":
            m = self.meta(K_DATA)
            return FunT((ArrT(m), INDEX), m), None
        if name == "length":
            m = self.meta(K_DATA)
            return FunT((ArrT(m),), INDEX), None
        if name == "pair":
            m1, m2 = self.meta(K_DATA), self.meta(K_DATA)
            return FunT((m1, m2), PairT(m1, m2)), None
        if name == "fst":
            m1, m2 = self.meta(K_DATA), self.meta(K_DATA)
            return FunT((PairT(m1, m2),), m1), None
        if name == "snd":
            m1, m2 = self.meta(K_DATA), self.meta(K_DATA)
            return FunT((PairT(m1, m2),), m2), None
        raise InternalError(f"unknown constant {name}")

    # -- inference ---------------------------------------------------------

    def infer(self, e: Expr, env: dict):
        """Returns (elaborated, ty).  `env` maps names to Ty or Scheme."""
        if isinstance(e, Var):
            entry = env.get(e.name)
            if entry is None:
                self.err(f"unbound variable {e.name!r}", e.pos,
                         code="UnboundVariable")
            if isinstance(entry, Scheme):
                fresh = {m.id: self.meta(m.kind) for m in entry.metas}
                return e, self._instantiate(entry.ty, fresh)
            return e, entry

        if isinstance(e, ScalarLit):
            return e, DOUBLE
        if isinstance(e, IndexLit):
            if e.flex:
                m = self.meta(K_NUM)
                node = IndexLit(e.val, flex=True, pos=e.pos)
                self._flex[id(node)] = (node, m)
                return node, m
            return e, INDEX
        if isinstance(e, BoolLit):
            return e, BOOL

        if isinstance(e, Const):
            ty, inst = self.const_type(e.name, e.pos)
            if e.inst is not None and inst is not None:
                self.unify(inst, e.inst, e.pos)
            return Const(e.name, inst=inst, pos=e.pos), ty

        if isinstance(e, ArrayLit):
            elem = self.meta(K_DATA)
            items = []
            for item in e.items:
                it, t = self._infer2(item, env)
                self.unify(t, elem, _pos(item, e))
                items.append(it)
            return ArrayLit(tuple(items), pos=e.pos), ArrT(elem)

        if isinstance(e, App):
            return self._infer_app(e, env)

        if isinstance(e, Lam):
            inner = dict(env)
            params = []
            ptys = []
            for p, ann in e.params:
                t = ann if ann is not None else self.meta(K_PARAM)
                inner[p] = t
                params.append((p, t))
                ptys.append(t)
            body, bty = self._infer2(e.body, inner)
            if isinstance(self.find(bty), FunT):
                self.err("lambda body must not be a function", e.pos,
                         code="FunctionInDataPosition")
            if isinstance(self.find(bty), Meta):
                self._bind_kind(bty, K_DATA, e.pos)
            return Lam(tuple(params), body, pos=e.pos), FunT(tuple(ptys), bty)

        if isinstance(e, Let):
            bound, bt = self._infer2(e.bound, env)
            inner = dict(env)
            if isinstance(e.bound, Lam):
                inner[e.name] = self._generalize(bt, env)
            else:
                inner[e.name] = bt
            body, t = self._infer2(e.body, inner)
            return Let(e.name, bound, body, pos=e.pos), t

        if isinstance(e, If):
            cond, ct = self._infer2(e.cond, env)
            self.unify(ct, BOOL, _pos(e.cond, e), code="NonBoolCondition")
            then, tt = self._infer2(e.then, env)
            els, et = self._infer2(e.els, env)
            self.unify(tt, et, e.pos, code="BranchTypeMismatch")
            t = self.find(tt)
            if isinstance(t, FunT):
                self.err("conditional branches must not be functions", e.pos,
                         code="FunctionInDataPosition")
            if isinstance(t, Meta):
                self._bind_kind(t, K_DATA, e.pos)
            return If(cond, then, els, pos=e.pos), tt

        if isinstance(e, Deriv):
            target, tt = self._infer2(e.target, env)
            wt = env.get(e.wrt)
            if wt is None:
                self.err(f"unbound variable {e.wrt!r}", e.pos,
                         code="UnboundVariable")
            if isinstance(wt, Scheme):
                self.err("cannot differentiate with respect to a function",
                         e.pos, code="WrongRank")
            # Pin down the tensor ranks involved; derivatives are about
            # concrete Double tensors, so default eagerly here.
            wt = self.zonk(wt, default=True)
            tt = self.zonk(tt, default=True)
            from .ad import dual_type  # cycle-free: ad imports nothing from here at import time
            if wt == DOUBLE:
                rty = dual_type(tt)
            elif wt == ArrT(DOUBLE):
                rty = ArrT(dual_type(tt))
            elif wt == ArrT(ArrT(DOUBLE)):
                rty = ArrT(ArrT(dual_type(tt)))
            else:
                self.err(f"deriv variable must be scalar, vector, or matrix "
                         f"(got {wt!r})", e.pos, code="WrongRank")
            return Deriv(target, e.wrt, pos=e.pos), rty

        if isinstance(e, Region):
            inner, t = self._infer2(e.expr, env)
            return Region(inner, pos=e.pos), t

        raise InternalError(f"cannot check {e!r}")

    def _bind_kind(self, t, kind, pos):
        t = self.find(t)
        if isinstance(t, Meta) and t.kind < kind:
            t.kind = kind

    def _infer2(self, e, env):
        out = self.infer(e, env)
        return out[0], out[1]

    def _infer_app(self, e: App, env):
        # Flexible literals pin their instance through the op that uses them.
        fn, fty = self._infer2(e.fn, env)
        args = []
        atys = []
        for a in e.args:
            ea, t = self._infer2(a, env)
            args.append(ea)
            atys.append(t)
        fty = self.find(fty)
        if isinstance(fty, Meta):
            if fty.kind >= K_DATA:
                self.err("value of data type cannot be applied", e.pos)
            ret = self.meta(K_DATA)
            self._bind(fty, FunT(tuple(self.meta(K_PARAM) for _ in args), ret), e.pos)
            fty = self.find(fty)
        if not isinstance(fty, FunT):
            self.err(f"cannot apply a value of type {self.zonk(fty)!r}", e.pos)
        if len(args) < len(fty.params):
            self.err(f"function expects {len(fty.params)} arguments, got "
                     f"{len(args)}", e.pos, code="PartialApplication")
        if len(args) > len(fty.params):
            self.err(f"function expects {len(fty.params)} arguments, got "
                     f"{len(args)}", e.pos, code="OverApplication")
        for (ea, t, want, raw) in zip(args, atys, fty.params, e.args):
            self.unify(t, want, _pos(raw, e))
        return App(fn, tuple(args), pos=e.pos), fty.ret

    def _instantiate(self, t: Ty, fresh: dict) -> Ty:
        t = self.find(t)
        if isinstance(t, Meta):
            return fresh.get(t.id, t)
        if isinstance(t, ArrT):
            return ArrT(self._instantiate(t.elem, fresh))
        if isinstance(t, PairT):
            return PairT(self._instantiate(t.fst, fresh),
                         self._instantiate(t.snd, fresh))
        if isinstance(t, FunT):
            return FunT(tuple(self._instantiate(p, fresh) for p in t.params),
                        self._instantiate(t.ret, fresh))
        return t

    def _generalize(self, t: Ty, env: dict) -> Scheme:
        env_metas = set()
        for entry in env.values():
            src = entry.ty if isinstance(entry, Scheme) else entry
            self._collect_metas(src, env_metas,
                                skip=set(m.id for m in entry.metas)
                                if isinstance(entry, Scheme) else set())
        own = set()
        self._collect_metas(t, own, skip=set())
        gen = tuple(m for m in sorted(own, key=lambda m: m.id)
                    if m.id not in set(x.id for x in env_metas))
        return Scheme(gen, t)

    def _collect_metas(self, t: Ty, out: set, skip: set):
        t = self.find(t)
        if isinstance(t, Meta):
            if t.id not in skip:
                out.add(t)
        elif isinstance(t, ArrT):
            self._collect_metas(t.elem, out, skip)
        elif isinstance(t, PairT):
            self._collect_metas(t.fst, out, skip)
            self._collect_metas(t.snd, out, skip)
        elif isinstance(t, FunT):
            for p in t.params:
                self._collect_metas(p, out, skip)
            self._collect_metas(t.ret, out, skip)

    # -- final elaboration -------------------------------------------------

    def resolve(self, e: Expr) -> Expr:
        """Apply the solved substitution to the tree, defaulting leftovers."""
        if isinstance(e, Lam):
            params = tuple((p, self.zonk(t, default=True)) for p, t in e.params)
            return Lam(params, self.resolve(e.body), pos=e.pos)
        if isinstance(e, Const):
            inst = e.inst
            if inst is not None and not isinstance(inst, BaseT):
                inst = self.zonk(inst, default=True)
            return Const(e.name, inst=inst, pos=e.pos)
        if isinstance(e, IndexLit) and e.flex:
            entry = self._flex.get(id(e))
            if entry is None:
                raise InternalError("unresolved flexible literal")
            inst = self.zonk(entry[1], default=True)
            if inst == INDEX:
                return IndexLit(e.val, pos=e.pos)
            return ScalarLit(float(e.val), pos=e.pos)
        if isinstance(e, Let):
            return Let(e.name, self.resolve(e.bound), self.resolve(e.body), pos=e.pos)
        if isinstance(e, If):
            return If(self.resolve(e.cond), self.resolve(e.then),
                      self.resolve(e.els), pos=e.pos)
        if isinstance(e, App):
            return App(self.resolve(e.fn),
                       tuple(self.resolve(a) for a in e.args), pos=e.pos)
        if isinstance(e, ArrayLit):
            return ArrayLit(tuple(self.resolve(i) for i in e.items), pos=e.pos)
        if isinstance(e, Deriv):
            return Deriv(self.resolve(e.target), e.wrt, pos=e.pos)
        if isinstance(e, Region):
            return Region(self.resolve(e.expr), pos=e.pos)
        return e


def _pos(e, parent):
    return getattr(e, "pos", None) or getattr(parent, "pos", None)


def typecheck(e: Expr, env: dict = None, filename: str = "<input>",
              expect: Ty = None) -> Checked:
    """Check and elaborate `e`; `env` maps free variable names to types.

    `expect` pins the result type (used on re-elaboration so interface
    annotations survive transformations that under-constrain them)."""
    ck = Checker(filename)
    elab, ty = ck.infer(e, dict(env or {}))
    if expect is not None:
        ck.unify(ty, expect, getattr(e, "pos", None))
    out = ck.resolve(elab)
    return Checked(out, ck.zonk(ty, default=True))


def check_defs(defs, body, env=None, filename="<input>"):
    """Check a top-level definition chain plus optional body expression.

    Returns (elaborated_defs, elaborated_body_or_None, body_ty_or_None).
    """
    chain = body if body is not None else BoolLit(True)
    for name, bound in reversed(defs):
        chain = Let(name, bound, chain)
    checked = typecheck(chain, env, filename)
    out_defs = []
    node = checked.expr
    for _ in defs:
        assert isinstance(node, Let)
        out_defs.append((node.name, node.bound))
        node = node.body
    if body is None:
        return out_defs, None, None
    return out_defs, node, checked.ty


# ---------------------------------------------------------------------------
# Type synthesis over elaborated trees
# ---------------------------------------------------------------------------

def synth_type(e: Expr, env: dict) -> Ty:
    """Recompute the type of an elaborated (fully annotated) term."""
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise InternalError(f"synth_type: unbound {e.name!r}")
    if isinstance(e, ScalarLit):
        return DOUBLE
    if isinstance(e, IndexLit):
        return INDEX
    if isinstance(e, BoolLit):
        return BOOL
    if isinstance(e, ArrayLit):
        if not e.items:
            return ArrT(DOUBLE)
        return ArrT(synth_type(e.items[0], env))
    if isinstance(e, Lam):
        inner = dict(env)
        for p, t in e.params:
            if t is None:
                raise InternalError("synth_type: unannotated binder")
            inner[p] = t
        return FunT(tuple(t for _, t in e.params), synth_type(e.body, inner))
    if isinstance(e, Let):
        inner = dict(env)
        inner[e.name] = synth_type(e.bound, env)
        return synth_type(e.body, inner)
    if isinstance(e, If):
        return synth_type(e.then, env)
    if isinstance(e, Region):
        return synth_type(e.expr, env)
    if isinstance(e, Deriv):
        from .ad import dual_type
        tt = synth_type(e.target, env)
        wt = env[e.wrt]
        if wt == DOUBLE:
            return dual_type(tt)
        if wt == ArrT(DOUBLE):
            return ArrT(dual_type(tt))
        if wt == ArrT(ArrT(DOUBLE)):
            return ArrT(ArrT(dual_type(tt)))
        raise InternalError(f"synth_type: bad deriv variable type {wt!r}")
    if isinstance(e, Const):
        t = const_value_type(e)
        if t is None:
            raise InternalError(f"synth_type: bare polymorphic constant {e.name}")
        return t
    if isinstance(e, App):
        if isinstance(e.fn, Const):
            name = e.fn.name
            if name == "get":
                arr = synth_type(e.args[0], env)
                assert isinstance(arr, ArrT), arr
                return arr.elem
            if name == "length":
                return INDEX
            if name == "build":
                f = synth_type(e.args[1], env)
                assert isinstance(f, FunT)
                return ArrT(f.ret)
            if name == "ifold":
                return synth_type(e.args[1], env)
            if name == "pair":
                return PairT(synth_type(e.args[0], env),
                             synth_type(e.args[1], env))
            if name == "fst":
                p = synth_type(e.args[0], env)
                assert isinstance(p, PairT)
                return p.fst
            if name == "snd":
                p = synth_type(e.args[0], env)
                assert isinstance(p, PairT)
                return p.snd
            t = const_value_type(e.fn)
            assert isinstance(t, FunT)
            return t.ret
        fty = synth_type(e.fn, env)
        if not isinstance(fty, FunT):
            raise InternalError(f"synth_type: applying non-function {fty!r}")
        return fty.ret
    raise InternalError(f"synth_type: {e!r}")


def const_value_type(c: Const):
    """Monomorphic type of a constant occurrence, or None if polymorphic."""
    name, inst = c.name, c.inst
    if name in ARITH_OPS:
        return FunT((inst, inst), inst) if inst else None
    if name == "neg":
        return FunT((inst,), inst) if inst else None
    if name in CMP_OPS:
        return FunT((inst, inst), BOOL) if inst else None
    if name in BOOL_OPS:
        return FunT((BOOL, BOOL), BOOL)
    if name == "not":
        return FunT((BOOL,), BOOL)
    if name in UNARY_MATH:
        return FunT((DOUBLE,), DOUBLE)
    return None
