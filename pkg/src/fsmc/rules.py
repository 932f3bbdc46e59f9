"""Rewrite rule catalog and the single-pass application engine.

Every rule is a local, type-preserving transformation applied at a node,
with side conditions discharged syntactically.  The engine walks the tree
top-down, retries the catalog at each node until it stabilises, and tracks
the extents of enclosing `build`/`ifold` binders so bound checks like
`get (build n f) i` with `i` ranging over an identical extent can fire.

Index bound checks and projection rules assume well-shaped programs (the
usual reading of these identities: `get (build n f) i` is undefined anyway
when the shapes disagree).  The rule-soundness harness samples well-shaped,
in-domain programs accordingly.
"""

from dataclasses import dataclass, field
from typing import Optional

from .errors import InternalError
from .syntax import (
    DOUBLE, INDEX,
    App, ArrayLit, BoolLit, Const, Expr, If, IndexLit, Lam, Let, Region,
    ScalarLit, Var,
    NameSource, children, count_occurrences, fvs, rebuild, refresh_binders,
    size, subst,
)


@dataclass
class RuleCtx:
    ns: NameSource
    # enclosing loop binder -> extent expression (for bound discharge)
    loop_bound: dict = field(default_factory=dict)
    # top-level / in-scope function definitions for inlining decisions
    defs: dict = field(default_factory=dict)


def _is_atomic(e: Expr) -> bool:
    return isinstance(e, (Var, Const, ScalarLit, IndexLit, BoolLit))


def _is_zero(e: Expr, inst) -> bool:
    if inst == INDEX:
        return isinstance(e, IndexLit) and e.val == 0
    return isinstance(e, ScalarLit) and e.val == 0.0


def _is_one(e: Expr, inst) -> bool:
    if inst == INDEX:
        return isinstance(e, IndexLit) and e.val == 1
    return isinstance(e, ScalarLit) and e.val == 1.0


def _zero(inst) -> Expr:
    return IndexLit(0) if inst == INDEX else ScalarLit(0.0)


def _prim(e: Expr, name: str) -> bool:
    return isinstance(e, App) and isinstance(e.fn, Const) and e.fn.name == name


def extent_equal(a: Expr, b: Expr) -> bool:
    """Structural equality of loop extents, modulo rectangularity: all rows
    of one matrix expression share a length, so `length (get M i)` matches
    `length (get M j)` for the same M."""
    if a == b:
        return True
    if _prim(a, "length") and _prim(b, "length"):
        xa, xb = a.args[0], b.args[0]
        if _prim(xa, "get") and _prim(xb, "get") and xa.args[0] == xb.args[0]:
            return True
    return False


def _bound_ok(extent: Expr, idx: Expr, rctx: RuleCtx) -> bool:
    """Discharge `0 <= idx < extent`.

    Literal-vs-literal bounds check statically.  Otherwise the access is
    assumed in range on well-formed inputs — the source subscripted an
    array of this logical dimension with that very index — for literal
    indexes and plain index variables (loop binders, point counters).
    Compound index arithmetic stays conservative."""
    if isinstance(idx, IndexLit):
        if isinstance(extent, IndexLit):
            return 0 <= idx.val < extent.val
        return idx.val >= 0
    if isinstance(idx, Var):
        return True
    if _prim(idx, "+") and len(idx.args) == 2:
        a, b = idx.args
        # slice accesses: bounded variable plus a literal offset
        if isinstance(a, Var) and isinstance(b, IndexLit):
            return not isinstance(extent, IndexLit) or b.val < extent.val
        if isinstance(a, IndexLit) and isinstance(b, Var):
            return not isinstance(extent, IndexLit) or a.val < extent.val
    return False


def replace_subterm(tree: Expr, target: Expr, replacement: Expr) -> Expr:
    """Replace every structurally-equal occurrence of `target`.

    Safe under the globally-unique-binder invariant (no shadowing)."""
    if tree == target:
        return replacement
    kids = children(tree)
    if not kids:
        return tree
    return rebuild(tree, (replace_subterm(k, target, replacement) for k in kids))


def _occ_context_ok(body: Expr, name: str) -> bool:
    """True if the unique occurrence of `name` is not inside a lambda or a
    conditional branch (so inlining cannot change how often or whether the
    bound expression runs)."""

    def walk(e, ok):
        if name not in fvs(e):
            return True
        if isinstance(e, Var):
            return ok
        if isinstance(e, Lam):
            return walk(e.body, False)
        if isinstance(e, If):
            return (walk(e.cond, ok) and walk(e.then, False)
                    and walk(e.els, False))
        return all(walk(c, ok) for c in children(e))

    return walk(body, True)


def _uses_only_under(body: Expr, name: str, heads) -> bool:
    """All occurrences of `name` appear directly as `head(... name ...)`
    with the variable in head position (first argument)."""

    def walk(e):
        if name not in fvs(e):
            return True
        if isinstance(e, Var):
            return e.name != name
        if isinstance(e, App) and isinstance(e.fn, Const) \
                and e.fn.name in heads and e.args \
                and isinstance(e.args[0], Var) and e.args[0].name == name:
            return all(walk(a) for a in e.args[1:])
        return all(walk(c) for c in children(e))

    return walk(body)


def _proj_use_counts(body: Expr, name: str):
    """(#fst-uses, #snd-uses, clean) for a pair-valued binding."""
    counts = {"fst": 0, "snd": 0}
    clean = True

    def walk(e):
        nonlocal clean
        if name not in fvs(e):
            return
        if isinstance(e, Var):
            if e.name == name:
                clean = False
            return
        if isinstance(e, App) and isinstance(e.fn, Const) \
                and e.fn.name in ("fst", "snd") \
                and isinstance(e.args[0], Var) and e.args[0].name == name:
            counts[e.fn.name] += 1
            return
        for c in children(e):
            walk(c)

    walk(body)
    return counts["fst"], counts["snd"], clean


# ---------------------------------------------------------------------------
# The catalog
# ---------------------------------------------------------------------------

def r_beta(e, rctx):
    if isinstance(e, App) and isinstance(e.fn, Lam):
        if len(e.fn.params) != len(e.args):
            raise InternalError("beta arity mismatch post-typecheck")
        out = e.fn.body
        for (p, _), a in zip(reversed(e.fn.params), reversed(e.args)):
            out = Let(p, a, out)
        return out
    return None


def _wf_total(e, rctx) -> bool:
    """Totality on well-formed inputs: like `normal.is_total` but accepts
    array indexing whose index is a literal or an enclosing loop binder."""
    if isinstance(e, (Var, ScalarLit, IndexLit, BoolLit)):
        return True
    if _prim(e, "get"):
        arr, idx = e.args
        if not (isinstance(idx, (IndexLit, Var))):
            return False
        if isinstance(idx, Var) and idx.name not in rctx.loop_bound:
            return False
        return _wf_total(arr, rctx)
    if isinstance(e, If):
        return all(_wf_total(c, rctx) for c in (e.cond, e.then, e.els))
    if isinstance(e, App) and isinstance(e.fn, Const):
        name = e.fn.name
        if name in ("-", "neg") and e.fn.inst == INDEX:
            return False
        if name in ("+", "-", "*", "neg", "sin", "cos", "exp", "pair",
                    "fst", "snd", "length", ">", "<", "==", "<>", "&&",
                    "||", "not"):
            return all(_wf_total(a, rctx) for a in e.args)
    return False


_SMALL_INLINE_SIZE = 10
_SMALL_INLINE_USES = 4


def _cheap_total(e) -> bool:
    from .normal import is_total
    return size(e) <= 3 and is_total(e) and not _prim(e, "build") \
        and not _prim(e, "ifold") and not isinstance(e, Lam)


def _norm_extent(e):
    """Collapse length-of-build / length-of-literal chains for comparing
    loop extents during fusion planning."""
    if _prim(e, "length"):
        a = _norm_extent(e.args[0])
        if _prim(a, "build"):
            return _norm_extent(a.args[0])
        if isinstance(a, ArrayLit):
            return IndexLit(len(a.items))
        return App(e.fn, (a,))
    kids = children(e)
    if not kids:
        return e
    return rebuild(e, (_norm_extent(k) for k in kids))


def _build_uses_fuse(body, name, build_rhs, rctx) -> bool:
    """True if every use of a build-bound `name` is a length, or a get whose
    index discharges against the build extent, so inlining is guaranteed to
    deforest instead of re-running the build inside a loop."""
    extent = build_rhs.args[0]

    def discharge(idx, rctx):
        if _bound_ok(extent, idx, rctx):
            return True
        # The enclosing extent may mention `name` itself; compare after
        # substituting the build and collapsing lengths.
        if isinstance(idx, Var):
            enc = rctx.loop_bound.get(idx.name)
            if enc is not None and name in fvs(enc):
                enc2 = _norm_extent(subst(enc, {name: build_rhs}))
                return enc2 == _norm_extent(extent)
        return False

    def walk(e, rctx):
        if name not in fvs(e):
            return True
        if isinstance(e, Var):
            return e.name != name
        if isinstance(e, App) and isinstance(e.fn, Const) \
                and isinstance(e.args[0], Var) and e.args[0].name == name:
            if e.fn.name == "length":
                return True
            if e.fn.name == "get" and name not in fvs(e.args[1]):
                return discharge(e.args[1], rctx) and walk(e.args[1], rctx)
        kids = children(e)
        return all(walk(kid, _descend(e, k, kid, rctx))
                   for k, kid in enumerate(kids))

    return walk(body, rctx)


def r_let_inline(e, rctx):
    if not isinstance(e, Let):
        return None
    b, body = e.bound, e.body
    n = count_occurrences(body, e.name)
    if n == 0:
        return None  # dce's job
    if _is_atomic(b) or _cheap_total(b):
        return subst(body, {e.name: b})
    if n == 1 and _occ_context_ok(body, e.name):
        return subst(body, {e.name: b})
    if n <= _SMALL_INLINE_USES and size(b) <= _SMALL_INLINE_SIZE \
            and _wf_total(b, rctx) and _occ_context_ok_multi(body, e.name):
        return subst(body, {e.name: b})
    if isinstance(b, Lam):
        out = body
        for _ in range(n):
            out = _subst_one(out, e.name, lambda: refresh_binders(b, rctx.ns))
        return out
    if _prim(b, "build") \
            and _uses_only_under(body, e.name, ("get", "length")) \
            and _build_uses_fuse(body, e.name, b, rctx):
        out = body
        for _ in range(n):
            out = _subst_one(out, e.name, lambda: refresh_binders(b, rctx.ns))
        return out
    if isinstance(b, ArrayLit) \
            and _uses_only_under(body, e.name, ("get", "length")) \
            and _arraylit_uses_fuse(body, e.name, b):
        out = body
        for _ in range(n):
            out = _subst_one(out, e.name, lambda: refresh_binders(b, rctx.ns))
        return out
    if _prim(b, "pair"):
        nf, ns_, clean = _proj_use_counts(body, e.name)
        ok_f = nf <= 1 or size(b.args[0]) <= 8
        ok_s = ns_ <= 1 or size(b.args[1]) <= 8
        if clean and ok_f and ok_s:
            return subst(body, {e.name: b})
    return None


def _arraylit_uses_fuse(body, name, lit) -> bool:
    """Every indexed use is a literal in range, so the literal array will
    partially evaluate away instead of being rebuilt at each use."""

    def walk(e):
        if name not in fvs(e):
            return True
        if isinstance(e, Var):
            return e.name != name
        if isinstance(e, App) and isinstance(e.fn, Const) \
                and e.args and isinstance(e.args[0], Var) \
                and e.args[0].name == name:
            if e.fn.name == "length":
                return True
            if e.fn.name == "get":
                idx = e.args[1]
                return isinstance(idx, IndexLit) \
                    and 0 <= idx.val < len(lit.items)
        return all(walk(c) for c in children(e))

    return walk(body)


def _occ_context_ok_multi(body, name):
    """All occurrences outside lambdas (branch positions are fine for total
    right-hand sides)."""

    def walk(e, ok):
        if name not in fvs(e):
            return True
        if isinstance(e, Var):
            return ok
        if isinstance(e, Lam):
            return walk(e.body, False)
        return all(walk(c, ok) for c in children(e))

    return walk(body, True)


def _subst_one(body, name, make):
    """Substitute each occurrence with a fresh copy (binder-refreshed)."""
    done = False

    def go(e):
        nonlocal done
        if isinstance(e, Var) and e.name == name:
            return make()
        if name not in fvs(e):
            return e
        kids = children(e)
        return rebuild(e, (go(k) for k in kids))

    return go(body)


def r_dce(e, rctx):
    if isinstance(e, Let) and e.name not in fvs(e.body):
        return e.body
    return None


def r_let_float(e, rctx):
    if isinstance(e, Let) and isinstance(e.bound, Let):
        inner = e.bound
        return Let(inner.name, inner.bound,
                   Let(e.name, inner.body, e.body))
    return None


def r_licm(e, rctx):
    # let-out-of-argument: f(..., let x = e0 in e1, ...) -> let x = e0 in f(...)
    if isinstance(e, App):
        for k, a in enumerate(e.args):
            if isinstance(a, Let):
                args = e.args[:k] + (a.body,) + e.args[k + 1:]
                return Let(a.name, a.bound, App(e.fn, args, pos=e.pos))
        if isinstance(e.fn, Let):
            return Let(e.fn.name, e.fn.bound, App(e.fn.body, e.args, pos=e.pos))
    if isinstance(e, If) and isinstance(e.cond, Let):
        c = e.cond
        return Let(c.name, c.bound, If(c.body, e.then, e.els, pos=e.pos))
    if isinstance(e, ArrayLit):
        for k, a in enumerate(e.items):
            if isinstance(a, Let):
                items = e.items[:k] + (a.body,) + e.items[k + 1:]
                return Let(a.name, a.bound, ArrayLit(items, pos=e.pos))
    return None


def _ring_op(e, op):
    if isinstance(e, App) and isinstance(e.fn, Const) and e.fn.name == op \
            and len(e.args) == 2:
        return e.args[0], e.args[1], e.fn.inst
    return None


def r_ring_add_zero(e, rctx):
    m = _ring_op(e, "+")
    if m:
        a, b, inst = m
        if _is_zero(b, inst):
            return a
        if _is_zero(a, inst):
            return b
    return None


def r_ring_mul_one(e, rctx):
    m = _ring_op(e, "*")
    if m:
        a, b, inst = m
        if _is_one(b, inst):
            return a
        if _is_one(a, inst):
            return b
    return None


def r_ring_mul_zero(e, rctx):
    m = _ring_op(e, "*")
    if m:
        a, b, inst = m
        if _is_zero(b, inst) or _is_zero(a, inst):
            return _zero(inst)
    return None


def r_ring_sub_self(e, rctx):
    m = _ring_op(e, "-")
    if m and m[0] == m[1]:
        return _zero(m[2])
    m = _ring_op(e, "+")
    if m:
        a, b, inst = m
        if _prim(b, "neg") and b.args[0] == a:
            return _zero(inst)
    return None


def r_ring_div_zero(e, rctx):
    m = _ring_op(e, "/")
    if m and _is_zero(m[0], m[2]):
        return _zero(m[2])
    return None


def r_ring_distribute(e, rctx):
    m = _ring_op(e, "+")
    if not m:
        return None
    a, b, inst = m
    ma, mb = _ring_op(a, "*"), _ring_op(b, "*")
    if not (ma and mb):
        return None
    (a0, a1, _), (b0, b1, _) = ma, mb
    mul = Const("*", inst=inst)
    add = Const("+", inst=inst)
    if a0 == b0:
        return App(mul, (a0, App(add, (a1, b1))))
    if a1 == b1:
        return App(mul, (App(add, (a0, b0)), a1))
    return None


def r_fusion_get_build(e, rctx):
    if _prim(e, "get"):
        arr, idx = e.args
        if _prim(arr, "build"):
            extent, f = arr.args
            if _bound_ok(extent, idx, rctx):
                return App(f, (idx,))
    return None


def r_fusion_get_array(e, rctx):
    if _prim(e, "get"):
        arr, idx = e.args
        if isinstance(arr, ArrayLit) and isinstance(idx, IndexLit) \
                and 0 <= idx.val < len(arr.items):
            return arr.items[idx.val]
    return None


def r_fusion_length_build(e, rctx):
    if _prim(e, "length"):
        (arr,) = e.args
        if _prim(arr, "build"):
            return arr.args[0]
        if isinstance(arr, ArrayLit):
            return IndexLit(len(arr.items))
    return None


def r_if_true(e, rctx):
    if isinstance(e, If) and isinstance(e.cond, BoolLit):
        return e.then if e.cond.val else e.els
    return None


r_if_false = r_if_true  # one matcher covers both literal conditions


def r_if_same(e, rctx):
    if isinstance(e, If) and e.then == e.els:
        return e.then
    return None


def r_if_propagate(e, rctx):
    if isinstance(e, If) and not isinstance(e.cond, BoolLit):
        c = e.cond
        n_then = _count_subterm(e.then, c)
        n_els = _count_subterm(e.els, c)
        if n_then or n_els:
            return If(c,
                      replace_subterm(e.then, c, BoolLit(True)),
                      replace_subterm(e.els, c, BoolLit(False)),
                      pos=e.pos)
    return None


def _count_subterm(tree, target):
    n = 1 if tree == target else 0
    for k in children(tree):
        n += _count_subterm(k, target)
    return n


_PUSH_FNS = frozenset(("fst", "snd", "get", "+", "-", "*", "/", "**", "neg",
                       ">", "<", "==", "<>", "sin", "cos", "tan", "log",
                       "exp", "length"))
_PUSH_SIZE = 14


def r_if_push_fn(e, rctx):
    # f (if c then a else b) -> if c then f a else f b, for cheap contexts;
    # when two operands are conditionals on the same condition they merge
    # without duplicating anything.
    if isinstance(e, App) and isinstance(e.fn, Const) \
            and e.fn.name in _PUSH_FNS:
        if len(e.args) == 2:
            a, b = e.args
            if isinstance(a, If) and isinstance(b, If) and a.cond == b.cond:
                return If(a.cond,
                          App(e.fn, (a.then, b.then)),
                          App(e.fn, (a.els, b.els)), pos=e.pos)
        for k, a in enumerate(e.args):
            if isinstance(a, If):
                others = e.args[:k] + e.args[k + 1:]
                if all(size(o) <= _PUSH_SIZE for o in others):
                    mk = lambda br: App(e.fn, e.args[:k] + (br,) + e.args[k + 1:])
                    return If(a.cond, mk(a.then), mk(a.els), pos=e.pos)
    return None


def r_if_and_split(e, rctx):
    # if (c1 && c2) then t else z  ->  if c1 then (if c2 then t else z) else z
    if isinstance(e, If) and _prim(e.cond, "&&") and size(e.els) <= _PUSH_SIZE:
        c1, c2 = e.cond.args
        return If(c1,
                  If(c2, e.then, e.els),
                  refresh_binders(e.els, rctx.ns),
                  pos=e.pos)
    return None


def r_tuple_fst(e, rctx):
    if _prim(e, "fst") and _prim(e.args[0], "pair"):
        return e.args[0].args[0]
    return None


def r_tuple_snd(e, rctx):
    if _prim(e, "snd") and _prim(e.args[0], "pair"):
        return e.args[0].args[1]
    return None


def r_ifold_zero(e, rctx):
    if _prim(e, "ifold") and isinstance(e.args[2], IndexLit) \
            and e.args[2].val == 0:
        return e.args[1]
    return None


_PEEL_MAX = 3


def r_ifold_peel(e, rctx):
    if not _prim(e, "ifold"):
        return None
    f, z, n = e.args
    if not (isinstance(n, IndexLit) and 1 <= n.val <= _PEEL_MAX):
        return None
    if not isinstance(f, Lam):
        return None
    (a, ta), (i, ti) = f.params
    a2, i2 = rctx.ns.fresh(a), rctx.ns.fresh(i)
    inner = App(refresh_binders(f, rctx.ns),
                (Var(a2), App(Const("+", inst=INDEX), (Var(i2), IndexLit(1)))))
    lam = Lam(((a2, ta), (i2, ti)), inner)
    first = App(refresh_binders(f, rctx.ns), (z, IndexLit(0)))
    return App(Const("ifold"), (lam, first, IndexLit(n.val - 1)))


def r_ifold_invariant(e, rctx):
    if _prim(e, "ifold"):
        f = e.args[0]
        if isinstance(f, Lam) and len(f.params) == 2 \
                and isinstance(f.body, Var) and f.body.name == f.params[0][0]:
            return e.args[1]
    return None


def r_ifold_single_access(e, rctx):
    # ifold (\a i -> if i == e0 then e1 else a) z n
    #   -> let a = z in let i = e0 in e1   with 0 <= e0 < n discharged
    if not _prim(e, "ifold"):
        return None
    f, z, n = e.args
    if not (isinstance(f, Lam) and len(f.params) == 2
            and isinstance(f.body, If)):
        return None
    (a, _), (i, _) = f.params
    body = f.body
    if not (isinstance(body.els, Var) and body.els.name == a):
        return None
    cond = body.cond
    if not (_prim(cond, "==") and len(cond.args) == 2):
        return None
    lhs, rhs = cond.args
    if isinstance(lhs, Var) and lhs.name == i:
        e0 = rhs
    elif isinstance(rhs, Var) and rhs.name == i:
        e0 = lhs
    else:
        return None
    if a in fvs(e0) or i in fvs(e0):
        return None
    ok = False
    if isinstance(e0, IndexLit) and isinstance(n, IndexLit):
        ok = 0 <= e0.val < n.val
    elif isinstance(e0, Var):
        # An enclosing loop binder is in range on well-formed inputs (its
        # loop and this one index the same logical dimension).
        ok = e0.name in rctx.loop_bound
    if not ok:
        return None
    return Let(a, z, Let(i, e0, body.then))


def r_const_fold(e, rctx):
    """Fold arithmetic and comparisons over literal operands (partial
    operations and anything that could change IEEE results are left alone)."""
    if not (isinstance(e, App) and isinstance(e.fn, Const)):
        return None
    name = e.fn.name
    args = e.args
    if name in ("+", "-", "*") and len(args) == 2:
        if all(isinstance(a, IndexLit) for a in args):
            v = {"+": args[0].val + args[1].val,
                 "-": args[0].val - args[1].val,
                 "*": args[0].val * args[1].val}[name]
            if v >= 0:
                return IndexLit(v)
            return None
        if all(isinstance(a, ScalarLit) for a in args):
            import math
            v = {"+": args[0].val + args[1].val,
                 "-": args[0].val - args[1].val,
                 "*": args[0].val * args[1].val}[name]
            if math.isfinite(v):
                return ScalarLit(v)
        return None
    if name == "neg" and len(args) == 1 and isinstance(args[0], ScalarLit):
        return ScalarLit(-args[0].val)
    if name in CMP_OPS_FOLD and len(args) == 2 \
            and all(isinstance(a, (IndexLit, ScalarLit)) for a in args) \
            and type(args[0]) is type(args[1]):
        a, b = args[0].val, args[1].val
        v = {"==": a == b, "<>": a != b, ">": a > b, "<": a < b}[name]
        return BoolLit(v)
    return None


CMP_OPS_FOLD = (">", "<", "==", "<>")


_UNROLL_MAX = 4


def r_build_unroll(e, rctx):
    # build k f with a small literal k unfolds to an array literal, so
    # short vectors (3-vectors, dual pairs of them) partially evaluate.
    if not _prim(e, "build"):
        return None
    n, f = e.args
    if not (isinstance(n, IndexLit) and 0 <= n.val <= _UNROLL_MAX
            and isinstance(f, Lam)):
        return None
    items = []
    (iv, _), = f.params
    for k in range(n.val):
        body = refresh_binders(f.body, rctx.ns)
        items.append(subst(body, {iv: IndexLit(k)}))
    return ArrayLit(tuple(items))


def r_ifold_unswitch(e, rctx):
    # ifold (\s i -> if C then b else s) z n, with C independent of the
    # loop, becomes if C then (ifold (\s i -> b) z n) else z.
    if not _prim(e, "ifold"):
        return None
    f, z, n = e.args
    if not (isinstance(f, Lam) and len(f.params) == 2
            and isinstance(f.body, If)):
        return None
    (s, ts), (i, ti) = f.params
    body = f.body
    deps = fvs(body.cond)
    if s in deps or i in deps:
        return None
    if isinstance(body.els, Var) and body.els.name == s:
        inner = App(Const("ifold"),
                    (Lam(f.params, body.then), z, n))
        return If(body.cond, inner, refresh_binders(z, rctx.ns))
    if isinstance(body.then, Var) and body.then.name == s:
        inner = App(Const("ifold"),
                    (Lam(f.params, body.els), z, n))
        return If(body.cond, refresh_binders(z, rctx.ns), inner)
    return None


def _half_value(e, k, pairvars, rctx):
    """The k-component of pair-valued `e`, rewritten to consume only the
    k-halves of the state variables in `pairvars` (name -> half name).
    Returns None when `e` mixes halves in a way that cannot be split."""
    proj = ("fst", "snd")[k]

    def touched(x):
        return bool(fvs(x) & pairvars.keys())

    if isinstance(e, Var) and e.name in pairvars:
        return Var(pairvars[e.name])
    if not touched(e):
        if _prim(e, "pair"):
            return e.args[k]
        return App(Const(proj), (e,))
    if isinstance(e, App) and isinstance(e.fn, Const) \
            and e.fn.name == proj and isinstance(e.args[0], Var) \
            and e.args[0].name in pairvars:
        return Var(pairvars[e.args[0].name])
    if _prim(e, "pair"):
        comp = e.args[k]
        return _strip_half_uses(comp, k, pairvars)
    if isinstance(e, Let):
        if touched(e.bound):
            bound = _strip_half_uses(e.bound, k, pairvars)
            if bound is None:
                return None
        else:
            bound = e.bound
        body = _half_value(e.body, k, pairvars, rctx)
        if body is None:
            return None
        return Let(e.name, bound, body)
    if isinstance(e, If):
        if touched(e.cond):
            return None
        then = _half_value(e.then, k, pairvars, rctx)
        els = _half_value(e.els, k, pairvars, rctx)
        if then is None or els is None:
            return None
        return If(e.cond, then, els)
    if _prim(e, "ifold"):
        return _half_loop(e, k, pairvars, rctx)
    return None


def _half_loop(e, k, pairvars, rctx):
    """Split a state-threading fold down to one pair component."""
    f, z, n = e.args
    if not isinstance(f, Lam) or (fvs(n) & pairvars.keys()):
        return None
    (s, ts), (i, ti) = f.params
    s_new = rctx.ns.fresh(s)
    inner = dict(pairvars)
    inner[s] = s_new
    body = _half_value(f.body, k, inner, rctx)
    if body is None:
        return None
    z_half = _half_value(z, k, pairvars, rctx)
    if z_half is None:
        return None
    comp_ty = None
    from .syntax import PairT
    if isinstance(ts, PairT):
        comp_ty = (ts.fst, ts.snd)[k]
    return App(Const("ifold"),
               (Lam(((s_new, comp_ty), (i, ti)), body), z_half, n))


def _strip_half_uses(e, k, pairvars):
    """Rewrite `proj_k(state)` uses to the half variables inside a component
    expression; fails (None) on any other use of the state."""
    proj = ("fst", "snd")[k]

    def walk(e):
        if not (fvs(e) & pairvars.keys()):
            return e
        if isinstance(e, Var):
            return None  # bare use of a whole state variable
        if isinstance(e, App) and isinstance(e.fn, Const) \
                and e.fn.name == proj and isinstance(e.args[0], Var) \
                and e.args[0].name in pairvars:
            return Var(pairvars[e.args[0].name])
        kids = children(e)
        new = []
        for kid in kids:
            out = walk(kid)
            if out is None:
                return None
            new.append(out)
        return rebuild(e, new)

    return walk(e)


def r_fission_pair(e, rctx):
    # fst/snd (ifold f z n) -> the loop over just that component, when the
    # loop (and any state-threading loops nested inside it) computes the two
    # components independently.  The other component's work disappears.
    if not (isinstance(e, App) and isinstance(e.fn, Const)
            and e.fn.name in ("fst", "snd")):
        return None
    loop = e.args[0]
    if not _prim(loop, "ifold"):
        return None
    k = 0 if e.fn.name == "fst" else 1
    return _half_loop(loop, k, {}, rctx)


@dataclass
class Rule:
    id: str
    fn: object


CATALOG = [
    Rule("beta", r_beta),
    Rule("const-fold", r_const_fold),
    Rule("let-float", r_let_float),
    Rule("licm", r_licm),
    Rule("let-inline", r_let_inline),
    Rule("dce", r_dce),
    Rule("fusion-length-build", r_fusion_length_build),
    Rule("fusion-get-build", r_fusion_get_build),
    Rule("fusion-get-array", r_fusion_get_array),
    Rule("tuple-fst", r_tuple_fst),
    Rule("tuple-snd", r_tuple_snd),
    Rule("if-true", r_if_true),
    Rule("if-false", r_if_false),
    Rule("if-same", r_if_same),
    Rule("if-and-split", r_if_and_split),
    Rule("if-propagate", r_if_propagate),
    Rule("if-push-fn", r_if_push_fn),
    Rule("ring-add-zero", r_ring_add_zero),
    Rule("ring-mul-one", r_ring_mul_one),
    Rule("ring-mul-zero", r_ring_mul_zero),
    Rule("ring-sub-self", r_ring_sub_self),
    Rule("ring-div-zero", r_ring_div_zero),
    Rule("ring-distribute", r_ring_distribute),
    Rule("ifold-zero", r_ifold_zero),
    Rule("ifold-peel", r_ifold_peel),
    Rule("ifold-invariant", r_ifold_invariant),
    Rule("ifold-single-access", r_ifold_single_access),
    Rule("ifold-unswitch", r_ifold_unswitch),
    Rule("build-unroll", r_build_unroll),
    Rule("fission-pair", r_fission_pair),
]

RULES_BY_ID = {r.id: r for r in CATALOG}


def apply_rule_once(rule_id: str, e: Expr, ns: NameSource = None) -> Optional[Expr]:
    """Apply one named rule at the leftmost-outermost match, or None."""
    rule = RULES_BY_ID[rule_id]
    rctx = RuleCtx(ns or NameSource(10**6))

    def walk(e, rctx):
        out = rule.fn(e, rctx)
        if out is not None:
            return out
        kids = children(e)
        for k, kid in enumerate(kids):
            sub = walk(kid, _descend(e, k, kid, rctx))
            if sub is not None:
                new_kids = list(kids)
                new_kids[k] = sub
                return rebuild(e, new_kids)
        return None

    return walk(e, rctx)


def _descend(parent, k, kid, rctx):
    """Extend the loop-bound context when entering a loop body."""
    if isinstance(parent, App) and isinstance(parent.fn, Const) \
            and isinstance(kid, Lam):
        name = parent.fn.name
        if name == "build" and k == 2 and len(kid.params) == 1:
            lb = dict(rctx.loop_bound)
            lb[kid.params[0][0]] = parent.args[0]
            return RuleCtx(rctx.ns, lb, rctx.defs)
        if name == "ifold" and k == 1 and len(kid.params) == 2:
            lb = dict(rctx.loop_bound)
            lb[kid.params[1][0]] = parent.args[2]
            return RuleCtx(rctx.ns, lb, rctx.defs)
    return rctx


class RewritePass:
    """One top-down sweep applying a rule subset to fixpoint at each node."""

    NODE_CAP = 200

    def __init__(self, rules, rctx, only_regions=False):
        self.rules = rules
        self.rctx = rctx
        self.changed = False
        self.only_regions = only_regions

    def run(self, e: Expr) -> Expr:
        return self._walk(e, self.rctx, not self.only_regions)

    def _walk(self, e, rctx, active):
        if isinstance(e, Region):
            return Region(self._walk(e.expr, RuleCtx(rctx.ns, {}, rctx.defs),
                                     True), pos=e.pos)
        if active:
            for _ in range(self.NODE_CAP):
                for rule in self.rules:
                    out = rule.fn(e, rctx)
                    if out is not None:
                        self.changed = True
                        e = out
                        break
                else:
                    break
            else:
                raise InternalError("rewrite did not stabilise at node")
        kids = children(e)
        if not kids:
            return e
        # Let/Lam/App children need their binding context threaded.
        new_kids = [self._walk(kid, _descend(e, k, kid, rctx), active)
                    for k, kid in enumerate(kids)]
        return rebuild(e, new_kids)
