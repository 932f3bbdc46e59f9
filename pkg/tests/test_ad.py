import math
import random

import pytest

from fsmc.ad import (
    AdContext, KindTypeMismatch, ad_translate, api_program, check_api_kind,
    dual_type,
)
from fsmc.interp import evaluate, value_approx_eq
from fsmc.parser import parse_expr
from fsmc.printer import pretty
from fsmc.syntax import (
    DOUBLE, INDEX, BOOL, VECTOR, ArrT, FunT, PairT,
    NameSource, Var, alpha_equal, alpha_rename, strip_types, subst,
)
from fsmc.typecheck import synth_type, typecheck
from fsmc.unit import assemble, compile_source
from gen import rand_open_scalar
from oracles import central_diff_grad, central_diff_scalar


def run(src, with_prelude=True):
    unit = compile_source(src, with_prelude=with_prelude)
    return evaluate(unit.expr)


def test_dual_type_translation():
    assert dual_type(DOUBLE) == PairT(DOUBLE, DOUBLE)
    assert dual_type(INDEX) == PairT(INDEX, INDEX)
    assert dual_type(BOOL) == PairT(BOOL, BOOL)
    assert dual_type(VECTOR) == ArrT(PairT(DOUBLE, DOUBLE))
    f = FunT((VECTOR,), DOUBLE)
    assert dual_type(f) == FunT((dual_type(VECTOR),), dual_type(DOUBLE))
    # nesting is well defined
    assert dual_type(dual_type(DOUBLE)) == PairT(PairT(DOUBLE, DOUBLE),
                                                 PairT(DOUBLE, DOUBLE))


def test_cos_derivative():
    a = 0.7
    out = run(f"(fun a -> snd (deriv (cos a) a)) {a}", with_prelude=False)
    assert value_approx_eq(out, -math.sin(a), 1e-12, 1e-12)


def test_product_rule_partial():
    out = run("(fun a b -> snd (deriv (a * b) a)) 3.0 5.0",
              with_prelude=False)
    assert out == 5.0


def test_nested_perturbations_value_one():
    rng = random.Random(11)
    src = ("fun x y -> snd (deriv (x * (snd (deriv (x + y) y))) x)")
    for _ in range(100):
        x, y = rng.uniform(-5, 5), rng.uniform(-5, 5)
        out = run(f"({src}) ({x!r}) ({y!r})", with_prelude=False)
        assert out == 1.0


@pytest.fixture(autouse=False)
def _unused():
    pass


def test_more_nested_stress():
    # d/dx (x * d(x*y)/dy) = y ... evaluated symbolically-by-hand oracle
    src = "fun x y -> snd (deriv (x * (snd (deriv (x * y) y))) x)"
    for x, y in [(2.0, 3.0), (-1.5, 0.25), (0.0, 4.0)]:
        out = run(f"({src}) ({x!r}) ({y!r})", with_prelude=False)
        # x * d(xy)/dy = x*x, derivative wrt x = 2x
        assert value_approx_eq(out, 2 * x, 1e-12, 1e-12)
    # second derivative via nesting: d2/dx2 (x**3) = 6x
    src = ("fun x -> snd (deriv (snd (deriv (x * x * x) x)) x)")
    for x in (0.5, 2.0, -3.0):
        out = run(f"({src}) ({x!r})", with_prelude=False)
        assert value_approx_eq(out, 6 * x, 1e-9, 1e-12)


def test_length_rule():
    out = run("(fun v -> vectorMap (deriv (vectorSum v) v) snd) [1.0, 2.0]")
    assert out == [1.0, 1.0]


def test_index_and_bool_tangents():
    # index arithmetic inside a derivative: tangent contributions are zero
    out = run("(fun v -> vectorMap (deriv (vectorSum (vectorSlice v 1 2)) v) snd)"
              " [1.0, 2.0, 3.0]")
    assert out == [0.0, 1.0, 1.0]


def test_grad_of_sum_is_ones():
    rng = random.Random(3)
    n = 5
    v = [round(rng.uniform(-2, 2), 3) for _ in range(n)]
    lit = "[" + ", ".join(repr(x) for x in v) + "]"
    out = run(f"(fun v -> vectorMap (deriv (vectorSum v) v) snd) {lit}")
    assert value_approx_eq(out, [1.0] * n, 1e-12, 1e-12)


def test_jacob_identity():
    out = run("(fun v -> let J = deriv (vectorMap v (fun x -> x)) v in"
              " build (length J) (fun r -> vectorMap (J.[r]) snd))"
              " [1.0, 2.0, 3.0]")
    assert out == [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]


def test_api_programs():
    # diff
    src = "let g = fun x -> cos x\n" + api_program("diff", "g", "0.7")
    unit = compile_source(src)
    v = evaluate(unit.expr)
    assert value_approx_eq(v, (math.cos(0.7), -math.sin(0.7)), 1e-12, 1e-12)
    # grad
    src = ("let f = fun v -> vectorNorm v\n"
           + api_program("grad", "f", "[1.0, 2.0]"))
    unit = compile_source(src)
    v = evaluate(unit.expr)
    tangents = [t for _, t in v]
    assert value_approx_eq(tangents, [2.0, 4.0], 1e-9, 1e-12)
    # jacob of the identity
    src = ("let f = fun v -> vectorMap v (fun x -> x)\n"
           + api_program("jacob", "f", "[1.0, 2.0, 3.0]"))
    unit = compile_source(src)
    v = evaluate(unit.expr)
    tang = [[t for _, t in row] for row in v]
    assert tang == [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]


def test_api_kind_checking():
    check_api_kind("diff", FunT((DOUBLE,), DOUBLE))
    check_api_kind("grad", FunT((VECTOR,), DOUBLE))
    with pytest.raises(KindTypeMismatch):
        check_api_kind("diff", FunT((VECTOR,), DOUBLE))
    with pytest.raises(KindTypeMismatch):
        check_api_kind("mgrad", FunT((VECTOR,), VECTOR))
    with pytest.raises(KindTypeMismatch):
        api_program("hessian", "f", "x")


def _translate_open(e, free_types):
    """Elaborate and translate an open scalar term; returns translated expr
    plus the dual env naming."""
    checked = typecheck(e, dict(free_types))
    ns = NameSource(1000)
    ctx = AdContext(ns)
    dmap = {n: f"{n}$dual" for n in free_types}
    tenv = dict(free_types)
    return ad_translate(checked.expr, dmap, tenv, ctx), dmap, checked


def test_dual_well_typedness_sample():
    rng = random.Random(77)
    for _ in range(300):
        frees = [f"a{i}" for i in range(rng.randrange(1, 4))]
        e = rand_open_scalar(rng, frees)
        free_types = {n: DOUBLE for n in frees}
        translated, dmap, checked = _translate_open(e, free_types)
        dual_env = {dmap[n]: dual_type(DOUBLE) for n in frees}
        out = typecheck(strip_types(translated), dual_env)
        assert out.ty == dual_type(checked.ty)


def test_substitution_compatibility_sample():
    rng = random.Random(88)
    ns = NameSource(50_000)
    for _ in range(200):
        frees = ["a", "b", "y"]
        e1 = rand_open_scalar(rng, frees)
        e2 = rand_open_scalar(rng, ["a", "b"])
        free_types = {n: DOUBLE for n in frees}
        # left: translate e1[e2/y]
        subbed = alpha_rename(subst(e1, {"y": e2}), ns, {n: n for n in frees})
        left, dmap_l, _ = _translate_open(subbed, {"a": DOUBLE, "b": DOUBLE})
        # right: translate e1, then substitute the translated e2 for y's dual
        t1, dmap, _ = _translate_open(e1, free_types)
        t2, dmap2, _ = _translate_open(e2, {"a": DOUBLE, "b": DOUBLE})
        t2 = subst(t2, {dmap2["a"]: Var(dmap["a"]), dmap2["b"]: Var(dmap["b"])})
        right = subst(t1, {dmap["y"]: t2})
        right = subst(right, {dmap["a"]: Var(dmap_l["a"]),
                              dmap["b"]: Var(dmap_l["b"])})
        assert alpha_equal(left, right), pretty(left) + "\nvs\n" + pretty(right)


def test_finite_difference_scalar_functions():
    rng = random.Random(123)
    for _ in range(20):
        x = rng.uniform(0.2, 1.2)
        got = run(f"(fun x -> snd (deriv (sin x * exp x + x ** 3.0) x)) {x!r}",
                  with_prelude=False)
        want = central_diff_scalar(
            lambda t: math.sin(t) * math.exp(t) + t ** 3, x)
        assert abs(got - want) <= 1e-5 * (1 + abs(want))
