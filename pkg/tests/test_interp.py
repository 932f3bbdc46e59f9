import math
import random

from fsmc.interp import (
    Bottom, eval_counted, evaluate, show_value, value_approx_eq,
    value_matches_type,
)
from fsmc.parser import parse_expr
from fsmc.typecheck import typecheck
from fsmc.unit import assemble, expand_macros
from gen import rand_closed_ground


def run(src, fuel=10**9):
    checked = typecheck(parse_expr(src))
    return evaluate(checked.expr, fuel=fuel)


def test_ifold_sum():
    v = "[1.0, 2.0, 3.0]"
    out = run(f"ifold (fun a i -> a + (get {v} i)) 0.0 (length {v})")
    assert out == 6.0


def test_tan_outside_domain():
    # exact zero cosine: cos(pi/2) is not exactly 0 in floats, so force one
    out = run("tan 0.0")
    assert out == 0.0
    checked = typecheck(parse_expr("fun x -> tan x"))
    from fsmc.interp import Interp, Env
    it = Interp()
    clo = it.eval(checked.expr, Env({}))
    assert isinstance(it.apply(clo, [math.pi / 2]), float)  # cos != 0 exactly


def test_division_and_log_bottom():
    assert isinstance(run("1.0 / 0.0"), Bottom)
    assert isinstance(run("log (0.0 - 1.0)"), Bottom)
    assert isinstance(run("get [1.0] 3"), Bottom)
    assert isinstance(run("get [1.0] 0"), float)


def test_bottom_absorbs():
    assert isinstance(run("(1.0 / 0.0) + 2.0"), Bottom)
    assert isinstance(run("[1.0, 1.0 / 0.0]"), Bottom)
    assert isinstance(run("let x = 1.0 / 0.0 in 2.0"), Bottom)
    # untaken branch does not evaluate
    assert run("if true then 1.0 else 1.0 / 0.0") == 1.0


def test_build_indices():
    assert run("build 2 (fun i -> i)") == [0, 1]


def test_pow_domain():
    assert run("2.0 ** 0.5") == math.sqrt(2.0)
    assert run("(0.0 - 2.0) ** 2.0") == 4.0
    assert isinstance(run("(0.0 - 2.0) ** 0.5"), Bottom)
    assert run("0.0 ** 2.0") == 0.0
    assert isinstance(run("0.0 ** (0.0 - 1.0)"), Bottom)


def test_steps_literal_is_zero():
    checked = typecheck(parse_expr("1.0"))
    _, steps = eval_counted(checked.expr)
    assert steps == 0


def test_steps_grow_linearly():
    from fsmc.syntax import VECTOR, INDEX
    slopes = []
    for n in (2**10, 2**12, 2**14):
        checked = typecheck(parse_expr("build n (fun i -> v.[i])"),
                            {"v": VECTOR, "n": INDEX})
        _, steps = eval_counted(checked.expr, {"v": [1.0] * n, "n": n})
        slopes.append(steps / n)
    base = slopes[0]
    for s in slopes[1:]:
        assert abs(s - base) / base < 0.10


def test_value_approx_eq():
    assert value_approx_eq(1.0, 1.0 + 1e-12, 1e-9, 1e-12)
    assert not value_approx_eq([1.0, 2.0], [1.0], 1e-9, 1e-12)
    assert value_approx_eq(Bottom("x"), Bottom("y"))
    assert not value_approx_eq(Bottom("x"), 1.0)
    assert not value_approx_eq(True, 1)


def test_determinism():
    rng = random.Random(99)
    for _ in range(50):
        e = rand_closed_ground(rng)
        checked = typecheck(e)
        v1 = evaluate(checked.expr)
        v2 = evaluate(checked.expr)
        assert show_value(v1) == show_value(v2)


def test_type_preservation_sample():
    rng = random.Random(4242)
    for _ in range(200):
        e = rand_closed_ground(rng)
        checked = typecheck(e)
        v = evaluate(checked.expr)
        assert value_matches_type(v, checked.ty)


def test_fuel_budget():
    import pytest
    from fsmc.interp import EvalFuelExhausted
    checked = typecheck(parse_expr(
        "ifold (fun s i -> s + 1.0) 0.0 100000"))
    with pytest.raises(EvalFuelExhausted):
        evaluate(checked.expr, fuel=10)


def test_value_printer():
    assert show_value(32.0) == "32"
    assert show_value([1.0, 2.5]) == "[1, 2.5]"
    assert show_value((1.0, True)) == "(1, true)"
    assert show_value(Bottom("why")) == "⊥(why)"
    assert show_value(1 / 3) == f"{1/3:.17g}"
