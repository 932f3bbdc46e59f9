"""Differential tests: the compiling evaluator must reproduce the reference
evaluator's values exactly, and its step counts on terminating runs."""

import random

from fsmc.fasteval import compile_program
from fsmc.interp import Bottom, eval_counted, show_value
from fsmc.syntax import App, Let, Var, strip_types
from fsmc.typecheck import typecheck
from fsmc.unit import assemble, compile_source
from gen import rand_closed_ground


def both(e, env=None, free=()):
    ref_v, ref_s = eval_counted(e, dict(env or {}))
    run = compile_program(e, free)
    fast_v, fast_s = run(dict(env or {}))
    return (ref_v, ref_s), (fast_v, fast_s)


def test_random_closed_terms():
    rng = random.Random(31337)
    for _ in range(400):
        e = rand_closed_ground(rng)
        checked = typecheck(e)
        (rv, rs), (fv, fs) = both(checked.expr)
        assert show_value(rv) == show_value(fv), show_value(rv)
        if not isinstance(rv, Bottom):
            assert rs == fs, (rs, fs)


def test_programs_with_library():
    srcs = [
        "vectorDot [1.0,2.0,3.0] [4.0,5.0,6.0]",
        "matrixMul [[1.0,2.0],[3.0,4.0]] [[5.0,6.0],[7.0,8.0]]",
        "matrixTrace (matrixEye 4)",
        "(fun v -> vectorMap (deriv (vectorSum v) v) snd) [1.0,2.0]",
        "vectorSlice [1.0,2.0,3.0,4.0] 1 2",
        "ifold (fun s i -> if s > 2.0 then s else s + 1.5) 0.0 5",
    ]
    for src in srcs:
        unit = compile_source(src)
        (rv, rs), (fv, fs) = both(unit.expr)
        assert show_value(rv) == show_value(fv), src
        assert rs == fs, src


def test_with_inputs():
    unit = compile_source("fun v1 v2 -> vectorMap (deriv (vectorDot v1 v2) v1) snd")
    defs, body = unit.split()
    chain = App(body, (Var("a"), Var("b")))
    for name, bound in reversed(defs):
        chain = Let(name, bound, chain)
    rng = random.Random(5)
    run = compile_program(chain, ("a", "b"))
    for n in (1, 3, 9):
        a = [rng.uniform(-2, 2) for _ in range(n)]
        b = [rng.uniform(-2, 2) for _ in range(n)]
        rv, rs = eval_counted(chain, {"a": a, "b": b})
        fv, fs = run({"a": a, "b": b})
        assert show_value(rv) == show_value(fv)
        assert rs == fs


def test_bottom_becomes_bottom():
    checked = typecheck(typecheck_src("1.0 / 0.0"))
    run = compile_program(checked.expr)
    v, _ = run()
    assert isinstance(v, Bottom)


def typecheck_src(src):
    from fsmc.parser import parse_expr
    return parse_expr(src)


def test_fuel():
    import pytest
    from fsmc.interp import EvalFuelExhausted
    checked = typecheck(typecheck_src("ifold (fun s i -> s + 1.0) 0.0 99999"))
    run = compile_program(checked.expr)
    with pytest.raises(EvalFuelExhausted):
        run(fuel=10)
