import random

import pytest

from fsmc.errors import ParseError
from fsmc.parser import parse_expr, parse_program
from fsmc.printer import pretty
from fsmc.syntax import (
    App, ArrayLit, Const, Deriv, If, IndexLit, Lam, Let, ScalarLit, Var,
    alpha_equal,
)
from gen import rand_closed_ground


def test_lambda_of_cos():
    e = parse_expr("fun x -> cos x")
    assert isinstance(e, Lam)
    assert e.params == (("x", None),)
    assert e.body == App(Const("cos"), (Var("x"),))


def test_get_sugar():
    e = parse_expr("v.[i]")
    assert e == App(Const("get"), (Var("v"), Var("i")))


def test_let_and_infix():
    e = parse_expr("let x = 1.0 in x + x")
    assert e == Let("x", ScalarLit(1.0),
                    App(Const("+"), (Var("x"), Var("x"))))


def test_pair_and_array():
    assert parse_expr("(1.0, 2.0)") == App(Const("pair"),
                                           (ScalarLit(1.0), ScalarLit(2.0)))
    e = parse_expr("[0, 1]")
    assert isinstance(e, ArrayLit) and len(e.items) == 2


def test_precedence():
    e = parse_expr("1.0 + 2.0 * 3.0")
    assert e.fn == Const("+")
    assert e.args[1].fn == Const("*")
    # power binds tighter than unary minus on the left, right-assoc
    e = parse_expr("2.0 ** 3.0 ** 2.0")
    assert e.args[1].fn == Const("**")


def test_comparison_and_bool():
    e = parse_expr("1.0 < 2.0 && true")
    assert e.fn == Const("&&")


def test_deriv_form():
    e = parse_expr("deriv (cos a) a")
    assert isinstance(e, Deriv) and e.wrt == "a"


def test_if_form():
    e = parse_expr("if 1 == 2 then 1.0 else 2.0")
    assert isinstance(e, If)


def test_application_juxtaposition():
    e = parse_expr("f a b c")
    assert isinstance(e, App) and len(e.args) == 3


def test_sqrt_expansion():
    e = parse_expr("sqrt 2.0")
    assert isinstance(e, App) and isinstance(e.fn, Lam)
    inner = e.fn.body
    assert inner.fn == Const("**")


def test_annotation():
    e = parse_expr("fun (v: Vector) -> v")
    from fsmc.syntax import VECTOR
    assert e.params[0][1] == VECTOR


def test_comments_and_positions():
    e = parse_expr("// hello\n1.0 // trailing\n")
    assert e == ScalarLit(1.0)
    with pytest.raises(ParseError) as err:
        parse_expr("let 3 = 4 in 5")
    assert "error" in str(err.value)


def test_reserved_word_binding_rejected():
    with pytest.raises(ParseError):
        parse_expr("let build = 1.0 in build")
    with pytest.raises(ParseError):
        parse_expr("fun pair -> pair")


def test_program_defs_and_body():
    defs, body = parse_program("let f = fun x -> x\nlet g = 1.0\nf g")
    assert [n for n, _ in defs] == ["f", "g"]
    assert isinstance(body, App)


def test_program_let_in_body():
    defs, body = parse_program("let x = 1.0 in x")
    assert defs == []
    assert isinstance(body, Let)


def test_operator_section():
    e = parse_expr("vectorMap2 a b (+)")
    assert e.args[2] == Const("+")


def test_roundtrip_corpus():
    rng = random.Random(20240811)
    for _ in range(300):
        e = rand_closed_ground(rng)
        text = pretty(e)
        back = parse_expr(text)
        assert alpha_equal(e, back), text


def test_roundtrip_programs():
    srcs = [
        "fun v1 v2 -> vectorMap (deriv (vectorDot v1 v2) v1) snd",
        "let x = 1.0 in if x > 0.0 then [x, 2.0] else [0.0, 0.0]",
        "fun (m: Matrix) -> m.[0].[1] ** 0.5",
        "(fun x y -> (x, y)) 1.0 (2.0 - -3.0)",
    ]
    for s in srcs:
        e = parse_expr(s)
        assert alpha_equal(e, parse_expr(pretty(e)))
