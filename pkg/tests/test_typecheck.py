import pytest

from fsmc.errors import TypecheckError
from fsmc.parser import parse_expr
from fsmc.prelude import PRELUDE_SOURCE
from fsmc.syntax import (
    DOUBLE, INDEX, BOOL, VECTOR, MATRIX, ArrT, FunT, PairT,
    IndexLit, ScalarLit,
)
from fsmc.typecheck import typecheck
from fsmc.unit import assemble


def ty_of(src, env=None):
    return typecheck(parse_expr(src), env or {}).ty


def test_build_typing():
    assert ty_of("build 3 (fun i -> 0.0)") == ArrT(DOUBLE)


def test_vector_dot_type():
    unit = assemble("vectorDot")
    assert unit.ty == FunT((VECTOR, VECTOR), DOUBLE)


def test_partial_application_rejected():
    with pytest.raises(TypecheckError) as err:
        ty_of("(fun x y -> x + y) 1.0")
    assert err.value.code == "PartialApplication"


def test_over_application_rejected():
    with pytest.raises(TypecheckError) as err:
        ty_of("(fun x -> x) 1.0 2.0")
    assert err.value.code == "OverApplication"


def test_unbound_variable():
    with pytest.raises(TypecheckError) as err:
        ty_of("nope")
    assert err.value.code == "UnboundVariable"


def test_branch_mismatch():
    with pytest.raises(TypecheckError) as err:
        ty_of("if true then 1.0 else true")
    assert err.value.code == "BranchTypeMismatch"


def test_non_bool_condition():
    with pytest.raises(TypecheckError) as err:
        ty_of("if 1.0 then 1.0 else 2.0")
    assert err.value.code == "NonBoolCondition"


def test_function_in_data_position():
    with pytest.raises(TypecheckError) as err:
        ty_of("fun x -> fun y -> y")
    assert err.value.code == "FunctionInDataPosition"
    with pytest.raises(TypecheckError):
        ty_of("[fun x -> x]")


def test_literal_defaults():
    # undotted literals resolve from context; unconstrained defaults Double
    checked = typecheck(parse_expr("build 3 (fun i -> i)"))
    assert checked.ty == ArrT(INDEX)
    checked = typecheck(parse_expr("let x = 1 in x"))
    assert checked.ty == DOUBLE
    assert isinstance(checked.expr.bound, ScalarLit)


def test_one_hot_defaults_to_double():
    unit = assemble("vectorHot 4 2")
    assert unit.ty == ArrT(DOUBLE)


def test_reuse_at_two_instances():
    # one mapping function used at scalar and pair element types
    unit = assemble("(vectorAdd [1.0] [2.0], vectorZip [1.0] [2.0])")
    assert unit.ty == PairT(VECTOR, ArrT(PairT(DOUBLE, DOUBLE)))


def test_higher_order_param():
    checked = typecheck(parse_expr("fun v f -> build (length v) "
                                   "(fun i -> f v.[i])"))
    fty = checked.ty
    assert isinstance(fty, FunT) and len(fty.params) == 2
    assert isinstance(fty.params[1], FunT)


def test_annotations_respected():
    with pytest.raises(TypecheckError):
        ty_of("(fun (x: Vector) -> x) 1.0")


def test_deterministic_elaboration():
    src = "fun v -> vectorMap (deriv (vectorSum v) v) snd"
    a = assemble(src)
    b = assemble(src)
    assert a.expr == b.expr
