import os
import re

import pytest

from fsmc.codegen import (
    NonGroundInterface, UnsizedResult, UnsupportedForC, emit_c,
)
from fsmc.pipeline import OptConfig, optimise_source, run_pipeline
from fsmc.unit import assemble

GOLDEN = os.path.join(os.path.dirname(__file__), "golden", "example1.c")

E1_SRC = """
let f = fun u M v ->
  let m = matrixMul (vectorToMatrix u) (matrixMul M (matrixTranspose (vectorToMatrix v))) in
  m.[0].[0]
fun u M v -> matrixMap (deriv (f u M v) M) (fun r -> vectorMap r snd)"""


def test_example1_golden_token_exact():
    unit = optimise_source(E1_SRC)
    prog = emit_c(unit, "uMv_d")
    with open(GOLDEN) as fh:
        golden = fh.read()
    assert prog.source == golden
    assert "res->elems[r][c] = u->elems[r] * v->elems[c];" in prog.source


def test_no_heap_calls_in_emitted_bodies():
    sources = [
        E1_SRC,
        "fun v1 v2 -> vectorMap (deriv (vectorDot v1 v2) v1) snd",
        "fun v s -> vectorMap (deriv (vectorSMul v s) s) snd",
    ]
    for src in sources:
        prog = emit_c(optimise_source(src), "p")
        assert "malloc" not in prog.source
        assert "free(" not in prog.source


def test_identity_copy_loop():
    prog = emit_c(optimise_source("fun (v: Vector) -> v"), "ident")
    assert prog.source.count("for") == 1
    assert "fsm_vector_new" in prog.source


def test_scalar_function_has_no_destination():
    prog = emit_c(optimise_source("fun v1 v2 -> vectorDot v1 v2"), "dot")
    assert prog.result_type.__repr__() == "Double"
    assert prog.storage_bytes_fn == ""
    assert "double dot(" in prog.source


def test_storage_sizing_vector_and_matrix():
    prog = emit_c(optimise_source("fun v -> vectorMap v (fun x -> x * 2.0)"),
                  "scale")
    assert "fsm_vector_bytes(v->length)" in prog.source
    prog = emit_c(optimise_source(E1_SRC), "p")
    assert "fsm_matrix_bytes(M->rows, M->cols)" in prog.source


def test_checked_access_for_unbounded_index():
    prog = emit_c(optimise_source("fun (v: Vector) -> v.[0] + v.[3]"), "head")
    assert "fsm_vget" in prog.source


def test_loop_binder_access_unchecked():
    prog = emit_c(optimise_source("fun v -> vectorMap v (fun x -> x)"), "copy")
    assert "fsm_vget" not in prog.source


def test_non_ground_interface_rejected():
    unit = optimise_source("fun v f -> build (length v) (fun i -> f v.[i])")
    with pytest.raises(NonGroundInterface):
        emit_c(unit, "bad")


def test_soa_layout_for_dual_vector_result():
    unit = optimise_source("fun v -> deriv (vectorSum v) v")
    aos = emit_c(unit, "g", layout="aos")
    assert "fsm_dvector" in aos.source
    soa = emit_c(unit, "g", layout="soa")
    assert "fsm_dsplit" in soa.source
    assert "res_val" in soa.source and "res_tan" in soa.source


def test_dual_pair_fold_state():
    # an unfused dual loop keeps a pair accumulator
    unit = run_pipeline(assemble("fun v1 v2 -> deriv (vectorDot v1 v2) v1"),
                        OptConfig.parse("lf"))
    prog = emit_c(unit, "dd")
    assert "fsm_pair" in prog.source
