import random

from fsmc.interp import evaluate, value_approx_eq
from fsmc.parser import parse_expr
from fsmc.pipeline import OptConfig, PipelineTrace, run_pipeline
from fsmc.printer import pretty
from fsmc.syntax import alpha_equal
from fsmc.unit import assemble

E1_SRC = """
let f = fun u M v ->
  let m = matrixMul (vectorToMatrix u) (matrixMul M (matrixTranspose (vectorToMatrix v))) in
  m.[0].[0]
fun u M v -> matrixMap (deriv (f u M v) M) (fun r -> vectorMap r snd)
"""

E5_SRC = "fun M -> matrixTranspose (matrixTranspose M)"

E6_SRC = """
fun v ->
  let I = matrixEye (length v) in
  build (length v) (fun i ->
    ifold (fun a j ->
      a + v.[j] * I.[j].[i]) 0 (length v))
"""

E7_SRC = "fun v1 v2 -> vectorMap (deriv (vectorDot v1 v2) v1) snd"

TR_SRC = "fun M -> matrixMap (deriv (matrixTrace M) M) (fun r -> vectorMap r snd)"

TRA_SRC = ("fun M A -> matrixMap (deriv (matrixTrace (matrixMul M A)) M) "
           "(fun r -> vectorMap r snd)")

EXPECTED = {
    E1_SRC: ("fun u M v -> build (length M) (fun i -> "
             "build (length (M.[0])) (fun j -> u.[i] * v.[j]))"),
    E5_SRC: ("fun M -> build (length M) (fun i -> "
             "build (length (M.[0])) (fun j -> M.[i].[j]))"),
    E6_SRC: "fun v -> build (length v) (fun i -> v.[i])",
    E7_SRC: "fun v1 v2 -> build (length v1) (fun i -> v2.[i])",
    TR_SRC: ("fun M -> build (length M) (fun i -> build (length (M.[0])) "
             "(fun j -> if i == j then 1.0 else 0.0))"),
    TRA_SRC: ("fun M A -> build (length M) (fun i -> "
              "build (length (M.[0])) (fun j -> A.[j].[i]))"),
}


def optimised_body(src, cfg="all"):
    unit = run_pipeline(assemble(src), OptConfig.parse(cfg))
    return unit.split()[1]


def test_identity_derivations():
    for src, expected in EXPECTED.items():
        body = optimised_body(src)
        want = parse_expr(expected)
        assert alpha_equal(body, want), f"{pretty(body)}\nvs\n{expected}"


def test_pipeline_idempotent_on_examples():
    for src in (E1_SRC, E5_SRC, E6_SRC, E7_SRC):
        unit = run_pipeline(assemble(src), OptConfig.parse("all"))
        body1 = unit.split()[1]
        again = run_pipeline(assemble(pretty(body1)), OptConfig.parse("all"))
        body2 = again.split()[1]
        assert alpha_equal(body1, body2), pretty(body2)


def test_none_config_only_expands():
    unit = run_pipeline(assemble(E7_SRC), OptConfig.parse("none"))
    text = pretty(unit.split()[1])
    # unoptimised: the one-hot library calls are still present
    assert "vectorHot" in text or "ifold" in text
    defs, _ = unit.split()
    assert any(n.startswith("vectorDot") for n, _ in defs)


def test_presets():
    cfg = OptConfig.parse("lf+ln")
    assert cfg.lf and cfg.ln and not cfg.simplify
    cfg = OptConfig.parse("lf,fission,simplify")
    assert cfg.fission and not cfg.ln
    import pytest
    from fsmc.errors import FsmError
    with pytest.raises(FsmError):
        OptConfig.parse("turbo")


def test_dump_after_trace():
    trace = PipelineTrace()
    run_pipeline(assemble(E7_SRC), OptConfig.parse("all"), trace)
    names = [n for n, _ in trace.entries]
    assert "differentiation" in names
    assert any(n.endswith("fusion") for n in names)
    assert "anf-cse" in names


def test_variants_agree_randomly():
    rng = random.Random(1)
    unit_all = run_pipeline(assemble(E7_SRC), OptConfig.parse("all"))
    unit_lf = run_pipeline(assemble(E7_SRC), OptConfig.parse("lf"))
    unit_none = run_pipeline(assemble(E7_SRC), OptConfig.parse("none"))
    from fsmc.syntax import App, Let, Var
    for _ in range(10):
        n = rng.randrange(1, 6)
        v1 = [rng.uniform(-2, 2) for _ in range(n)]
        v2 = [rng.uniform(-2, 2) for _ in range(n)]
        outs = []
        for unit in (unit_all, unit_lf, unit_none):
            defs, body = unit.split()
            chain = App(body, (Var("in1"), Var("in2")))
            for name, bound in reversed(defs):
                chain = Let(name, bound, chain)
            outs.append(evaluate(chain, {"in1": v1, "in2": v2}))
        assert value_approx_eq(outs[0], outs[1], 1e-9, 1e-12)
        assert value_approx_eq(outs[0], outs[2], 1e-9, 1e-12)
