import random

from fsmc.bench import (
    ALL_CASES, CSV_HEADER, CompiledVariant, ba_project_oracle,
    central_difference, nnmf_gradient_oracle, run_bench,
)
from fsmc.interp import value_approx_eq


def test_micro_suite_membership():
    assert set(ALL_CASES) == {"dot-grad", "max-grad", "add-jacob",
                              "smul-jacob", "nnmf-grad", "ba-jacobian"}


def test_dot_grad_equals_v2():
    case = ALL_CASES["dot-grad"]
    cv = CompiledVariant(case, "all")
    inputs = case.make_inputs(random.Random(0), 6)
    val, _ = cv(inputs)
    assert value_approx_eq(val, inputs["v2"], 1e-12, 1e-15)


def test_add_jacobian_identity():
    case = ALL_CASES["add-jacob"]
    cv = CompiledVariant(case, "all")
    inputs = case.make_inputs(random.Random(1), 4)
    val, _ = cv(inputs)
    assert val == [[1.0 if i == j else 0.0 for j in range(4)]
                   for i in range(4)]


def test_smul_column_jacobian_is_v():
    case = ALL_CASES["smul-jacob"]
    cv = CompiledVariant(case, "all")
    inputs = case.make_inputs(random.Random(2), 5)
    val, _ = cv(inputs)
    assert value_approx_eq(val, inputs["v"], 1e-12, 1e-15)


def test_max_grad_one_hot():
    case = ALL_CASES["max-grad"]
    for variant in ("none", "all"):
        cv = CompiledVariant(case, variant)
        for seed in range(5):
            inputs = case.make_inputs(random.Random(seed), 7)
            val, _ = cv(inputs)
            assert val == case.oracle(inputs)


def test_nnmf_closed_form_small():
    case = ALL_CASES["nnmf-grad"]
    cv = CompiledVariant(case, "all")
    for seed in range(5):
        inputs = case.make_inputs(random.Random(seed), 6)
        val, _ = cv(inputs)
        want = nnmf_gradient_oracle(inputs["u"], inputs["v"], inputs["A"])
        assert value_approx_eq(val, want, 1e-8, 1e-12)


def test_ba_project_matches_oracle():
    from fsmc.bench import BA_PROJECT_SRC, random_camera
    from fsmc.pipeline import OptConfig, run_pipeline
    from fsmc.unit import assemble
    from fsmc.fasteval import compile_program
    from fsmc.syntax import App, Let, Var
    unit = run_pipeline(assemble(BA_PROJECT_SRC), OptConfig.parse("all"))
    defs, body = unit.split()
    chain = App(body, (Var("cam"), Var("x")))
    for name, bound in reversed(defs):
        chain = Let(name, bound, chain)
    run = compile_program(chain, ("cam", "x"))
    rng = random.Random(3)
    for _ in range(10):
        cam = random_camera(rng)
        x = [rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(2, 4)]
        got, _ = run({"cam": cam, "x": x})
        want = ba_project_oracle(cam, x)
        assert value_approx_eq(got, want, 1e-9, 1e-12)


def test_ba_jacobian_shape_and_fd():
    case = ALL_CASES["ba-jacobian"]
    cv = CompiledVariant(case, "all")
    rng = random.Random(4)
    inputs = case.make_inputs(rng, 5)
    val, _ = cv(inputs)
    assert len(val) == 10 and all(len(row) == 11 for row in val)
    # finite differences on the reference projection
    def project_flat(cam):
        rows = []
        for p in inputs["points"]:
            rows.extend(ba_project_oracle(cam, p))
        return rows
    fd_cols = central_difference(lambda c: project_flat(c),
                                 [inputs["cam"]], 0)
    # fd_cols[c][row] vs val[row][c]
    for c in range(11):
        for r in range(10):
            want = fd_cols[c][r]
            got = val[r][c]
            assert abs(got - want) <= 1e-4 * (1 + abs(want)), (r, c)


def test_run_bench_csv():
    case = ALL_CASES["dot-grad"]
    rows = run_bench(case, sizes=(8, 16), repeats=2, seed=1)
    assert CSV_HEADER == "case,variant,size,mean_ns,min_ns,steps,checks_passed"
    assert len(rows) == 4
    for row in rows:
        parts = row.split(",")
        assert parts[0] == "dot-grad"
        assert parts[1] in ("none", "all")
        assert int(parts[5]) > 0
        assert parts[6] == "1"


def test_bench_deterministic():
    case = ALL_CASES["smul-jacob"]
    a = run_bench(case, sizes=(8,), repeats=1, seed=7)
    b = run_bench(case, sizes=(8,), repeats=1, seed=7)
    strip = lambda rows: [",".join(r.split(",")[:3] + r.split(",")[5:])
                          for r in rows]
    assert strip(a) == strip(b)
