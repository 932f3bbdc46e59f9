"""Benchmark applications: four micro derivative kernels, the rank-1
matrix-factorisation gradient, and the camera-projection Jacobian.

Each case carries program text, a seeded input generator, and an oracle
(closed form or central finite differences).  `run_bench` measures wall
time and deterministic step counts per (size, optimisation variant) and
emits CSV rows.
"""

import math
import random
import time
from dataclasses import dataclass, field

from .errors import FsmError
from .fasteval import compile_program
from .interp import value_approx_eq
from .pipeline import OptConfig, run_pipeline
from .syntax import App, Let, Var
from .unit import Unit, assemble

DOT_GRAD_SRC = "fun v1 v2 -> vectorMap (deriv (vectorDot v1 v2) v1) snd"

MAX_GRAD_SRC = """\
let vectorMax = fun v ->
  ifold (fun s i -> if v.[i] > s then v.[i] else s) (v.[0]) (length v)
fun v -> vectorMap (deriv (vectorMax v) v) snd
"""

ADD_JACOB_SRC = """\
fun v1 v2 ->
  let J = deriv (vectorAdd v1 v2) v1 in
  build (length J) (fun r -> vectorMap (J.[r]) snd)
"""

SMUL_JACOB_SRC = "fun v s -> vectorMap (deriv (vectorSMul v s) s) snd"

NNMF_GRAD_SRC = """\
fun u v A ->
  vectorMap (deriv (
    ifold (fun s i ->
      ifold (fun t j ->
        let p = u.[i] * v.[j] in
        t + (log p + A.[i].[j] / p)) s (length v)) 0.0 (length u)) v) snd
"""

BA_DEFS_SRC = """\
let distort = fun (radical: Vector) (proj: Vector) ->
  let rsq = vectorNorm proj in
  let L = 1.0 + radical.[0] * rsq + radical.[1] * rsq * rsq in
  vectorSMul proj L
let rodrigues = fun (rotation: Vector) (x: Vector) ->
  let sqtheta = vectorNorm rotation in
  let theta = sqrt sqtheta in
  let thetaInv = 1.0 / theta in
  let w = vectorSMul rotation thetaInv in
  let wCrossX = vectorCross w x in
  let tmp = (vectorDot w x) * (1.0 - cos theta) in
  let v1 = vectorSMul x (cos theta) in
  let v2 = vectorSMul wCrossX (sin theta) in
  vectorAdd (vectorAdd v1 v2) (vectorSMul w tmp)
let project = fun (cam: Vector) (x: Vector) ->
  let Xcam = rodrigues (vectorSlice cam 0 2) (vectorSub x (vectorSlice cam 3 5)) in
  let distorted = distort (vectorSlice cam 9 10) (vectorSMul (vectorSlice Xcam 0 1) (1.0 / Xcam.[2])) in
  vectorAdd (vectorSlice cam 7 8) (vectorSMul distorted cam.[6])
"""

BA_PROJECT_SRC = BA_DEFS_SRC + "fun cam x -> project cam x\n"

BA_JACOBIAN_SRC = BA_DEFS_SRC + """\
fun cam points ->
  build (2 * length points) (fun row ->
    let p = row / 2 in
    let k = row - (row / 2) * 2 in
    build (length cam) (fun c ->
      snd ((deriv (project cam (points.[p])) cam).[c].[k])))
"""


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------

def nnmf_gradient_oracle(u, v, A):
    """d/dv_j of sum_ij (log(u_i v_j) + A_ij / (u_i v_j)), computed directly:
    W^T (1/(WH) - A/(WH)^2) for the rank-1 factorisation."""
    n = len(v)
    grad = [0.0] * n
    for j in range(n):
        total = 0.0
        for i in range(len(u)):
            p = u[i] * v[j]
            total += u[i] * (1.0 / p - A[i][j] / (p * p))
        grad[j] = total
    return grad


def ba_project_oracle(cam, x):
    """Reference projection, straight from the component formulas."""
    r = cam[0:3]
    center = cam[3:6]
    f = cam[6]
    x0 = cam[7:9]
    k = cam[9:11]

    def dot(a, b):
        return sum(ai * bi for ai, bi in zip(a, b))

    def rodrigues(rot, p):
        sqtheta = dot(rot, rot)
        theta = math.sqrt(sqtheta)
        w = [ri / theta for ri in rot]
        wxp = [w[1] * p[2] - w[2] * p[1],
               w[2] * p[0] - w[0] * p[2],
               w[0] * p[1] - w[1] * p[0]]
        tmp = dot(w, p) * (1.0 - math.cos(theta))
        return [p[i] * math.cos(theta) + wxp[i] * math.sin(theta) + w[i] * tmp
                for i in range(3)]

    xc = rodrigues(r, [x[i] - center[i] for i in range(3)])
    proj = [xc[0] / xc[2], xc[1] / xc[2]]
    rsq = dot(proj, proj)
    L = 1.0 + k[0] * rsq + k[1] * rsq * rsq
    distorted = [p * L for p in proj]
    return [x0[i] + distorted[i] * f for i in range(2)]


def central_difference(fn, args, which, h=1e-6):
    """Jacobian of fn in its `which`-th argument by central differences.

    `fn` maps a list of flat float lists / floats to a flat list or float;
    returns rows indexed by the perturbed coordinate."""
    base = [list(a) if isinstance(a, list) else a for a in args]
    xs = base[which]
    coords = range(len(xs)) if isinstance(xs, list) else (None,)
    rows = []
    for c in coords:
        hi = [list(a) if isinstance(a, list) else a for a in base]
        lo = [list(a) if isinstance(a, list) else a for a in base]
        if c is None:
            hi[which] += h
            lo[which] -= h
        else:
            hi[which][c] += h
            lo[which][c] -= h
        fp, fm = fn(*hi), fn(*lo)
        if isinstance(fp, list):
            rows.append([(a - b) / (2 * h) for a, b in zip(fp, fm)])
        else:
            rows.append((fp - fm) / (2 * h))
    return rows if coords != (None,) else rows[0]


# ---------------------------------------------------------------------------
# Case plumbing
# ---------------------------------------------------------------------------

def random_vector(rng, n, lo=0.3, hi=2.5):
    return [rng.uniform(lo, hi) for _ in range(n)]


def random_matrix(rng, r, c, lo=0.3, hi=2.5):
    return [[rng.uniform(lo, hi) for _ in range(c)] for _ in range(r)]


@dataclass
class BenchCase:
    name: str
    source: str
    arg_names: tuple
    make_inputs: object          # (rng, size) -> dict name -> value
    variants: tuple = ("none", "all")
    oracle: object = None        # env -> expected value (optional)
    timeout_s: float = 60.0


def micro_suite():
    def dot_inputs(rng, n):
        return {"v1": random_vector(rng, n), "v2": random_vector(rng, n)}

    def max_inputs(rng, n):
        v = random_vector(rng, n)
        return {"v": v}

    def smul_inputs(rng, n):
        return {"v": random_vector(rng, n), "s": rng.uniform(0.5, 2.0)}

    return [
        BenchCase("dot-grad", DOT_GRAD_SRC, ("v1", "v2"), dot_inputs,
                  oracle=lambda env: env["v2"]),
        BenchCase("max-grad", MAX_GRAD_SRC, ("v",), max_inputs,
                  oracle=lambda env: _one_hot_argmax(env["v"])),
        BenchCase("add-jacob", ADD_JACOB_SRC, ("v1", "v2"), dot_inputs,
                  oracle=lambda env: _eye(len(env["v1"]))),
        BenchCase("smul-jacob", SMUL_JACOB_SRC, ("v", "s"), smul_inputs,
                  oracle=lambda env: env["v"]),
    ]


def _one_hot_argmax(v):
    best = 0
    for i in range(1, len(v)):
        if v[i] > v[best]:
            best = i
    out = [0.0] * len(v)
    out[best] = 1.0
    return out


def _eye(n):
    return [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]


def nnmf_case():
    # size = length of the row factor v; the column factor stays small so
    # the observed-matrix width carries the asymptotics.
    def inputs(rng, size):
        m = max(2, min(4, size))
        n = max(2, size)
        return {"u": random_vector(rng, m),
                "v": random_vector(rng, n),
                "A": random_matrix(rng, m, n)}

    return BenchCase("nnmf-grad", NNMF_GRAD_SRC, ("u", "v", "A"), inputs,
                     oracle=lambda env: nnmf_gradient_oracle(
                         env["u"], env["v"], env["A"]))


def random_camera(rng):
    cam = [rng.uniform(0.1, 0.5) for _ in range(3)]       # rotation
    cam += [rng.uniform(-1.0, 1.0) for _ in range(3)]     # center
    cam += [rng.uniform(0.8, 1.5)]                        # focal
    cam += [rng.uniform(-0.2, 0.2) for _ in range(2)]     # principal point
    cam += [rng.uniform(-0.1, 0.1) for _ in range(2)]     # radial distortion
    return cam


def ba_case():
    def inputs(rng, n_points):
        points = [[rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                   rng.uniform(2.0, 4.0)] for _ in range(n_points)]
        return {"cam": random_camera(rng), "points": points}

    return BenchCase("ba-jacobian", BA_JACOBIAN_SRC, ("cam", "points"),
                     inputs)


ALL_CASES = {c.name: c for c in micro_suite() + [nnmf_case(), ba_case()]}


class CompiledVariant:
    """A bench program optimised at one setting and compiled for execution."""

    def __init__(self, case: BenchCase, variant: str):
        self.case = case
        self.variant = variant
        cfg = OptConfig.parse(variant)
        unit = run_pipeline(assemble(case.source), cfg)
        self.unit = unit
        defs, body = unit.split()
        applied = App(body, tuple(Var(f"arg${n}") for n in case.arg_names))
        chain = applied
        for name, bound in reversed(defs):
            chain = Let(name, bound, chain)
        self.chain = chain
        self.free = tuple(f"arg${n}" for n in case.arg_names)
        self.run = compile_program(chain, self.free)

    def env(self, inputs: dict) -> dict:
        return {f"arg${n}": inputs[n] for n in self.case.arg_names}

    def __call__(self, inputs: dict, fuel: int = 10**12):
        return self.run(self.env(inputs), fuel)


def measure_steps(case_name: str, variant: str, size: int, seed: int = 0):
    case = ALL_CASES[case_name]
    cv = CompiledVariant(case, variant)
    rng = random.Random(seed)
    value, steps = cv(case.make_inputs(rng, size))
    return value, steps


CSV_HEADER = "case,variant,size,mean_ns,min_ns,steps,checks_passed"


def run_bench(case: BenchCase, sizes, repeats: int = 10, seed: int = 0,
              variants=None, rel_tol=1e-8):
    """Returns CSV rows (strings, without header)."""
    rows = []
    variants = variants or case.variants
    compiled = {v: CompiledVariant(case, v) for v in variants}
    for size in sizes:
        rng = random.Random(seed)
        inputs = case.make_inputs(rng, size)
        results = {}
        for v, cv in compiled.items():
            budget = time.monotonic() + case.timeout_s
            times = []
            value = steps = None
            for _ in range(repeats):
                t0 = time.perf_counter_ns()
                value, steps = cv(inputs)
                times.append(time.perf_counter_ns() - t0)
                if time.monotonic() > budget:
                    raise FsmError(f"TimeoutExceeded: {case.name}/{v} "
                                   f"at size {size}")
            results[v] = value
            checks = 1
            if case.oracle is not None:
                checks = int(value_approx_eq(value, case.oracle(inputs),
                                             rel_tol, 1e-12))
            rows.append(f"{case.name},{v},{size},"
                        f"{sum(times) // len(times)},{min(times)},"
                        f"{steps},{checks}")
        vals = list(results.values())
        for other in vals[1:]:
            if not value_approx_eq(vals[0], other, rel_tol, 1e-12):
                raise FsmError(f"variants disagree on {case.name} "
                               f"at size {size}")
    return rows
