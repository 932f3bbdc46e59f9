#!/usr/bin/env python3
"""Differential suite: compiled C vs the reference interpreter.

For each program under programs/: emit C through the command-line interface,
compile it with the runtime (sanitizers when available), then on seeded
random inputs compare the shim's printed value against `run` on the same
program applied to the same literals.  Also asserts no malloc/free in
emitted bodies, exercises the exhaustion diagnostic, the out-of-bounds
undefined marker, the matrix echo round-trip, and both dual-array layouts.

Uses the compiler strictly through its CLI and file formats.

Usage: python3 differential.py [--inputs N] [--keep]
"""

import argparse
import math
import os
import random
import re
import shutil
import subprocess
import sys
import tempfile

HERE = os.path.dirname(os.path.abspath(__file__))
RUNTIME = os.path.dirname(HERE)
PROGRAMS = os.path.join(HERE, "programs")
FSMC = [sys.executable, "-m", "fsmc.cli"]

REL_TOL = 1e-9
ABS_TOL = 1e-12

CASES = {
    # name -> (arg kinds, sampler ranges); sizes kept small but varied
    "dot_grad": ("vv",),
    "max_grad": ("v",),
    "add_jacob": ("vv",),
    "smul_jacob": ("vs",),
    "nnmf_grad": ("uvA",),
    "ba_jacobian": ("cP",),
    "dual_zip": ("v",),
}


def sh(cmd, **kw):
    return subprocess.run(cmd, capture_output=True, text=True, **kw)


def find_cc():
    for cc in ("cc", "gcc", "clang"):
        if shutil.which(cc):
            return cc
    raise SystemExit("no C compiler found")


def sanitizer_flags(cc, tmp):
    probe = os.path.join(tmp, "probe.c")
    with open(probe, "w") as fh:
        fh.write("int main(void){return 0;}\n")
    flags = ["-fsanitize=address,undefined", "-fno-sanitize-recover=all"]
    out = sh([cc, "-std=c11", probe, "-o", os.path.join(tmp, "probe")]
             + flags)
    if out.returncode == 0 and sh([os.path.join(tmp, "probe")]).returncode == 0:
        return flags
    return []


def sample_args(kind, rng):
    def vec(n, lo=0.3, hi=2.5):
        return [rng.uniform(lo, hi) for _ in range(n)]

    if kind == "vv":
        n = rng.randrange(1, 7)
        return [vec(n), vec(n)]
    if kind == "v":
        return [vec(rng.randrange(1, 7))]
    if kind == "vs":
        return [vec(rng.randrange(1, 7)), rng.uniform(0.5, 2.0)]
    if kind == "uvA":
        m, n = rng.randrange(2, 5), rng.randrange(2, 6)
        return [vec(m), vec(n), [vec(n) for _ in range(m)]]
    if kind == "cP":
        cam = (vec(3, 0.1, 0.5) + vec(3, -1.0, 1.0) + [rng.uniform(0.8, 1.5)]
               + vec(2, -0.2, 0.2) + vec(2, -0.1, 0.1))
        pts = [[rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(2, 4)]
               for _ in range(rng.randrange(1, 4))]
        return [cam, pts]
    raise ValueError(kind)


def fsm_literal(v):
    if isinstance(v, float):
        text = repr(v)
        return f"({text})" if v < 0 else text
    if isinstance(v, list) and v and isinstance(v[0], list):
        return "[" + ", ".join(fsm_literal(r) for r in v) + "]"
    if isinstance(v, list):
        return "[" + ", ".join(fsm_literal(x) for x in v) + "]"
    return repr(v)


def wire_lines(args):
    lines = [str(len(args))]
    for a in args:
        if isinstance(a, float):
            lines.append(f"D {a.hex()}")
        elif isinstance(a, list) and a and isinstance(a[0], list):
            flat = " ".join(x.hex() for row in a for x in row)
            lines.append(f"M {len(a)} {len(a[0])} {flat}")
        elif isinstance(a, list):
            lines.append(f"V {len(a)} {' '.join(x.hex() for x in a)}")
        else:
            lines.append(f"I {a}")
    return "\n".join(lines) + "\n"


def parse_value(text):
    """Parse the printed value syntax into Python floats/lists/tuples."""
    text = text.strip()
    pos = [0]

    def peek():
        return text[pos[0]] if pos[0] < len(text) else ""

    def parse():
        c = peek()
        if c == "[":
            pos[0] += 1
            items = []
            while peek() != "]":
                items.append(parse())
                if peek() == ",":
                    pos[0] += 2
            pos[0] += 1
            return items
        if c == "(":
            pos[0] += 1
            a = parse()
            assert peek() == ","
            pos[0] += 2
            b = parse()
            assert peek() == ")"
            pos[0] += 1
            return (a, b)
        m = re.match(r"[-+0-9.eE a-zA-Z]+?(?=[,\])]|$)", text[pos[0]:])
        tok = m.group(0)
        pos[0] += len(tok)
        return float(tok)

    return parse()


def approx(a, b):
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(approx(x, y) for x, y in zip(a, b))
    if isinstance(a, tuple) and isinstance(b, tuple):
        return approx(a[0], b[0]) and approx(a[1], b[1])
    if isinstance(a, float) and isinstance(b, float):
        if math.isnan(a) and math.isnan(b):
            return True
        return abs(a - b) <= ABS_TOL + REL_TOL * max(abs(a), abs(b))
    return a == b


def make_applied_source(prog_text, args):
    # programs end with a top-level lambda; definitions stay in front
    lines = prog_text.strip().splitlines()
    split = 0
    for i, line in enumerate(lines):
        if line.startswith("fun "):
            split = i
    defs = "\n".join(lines[:split])
    body = "\n".join("  " + line for line in lines[split:])
    lits = " ".join(f"({fsm_literal(a)})" for a in args)
    head = defs + "\n" if defs else ""
    return f"{head}let progMain =\n{body}\nprogMain {lits}\n"


def check_no_heap_calls(c_path):
    with open(c_path) as fh:
        src = fh.read()
    body = src.split("int main", 1)[0]
    assert "malloc" not in body, c_path
    assert re.search(r"\bfree\s*\(", body) is None, c_path


def build(cc, flags, c_path, out_path):
    cmd = [cc, "-std=c11", "-O1", "-g", c_path,
           os.path.join(RUNTIME, "fsm_runtime.c"),
           "-I", RUNTIME, "-lm", "-o", out_path] + flags
    out = sh(cmd)
    if out.returncode != 0:
        raise SystemExit(f"compile failed:\n{out.stderr}")


def run_case(name, kind, tmp, cc, flags, n_inputs, layout="aos"):
    prog = os.path.join(PROGRAMS, f"{name}.fsm")
    c_path = os.path.join(tmp, f"{name}_{layout}.c")
    out = sh(FSMC + ["emit-c", prog, "--name", "program", "--shim",
                     "--layout", layout, "--out", c_path])
    if out.returncode != 0:
        raise SystemExit(f"emit-c failed for {name}:\n{out.stderr}")
    check_no_heap_calls(c_path)
    exe = os.path.join(tmp, f"{name}_{layout}")
    build(cc, flags, c_path, exe)

    with open(prog) as fh:
        prog_text = fh.read()

    rng = random.Random(hash(name) & 0xFFFF)
    mismatches = 0
    for i in range(n_inputs):
        args = sample_args(kind, rng)
        wire = os.path.join(tmp, "input.txt")
        with open(wire, "w") as fh:
            fh.write(wire_lines(args))
        cres = sh([exe, wire])
        assert cres.returncode == 0, (name, cres.stderr)

        applied = os.path.join(tmp, "applied.fsm")
        with open(applied, "w") as fh:
            fh.write(make_applied_source(prog_text, args))
        ires = sh(FSMC + ["run", applied])
        assert ires.returncode == 0, (name, ires.stderr)

        ctext = cres.stdout.strip()
        itext = ires.stdout.strip()
        if ctext.startswith("⊥") or itext.startswith("⊥"):
            ok = ctext.startswith("⊥") and itext.startswith("⊥")
        else:
            ok = approx(parse_value(ctext), parse_value(itext))
        if not ok:
            mismatches += 1
            print(f"  MISMATCH {name}[{i}]:\n    C: {ctext[:120]}\n"
                  f"    I: {itext[:120]}")
    assert mismatches == 0, f"{name}: {mismatches} mismatches"
    print(f"  {name} ({layout}): {n_inputs} inputs matched")


def run_unit_tests(tmp, cc, flags):
    exe = os.path.join(tmp, "unit")
    build(cc, flags, os.path.join(HERE, "test_runtime.c"), exe)
    out = sh([exe])
    assert out.returncode == 0, out.stderr
    print("  " + out.stdout.strip())

    exe = os.path.join(tmp, "exhaust")
    build(cc, [], os.path.join(HERE, "exhaust_test.c"), exe)
    out = sh([exe])
    assert out.returncode != 0
    assert "requested" in out.stderr and "remaining" in out.stderr
    print("  exhaustion diagnostic: PASS")


def run_guard_check(tmp, cc, flags):
    # empty-vector access prints the undefined marker via the checked getter
    prog = os.path.join(PROGRAMS, "head_guard.fsm")
    c_path = os.path.join(tmp, "head_guard.c")
    out = sh(FSMC + ["emit-c", prog, "--name", "program", "--shim",
                     "--out", c_path])
    assert out.returncode == 0, out.stderr
    exe = os.path.join(tmp, "head_guard")
    build(cc, flags, c_path, exe)
    wire = os.path.join(tmp, "empty.txt")
    with open(wire, "w") as fh:
        fh.write("1\nV 0\n")
    res = sh([exe, wire])
    assert res.stdout.startswith("⊥("), res.stdout
    print("  out-of-bounds prints the undefined marker: PASS")


def run_echo_check(tmp, cc, flags):
    prog = os.path.join(PROGRAMS, "echo_matrix.fsm")
    c_path = os.path.join(tmp, "echo.c")
    out = sh(FSMC + ["emit-c", prog, "--name", "program", "--shim",
                     "--out", c_path])
    assert out.returncode == 0, out.stderr
    exe = os.path.join(tmp, "echo")
    build(cc, flags, c_path, exe)
    m = [[1.5, -2.25], [0.0, 3.125]]
    wire = os.path.join(tmp, "echo.txt")
    with open(wire, "w") as fh:
        fh.write(wire_lines([m]))
    res = sh([exe, wire])
    assert parse_value(res.stdout) == m, res.stdout
    print("  matrix echo round-trip: PASS")


def run_layout_check(tmp, cc, flags):
    """Both dual-array layouts print identical values."""
    prog = os.path.join(PROGRAMS, "dual_zip.fsm")
    outputs = {}
    rng = random.Random(99)
    args = [ [rng.uniform(0.3, 2.0) for _ in range(5)] ]
    for layout in ("aos", "soa"):
        c_path = os.path.join(tmp, f"zip_{layout}.c")
        out = sh(FSMC + ["emit-c", prog, "--name", "program", "--shim",
                         "--layout", layout, "--out", c_path])
        assert out.returncode == 0, out.stderr
        exe = os.path.join(tmp, f"zip_{layout}")
        build(cc, flags, c_path, exe)
        wire = os.path.join(tmp, "zip.txt")
        with open(wire, "w") as fh:
            fh.write(wire_lines(args))
        res = sh([exe, wire])
        assert res.returncode == 0, res.stderr
        outputs[layout] = res.stdout.strip()
    assert outputs["aos"] == outputs["soa"], outputs
    print("  array-of-pairs and split layouts agree: PASS")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--inputs", type=int, default=50)
    ap.add_argument("--keep", action="store_true")
    args = ap.parse_args()

    cc = find_cc()
    tmp = tempfile.mkdtemp(prefix="fsm_diff_")
    flags = sanitizer_flags(cc, tmp)
    print(f"compiler: {cc}; sanitizers: {'on' if flags else 'unavailable'}")
    try:
        run_unit_tests(tmp, cc, flags)
        run_guard_check(tmp, cc, flags)
        run_echo_check(tmp, cc, flags)
        run_layout_check(tmp, cc, flags)
        for name, (kind,) in CASES.items():
            run_case(name, kind, tmp, cc, flags, args.inputs)
        print("differential suite: PASS")
    finally:
        if not args.keep:
            shutil.rmtree(tmp, ignore_errors=True)


if __name__ == "__main__":
    main()
