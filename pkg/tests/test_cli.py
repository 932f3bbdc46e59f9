import io
import os
import subprocess
import sys

import pytest

from fsmc.cli import main


def run_cli(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def tmpsrc(tmp_path):
    def write(text, name="prog.fsm"):
        p = tmp_path / name
        p.write_text(text)
        return str(p)
    return write


def test_check_ok(tmpsrc, capsys):
    code, out, err = run_cli(["check", tmpsrc("1.0 + 2.0")], capsys)
    assert code == 0 and "Double" in out


def test_check_partial_application(tmpsrc, capsys):
    code, out, err = run_cli(
        ["check", tmpsrc("(fun x y -> x + y) 1.0")], capsys)
    assert code == 1
    assert "PartialApplication" in err


def test_run_prints_value(tmpsrc, capsys):
    code, out, _ = run_cli(
        ["run", tmpsrc("vectorDot [1.0,2.0,3.0] [4.0,5.0,6.0]")], capsys)
    assert code == 0 and out.strip() == "32"


def test_run_nested_deriv_program(tmpsrc, capsys):
    src = ("(fun x y -> snd (deriv (x * (snd (deriv (x + y) y))) x)) "
           "3.0 5.0")
    code, out, _ = run_cli(["run", tmpsrc(src)], capsys)
    assert code == 0 and out.strip() == "1"


def test_run_bottom_printing(tmpsrc, capsys):
    code, out, _ = run_cli(["run", tmpsrc("1.0 / 0.0")], capsys)
    assert code == 0 and out.startswith("⊥(")


def test_opt_prints_fused_term(tmpsrc, capsys):
    src = "fun v1 v2 -> vectorMap (deriv (vectorDot v1 v2) v1) snd"
    code, out, _ = run_cli(["opt", tmpsrc(src), "--opt", "all"], capsys)
    assert code == 0
    assert "build" in out and "v2" in out and "ifold" not in out


def test_opt_dump_after(tmpsrc, capsys):
    src = "fun v1 v2 -> vectorMap (deriv (vectorDot v1 v2) v1) snd"
    code, out, _ = run_cli(
        ["opt", tmpsrc(src), "--dump-after", "differentiation"], capsys)
    assert code == 0 and "vectorDot$d" in out
    code, _, err = run_cli(
        ["opt", tmpsrc(src), "--dump-after", "nope"], capsys)
    assert code == 1


def test_diff_prints_translated(tmpsrc, capsys):
    code, out, _ = run_cli(
        ["diff", tmpsrc("fun a -> deriv (cos a) a")], capsys)
    assert code == 0 and "sin" in out


def test_emit_c(tmpsrc, capsys, tmp_path):
    src = "fun v1 v2 -> vectorDot v1 v2"
    out_path = str(tmp_path / "dot.c")
    code, _, _ = run_cli(["emit-c", tmpsrc(src), "--name", "dot",
                          "--out", out_path], capsys)
    assert code == 0
    text = open(out_path).read()
    assert "double dot(" in text and "fsm_runtime.h" in text


def test_missing_file(capsys):
    with pytest.raises(SystemExit) as e:
        main(["run", "/nonexistent/x.fsm"])
    assert e.value.code == 2


def test_determinism_byte_identical(tmpsrc):
    src = "fun v1 v2 -> vectorMap (deriv (vectorDot v1 v2) v1) snd"
    path = tmpsrc(src)
    env = dict(os.environ, PYTHONIOENCODING="utf-8")
    cmd = [sys.executable, "-m", "fsmc.cli", "opt", path, "--opt", "all"]
    a = subprocess.run(cmd, capture_output=True, env=env)
    b = subprocess.run(cmd, capture_output=True, env=env)
    assert a.returncode == 0
    assert a.stdout == b.stdout


def test_dump_prelude(capsys):
    code, out, _ = run_cli(["dump-prelude"], capsys)
    assert code == 0 and "vectorDot" in out and "matrixTrace" in out


def test_bench_csv_stdout(capsys):
    code, out, _ = run_cli(
        ["bench", "--case", "smul-jacob", "--sizes", "8",
         "--repeats", "1"], capsys)
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "case,variant,size,mean_ns,min_ns,steps,checks_passed"
    assert len(lines) == 3


def test_alternate_prelude(tmpsrc, capsys, tmp_path):
    alt = tmp_path / "alt.fsm"
    alt.write_text("let twice = fun x -> x + x\n")
    code, out, _ = run_cli(
        ["run", tmpsrc("twice 4.0"), "--prelude", str(alt)], capsys)
    assert code == 0 and out.strip() == "8"
