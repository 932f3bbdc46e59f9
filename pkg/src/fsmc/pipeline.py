"""Staged optimisation pipeline.

After macro expansion and differentiation, the phases first run inside the
differentiated subexpressions (marked by `Region` nodes), then over the
whole program:

    region: inline + fusion/PE; fission + tuple PE; simplify; loop-normalise
    whole:  inline + fusion/PE; fission + tuple PE; simplify; loop-normalise;
            ANF + CSE; code motion + DCE; simplify

Each phase applies its rule set to a fixpoint with a pass cap; if the cap
is hit the smallest term seen is kept and a warning naming the phase is
emitted.  The unit is re-elaborated after every phase, so rewrites are
checked type-preserving as they land.
"""

import sys
from dataclasses import dataclass, field, replace

from .errors import FsmError, run_deep
from .normal import cse, dce, licm, split_pairs, to_anf
from .rules import CATALOG, RULES_BY_ID, RewritePass, RuleCtx
from .syntax import (
    App, Const, Expr, Lam, Let, Region, Var,
    NameSource, children, rebuild, refresh_binders, size,
)
from .unit import Unit, assemble, expand_macros, reelaborate


class PhaseCapExceeded(FsmError):
    pass


@dataclass(frozen=True)
class OptConfig:
    lf: bool = False        # inlining + loop fusion + partial evaluation
    fission: bool = False   # loop fission + tuple projection PE
    simplify: bool = False  # ring / conditional / lambda simplification
    ln: bool = False        # loop normalisation
    licm_dce: bool = False  # code motion + dead-code elimination
    anf_cse: bool = False   # ANF conversion + CSE
    dps: bool = False       # destination-passing C emission mode

    PRESETS = {
        "none": (),
        "lf": ("lf",),
        "lf+ln": ("lf", "ln"),
        "all": ("lf", "fission", "simplify", "ln", "licm_dce", "anf_cse",
                "dps"),
    }
    TOGGLES = ("lf", "fission", "simplify", "ln", "licm", "anf", "dps")

    @classmethod
    def parse(cls, text: str) -> "OptConfig":
        text = (text or "all").strip()
        if text in cls.PRESETS:
            return cls(**{f: True for f in cls.PRESETS[text]})
        fields = {}
        alias = {"licm": "licm_dce", "anf": "anf_cse"}
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            key = alias.get(part, part)
            if key not in ("lf", "fission", "simplify", "ln", "licm_dce",
                           "anf_cse", "dps"):
                raise FsmError(f"unknown optimisation toggle {part!r}")
            fields[key] = True
        return cls(**fields)

    def without(self, name: str) -> "OptConfig":
        alias = {"licm": "licm_dce", "anf": "anf_cse"}
        return replace(self, **{alias.get(name, name): False})


_RULES_LF = [RULES_BY_ID[i] for i in (
    "beta", "const-fold", "let-float", "licm", "let-inline", "dce",
    "fusion-length-build", "fusion-get-build", "fusion-get-array",
    "tuple-fst", "tuple-snd", "if-true", "if-false")]

_RULES_FISSION = [RULES_BY_ID[i] for i in (
    "fission-pair", "tuple-fst", "tuple-snd", "beta", "let-float",
    "let-inline", "dce")]

_RULES_SIMPLIFY = [RULES_BY_ID[i] for i in (
    "beta", "const-fold", "let-float", "licm", "let-inline", "dce",
    "tuple-fst", "tuple-snd",
    "if-true", "if-false", "if-same", "if-and-split", "if-propagate",
    "if-push-fn",
    "ring-add-zero", "ring-mul-one", "ring-mul-zero", "ring-sub-self",
    "ring-div-zero", "ring-distribute",
    "fusion-length-build", "fusion-get-build", "fusion-get-array")]

_RULES_LN = [RULES_BY_ID[i] for i in (
    "ifold-zero", "ifold-peel", "ifold-invariant", "ifold-single-access",
    "ifold-unswitch", "build-unroll", "if-push-fn",
    "beta", "const-fold", "let-float", "let-inline", "dce",
    "tuple-fst", "tuple-snd",
    "ring-add-zero", "ring-mul-one", "ring-mul-zero", "ring-div-zero",
    "if-true", "if-false")]

_RULES_LN_ONLY = [RULES_BY_ID[i] for i in (
    "ifold-zero", "ifold-peel", "ifold-invariant", "ifold-single-access",
    "ifold-unswitch", "build-unroll")]

PASS_CAP = 200


def inline_functions(e: Expr, ns: NameSource, only_regions: bool) -> Expr:
    """Replace references to lambda-bound lets by fresh copies of their
    definitions (the unit is non-recursive, so this terminates)."""

    def walk(e, defs, active):
        if isinstance(e, Region):
            return Region(walk(e.expr, defs, True), pos=e.pos)
        if isinstance(e, Var) and active:
            d = defs.get(e.name)
            if d is not None:
                return refresh_binders(d, ns)
            return e
        if isinstance(e, Let):
            bound = walk(e.bound, defs, active)
            inner = dict(defs)
            if isinstance(bound, Lam):
                inner[e.name] = bound
            else:
                inner.pop(e.name, None)
            return Let(e.name, bound, walk(e.body, inner, active), pos=e.pos)
        kids = children(e)
        if not kids:
            return e
        return rebuild(e, (walk(k, defs, active) for k in kids))

    for _ in range(50):
        out = walk(e, {}, not only_regions)
        if out == e:
            return out
        e = out
    raise PhaseCapExceeded("function inlining did not terminate",
                           code="PhaseCapExceeded")


def strip_regions(e: Expr) -> Expr:
    if isinstance(e, Region):
        return strip_regions(e.expr)
    kids = children(e)
    if not kids:
        return e
    return rebuild(e, (strip_regions(k) for k in kids))


def _run_rule_phase(unit: Unit, phase: str, rules, only_regions: bool,
                    inline_first: bool = False) -> Unit:
    expr = unit.expr
    if inline_first:
        expr = inline_functions(expr, unit.ns, only_regions)
    best = (size(expr), expr)
    for _ in range(PASS_CAP):
        p = RewritePass(rules, RuleCtx(unit.ns), only_regions=only_regions)
        out = p.run(expr)
        if not p.changed:
            expr = out
            break
        expr = out
        s = size(expr)
        if s < best[0]:
            best = (s, expr)
    else:
        print(f"warning: PhaseCapExceeded in phase {phase!r}; "
              f"keeping smallest term", file=sys.stderr)
        expr = best[1]
    return reelaborate(Unit(expr, unit.ty, unit.ns, unit.filename))


@dataclass
class PipelineTrace:
    entries: list = field(default_factory=list)

    def record(self, phase: str, unit: Unit):
        self.entries.append((phase, unit.expr))


def run_pipeline(unit: Unit, cfg: OptConfig,
                 trace: PipelineTrace = None) -> Unit:
    """Macro expansion, differentiation, then the staged rewrite schedule.

    `unit` comes from `assemble` (deriv macros still present).  Returns the
    optimised, fully elaborated unit, ready for evaluation or C emission.
    Runs on a large-stack worker: pass depth tracks term depth.
    """
    return run_deep(_run_pipeline, unit, cfg, trace)


def _run_pipeline(unit: Unit, cfg: OptConfig,
                  trace: PipelineTrace = None) -> Unit:
    unit = expand_macros(unit)
    if trace:
        trace.record("differentiation", unit)

    def phase(u, name, rules, only_regions, inline_first=False):
        u = _run_rule_phase(u, name, rules, only_regions, inline_first)
        if trace:
            trace.record(name, u)
        return u

    fission_extra = [RULES_BY_ID["fission-pair"]] if cfg.fission else []
    simplify_rules = _RULES_SIMPLIFY + fission_extra
    ln_rules = _RULES_LN + fission_extra
    for scope, tag in ((True, "diff"), (False, "whole")):
        if cfg.lf:
            unit = phase(unit, f"{tag}-fusion", _RULES_LF, scope,
                         inline_first=True)
        if cfg.fission:
            unit = phase(unit, f"{tag}-fission", _RULES_FISSION, scope)
        if cfg.simplify:
            unit = phase(unit, f"{tag}-simplify", simplify_rules, scope)
        if cfg.ln:
            unit = phase(unit, f"{tag}-loop-normalise", ln_rules, scope)
        if scope:
            unit = reelaborate(Unit(strip_regions(unit.expr), unit.ty,
                                    unit.ns, unit.filename))
    if cfg.anf_cse:
        expr = to_anf(unit.expr, unit.ns)
        expr = split_pairs(expr, unit.ns)
        expr = cse(expr)
        unit = reelaborate(Unit(expr, unit.ty, unit.ns, unit.filename))
        if trace:
            trace.record("anf-cse", unit)
    if cfg.licm_dce:
        expr = licm(unit.expr, unit.ns)
        expr = dce(expr)
        unit = reelaborate(Unit(expr, unit.ty, unit.ns, unit.filename))
        if trace:
            trace.record("code-motion-dce", unit)
    if cfg.simplify:
        rules = simplify_rules + (_RULES_LN_ONLY if cfg.ln else [])
        unit = phase(unit, "final-simplify", rules, False)
    return unit


def optimise_source(source: str, cfg: OptConfig = None,
                    filename: str = "<input>", with_prelude: bool = True,
                    trace: PipelineTrace = None) -> Unit:
    cfg = cfg or OptConfig.parse("all")
    return run_pipeline(assemble(source, filename, with_prelude), cfg, trace)
