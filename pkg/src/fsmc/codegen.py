"""Destination-passing C emission.

Emitted functions write array results into caller-provided storage: the
result is carved out of the bump arena first, loops then fill it in place,
and temporaries allocated inside a loop iteration are released by resetting
the arena watermark at the end of the iteration.  No malloc/free appears in
emitted code.

Array reads through a loop binder compile to raw `->elems[...]` accesses
(in-range on well-formed inputs, and the exact shape the golden test
expects); any other index goes through the runtime's checked accessor,
which reports the undefined marker and exits.
"""

from dataclasses import dataclass, field

from .errors import FsmError, InternalError
from .normal import is_total
from .pipeline import inline_functions
from .syntax import (
    DOUBLE, INDEX, BOOL, VECTOR, MATRIX, DOUBLE_D, VECTOR_D, MATRIX_D,
    ArrT, BaseT, FunT, PairT,
    App, ArrayLit, BoolLit, Const, Expr, If, IndexLit, Lam, Let, ScalarLit,
    Var, fvs,
)
from .typecheck import synth_type
from .unit import Unit


class NonGroundInterface(FsmError):
    pass


class UnsizedResult(FsmError):
    pass


class UnsupportedForC(FsmError):
    pass


AOS, SOA = "aos", "soa"

_PARAM_CTYPE = {
    DOUBLE: "double", INDEX: "int64_t", BOOL: "bool",
    VECTOR: "fsm_vector*", MATRIX: "fsm_matrix*",
}

_RESULT_CTYPE = dict(_PARAM_CTYPE)
_RESULT_CTYPE[VECTOR_D] = "fsm_dvector*"
_RESULT_CTYPE[MATRIX_D] = "fsm_dmatrix*"


def _sanitize(name: str) -> str:
    base = name.split("$", 1)[0]
    out = "".join(ch if ch.isalnum() or ch == "_" else "_" for ch in base)
    if not out or out[0].isdigit():
        out = "v_" + out
    reserved = {"for", "if", "else", "while", "return", "double", "int",
                "long", "break", "continue", "do", "case", "switch", "bool",
                "true", "false", "const", "void", "static", "struct"}
    if out in reserved:
        out += "_"
    return out


def _float_c(v: float) -> str:
    # Hex floats keep goldens bit-stable across platforms.
    if v != v or v in (float("inf"), float("-inf")):
        raise UnsupportedForC("non-finite literal in emitted code")
    if v == int(v) and abs(v) < 1e15:
        return f"{v:.1f}"
    return float(v).hex()


@dataclass
class CProgram:
    name: str
    source: str
    result_type: object
    param_types: tuple
    param_names: tuple
    storage_bytes_fn: str  # name of the sizing helper, "" for scalars

    def __str__(self):
        return self.source


class _Emit:
    def __init__(self):
        self.lines = []
        self.tmp = 0
        self.names = set()

    def fresh(self, base):
        if base not in self.names:
            self.names.add(base)
            return base
        k = 2
        while f"{base}{k}" in self.names:
            k += 1
        self.names.add(f"{base}{k}")
        return f"{base}{k}"

    def out(self, indent, text):
        self.lines.append("  " * indent + text)

    def arena_scope(self, indent, emit_body):
        """Wrap emitted statements in a save/reset pair only when the body
        allocated from the arena."""
        sp = self.fresh("sp")
        mark = len(self.lines)
        self.out(indent, f"int64_t {sp} = fsm_tell(s_);")
        emit_body()
        allocs = any("_new(s_" in ln or "fsm_mrow(" in ln or "fsm_dmrow(" in ln
                     for ln in self.lines[mark + 1:])
        if allocs:
            self.out(indent, f"fsm_reset(s_, {sp});")
        else:
            del self.lines[mark]


class CCompiler:
    def __init__(self, layout=AOS):
        self.layout = layout
        self.em = _Emit()
        self.var = {}        # source name -> C name
        self.tenv = {}       # source name -> Ty
        self.loop_vars = {}  # source binder -> extent (check elision)
        self.pair_structs = {}

    # -- type plumbing ------------------------------------------------------

    def ctype(self, t):
        if t in _PARAM_CTYPE:
            return _PARAM_CTYPE[t]
        if t == DOUBLE_D:
            return "fsm_pair"
        if isinstance(t, PairT):
            return self.pair_struct(t)
        if t == VECTOR_D:
            return "fsm_dvector*"
        if t == MATRIX_D:
            return "fsm_dmatrix*"
        raise UnsupportedForC(f"no C representation for {t!r}")

    def pair_struct(self, t: PairT):
        if t == DOUBLE_D:
            return "fsm_pair"
        key = t
        if key not in self.pair_structs:
            name = f"fsm_p{len(self.pair_structs)}"
            a, b = self.ctype(t.fst), self.ctype(t.snd)
            self.pair_structs[key] = (name, a, b)
        return self.pair_structs[key][0]

    def _unscope(self, binder, prev):
        if prev is None:
            self.loop_vars.pop(binder, None)
        else:
            self.loop_vars[binder] = prev

    # -- scalar expressions --------------------------------------------------

    def scalar(self, e, indent):
        """Compile a Double/Index/Bool/pair-typed expression to a C rvalue."""
        if isinstance(e, Var):
            return self.var[e.name]
        if isinstance(e, ScalarLit):
            return _float_c(e.val)
        if isinstance(e, IndexLit):
            return str(e.val)
        if isinstance(e, BoolLit):
            return "true" if e.val else "false"
        if isinstance(e, Let):
            self.bind_let(e, indent)
            return self.scalar(e.body, indent)
        if isinstance(e, If):
            t = synth_type(e.then, self.tenv)
            out = self.em.fresh("t")
            self.em.out(indent, f"{self.ctype(t)} {out};")
            cond = self.scalar(e.cond, indent)
            self.em.out(indent, f"if ({cond}) {{")
            v = self.scalar(e.then, indent + 1)
            self.em.out(indent + 1, f"{out} = {v};")
            self.em.out(indent, "} else {")
            v = self.scalar(e.els, indent + 1)
            self.em.out(indent + 1, f"{out} = {v};")
            self.em.out(indent, "}")
            return out
        if isinstance(e, App) and isinstance(e.fn, Const):
            return self.scalar_prim(e, indent)
        raise UnsupportedForC(f"cannot emit scalar for {e!r}")

    def bind_let(self, e: Let, indent):
        t = synth_type(e.bound, self.tenv)
        name = self.em.fresh(_sanitize(e.name))
        if isinstance(t, ArrT):
            val = self.array_value(e.bound, t, indent)
            self.em.out(indent, f"{self.ctype(t)} {name} = {val};")
        else:
            val = self.scalar(e.bound, indent)
            self.em.out(indent, f"{self.ctype(t)} {name} = {val};")
        self.var[e.name] = name
        self.tenv[e.name] = t

    def scalar_prim(self, e, indent):
        name = e.fn.name
        if name == "get":
            return self.get_expr(e, indent)
        if name == "length":
            return self.length_expr(e.args[0], indent)
        if name in ("fst", "snd"):
            p = self.scalar(e.args[0], indent)
            return f"{p}.{'fst' if name == 'fst' else 'snd'}"
        if name == "pair":
            t = synth_type(e, self.tenv)
            a = self.scalar(e.args[0], indent)
            b = self.scalar(e.args[1], indent)
            return f"(({self.ctype(t)}){{{a}, {b}}})"
        if name == "ifold":
            return self.ifold_expr(e, indent)
        args = [self.scalar(a, indent) for a in e.args]
        if name in ("+", "-", "*"):
            return f"({args[0]} {name} {args[1]})"
        if name == "/":
            return f"({args[0]} / {args[1]})"
        if name == "**":
            if e.fn.inst == INDEX:
                return f"fsm_ipow({args[0]}, {args[1]})"
            return f"pow({args[0]}, {args[1]})"
        if name == "neg":
            return f"(-{args[0]})"
        if name in ("sin", "cos", "tan", "log", "exp"):
            return f"{name}({args[0]})"
        if name in (">", "<", "=="):
            return f"({args[0]} {name} {args[1]})"
        if name == "<>":
            return f"({args[0]} != {args[1]})"
        if name == "&&":
            return f"({args[0]} && {args[1]})"
        if name == "||":
            return f"({args[0]} || {args[1]})"
        if name == "not":
            return f"(!{args[0]})"
        raise UnsupportedForC(f"primitive {name} in C emission")

    # -- arrays ---------------------------------------------------------------

    def length_expr(self, arr, indent):
        t = synth_type(arr, self.tenv)
        if _prim_is(arr, "get"):
            base = arr.args[0]
            bt = synth_type(base, self.tenv)
            if bt in (MATRIX, MATRIX_D) and isinstance(base, Var):
                return f"{self.var[base.name]}->cols"
        a = self.array_value(arr, t, indent)
        if t in (MATRIX, MATRIX_D):
            return f"{a}->rows"
        return f"{a}->length"

    def get_expr(self, e, indent):
        """get over vectors of scalars or pairs; matrix element access is
        handled by collapsing get(get(m, r), c)."""
        arr, idx = e.args
        if _prim_is(arr, "get"):
            m, r = arr.args
            mt = synth_type(m, self.tenv)
            if mt in (MATRIX, MATRIX_D):
                mv = self.array_value(m, mt, indent)
                rex = self.scalar(r, indent)
                cex = self.scalar(idx, indent)
                if self.checked(r) or self.checked(idx):
                    fn = "fsm_mget" if mt == MATRIX else "fsm_dmget"
                    return f"{fn}({mv}, {rex}, {cex})"
                return f"{mv}->elems[{rex}][{cex}]"
        at = synth_type(arr, self.tenv)
        av = self.array_value(arr, at, indent)
        iex = self.scalar(idx, indent)
        if at == MATRIX:
            # row of a matrix as a vector value
            row = self.em.fresh("row")
            self.em.out(indent, f"fsm_vector* {row} = fsm_mrow(s_, {av}, {iex});")
            return row
        if at == MATRIX_D:
            row = self.em.fresh("row")
            self.em.out(indent, f"fsm_dvector* {row} = fsm_dmrow(s_, {av}, {iex});")
            return row
        if self.checked(idx):
            fn = "fsm_vget" if at == VECTOR else "fsm_dvget"
            if at not in (VECTOR, VECTOR_D):
                raise UnsupportedForC(f"checked access into {at!r}")
            return f"{fn}({av}, {iex})"
        return f"{av}->elems[{iex}]"

    def checked(self, idx) -> bool:
        """Loop binders are trusted (well-formed shapes); literals and
        computed indices are range-checked at run time."""
        if isinstance(idx, Var) and idx.name in self.loop_vars:
            return False
        return True

    def array_value(self, e, t, indent):
        """Compile an array-typed expression to a pointer value, allocating
        from the arena when it is not already a variable."""
        if isinstance(e, Var):
            return self.var[e.name]
        if isinstance(e, Let):
            self.bind_let(e, indent)
            return self.array_value(e.body, t, indent)
        if isinstance(e, If):
            out = self.em.fresh("t")
            self.em.out(indent, f"{self.ctype(t)} {out};")
            cond = self.scalar(e.cond, indent)
            self.em.out(indent, f"if ({cond}) {{")
            v = self.array_value(e.then, t, indent + 1)
            self.em.out(indent + 1, f"{out} = {v};")
            self.em.out(indent, "} else {")
            v = self.array_value(e.els, t, indent + 1)
            self.em.out(indent + 1, f"{out} = {v};")
            self.em.out(indent, "}")
            return out
        if _prim_is(e, "get"):
            return self.get_expr(e, indent)
        if _prim_is(e, "ifold"):
            raise UnsupportedForC("array-state loops are not emitted")
        name = self.em.fresh("t")
        self.alloc_and_fill(e, t, name, indent)
        return name

    def alloc_and_fill(self, e, t, name, indent):
        """Allocate `name` in the arena and fill it from `e`."""
        if t in (VECTOR, VECTOR_D):
            if not (_prim_is(e, "build") or isinstance(e, ArrayLit)):
                src = self.array_value(e, t, indent)
                ctor = "fsm_vector_new" if t == VECTOR else "fsm_dvector_new"
                self.em.out(indent, f"{self.ctype(t)} {name} = "
                                    f"{ctor}(s_, {src}->length);")
                i = self.em.fresh("i")
                self.em.out(indent,
                            f"for (int64_t {i} = 0; {i} < {name}->length; "
                            f"{i}++) {name}->elems[{i}] = {src}->elems[{i}];")
                return
            n = self.extent_of(e, indent)
            ctor = "fsm_vector_new" if t == VECTOR else "fsm_dvector_new"
            self.em.out(indent, f"{self.ctype(t)} {name} = {ctor}(s_, {n});")
            self.fill_vector(e, t, name, indent)
            return
        if t in (MATRIX, MATRIX_D):
            if not _prim_is(e, "build"):
                src = self.array_value(e, t, indent)
                ctor = "fsm_matrix_new" if t == MATRIX else "fsm_dmatrix_new"
                self.em.out(indent, f"{self.ctype(t)} {name} = "
                                    f"{ctor}(s_, {src}->rows, {src}->cols);")
                r = self.em.fresh("r")
                c = self.em.fresh("c")
                self.em.out(indent,
                            f"for (int64_t {r} = 0; {r} < {name}->rows; {r}++)")
                self.em.out(indent + 1,
                            f"for (int64_t {c} = 0; {c} < {name}->cols; {c}++)")
                self.em.out(indent + 2,
                            f"{name}->elems[{r}][{c}] = {src}->elems[{r}][{c}];")
                return
            rows, cols = self.matrix_extents(e, indent)
            ctor = "fsm_matrix_new" if t == MATRIX else "fsm_dmatrix_new"
            self.em.out(indent,
                        f"{self.ctype(t)} {name} = {ctor}(s_, {rows}, {cols});")
            self.fill_matrix(e, t, name, indent)
            return
        raise UnsupportedForC(f"cannot allocate {t!r}")

    def extent_of(self, e, indent):
        if _prim_is(e, "build"):
            return self.scalar(e.args[0], indent)
        if isinstance(e, ArrayLit):
            return str(len(e.items))
        raise UnsizedResult(f"cannot size array from {e!r}",
                            code="UnsizedResult")

    def matrix_extents(self, e, indent):
        if not _prim_is(e, "build"):
            raise UnsizedResult("matrix result is not a build",
                                code="UnsizedResult")
        rows = self.scalar(e.args[0], indent)
        f = e.args[1]
        if not isinstance(f, Lam):
            raise UnsizedResult("matrix rows are not a lambda",
                                code="UnsizedResult")
        row_body = f.body
        lets = []
        while isinstance(row_body, Let):
            lets.append((row_body.name, row_body.bound))
            row_body = row_body.body
        binder = f.params[0][0]
        if _prim_is(row_body, "build"):
            from .syntax import subst
            extent = row_body.args[0]
            for name, bound in reversed(lets):
                extent = subst(extent, {name: bound})
            if not _extent_row_independent(extent, binder):
                raise UnsizedResult("row length depends on the row index",
                                    code="UnsizedResult")
            inner = dict(self.tenv)
            inner[binder] = INDEX
            saved, self.tenv = self.tenv, inner
            # rectangular rows: size against row 0
            self.var[binder] = "0"
            try:
                cols = self.scalar(extent, indent)
            finally:
                self.tenv = saved
                self.var.pop(binder, None)
            return rows, cols
        raise UnsizedResult("cannot size matrix rows", code="UnsizedResult")

    def fill_vector(self, e, t, dest, indent):
        """Fill fsm_vector/fsm_dvector `dest` from expression e."""
        if _prim_is(e, "build"):
            n, f = e.args
            if not isinstance(f, Lam):
                raise UnsupportedForC("build with a non-literal function")
            (iv, _), = f.params
            loop = self.em.fresh("i" if dest != "res" else "i")
            self.loop_body(loop, f"{dest}->length", indent, iv, n,
                           lambda ind: self.em.out(
                               ind, f"{dest}->elems[{loop}] = "
                                    f"{_unparen(self.element(f.body, t, ind))};"))
            return
        if isinstance(e, ArrayLit):
            for k, item in enumerate(e.items):
                v = self.element(item, t, indent)
                self.em.out(indent, f"{dest}->elems[{k}] = {v};")
            return
        if isinstance(e, (Var, App, Let)):
            src = self.array_value(e, t, indent)
            i = self.em.fresh("i")
            self.em.out(indent, f"for (int64_t {i} = 0; {i} < {dest}->length; {i}++) "
                                f"{dest}->elems[{i}] = {src}->elems[{i}];")
            return
        raise UnsupportedForC(f"cannot fill vector from {e!r}")

    def element(self, e, arr_t, indent):
        return self.scalar(e, indent)

    def loop_body(self, cvar, bound_unused, indent, binder, extent, emit_elem):
        n = self.scalar(extent, indent)
        self.em.out(indent, f"for (int64_t {cvar} = 0; {cvar} < {n}; {cvar}++) {{")
        self.var[binder] = cvar
        self.tenv[binder] = INDEX
        prev = self.loop_vars.get(binder)
        self.loop_vars[binder] = extent
        self.em.arena_scope(indent + 1, lambda: emit_elem(indent + 1))
        self.em.out(indent, "}")
        self._unscope(binder, prev)

    def fill_matrix(self, e, t, dest, indent):
        rows_f = e.args[1]
        (rv, _), = rows_f.params
        loop = self.em.fresh("r")
        n = self.scalar(e.args[0], indent)
        self.em.out(indent, f"for (int64_t {loop} = 0; {loop} < {n}; {loop}++) {{")
        self.var[rv] = loop
        self.tenv[rv] = INDEX
        prev = self.loop_vars.get(rv)
        self.loop_vars[rv] = e.args[0]

        def emit_row():
            body = rows_f.body
            while isinstance(body, Let):
                self.bind_let(body, indent + 1)
                body = body.body
            self.fill_matrix_row(body, t, dest, loop, indent + 1)

        self.em.arena_scope(indent + 1, emit_row)
        self.em.out(indent, "}")
        self._unscope(rv, prev)

    def fill_matrix_row(self, row, t, dest, r, indent):
        elem_vec = VECTOR if t == MATRIX else VECTOR_D
        if _prim_is(row, "build"):
            n, f = row.args
            (cv, _), = f.params
            loop = self.em.fresh("c")
            nex = self.scalar(n, indent)
            self.em.out(indent, f"for (int64_t {loop} = 0; {loop} < {nex}; {loop}++) {{")
            self.var[cv] = loop
            self.tenv[cv] = INDEX
            prev_cv = self.loop_vars.get(cv)
            self.loop_vars[cv] = n
            body = f.body
            inner = indent + 1
            while isinstance(body, Let):
                self.bind_let(body, inner)
                body = body.body
            v = _unparen(self.element(body, t, inner))
            self.em.out(inner, f"{dest}->elems[{r}][{loop}] = {v};")
            self.em.out(indent, "}")
            self._unscope(cv, prev_cv)
            return
        # whole-row value (copy)
        src = self.array_value(row, elem_vec, indent)
        i = self.em.fresh("i")
        self.em.out(indent, f"for (int64_t {i} = 0; {i} < {dest}->cols; {i}++) "
                            f"{dest}->elems[{r}][{i}] = {src}->elems[{i}];")

    # -- folds -----------------------------------------------------------------

    def ifold_expr(self, e, indent):
        f, z, n = e.args
        if not isinstance(f, Lam):
            raise UnsupportedForC("fold with a non-literal function")
        (sv, st), (iv, _) = f.params
        state_t = st if st is not None else synth_type(z, self.tenv)
        if isinstance(state_t, ArrT):
            raise UnsupportedForC("array-state loops are not emitted")
        acc = self.em.fresh(_sanitize(sv))
        zex = self.scalar(z, indent)
        self.em.out(indent, f"{self.ctype(state_t)} {acc} = {zex};")
        nex = self.scalar(n, indent)
        loop = self.em.fresh("k")
        self.em.out(indent, f"for (int64_t {loop} = 0; {loop} < {nex}; {loop}++) {{")
        self.var[sv] = acc
        self.tenv[sv] = state_t
        self.var[iv] = loop
        self.tenv[iv] = INDEX
        prev_iv = self.loop_vars.get(iv)
        self.loop_vars[iv] = n
        self.em.arena_scope(
            indent + 1,
            lambda: self.em.out(indent + 1,
                                f"{acc} = {_unparen(self.scalar(f.body, indent + 1))};"))
        self.em.out(indent, "}")
        self._unscope(iv, prev_iv)
        return acc


def _unparen(s: str) -> str:
    """Strip one redundant outer paren pair in statement context."""
    if not (s.startswith("(") and s.endswith(")")):
        return s
    depth = 0
    for k, ch in enumerate(s):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth == 0 and k != len(s) - 1:
                return s
    return s[1:-1]


def _prim_is(e, name):
    return isinstance(e, App) and isinstance(e.fn, Const) and e.fn.name == name


def _extent_row_independent(extent, binder):
    """The row index may only appear as an array subscript (rectangular
    rows make `length m[r]` row-independent); anywhere else the column
    count genuinely varies per row."""
    if binder not in fvs(extent):
        return True
    if _prim_is(extent, "get"):
        if isinstance(extent.args[1], Var) and extent.args[1].name == binder:
            return _extent_row_independent(extent.args[0], binder)
    from .syntax import children
    if isinstance(extent, Var):
        return False
    return all(_extent_row_independent(k, binder) for k in children(extent))


def emit_c(unit: Unit, fn_name: str, layout: str = AOS) -> CProgram:
    """Emit a C translation unit for the optimised program in `unit`.

    The program body must be a lambda over ground (non-function) parameters.
    Array results add a leading storage parameter and are written with
    destination passing.
    """
    expr = inline_functions(unit.expr, unit.ns, only_regions=False)
    from .normal import dce
    expr = dce(expr)
    node = expr
    while isinstance(node, Let):
        node = node.body
    if not isinstance(node, Lam):
        raise NonGroundInterface("program body must be a function",
                                 code="NonGroundInterface")
    body_fn = node
    if fvs(body_fn):
        raise NonGroundInterface(
            f"emitted function must be closed, free: {sorted(fvs(body_fn))}",
            code="NonGroundInterface")

    comp = CCompiler(layout)
    params = []
    for p, t in body_fn.params:
        if t not in _PARAM_CTYPE:
            raise NonGroundInterface(f"parameter {p} has type {t!r}",
                                     code="NonGroundInterface")
        cn = comp.em.fresh(_sanitize(p))
        comp.var[p] = cn
        comp.tenv[p] = t
        params.append((cn, t))
    result_t = synth_type(body_fn.body, comp.tenv)

    soa = layout == SOA and result_t == VECTOR_D
    if result_t in (DOUBLE, INDEX, BOOL):
        ret_c = _PARAM_CTYPE[result_t]
        needs_storage = False
    elif result_t in (VECTOR, MATRIX, VECTOR_D, MATRIX_D):
        ret_c = "fsm_dsplit" if soa else _RESULT_CTYPE[result_t]
        needs_storage = True
    else:
        raise NonGroundInterface(f"result type {result_t!r} not emittable",
                                 code="NonGroundInterface")

    sig_params = []
    if needs_storage:
        sig_params.append("fsm_storage* s_")
    else:
        sig_params.append("fsm_storage* s_")  # scalars may still need temps
    for cn, t in params:
        sig_params.append(f"{_PARAM_CTYPE[t]} {cn}")
    em = comp.em
    em.names.add("res")
    em.out(0, f"{ret_c} {fn_name}({', '.join(sig_params)}) {{")

    body = body_fn.body
    indent = 1
    while isinstance(body, Let):
        comp.bind_let(body, indent)
        body = body.body

    if result_t in (DOUBLE, INDEX, BOOL):
        v = _unparen(comp.scalar(body, indent))
        em.out(indent, f"return {v};")
    elif soa:
        # struct-of-arrays: two plain vectors for values and tangents
        n = comp.extent_of(body, indent)
        em.out(indent, f"fsm_vector* res_val = fsm_vector_new(s_, {n});")
        em.out(indent, f"fsm_vector* res_tan = fsm_vector_new(s_, {n});")
        if not _prim_is(body, "build"):
            tmp = comp.array_value(body, VECTOR_D, indent)
            i = em.fresh("i")
            em.out(indent, f"for (int64_t {i} = 0; {i} < res_val->length; {i}++) {{")
            em.out(indent + 1, f"res_val->elems[{i}] = {tmp}->elems[{i}].fst;")
            em.out(indent + 1, f"res_tan->elems[{i}] = {tmp}->elems[{i}].snd;")
            em.out(indent, "}")
        else:
            nfold, f = body.args
            (iv, _), = f.params
            loop = em.fresh("i")
            nex = comp.scalar(nfold, indent)
            em.out(indent, f"for (int64_t {loop} = 0; {loop} < {nex}; {loop}++) {{")
            comp.var[iv] = loop
            comp.tenv[iv] = INDEX
            prev_iv = comp.loop_vars.get(iv)
            comp.loop_vars[iv] = nfold
            sp = em.fresh("sp")
            em.out(indent + 1, f"int64_t {sp} = fsm_tell(s_);")
            pv = comp.scalar(f.body, indent + 1)
            em.out(indent + 1, f"res_val->elems[{loop}] = {pv}.fst;")
            em.out(indent + 1, f"res_tan->elems[{loop}] = {pv}.snd;")
            em.out(indent + 1, f"fsm_reset(s_, {sp});")
            em.out(indent, "}")
            comp._unscope(iv, prev_iv)
        em.out(indent, "return (fsm_dsplit){res_val, res_tan};")
    else:
        comp.alloc_and_fill(body, result_t, "res", indent)
        em.out(indent, "return res;")
    em.out(0, "}")

    # Exact storage size of the result (headers + payload), for callers.
    size_fn = ""
    size_lines = []
    if needs_storage:
        size_fn = f"{fn_name}_storage_bytes"
        sub = CCompiler(layout)
        for (cn, t), (p, _) in zip(params, body_fn.params):
            sub.var[p] = cn
            sub.tenv[p] = t
        sub.em.out(0, f"int64_t {size_fn}({', '.join(f'{_PARAM_CTYPE[t]} {cn}' for cn, t in params)}) {{")
        b = body_fn.body
        while isinstance(b, Let):
            sub.bind_let(b, 1)
            b = b.body
        if result_t in (VECTOR, VECTOR_D):
            if isinstance(b, Var):
                n = f"{sub.var[b.name]}->length"
            else:
                n = sub.extent_of(b, 1)
            helper = "fsm_vector_bytes" if result_t == VECTOR else "fsm_dvector_bytes"
            if soa:
                sub.em.out(1, f"return 2 * fsm_vector_bytes({n});")
            else:
                sub.em.out(1, f"return {helper}({n});")
        else:
            helper = "fsm_matrix_bytes" if result_t == MATRIX else "fsm_dmatrix_bytes"
            if isinstance(b, Var):
                mv = sub.var[b.name]
                rows, cols = f"{mv}->rows", f"{mv}->cols"
            else:
                rows, cols = sub.matrix_extents(b, 1)
            sub.em.out(1, f"return {helper}({rows}, {cols});")
        sub.em.out(0, "}")
        size_lines = sub.em.lines

    header = ["#include \"fsm_runtime.h\"", ""]
    for key, (name, a, b) in comp.pair_structs.items():
        header.append(f"typedef struct {{ {a} fst; {b} snd; }} {name};")
    if comp.pair_structs:
        header.append("")
    src = "\n".join(header + size_lines + ([""] if size_lines else [])
                    + em.lines) + "\n"
    return CProgram(fn_name, src, result_t,
                    tuple(t for _, t in params),
                    tuple(cn for cn, _ in params), size_fn)
