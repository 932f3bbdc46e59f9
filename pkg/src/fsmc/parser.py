"""Surface-syntax parser.

Grammar (F#-flavoured):

    program  ::= topdef* expr?
    topdef   ::= 'let' IDENT param* '=' expr        -- unless followed by 'in'
    expr     ::= 'fun' param+ '->' expr
               | 'let' IDENT param* '=' expr 'in' expr
               | 'if' expr 'then' expr 'else' expr
               | 'deriv' atom IDENT
               | orexpr
    param    ::= IDENT | '(' IDENT ':' type ')'
    orexpr   ::= andexpr ('||' andexpr)*
    andexpr  ::= cmpexpr ('&&' cmpexpr)*
    cmpexpr  ::= addexpr (('>'|'<'|'=='|'='|'<>') addexpr)?
    addexpr  ::= mulexpr (('+'|'-') mulexpr)*
    mulexpr  ::= unary (('*'|'/') unary)*
    unary    ::= '-' unary | 'not' unary | powexpr
    powexpr  ::= appexpr ('**' unary)?               -- right associative
    appexpr  ::= postfix postfix*                    -- juxtaposition
    postfix  ::= atom ('.[' expr ']')*
    atom     ::= literal | IDENT | '(' expr ')' | '(' expr ',' expr ')'
               | '[' expr (',' expr)* ']'
    type     ::= tyatom ('*' tyatom)? ('=>' type)*
    tyatom   ::= 'Double'|'Index'|'Bool'|'Vector'|'Matrix'|'DoubleD'
               | 'VectorD'|'MatrixD'|'Array' tyatom | '(' type ')'

Comments run from `//` to end of line.  Sugar (`e.[i]`, infix operators,
`(a, b)`, `sqrt`, type abbreviations) is expanded here; the rest of the
toolchain only ever sees core terms.
"""

import re

from .errors import FsmError, ParseError
from .syntax import (
    DOUBLE, INDEX, BOOL, VECTOR, MATRIX, DOUBLE_D, VECTOR_D, MATRIX_D,
    ArrT, PairT, FunT,
    App, ArrayLit, BoolLit, Const, Deriv, If, IndexLit, Lam, Let, ScalarLit,
    Var, CONST_NAMES,
)


KEYWORDS = {"fun", "let", "in", "if", "then", "else", "true", "false",
            "deriv", "not", "sqrt"}
RESERVED = KEYWORDS | CONST_NAMES

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>//[^\n]*)
  | (?P<float>\d+\.\d*(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_'$]*)
  | (?P<op>\*\*|->|\.\[|==|<>|<=|>=|&&|\|\||=>|[-+*/<>=(),\[\]:])
""", re.VERBOSE)

TYPE_NAMES = {
    "Double": DOUBLE, "Index": INDEX, "Bool": BOOL,
    "Vector": VECTOR, "Matrix": MATRIX,
    "DoubleD": DOUBLE_D, "VectorD": VECTOR_D, "MatrixD": MATRIX_D,
}


class Token:
    __slots__ = ("kind", "text", "pos")

    def __init__(self, kind, text, pos):
        self.kind = kind
        self.text = text
        self.pos = pos

    def __repr__(self):
        return f"{self.kind}:{self.text}"


def tokenize(src, filename="<input>"):
    toks = []
    i, line, bol = 0, 1, 0
    while i < len(src):
        m = _TOKEN_RE.match(src, i)
        if not m:
            raise ParseError(f"unexpected character {src[i]!r}",
                             (line, i - bol + 1), filename)
        kind = m.lastgroup
        text = m.group()
        pos = (line, i - bol + 1)
        if kind == "ws":
            line += text.count("\n")
            if "\n" in text:
                bol = i + text.rindex("\n") + 1
        elif kind != "comment":
            if kind == "ident" and text in KEYWORDS:
                kind = text
            toks.append(Token(kind, text, pos))
        i = m.end()
    toks.append(Token("eof", "", (line, i - bol + 1)))
    return toks


class Parser:
    def __init__(self, src, filename="<input>"):
        self.toks = tokenize(src, filename)
        self.i = 0
        self.filename = filename

    # -- token plumbing ----------------------------------------------------

    def peek(self, k=0):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self):
        t = self.toks[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def accept(self, kind, text=None):
        t = self.peek()
        if t.kind == kind and (text is None or t.text == text):
            return self.next()
        return None

    def expect(self, kind, text=None):
        t = self.accept(kind, text)
        if t is None:
            got = self.peek()
            want = text or kind
            raise ParseError(f"expected {want!r}, found {got.text or 'end of input'!r}",
                             got.pos, self.filename)
        return t

    def err(self, msg, pos=None):
        raise ParseError(msg, pos or self.peek().pos, self.filename)

    # -- entry points ------------------------------------------------------

    def parse_program(self):
        """Parse top-level `let` definitions followed by an optional body.

        Returns (defs, body) where defs is a list of (name, expr) and body
        may be None for pure definition files (e.g. the prelude).
        """
        defs = []
        body = None
        while True:
            t = self.peek()
            if t.kind == "eof":
                break
            if t.kind == "let":
                save = self.i
                self.next()
                name_tok = self.expect("ident")
                self.check_bindable(name_tok)
                params = self.parse_params(allow_empty=True)
                self.expect("op", "=")
                bound = self.parse_expr()
                if params:
                    bound = Lam(tuple(params), bound, pos=name_tok.pos)
                if self.accept("in"):
                    # Actually a let-expression: the program body starts here.
                    rest = self.parse_expr()
                    body = Let(name_tok.text, bound, rest, pos=t.pos)
                    break
                defs.append((name_tok.text, bound))
                continue
            body = self.parse_expr()
            break
        t = self.peek()
        if t.kind != "eof":
            self.err(f"unexpected {t.text!r} after program end")
        return defs, body

    def parse_expression(self):
        e = self.parse_expr()
        t = self.peek()
        if t.kind != "eof":
            self.err(f"unexpected {t.text!r} after expression")
        return e

    # -- helpers -----------------------------------------------------------

    def check_bindable(self, tok):
        if tok.text in RESERVED:
            self.err(f"reserved word {tok.text!r} cannot be bound", tok.pos)

    def parse_params(self, allow_empty=False):
        params = []
        while True:
            t = self.peek()
            if t.kind == "ident":
                self.check_bindable(t)
                self.next()
                params.append((t.text, None))
            elif t.kind == "op" and t.text == "(" and self.peek(1).kind == "ident" \
                    and self.peek(2).kind == "op" and self.peek(2).text == ":":
                self.next()
                name_tok = self.expect("ident")
                self.check_bindable(name_tok)
                self.expect("op", ":")
                ty = self.parse_type()
                self.expect("op", ")")
                params.append((name_tok.text, ty))
            else:
                break
        if not params and not allow_empty:
            self.err("expected parameter")
        return params

    def parse_type(self):
        parts = [self.parse_type_pair()]
        while self.accept("op", "=>"):
            parts.append(self.parse_type_pair())
        if len(parts) == 1:
            return parts[0]
        return FunT(tuple(parts[:-1]), parts[-1])

    def parse_type_pair(self):
        left = self.parse_type_atom()
        if self.accept("op", "*"):
            right = self.parse_type_atom()
            return PairT(left, right)
        return left

    def parse_type_atom(self):
        t = self.peek()
        if t.kind == "ident":
            if t.text in TYPE_NAMES:
                self.next()
                return TYPE_NAMES[t.text]
            if t.text == "Array":
                self.next()
                return ArrT(self.parse_type_atom())
            self.err(f"unknown type {t.text!r}", t.pos)
        if self.accept("op", "("):
            ty = self.parse_type()
            self.expect("op", ")")
            return ty
        self.err("expected type")

    # -- expression grammar ------------------------------------------------

    def parse_expr(self):
        t = self.peek()
        if t.kind == "fun":
            self.next()
            params = self.parse_params()
            self.expect("op", "->")
            body = self.parse_expr()
            return Lam(tuple(params), body, pos=t.pos)
        if t.kind == "let":
            self.next()
            name_tok = self.expect("ident")
            self.check_bindable(name_tok)
            params = self.parse_params(allow_empty=True)
            self.expect("op", "=")
            bound = self.parse_expr()
            if params:
                bound = Lam(tuple(params), bound, pos=name_tok.pos)
            self.expect("in")
            body = self.parse_expr()
            return Let(name_tok.text, bound, body, pos=t.pos)
        if t.kind == "if":
            self.next()
            cond = self.parse_expr()
            self.expect("then")
            then = self.parse_expr()
            self.expect("else")
            els = self.parse_expr()
            return If(cond, then, els, pos=t.pos)
        if t.kind == "deriv":
            self.next()
            target = self.parse_postfix()
            name_tok = self.expect("ident")
            return Deriv(target, name_tok.text, pos=t.pos)
        return self.parse_or()

    def _binop(self, sub, ops):
        e = sub()
        while True:
            t = self.peek()
            if t.kind == "op" and t.text in ops:
                self.next()
                rhs = sub()
                e = App(Const(t.text, pos=t.pos), (e, rhs), pos=t.pos)
            else:
                return e

    def parse_or(self):
        return self._binop(self.parse_and, ("||",))

    def parse_and(self):
        return self._binop(self.parse_cmp, ("&&",))

    def parse_cmp(self):
        e = self.parse_add()
        t = self.peek()
        if t.kind == "op" and t.text in (">", "<", "==", "=", "<>"):
            self.next()
            rhs = self.parse_add()
            op = "==" if t.text == "=" else t.text
            return App(Const(op, pos=t.pos), (e, rhs), pos=t.pos)
        return e

    def parse_add(self):
        return self._binop(self.parse_mul, ("+", "-"))

    def parse_mul(self):
        return self._binop(self.parse_unary, ("*", "/"))

    def parse_unary(self):
        t = self.peek()
        if t.kind == "op" and t.text == "-":
            self.next()
            e = self.parse_unary()
            if isinstance(e, ScalarLit):
                return ScalarLit(-e.val, pos=t.pos)
            if isinstance(e, IndexLit) and e.flex:
                # A negative literal can only be a Double.
                return ScalarLit(-float(e.val), pos=t.pos)
            return App(Const("neg", pos=t.pos), (e,), pos=t.pos)
        if t.kind == "not":
            self.next()
            e = self.parse_unary()
            return App(Const("not", pos=t.pos), (e,), pos=t.pos)
        return self.parse_pow()

    def parse_pow(self):
        e = self.parse_app()
        t = self.peek()
        if t.kind == "op" and t.text == "**":
            self.next()
            rhs = self.parse_unary()  # right associative, binds unary minus
            return App(Const("**", pos=t.pos), (e, rhs), pos=t.pos)
        return e

    def parse_app(self):
        e = self.parse_postfix()
        args = []
        while self.at_atom_start():
            args.append(self.parse_postfix())
        if args:
            return App(e, tuple(args), pos=getattr(e, "pos", None))
        return e

    def at_atom_start(self):
        t = self.peek()
        # Layout rule: an application argument never starts at column 1 of a
        # fresh line, so unindented text begins a new top-level item.
        if t.pos[1] == 1:
            return False
        if t.kind in ("ident", "int", "float", "true", "false", "sqrt"):
            return True
        return t.kind == "op" and t.text in ("(", "[")

    def parse_postfix(self):
        e = self.parse_atom()
        while True:
            t = self.peek()
            if t.kind == "op" and t.text == ".[":
                self.next()
                idx = self.parse_expr()
                self.expect("op", "]")
                e = App(Const("get", pos=t.pos), (e, idx), pos=t.pos)
            else:
                return e

    def parse_atom(self):
        t = self.next()
        if t.kind == "int":
            return IndexLit(int(t.text), flex=True, pos=t.pos)
        if t.kind == "float":
            return ScalarLit(float(t.text), pos=t.pos)
        if t.kind == "true":
            return BoolLit(True, pos=t.pos)
        if t.kind == "false":
            return BoolLit(False, pos=t.pos)
        if t.kind == "sqrt":
            # sqrt e == e ** 0.5; a lambda so it also works as a bare value.
            x = "sqrt$arg"
            return Lam(((x, DOUBLE),),
                       App(Const("**"), (Var(x), ScalarLit(0.5))), pos=t.pos)
        if t.kind == "ident":
            if t.text in CONST_NAMES:
                return Const(t.text, pos=t.pos)
            return Var(t.text, pos=t.pos)
        if t.kind == "op" and t.text == "(":
            # Bare operator value, e.g. (+) passed to a mapping function.
            nxt = self.peek()
            if (nxt.kind == "op"
                    and nxt.text in ("+", "-", "*", "/", "**", ">", "<",
                                     "==", "<>", "&&", "||")
                    and self.peek(1).kind == "op" and self.peek(1).text == ")"):
                self.next()
                self.next()
                return Const(nxt.text, pos=t.pos)
            e = self.parse_expr()
            if self.accept("op", ","):
                snd = self.parse_expr()
                self.expect("op", ")")
                return App(Const("pair", pos=t.pos), (e, snd), pos=t.pos)
            self.expect("op", ")")
            return e
        if t.kind == "op" and t.text == "[":
            items = []
            if not (self.peek().kind == "op" and self.peek().text == "]"):
                items.append(self.parse_expr())
                while self.accept("op", ","):
                    items.append(self.parse_expr())
            self.expect("op", "]")
            return ArrayLit(tuple(items), pos=t.pos)
        self.err(f"unexpected {t.text or 'end of input'!r}", t.pos)


def parse_expr(src, filename="<input>"):
    return Parser(src, filename).parse_expression()


def parse_program(src, filename="<input>"):
    """Returns (defs, body); defs are (name, expr) top-level bindings."""
    return Parser(src, filename).parse_program()
