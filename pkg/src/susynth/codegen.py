"""Pretty-printing of synthesized programs to the C-like surface syntax,
an AST-node counter, and a small program parser used by round-trip tests.

Surface forms: "let v = *(x + i);" (the "+ 0" is omitted), "*(x + i) = e;",
"let y = malloc(n);", "free(x);", "f(a, b);", "if (c) { ... } else { ... }";
two-space indentation; skip prints as an empty block body.
"""

from __future__ import annotations

from .lang import (BinOp, BoolConst, Call, Expr,析 := None) if False else None
from .lang import (BinOp, BoolConst, Call, Expr, Free, FunDef, If, IntConst,
                   Load, LocConst, Magic, Malloc, Seq, Skip, Statement, Store,
                   UnOp, Var, Error, seq, stmt_contains)


class IllegalProgram(Exception):
    pass


_BIN = {"eq": "==", "leq": "<=", "lt": "<", "and": "&&", "or": "||",
        "plus": "+", "minus": "-"}


def prog_expr_str(e: Expr, top: bool = True) -> str:
    if isinstance(e, IntConst):
        return str(e.value)
    if isinstance(e, LocConst):
        return str(e.address)
    if isinstance(e, BoolConst):
        return "true" if e.value else "false"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, UnOp):
        return f"!({prog_expr_str(e.arg)})"
    if isinstance(e, BinOp):
        sym = _BIN.get(e.op)
        if sym is None:
            raise IllegalProgram(f"operator {e.op} has no program syntax")
        s = f"{prog_expr_str(e.left, False)} {sym} {prog_expr_str(e.right, False)}"
        return s if top else f"({s})"
    raise IllegalProgram(f"expression {e!r} has no program syntax")


def _addr(src: str, off: int) -> str:
    return f"*{src}" if off == 0 else f"*({src} + {off})"


def _stmt_lines(s: Statement, ind: int) -> list[str]:
    pad = "  " * ind
    if isinstance(s, Skip):
        return []
    if isinstance(s, Seq):
        return _stmt_lines(s.first, ind) + _stmt_lines(s.rest, ind)
    if isinstance(s, Load):
        return [f"{pad}let {s.dst} = {_addr(s.src, s.off)};"]
    if isinstance(s, Store):
        return [f"{pad}{_addr(s.dst, s.off)} = {prog_expr_str(s.value)};"]
    if isinstance(s, Malloc):
        return [f"{pad}let {s.dst} = malloc({s.size});"]
    if isinstance(s, Free):
        return [f"{pad}free({s.src});"]
    if isinstance(s, Call):
        args = ", ".join(prog_expr_str(a) for a in s.args)
        return [f"{pad}{s.fname}({args});"]
    if isinstance(s, Error):
        return [f"{pad}error;"]
    if isinstance(s, If):
        out = [f"{pad}if ({prog_expr_str(s.cond)}) {{"]
        out += _stmt_lines(s.then, ind + 1)
        out.append(f"{pad}}} else {{")
        out += _stmt_lines(s.els, ind + 1)
        out.append(f"{pad}}}")
        return out
    raise IllegalProgram(f"cannot print {s!r}")


def pretty_program(p: FunDef) -> str:
    """Deterministic C-like rendering of a synthesized function."""
    if stmt_contains(p.body, Magic):
        raise IllegalProgram("program contains magic")
    params = ", ".join(f"{t} {n}" for n, t in p.params)
    lines = [f"void {p.name}({params}) {{"]
    lines += _stmt_lines(p.body, 1)
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# AST size.  Counting rule (frozen): every statement node is 1 plus its
# children, except skip which is 0; an address is 1 node at offset 0 and 3
# nodes otherwise (base, +, literal); every expression node is 1 plus its
# children; function parameters are not counted.

def ast_size_expr(e: Expr) -> int:
    if isinstance(e, (IntConst, LocConst, BoolConst, Var)):
        return 1
    if isinstance(e, BinOp):
        return 1 + ast_size_expr(e.left) + ast_size_expr(e.right)
    if isinstance(e, UnOp):
        return 1 + ast_size_expr(e.arg)
    from .lang import Ite, SetLit
    if isinstance(e, Ite):
        return 1 + ast_size_expr(e.cond) + ast_size_expr(e.then) \
            + ast_size_expr(e.els)
    if isinstance(e, SetLit):
        return 1 + sum(ast_size_expr(x) for x in e.elems)
    raise TypeError(e)


def _addr_size(off: int) -> int:
    return 1 if off == 0 else 3


def ast_size_stmt(s: Statement) -> int:
    if isinstance(s, Skip):
        return 0
    if isinstance(s, Seq):
        return 1 + ast_size_stmt(s.first) + ast_size_stmt(s.rest)
    if isinstance(s, Load):
        return 1 + 1 + _addr_size(s.off)
    if isinstance(s, Store):
        return 1 + _addr_size(s.off) + ast_size_expr(s.value)
    if isinstance(s, Malloc):
        return 1 + 1 + 1
    if isinstance(s, Free):
        return 1 + 1
    if isinstance(s, Call):
        return 1 + sum(ast_size_expr(a) for a in s.args)
    if isinstance(s, If):
        return 1 + ast_size_expr(s.cond) + ast_size_stmt(s.then) \
            + ast_size_stmt(s.els)
    if isinstance(s, (Error, Magic)):
        return 1
    raise TypeError(s)


def ast_size(p: FunDef) -> int:
    return ast_size_stmt(p.body)


# ---------------------------------------------------------------------------
# Program parser (round-trip partner of pretty_program; used in tests).

class _PTok:
    def __init__(self, text: str):
        self.toks: list[str] = []
        i, n = 0, len(text)
        two = ("==", "<=", "&&", "||")
        while i < n:
            c = text[i]
            if c.isspace():
                i += 1
                continue
            if text[i:i + 2] in two:
                self.toks.append(text[i:i + 2])
                i += 2
                continue
            if c in "(){};,*=<!+-":
                self.toks.append(c)
                i += 1
                continue
            j = i
            while j < n and (text[j].isalnum() or text[j] in "_'"):
                j += 1
            if i == j:
                raise ValueError(f"bad char {c!r}")
            self.toks.append(text[i:j])
            i = j
        self.pos = 0

    def peek(self):
        return self.toks[self.pos] if self.pos < len(self.toks) else ""

    def take(self, want=None):
        t = self.peek()
        if want is not None and t != want:
            raise ValueError(f"expected {want!r}, got {t!r}")
        self.pos += 1
        return t


def _parse_expr(tk: _PTok) -> Expr:
    e = _parse_and(tk)
    while tk.peek() == "||":
        tk.take()
        e = BinOp("or", e, _parse_and(tk))
    return e


def _parse_and(tk: _PTok) -> Expr:
    e = _parse_cmp(tk)
    while tk.peek() == "&&":
        tk.take()
        e = BinOp("and", e, _parse_cmp(tk))
    return e


def _parse_cmp(tk: _PTok) -> Expr:
    e = _parse_add(tk)
    if tk.peek() in ("==", "<=", "<"):
        op = {"==": "eq", "<=": "leq", "<": "lt"}[tk.take()]
        return BinOp(op, e, _parse_add(tk))
    return e


def _parse_add(tk: _PTok) -> Expr:
    e = _parse_atom(tk)
    while tk.peek() in ("+", "-"):
        op = {"+": "plus", "-": "minus"}[tk.take()]
        e = BinOp(op, e, _parse_atom(tk))
    return e


def _parse_atom(tk: _PTok) -> Expr:
    t = tk.peek()
    if t == "(":
        tk.take()
        e = _parse_expr(tk)
        tk.take(")")
        return e
    if t == "!":
        tk.take()
        return UnOp("not", _parse_atom(tk))
    if t == "-":
        tk.take()
        return IntConst(-int(tk.take()))
    if t.isdigit():
        return IntConst(int(tk.take()))
    if t in ("true", "false"):
        return BoolConst(tk.take() == "true")
    return Var(tk.take())


def _parse_addr(tk: _PTok) -> tuple[str, int]:
    tk.take("*")
    if tk.peek() == "(":
        tk.take()
        base = tk.take()
        tk.take("+")
        off = int(tk.take())
        tk.take(")")
        return base, off
    return tk.take(), 0


def _parse_block(tk: _PTok) -> Statement:
    tk.take("{")
    stmts = []
    while tk.peek() != "}":
        stmts.append(_parse_stmt(tk))
    tk.take("}")
    out: Statement = Skip()
    for s in reversed(stmts):
        out = seq(s, out)
    return out


def _parse_stmt(tk: _PTok) -> Statement:
    t = tk.peek()
    if t == "let":
        tk.take()
        dst = tk.take()
        tk.take("=")
        if tk.peek() == "malloc":
            tk.take()
            tk.take("(")
            n = int(tk.take())
            tk.take(")")
            tk.take(";")
            return Malloc(dst, n)
        src, off = _parse_addr(tk)
        tk.take(";")
        return Load(dst, src, off)
    if t == "*":
        dst, off = _parse_addr(tk)
        tk.take("=")
        e = _parse_expr(tk)
        tk.take(";")
        return Store(dst, off, e)
    if t == "free":
        tk.take()
        tk.take("(")
        x = tk.take()
        tk.take(")")
        tk.take(";")
        return Free(x)
    if t == "error":
        tk.take()
        tk.take(";")
        return Error()
    if t == "if":
        tk.take()
        tk.take("(")
        cond = _parse_expr(tk)
        tk.take(")")
        then = _parse_block(tk)
        tk.take("else")
        els = _parse_block(tk)
        return If(cond, then, els)
    # call
    name = tk.take()
    tk.take("(")
    args = []
    if tk.peek() != ")":
        args.append(_parse_expr(tk))
        while tk.peek() == ",":
            tk.take()
            args.append(_parse_expr(tk))
    tk.take(")")
    tk.take(";")
    return Call(name, tuple(args))


def parse_program(text: str) -> FunDef:
    """Parse the pretty_program surface back into a FunDef."""
    from .lang import SemType
    tk = _PTok(text)
    tk.take("void")
    name = tk.take()
    tk.take("(")
    params = []
    if tk.peek() != ")":
        while True:
            t = SemType(tk.take())
            params.append((tk.take(), t))
            if tk.peek() != ",":
                break
            tk.take(",")
    tk.take(")")
    body = _parse_block(tk)
    return FunDef(name, tuple(params), body)
