"""Parser for the .syn specification language.

A file holds inductive predicate definitions, optional auxiliary function
specs, and exactly one synthesis goal:

    predicate lseg(loc x, loc y, set s) {
    | x == y => { s =i {} ; emp }
    | not (x == y) => { s =i {v} ++ s1 ;
                        [x, 2] ** x :-> v ** (x + 1) :-> nxt ** lseg(nxt, y, s1) }
    }
    { x :-> a ** y :-> b } void swap(loc x, loc y) { x :-> b ** y :-> a }

"#" starts a line comment; comments of the form "# pragma: key value"
carry per-file synthesis settings (e.g. "# pragma: max-unfold 2").
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .lang import (Assertion, BinOp, Block, BoolConst, Clause, Context, Expr,
                   FunSpec, Goal, Heaplet, InductivePredicate, IntConst, Ite,
                   PointsTo, PredApp, SemType, SetLit, Spatial, TRUE, UnOp,
                   Var, make_goal)
from .typecheck import SpecTypeError, typecheck_goal, typecheck_predicate


class ParseError(Exception):
    def __init__(self, line: int, col: int, expected: str):
        super().__init__(f"{line}:{col}: expected {expected}")
        self.line = line
        self.col = col
        self.expected = expected


class UnknownPredicate(ParseError):
    def __init__(self, line, col, name):
        super().__init__(line, col, f"a declared predicate (got '{name}')")
        self.pred = name


class ArityError(ParseError):
    def __init__(self, line, col, name, got, want):
        super().__init__(line, col,
                         f"{want} arguments for '{name}' (got {got})")
        self.pred = name


@dataclass
class GoalSpec:
    name: str
    params: tuple[tuple[str, SemType], ...]
    pre: tuple[Expr, tuple[Heaplet, ...]]
    post: tuple[Expr, tuple[Heaplet, ...]]


@dataclass
class SpecFile:
    predicates: list[InductivePredicate]
    auxiliaries: list[GoalSpec]
    goal: GoalSpec
    pragmas: dict[str, str] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Tokenizer.

_SYMBOLS = ["**", ":->", "=>", "==", "!=", "<=", "=i", "++", "/\\", "\\/",
            "{", "}", "(", ")", "[", "]", ",", ";", "|", "+", "-", "<",
            "?", ":"]
_KEYWORDS = {"predicate", "auxiliary", "void", "emp", "not", "in", "true",
             "false", "loc", "int", "bool", "set"}


@dataclass
class Tok:
    kind: str   # 'ident', 'int', 'kw', or the symbol itself
    text: str
    line: int
    col: int


def tokenize(text: str) -> tuple[list[Tok], dict[str, str]]:
    toks: list[Tok] = []
    pragmas: dict[str, str] = {}
    line, col, i = 1, 1, 0
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if c == "#":
            j = text.find("\n", i)
            j = n if j < 0 else j
            comment = text[i:j].lstrip("#").strip()
            if comment.startswith("pragma:"):
                parts = comment[len("pragma:"):].split()
                if len(parts) == 2:
                    pragmas[parts[0]] = parts[1]
            i = j
            continue
        matched = None
        for s in _SYMBOLS:
            if text.startswith(s, i):
                matched = s
                break
        if matched:
            toks.append(Tok(matched, matched, line, col))
            i += len(matched)
            col += len(matched)
            continue
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            toks.append(Tok("int", text[i:j], line, col))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] in "_'"):
                j += 1
            word = text[i:j]
            kind = "kw" if word in _KEYWORDS else "ident"
            toks.append(Tok(kind, word, line, col))
            col += j - i
            i = j
            continue
        raise ParseError(line, col, f"a token (got {c!r})")
    toks.append(Tok("eof", "", line, col))
    return toks, pragmas


# ---------------------------------------------------------------------------
# Recursive-descent parser.

class _Parser:
    def __init__(self, toks: list[Tok]):
        self.toks = toks
        self.pos = 0

    def peek(self) -> Tok:
        return self.toks[self.pos]

    def at(self, text: str) -> bool:
        return self.peek().text == text

    def take(self, text: str) -> Tok:
        t = self.peek()
        if t.text != text:
            raise ParseError(t.line, t.col, f"'{text}' (got {t.text!r})")
        self.pos += 1
        return t

    def take_ident(self) -> str:
        t = self.peek()
        if t.kind != "ident":
            raise ParseError(t.line, t.col, f"identifier (got {t.text!r})")
        self.pos += 1
        return t.text

    def take_int(self) -> int:
        t = self.peek()
        if t.kind != "int":
            raise ParseError(t.line, t.col, f"integer (got {t.text!r})")
        self.pos += 1
        return int(t.text)

    # -- expressions ----------------------------------------------------

    def expr(self) -> Expr:
        e = self.or_expr()
        if self.at("?"):
            self.take("?")
            a = self.expr()
            self.take(":")
            b = self.expr()
            return Ite(e, a, b)
        return e

    def or_expr(self) -> Expr:
        e = self.and_expr()
        while self.at("\\/"):
            self.take("\\/")
            e = BinOp("or", e, self.and_expr())
        return e

    def and_expr(self) -> Expr:
        e = self.not_expr()
        while self.at("/\\"):
            self.take("/\\")
            e = BinOp("and", e, self.not_expr())
        return e

    def not_expr(self) -> Expr:
        if self.at("not"):
            self.take("not")
            return UnOp("not", self.not_expr())
        return self.cmp_expr()

    def cmp_expr(self) -> Expr:
        e = self.add_expr()
        t = self.peek().text
        if t == "==":
            self.take("==")
            return BinOp("eq", e, self.add_expr())
        if t == "!=":
            self.take("!=")
            return UnOp("not", BinOp("eq", e, self.add_expr()))
        if t == "<=":
            self.take("<=")
            return BinOp("leq", e, self.add_expr())
        if t == "<":
            self.take("<")
            return BinOp("lt", e, self.add_expr())
        if t == "=i":
            self.take("=i")
            return BinOp("seteq", e, self.add_expr())
        if t == "in":
            self.take("in")
            return BinOp("member", e, self.add_expr())
        return e

    def add_expr(self) -> Expr:
        e = self.atom()
        while self.peek().text in ("+", "-", "++"):
            op = self.peek().text
            self.take(op)
            rhs = self.atom()
            e = BinOp({"+": "plus", "-": "minus", "++": "dunion"}[op], e, rhs)
        return e

    def atom(self) -> Expr:
        t = self.peek()
        if t.kind == "int":
            return IntConst(self.take_int())
        if t.text == "-":
            self.take("-")
            return IntConst(-self.take_int())
        if t.text == "true":
            self.take("true")
            return BoolConst(True)
        if t.text == "false":
            self.take("false")
            return BoolConst(False)
        if t.text == "{":
            self.take("{")
            elems = []
            if not self.at("}"):
                elems.append(self.expr())
                while self.at(","):
                    self.take(",")
                    elems.append(self.expr())
            self.take("}")
            return SetLit(tuple(elems))
        if t.text == "(":
            self.take("(")
            e = self.expr()
            self.take(")")
            return e
        if t.kind == "ident":
            return Var(self.take_ident())
        raise ParseError(t.line, t.col, f"expression (got {t.text!r})")

    # -- spatial formulas -----------------------------------------------

    def heaplet(self) -> Heaplet:
        t = self.peek()
        if t.text == "[":
            self.take("[")
            root = self.take_ident()
            self.take(",")
            size = self.take_int()
            self.take("]")
            return Block(Var(root), size)
        if t.text == "(":
            # pointer-arithmetic form: (x + n) :-> e
            self.take("(")
            src = self.take_ident()
            self.take("+")
            off = self.take_int()
            self.take(")")
            self.take(":->")
            return PointsTo(Var(src), off, self.expr())
        name = self.take_ident()
        if self.at("("):
            self.take("(")
            args = [self.expr()]
            while self.at(","):
                self.take(",")
                args.append(self.expr())
            self.take(")")
            return PredApp(name, tuple(args), 0)
        self.take(":->")
        return PointsTo(Var(name), 0, self.expr())

    def spatial(self) -> tuple[Heaplet, ...]:
        if self.at("emp"):
            self.take("emp")
            return ()
        out = [self.heaplet()]
        while self.at("**"):
            self.take("**")
            out.append(self.heaplet())
        return tuple(out)

    def assertion(self) -> tuple[Expr, tuple[Heaplet, ...]]:
        """`{ [pure ;] spatial }`; backtracks over the optional pure part."""
        self.take("{")
        mark = self.pos
        pure = TRUE
        try:
            e = self.expr()
            if self.at(";"):
                self.take(";")
                pure = e
            else:
                self.pos = mark
        except ParseError:
            self.pos = mark
        heaplets = self.spatial()
        self.take("}")
        return pure, heaplets

    # -- top level -------------------------------------------------------

    def typed_params(self) -> tuple[tuple[str, SemType], ...]:
        self.take("(")
        out = []
        if not self.at(")"):
            out.append(self.typed_param())
            while self.at(","):
                self.take(",")
                out.append(self.typed_param())
        self.take(")")
        return tuple(out)

    def typed_param(self) -> tuple[str, SemType]:
        t = self.peek()
        if t.text not in ("loc", "int", "bool", "set"):
            raise ParseError(t.line, t.col, "a type (loc/int/bool/set)")
        self.take(t.text)
        return (self.take_ident(), SemType(t.text))

    def predicate(self) -> InductivePredicate:
        self.take("predicate")
        name = self.take_ident()
        params = self.typed_params()
        self.take("{")
        clauses = []
        while self.at("|"):
            self.take("|")
            sel = self.expr()
            self.take("=>")
            pure, heaplets = self.assertion()
            clauses.append(Clause(sel, pure, heaplets))
        self.take("}")
        if not clauses:
            t = self.peek()
            raise ParseError(t.line, t.col, "at least one clause")
        return InductivePredicate(name, params, tuple(clauses))

    def fun_spec(self) -> GoalSpec:
        pre = self.assertion()
        self.take("void")
        name = self.take_ident()
        params = self.typed_params()
        post = self.assertion()
        return GoalSpec(name, params, pre, post)

    def file(self) -> SpecFile:
        preds = []
        while self.at("predicate"):
            preds.append(self.predicate())
        auxes = []
        while self.at("auxiliary"):
            self.take("auxiliary")
            auxes.append(self.fun_spec())
        goal = self.fun_spec()
        t = self.peek()
        if t.kind != "eof":
            raise ParseError(t.line, t.col, f"end of file (got {t.text!r})")
        return SpecFile(preds, auxes, goal)


# ---------------------------------------------------------------------------
# Validation + public API.

def _validate_pred_refs(spec: SpecFile):
    """Predicate instances must refer to declared predicates with the right
    arity; a definition may reference itself and earlier definitions only
    (mutual recursion is rejected)."""
    arities: dict[str, int] = {}

    def check(heaplets, visible):
        for h in heaplets:
            if isinstance(h, PredApp):
                if h.name not in visible:
                    raise UnknownPredicate(0, 0, h.name)
                if len(h.args) != arities[h.name]:
                    raise ArityError(0, 0, h.name, len(h.args), arities[h.name])

    for p in spec.predicates:
        arities[p.name] = len(p.params)
        for cl in p.clauses:
            check(cl.spatial, set(arities))
    all_names = set(arities)
    for aux in spec.auxiliaries:
        check(aux.pre[1], all_names)
        check(aux.post[1], all_names)
    check(spec.goal.pre[1], all_names)
    check(spec.goal.post[1], all_names)


def parse_file(text: str) -> SpecFile:
    """Parse a .syn file; the result is validated and type-checked."""
    toks, pragmas = tokenize(text)
    spec = _Parser(toks).file()
    spec.pragmas = pragmas
    _validate_pred_refs(spec)
    ctx = context_of(spec)
    for p in spec.predicates:
        if not p.is_well_founded():
            raise SpecTypeError(
                p.name, "recursive clause without a points-to heaplet")
        typecheck_predicate(ctx, p)
    for g in spec.auxiliaries + [spec.goal]:
        typecheck_goal(ctx, g.params, _assertion(g.pre), _assertion(g.post))
    return spec


def _assertion(pair) -> Assertion:
    pure, heaplets = pair
    from .lang import alloc_chunks
    chunks, _ = alloc_chunks(heaplets, 0)
    return Assertion(pure, Spatial(chunks))


def context_of(spec: SpecFile) -> Context:
    funcs = []
    for aux in spec.auxiliaries:
        funcs.append(FunSpec(aux.name, aux.params,
                             _assertion(aux.pre), _assertion(aux.post)))
    return Context(tuple(spec.predicates), tuple(funcs))


def goal_of(spec: SpecFile) -> Goal:
    """Build the root synthesis goal from a parsed file."""
    g = spec.goal
    return make_goal(g.name, context_of(spec), [n for n, _ in g.params],
                     g.pre[0], g.pre[1], g.post[0], g.post[1], is_top=True,
                     param_types=[t for _, t in g.params])


# ---------------------------------------------------------------------------
# Spec pretty-printer (round-trip partner of parse_file).

def expr_str(e: Expr) -> str:
    if isinstance(e, IntConst):
        return str(e.value)
    if isinstance(e, BoolConst):
        return "true" if e.value else "false"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, SetLit):
        return "{" + ", ".join(expr_str(x) for x in e.elems) + "}"
    if isinstance(e, UnOp):
        return f"not ({expr_str(e.arg)})"
    if isinstance(e, Ite):
        return f"({expr_str(e.cond)} ? {expr_str(e.then)} : {expr_str(e.els)})"
    if isinstance(e, BinOp):
        sym = {"eq": "==", "and": "/\\", "or": "\\/", "plus": "+",
               "minus": "-", "leq": "<=", "lt": "<", "dunion": "++",
               "seteq": "=i", "member": "in"}.get(e.op)
        if sym is None:
            raise ValueError(f"no surface syntax for operator {e.op}")
        return f"({expr_str(e.left)} {sym} {expr_str(e.right)})"
    from .lang import LocConst
    if isinstance(e, LocConst):
        return str(e.address)
    raise TypeError(e)


def heaplet_str(h: Heaplet) -> str:
    if isinstance(h, PointsTo):
        lhs = expr_str(h.src) if h.off == 0 else f"({expr_str(h.src)} + {h.off})"
        return f"{lhs} :-> {expr_str(h.val)}"
    if isinstance(h, Block):
        return f"[{expr_str(h.root)}, {h.size}]"
    if isinstance(h, PredApp):
        return f"{h.name}({', '.join(expr_str(a) for a in h.args)})"
    raise TypeError(h)


def assertion_str(pair) -> str:
    pure, heaplets = pair
    spatial = " ** ".join(heaplet_str(h) for h in heaplets) if heaplets else "emp"
    if pure == TRUE:
        return "{ " + spatial + " }"
    return "{ " + expr_str(pure) + " ; " + spatial + " }"


def pretty_spec(spec: SpecFile) -> str:
    lines = []
    for p in spec.predicates:
        params = ", ".join(f"{t} {n}" for n, t in p.params)
        lines.append(f"predicate {p.name}({params}) {{")
        for cl in p.clauses:
            body = assertion_str((cl.pure, cl.spatial))
            lines.append(f"| {expr_str(cl.selector)} => {body}")
        lines.append("}")
    for g in spec.auxiliaries:
        params = ", ".join(f"{t} {n}" for n, t in g.params)
        lines.append(f"auxiliary {assertion_str(g.pre)}")
        lines.append(f"void {g.name}({params})")
        lines.append(assertion_str(g.post))
    g = spec.goal
    params = ", ".join(f"{t} {n}" for n, t in g.params)
    lines.append(assertion_str(g.pre))
    lines.append(f"void {g.name}({params})")
    lines.append(assertion_str(g.post))
    return "\n".join(lines) + "\n"
