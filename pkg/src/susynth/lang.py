"""Object language and assertion language: expressions, symbolic heaps,
goals, programs, and substitutions.

Everything here is immutable; rule applications build new goals rather
than mutating old ones, so values can be shared freely.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional, Union


class SemType(enum.Enum):
    LOC = "loc"
    INT = "int"
    BOOL = "bool"
    SET = "set"

    def __str__(self):
        return self.value


# ---------------------------------------------------------------------------
# Expressions.  Pure assertions are just boolean-typed expressions.

BINOPS = frozenset(
    ["eq", "and", "or", "plus", "minus", "leq", "lt",
     "union", "dunion", "seteq", "member"]
)
UNOPS = frozenset(["not"])


@dataclass(frozen=True)
class Expr:
    pass


@dataclass(frozen=True)
class IntConst(Expr):
    value: int


@dataclass(frozen=True)
class BoolConst(Expr):
    value: bool


@dataclass(frozen=True)
class LocConst(Expr):
    address: int  # 0 is the unique null literal


@dataclass(frozen=True)
class SetLit(Expr):
    elems: tuple[Expr, ...]


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def __post_init__(self):
        assert self.op in BINOPS, self.op


@dataclass(frozen=True)
class UnOp(Expr):
    op: str
    arg: Expr

    def __post_init__(self):
        assert self.op in UNOPS, self.op


@dataclass(frozen=True)
class Ite(Expr):
    cond: Expr
    then: Expr
    els: Expr


TRUE = BoolConst(True)
FALSE = BoolConst(False)
NULL = LocConst(0)


def eq(a: Expr, b: Expr) -> Expr:
    return BinOp("eq", a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, UnOp) and a.op == "not":
        return a.arg
    return UnOp("not", a)


def conj(*parts: Expr) -> Expr:
    """Conjunction of the given formulas, dropping redundant `true`s."""
    flat = [p for p in parts if p != TRUE]
    if not flat:
        return TRUE
    out = flat[0]
    for p in flat[1:]:
        out = BinOp("and", out, p)
    return out


def conjuncts(e: Expr) -> list[Expr]:
    """Flatten nested conjunctions into a list (true -> [])."""
    if e == TRUE:
        return []
    if isinstance(e, BinOp) and e.op == "and":
        return conjuncts(e.left) + conjuncts(e.right)
    return [e]


def expr_vars(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, (IntConst, BoolConst, LocConst)):
        return set()
    if isinstance(e, SetLit):
        out: set[str] = set()
        for x in e.elems:
            out |= expr_vars(x)
        return out
    if isinstance(e, BinOp):
        return expr_vars(e.left) | expr_vars(e.right)
    if isinstance(e, UnOp):
        return expr_vars(e.arg)
    if isinstance(e, Ite):
        return expr_vars(e.cond) | expr_vars(e.then) | expr_vars(e.els)
    raise TypeError(e)


# A substitution maps variable names to expressions; application is
# simultaneous.
Subst = dict[str, Expr]


def subst_expr(sigma: Subst, e: Expr) -> Expr:
    if isinstance(e, Var):
        return sigma.get(e.name, e)
    if isinstance(e, (IntConst, BoolConst, LocConst)):
        return e
    if isinstance(e, SetLit):
        return SetLit(tuple(subst_expr(sigma, x) for x in e.elems))
    if isinstance(e, BinOp):
        return BinOp(e.op, subst_expr(sigma, e.left), subst_expr(sigma, e.right))
    if isinstance(e, UnOp):
        return UnOp(e.op, subst_expr(sigma, e.arg))
    if isinstance(e, Ite):
        return Ite(subst_expr(sigma, e.cond), subst_expr(sigma, e.then),
                   subst_expr(sigma, e.els))
    raise TypeError(e)


def compose_subst(first: Subst, second: Subst) -> Subst:
    """Substitution equivalent to applying `first`, then `second`."""
    out = {x: subst_expr(second, t) for x, t in first.items()}
    for x, t in second.items():
        out.setdefault(x, t)
    return out


def fresh_var(base: str, avoid: set[str]) -> str:
    """Fresh name: `base` itself, else base + smallest suffix >= 2."""
    if base not in avoid:
        return base
    k = 2
    while base + str(k) in avoid:
        k += 1
    return base + str(k)


# ---------------------------------------------------------------------------
# Symbolic heaps.

# Predicate-instance tag: an int is an unfolding level, None means the tag
# was erased (the instance is closed to further unfolding and calls).
Tag = Optional[int]


@dataclass(frozen=True)
class Heaplet:
    pass


@dataclass(frozen=True)
class PointsTo(Heaplet):
    src: Expr  # Var or LocConst
    off: int
    val: Expr


@dataclass(frozen=True)
class Block(Heaplet):
    root: Expr  # Var (an existential until allocated)
    size: int


@dataclass(frozen=True)
class PredApp(Heaplet):
    name: str
    args: tuple[Expr, ...]
    tag: Tag = 0


def heaplet_vars(h: Heaplet) -> set[str]:
    if isinstance(h, PointsTo):
        return expr_vars(h.src) | expr_vars(h.val)
    if isinstance(h, Block):
        return expr_vars(h.root)
    if isinstance(h, PredApp):
        out: set[str] = set()
        for a in h.args:
            out |= expr_vars(a)
        return out
    raise TypeError(h)


def subst_heaplet(sigma: Subst, h: Heaplet) -> Heaplet:
    if isinstance(h, PointsTo):
        return PointsTo(subst_expr(sigma, h.src), h.off, subst_expr(sigma, h.val))
    if isinstance(h, Block):
        return Block(subst_expr(sigma, h.root), h.size)
    if isinstance(h, PredApp):
        return PredApp(h.name, tuple(subst_expr(sigma, a) for a in h.args), h.tag)
    raise TypeError(h)


def strip_tag(h: Heaplet) -> Heaplet:
    """Tag-blind view of a heaplet, used when comparing sub-heaps."""
    if isinstance(h, PredApp):
        return PredApp(h.name, h.args, 0)
    return h


@dataclass(frozen=True)
class Chunk:
    """A heaplet with a stable per-goal identity (used for footprints)."""
    hid: int
    h: Heaplet


@dataclass(frozen=True)
class Spatial:
    """Separating conjunction of heaplets; emp is the empty multiset."""
    chunks: tuple[Chunk, ...] = ()

    @property
    def heaplets(self) -> tuple[Heaplet, ...]:
        return tuple(c.h for c in self.chunks)

    def is_emp(self) -> bool:
        return not self.chunks

    def without(self, hids: set[int]) -> "Spatial":
        return Spatial(tuple(c for c in self.chunks if c.hid not in hids))

    def find(self, hid: int) -> Heaplet:
        for c in self.chunks:
            if c.hid == hid:
                return c.h
        raise KeyError(hid)

    def map(self, f) -> "Spatial":
        return Spatial(tuple(Chunk(c.hid, f(c.h)) for c in self.chunks))

    def same_heap(self, other: "Spatial") -> bool:
        """Multiset equality on heaplets, ignoring chunk identities."""
        mine = sorted(map(repr, self.heaplets))
        theirs = sorted(map(repr, other.heaplets))
        return mine == theirs


def spatial_vars(s: Spatial) -> set[str]:
    out: set[str] = set()
    for c in s.chunks:
        out |= heaplet_vars(c.h)
    return out


@dataclass(frozen=True)
class Assertion:
    pure: Expr
    spatial: Spatial


def assertion_vars(a: Assertion) -> set[str]:
    return expr_vars(a.pure) | spatial_vars(a.spatial)


def subst_assertion(sigma: Subst, a: Assertion) -> Assertion:
    """Apply sigma to pure and spatial parts; chunk ids are preserved."""
    return Assertion(subst_expr(sigma, a.pure),
                     a.spatial.map(lambda h: subst_heaplet(sigma, h)))


# ---------------------------------------------------------------------------
# Inductive predicates, function specs, context.

@dataclass(frozen=True)
class Clause:
    selector: Expr            # guard over the predicate's formals
    pure: Expr
    spatial: tuple[Heaplet, ...]


@dataclass(frozen=True)
class InductivePredicate:
    name: str
    params: tuple[tuple[str, SemType], ...]
    clauses: tuple[Clause, ...]

    def clause_locals(self, j: int) -> list[str]:
        formals = {n for n, _ in self.params}
        cl = self.clauses[j]
        used = expr_vars(cl.selector) | expr_vars(cl.pure)
        for h in cl.spatial:
            used |= heaplet_vars(h)
        return sorted(used - formals)

    def is_well_founded(self) -> bool:
        """Clauses holding predicate instances must hold a points-to too."""
        for cl in self.clauses:
            has_pred = any(isinstance(h, PredApp) for h in cl.spatial)
            has_pts = any(isinstance(h, PointsTo) for h in cl.spatial)
            if has_pred and not has_pts:
                return False
        return True


@dataclass(frozen=True)
class FunSpec:
    name: str
    params: tuple[tuple[str, SemType], ...]
    pre: Assertion
    post: Assertion
    # The recursion hypothesis installed at the start of a derivation is
    # matched with exact tag levels; user-provided auxiliary specs match
    # instances at any numeric level.
    from_induction: bool = False


@dataclass(frozen=True)
class Context:
    preds: tuple[InductivePredicate, ...] = ()
    funcs: tuple[FunSpec, ...] = ()

    def pred(self, name: str) -> InductivePredicate:
        for p in self.preds:
            if p.name == name:
                return p
        raise KeyError(name)

    def has_pred(self, name: str) -> bool:
        return any(p.name == name for p in self.preds)

    def with_fun(self, f: FunSpec) -> "Context":
        return Context(self.preds, self.funcs + (f,))


# ---------------------------------------------------------------------------
# Goals.

@dataclass(frozen=True)
class RuleApp:
    """Trace record of one rule application (footprints drive the
    symmetry-reduction filter)."""
    rule_id: str
    pre_hids: frozenset[int]
    post_hids: frozenset[int]
    order_key: tuple


@dataclass(frozen=True)
class Goal:
    fname: str
    ctx: Context
    env: tuple[str, ...]          # program variables, in order
    pre: Assertion
    post: Assertion
    trace: tuple[RuleApp, ...] = ()
    is_top: bool = False
    next_hid: int = 0
    param_types: tuple[SemType, ...] = ()  # declared types of the formals

    def ghosts(self) -> set[str]:
        return assertion_vars(self.pre) - set(self.env)

    def existentials(self) -> set[str]:
        return assertion_vars(self.post) - (set(self.env) | assertion_vars(self.pre))

    def all_vars(self) -> set[str]:
        return set(self.env) | assertion_vars(self.pre) | assertion_vars(self.post)

    def fresh(self, base: str, extra_avoid: set[str] = frozenset()) -> str:
        return fresh_var(base, self.all_vars() | set(extra_avoid))


def alloc_chunks(heaplets, start: int) -> tuple[tuple[Chunk, ...], int]:
    """Assign fresh chunk ids to plain heaplets."""
    out = []
    hid = start
    for h in heaplets:
        out.append(Chunk(hid, h))
        hid += 1
    return tuple(out), hid


def make_goal(fname, ctx, env, pre_pure, pre_heaplets, post_pure, post_heaplets,
              is_top=True, param_types=()) -> Goal:
    pre_chunks, nxt = alloc_chunks(pre_heaplets, 0)
    post_chunks, nxt = alloc_chunks(post_heaplets, nxt)
    return Goal(fname, ctx, tuple(env),
                Assertion(pre_pure, Spatial(pre_chunks)),
                Assertion(post_pure, Spatial(post_chunks)),
                trace=(), is_top=is_top, next_hid=nxt,
                param_types=tuple(param_types))


@dataclass(frozen=True)
class Config:
    """Synthesis settings; the four optimization switches default to on."""
    max_unfold: int = 1
    timeout_ms: int = 120_000
    phases: bool = True
    invertible: bool = True
    failure_rules: bool = True
    commute: bool = True
    aux_call_tag_mode: str = "erase"   # or "increment"
    check_trials: int = 100
    rng_seed: int = 0
    memoize: bool = False
    smt_cmd: tuple[str, ...] | None = None
    smt_timeout_ms: int = 2000


# ---------------------------------------------------------------------------
# Programs.

@dataclass(frozen=True)
class Statement:
    pass


@dataclass(frozen=True)
class Load(Statement):
    dst: str
    src: str
    off: int


@dataclass(frozen=True)
class Store(Statement):
    dst: str
    off: int
    value: Expr


@dataclass(frozen=True)
class Malloc(Statement):
    dst: str
    size: int


@dataclass(frozen=True)
class Free(Statement):
    src: str


@dataclass(frozen=True)
class Call(Statement):
    fname: str
    args: tuple[Expr, ...]


@dataclass(frozen=True)
class If(Statement):
    cond: Expr
    then: Statement
    els: Statement


@dataclass(frozen=True)
class Seq(Statement):
    first: Statement
    rest: Statement


@dataclass(frozen=True)
class Skip(Statement):
    pass


@dataclass(frozen=True)
class Error(Statement):
    pass


@dataclass(frozen=True)
class Magic(Statement):
    pass


@dataclass(frozen=True)
class Guarded(Statement):
    """Internal marker: `body` solves the goal under abduced `cond`.
    Never part of a returned program."""
    cond: Expr
    body: Statement


@dataclass(frozen=True)
class FunDef:
    name: str
    params: tuple[tuple[str, SemType], ...]
    body: Statement


def seq(first: Statement, rest: Statement) -> Statement:
    """Sequencing, kept right-associated and with skip units dropped."""
    if isinstance(first, Skip):
        return rest
    if isinstance(rest, Skip):
        return first
    if isinstance(first, Seq):
        return seq(first.first, seq(first.rest, rest))
    return Seq(first, rest)


def stmt_contains(s: Statement, kind) -> bool:
    if isinstance(s, kind):
        return True
    if isinstance(s, Seq):
        return stmt_contains(s.first, kind) or stmt_contains(s.rest, kind)
    if isinstance(s, If):
        return stmt_contains(s.then, kind) or stmt_contains(s.els, kind)
    if isinstance(s, Guarded):
        return stmt_contains(s.body, kind)
    return False


def stmt_vars(s: Statement) -> set[str]:
    """All variable names read or written by a statement."""
    if isinstance(s, Load):
        return {s.dst, s.src}
    if isinstance(s, Store):
        return {s.dst} | expr_vars(s.value)
    if isinstance(s, Malloc):
        return {s.dst}
    if isinstance(s, Free):
        return {s.src}
    if isinstance(s, Call):
        out = set()
        for a in s.args:
            out |= expr_vars(a)
        return out
    if isinstance(s, If):
        return expr_vars(s.cond) | stmt_vars(s.then) | stmt_vars(s.els)
    if isinstance(s, Seq):
        return stmt_vars(s.first) | stmt_vars(s.rest)
    if isinstance(s, Guarded):
        return expr_vars(s.cond) | stmt_vars(s.body)
    return set()
