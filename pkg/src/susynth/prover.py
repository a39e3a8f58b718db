"""Pure-formula prover: validity and consistency over booleans, linear
integer arithmetic, equality, and finite integer sets.

Two layers: a syntactic fast path (constant folding, conjunct subsumption,
equality closure) answers the bulk of queries; everything else is encoded
to SMT-LIB and decided by an external solver child process.  The solver
command comes from the SUSYNTH_SMT environment variable, falling back to a
`z3 -in` style invocation if z3 is on PATH, and finally to the bundled
`susynth-smt` solver.
"""

from __future__ import annotations

import os
import selectors
import shlex
import shutil
import subprocess
import sys
from dataclasses import dataclass

from .lang import (BinOp, BoolConst, Expr, FALSE, IntConst, Ite, LocConst,
                   SetLit, TRUE, UnOp, Var, conj, conjuncts, expr_vars)
from .typecheck import SemType, _Inference


class SolverUnavailable(Exception):
    pass


class SolverTimeout(Exception):
    pass


class UnsupportedTerm(Exception):
    pass


# ---------------------------------------------------------------------------
# Normalization (shared by the fast path and the encoder).

_SYMMETRIC = {"eq", "seteq"}


def normalize(e: Expr) -> Expr:
    """Constant folding plus canonical ordering of symmetric operators."""
    if isinstance(e, (IntConst, BoolConst, LocConst, Var)):
        return e
    if isinstance(e, SetLit):
        return SetLit(tuple(normalize(x) for x in e.elems))
    if isinstance(e, UnOp):
        a = normalize(e.arg)
        if isinstance(a, BoolConst):
            return BoolConst(not a.value)
        if isinstance(a, UnOp) and a.op == "not":
            return a.arg
        return UnOp(e.op, a)
    if isinstance(e, Ite):
        c = normalize(e.cond)
        if isinstance(c, BoolConst):
            return normalize(e.then) if c.value else normalize(e.els)
        return Ite(c, normalize(e.then), normalize(e.els))
    if isinstance(e, BinOp):
        l, r = normalize(e.left), normalize(e.right)
        op = e.op
        if op == "and":
            if l == FALSE or r == FALSE:
                return FALSE
            if l == TRUE:
                return r
            if r == TRUE:
                return l
            return BinOp(op, l, r)
        if op == "or":
            if l == TRUE or r == TRUE:
                return TRUE
            if l == FALSE:
                return r
            if r == FALSE:
                return l
            return BinOp(op, l, r)
        if isinstance(l, IntConst) and isinstance(r, IntConst):
            if op == "plus":
                return IntConst(l.value + r.value)
            if op == "minus":
                return IntConst(l.value - r.value)
            if op == "eq":
                return BoolConst(l.value == r.value)
            if op == "leq":
                return BoolConst(l.value <= r.value)
            if op == "lt":
                return BoolConst(l.value < r.value)
        if op in ("eq", "seteq") and l == r:
            return TRUE
        if op in _SYMMETRIC or op in ("union", "dunion"):
            if repr(r) < repr(l):
                l, r = r, l
        return BinOp(op, l, r)
    raise TypeError(e)


def _eq_closure(conj_list: list[Expr]) -> dict[str, str]:
    """Union-find over variables forced equal by top-level conjuncts."""
    parent: dict[str, str] = {}

    def find(x):
        parent.setdefault(x, x)
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for c in conj_list:
        if isinstance(c, BinOp) and c.op == "eq" \
                and isinstance(c.left, Var) and isinstance(c.right, Var):
            parent[find(c.left.name)] = find(c.right.name)
    return {x: find(x) for x in list(parent)}


# ---------------------------------------------------------------------------
# Set lowering + SMT-LIB encoding.

@dataclass(frozen=True)
class ProverQuery:
    kind: str               # 'valid' | 'consistent' | 'equal'
    hypotheses: Expr
    conclusion: Expr | None = None


def _infer_types(e: Expr) -> dict[str, SemType]:
    inf = _Inference()
    from .lang import Context
    inf.assign(inf.check_expr(e, Context()), SemType.BOOL)
    return {v: inf.resolve(v) for v in sorted(expr_vars(e))}


class _Encoder:
    """Lower finite-set atoms to membership booleans over the query's
    element universe, then print SMT-LIB."""

    def __init__(self, formula: Expr):
        self.formula = normalize(formula)
        self.types = _infer_types(self.formula)
        self.universe = self._universe()
        self.side: list[str] = []  # disjointness conditions
        self.bool_consts: dict[str, None] = {}
        self.int_consts: dict[str, None] = {}

    def _universe(self) -> list[Expr]:
        """Element terms: int-typed variables plus literals used in sets."""
        terms: dict[str, Expr] = {}

        def visit(e: Expr, in_set: bool):
            if isinstance(e, Var):
                if self.types.get(e.name) in (SemType.INT, SemType.LOC):
                    terms.setdefault(e.name, e)
            elif isinstance(e, IntConst):
                if in_set:
                    terms.setdefault(str(e.value), e)
            elif isinstance(e, SetLit):
                for x in e.elems:
                    visit(x, True)
            elif isinstance(e, BinOp):
                inner = in_set or e.op in ("union", "dunion", "seteq", "member")
                visit(e.left, inner)
                visit(e.right, inner)
            elif isinstance(e, UnOp):
                visit(e.arg, in_set)
            elif isinstance(e, Ite):
                visit(e.cond, in_set)
                visit(e.then, in_set)
                visit(e.els, in_set)

        visit(self.formula, False)
        return [terms[k] for k in sorted(terms)]

    # -- membership formulas -------------------------------------------

    def _is_set(self, e: Expr) -> bool:
        if isinstance(e, SetLit):
            return True
        if isinstance(e, Var):
            return self.types.get(e.name) == SemType.SET
        if isinstance(e, BinOp):
            return e.op in ("union", "dunion")
        if isinstance(e, Ite):
            return self._is_set(e.then)
        return False

    def _is_bool(self, e: Expr) -> bool:
        if isinstance(e, BoolConst) or isinstance(e, UnOp):
            return True
        if isinstance(e, Var):
            return self.types.get(e.name) == SemType.BOOL
        if isinstance(e, BinOp):
            return e.op in ("and", "or", "eq", "leq", "lt", "seteq", "member")
        if isinstance(e, Ite):
            return self._is_bool(e.then)
        return False

    @staticmethod
    def _ukey(u: Expr) -> str:
        if isinstance(u, Var):
            return u.name
        if isinstance(u, IntConst):
            return f"n{u.value}" if u.value >= 0 else f"m{-u.value}"
        raise UnsupportedTerm(repr(u))

    def _mem(self, u: Expr, s: Expr) -> str:
        if isinstance(s, Var):
            name = f"mem.{s.name}.{self._ukey(u)}"
            self.bool_consts.setdefault(name, None)
            return name
        if isinstance(s, SetLit):
            if not s.elems:
                return "false"
            parts = [f"(= {self._term(u)} {self._term(x)})" for x in s.elems]
            return parts[0] if len(parts) == 1 else "(or " + " ".join(parts) + ")"
        if isinstance(s, BinOp) and s.op in ("union", "dunion"):
            return f"(or {self._mem(u, s.left)} {self._mem(u, s.right)})"
        if isinstance(s, Ite):
            return (f"(ite {self._bool(s.cond)} {self._mem(u, s.then)} "
                    f"{self._mem(u, s.els)})")
        raise UnsupportedTerm(repr(s))

    def _collect_disjointness(self, e: Expr):
        """Every disjoint-union occurrence contributes a side condition."""
        if isinstance(e, BinOp):
            if e.op == "dunion":
                for u in self.universe:
                    self.side.append(
                        f"(not (and {self._mem(u, e.left)} "
                        f"{self._mem(u, e.right)}))")
            self._collect_disjointness(e.left)
            self._collect_disjointness(e.right)
        elif isinstance(e, UnOp):
            self._collect_disjointness(e.arg)
        elif isinstance(e, Ite):
            self._collect_disjointness(e.cond)
            self._collect_disjointness(e.then)
            self._collect_disjointness(e.els)
        elif isinstance(e, SetLit):
            for x in e.elems:
                self._collect_disjointness(x)

    # -- terms and formulas ---------------------------------------------

    def _term(self, e: Expr) -> str:
        if isinstance(e, IntConst):
            return str(e.value) if e.value >= 0 else f"(- {-e.value})"
        if isinstance(e, LocConst):
            return str(e.address)
        if isinstance(e, Var):
            self.int_consts.setdefault(e.name, None)
            return e.name
        if isinstance(e, BinOp) and e.op in ("plus", "minus"):
            op = "+" if e.op == "plus" else "-"
            return f"({op} {self._term(e.left)} {self._term(e.right)})"
        if isinstance(e, Ite):
            return (f"(ite {self._bool(e.cond)} {self._term(e.then)} "
                    f"{self._term(e.els)})")
        raise UnsupportedTerm(repr(e))

    def _bool(self, e: Expr) -> str:
        if e == TRUE:
            return "true"
        if e == FALSE:
            return "false"
        if isinstance(e, Var):
            if self.types.get(e.name) == SemType.BOOL:
                self.bool_consts.setdefault(e.name, None)
                return e.name
            raise UnsupportedTerm(repr(e))
        if isinstance(e, UnOp):
            return f"(not {self._bool(e.arg)})"
        if isinstance(e, Ite):
            return (f"(ite {self._bool(e.cond)} {self._bool(e.then)} "
                    f"{self._bool(e.els)})")
        if isinstance(e, BinOp):
            if e.op == "and":
                return f"(and {self._bool(e.left)} {self._bool(e.right)})"
            if e.op == "or":
                return f"(or {self._bool(e.left)} {self._bool(e.right)})"
            if e.op == "leq":
                return f"(<= {self._term(e.left)} {self._term(e.right)})"
            if e.op == "lt":
                return f"(< {self._term(e.left)} {self._term(e.right)})"
            if e.op == "member":
                return self._mem(e.left, e.right)
            if e.op == "seteq" or (e.op == "eq" and self._is_set(e.left)):
                parts = [f"(= {self._mem(u, e.left)} {self._mem(u, e.right)})"
                         for u in self.universe]
                if not parts:
                    return "true"
                return parts[0] if len(parts) == 1 \
                    else "(and " + " ".join(parts) + ")"
            if e.op == "eq":
                if self._is_bool(e.left) or self._is_bool(e.right):
                    return f"(= {self._bool(e.left)} {self._bool(e.right)})"
                return f"(= {self._term(e.left)} {self._term(e.right)})"
        raise UnsupportedTerm(repr(e))

    def script(self) -> str:
        body = self._bool(self.formula)
        self._collect_disjointness(self.formula)
        lines = ["(reset)", "(set-logic ALL)"]
        for name in sorted(self.int_consts):
            lines.append(f"(declare-const {name} Int)")
        for name in sorted(self.bool_consts):
            lines.append(f"(declare-const {name} Bool)")
        lines.append(f"(assert {body})")
        for s in self.side:
            lines.append(f"(assert {s})")
        lines.append("(check-sat)")
        return "\n".join(lines) + "\n"


def encode_smt(query: ProverQuery) -> str:
    """Deterministic SMT-LIB text whose check-sat decides the query.

    valid(h => c) and equal(h, e1, e2) encode the negation, so `unsat`
    means the property holds; consistent(h) encodes h directly.
    """
    if query.kind == "valid":
        formula = conj(query.hypotheses, UnOp("not", query.conclusion))
    elif query.kind == "consistent":
        formula = query.hypotheses
    elif query.kind == "equal":
        formula = conj(query.hypotheses, UnOp("not", query.conclusion))
    else:
        raise ValueError(query.kind)
    return _Encoder(formula).script()


# ---------------------------------------------------------------------------
# Child-process solver session.

def default_solver_cmd() -> list[str]:
    env = os.environ.get("SUSYNTH_SMT")
    if env:
        return shlex.split(env)
    if shutil.which("z3"):
        return ["z3", "-in"]
    return [sys.executable, "-m", "susynth.smtsolver"]


class SmtSession:
    """One exclusive solver child process; queries are serialized."""

    def __init__(self, cmd: list[str] | None = None, timeout_ms: int = 2000):
        self.cmd = cmd or default_solver_cmd()
        self.timeout_ms = timeout_ms
        self.proc: subprocess.Popen | None = None

    def _ensure(self):
        if self.proc is not None and self.proc.poll() is None:
            return
        try:
            self.proc = subprocess.Popen(
                self.cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL, text=True)
        except OSError as exc:
            raise SolverUnavailable(f"cannot start {self.cmd!r}: {exc}")

    def _read_line(self) -> str:
        sel = selectors.DefaultSelector()
        sel.register(self.proc.stdout, selectors.EVENT_READ)
        ready = sel.select(self.timeout_ms / 1000.0)
        sel.close()
        if not ready:
            self.proc.kill()
            self.proc = None
            raise SolverTimeout()
        return self.proc.stdout.readline().strip()

    def check(self, script: str) -> str:
        """Run one (reset)-prefixed script; returns sat/unsat/unknown."""
        self._ensure()
        try:
            self.proc.stdin.write(script)
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            self.proc = None
            raise SolverUnavailable(f"solver died: {exc}")
        line = self._read_line()
        while line.startswith("(error") or line.startswith(";"):
            line = self._read_line()
        if line in ("sat", "unsat", "unknown"):
            return line
        raise SolverUnavailable(f"unexpected solver reply: {line!r}")

    def close(self):
        if self.proc is not None:
            try:
                self.proc.stdin.close()
                self.proc.kill()
            except OSError:
                pass
            self.proc = None


# ---------------------------------------------------------------------------
# The prover facade.

class PureProver:
    """Validity/consistency oracle with caching and a syntactic fast path.

    Timeouts and `unknown` answers map to the conservative verdict for
    each operation: "not valid" and "consistent" respectively.
    """

    def __init__(self, cmd: list[str] | None = None, timeout_ms: int = 2000):
        self.session = SmtSession(cmd, timeout_ms)
        self.cache: dict[str, str] = {}
        self.stats = {"queries": 0, "fast": 0, "smt": 0}

    def close(self):
        self.session.close()

    # -- fast path -------------------------------------------------------

    @staticmethod
    def _fast_valid(hyp: Expr, concl: Expr) -> bool | None:
        h = normalize(hyp)
        c = normalize(concl)
        if c == TRUE:
            return True
        hs = conjuncts(h)
        reprs = {repr(x) for x in hs}
        if repr(FALSE) in reprs:
            return True
        cs = conjuncts(c)
        closure = _eq_closure(hs)

        def entailed(x: Expr) -> bool:
            if x == TRUE:
                return True
            if repr(x) in reprs:
                return True
            if isinstance(x, BinOp) and x.op == "eq" \
                    and isinstance(x.left, Var) and isinstance(x.right, Var):
                a = closure.get(x.left.name, x.left.name)
                b = closure.get(x.right.name, x.right.name)
                return a == b
            return False

        if all(entailed(x) for x in cs):
            return True
        return None

    @staticmethod
    def _fast_consistent(phi: Expr) -> bool | None:
        p = normalize(phi)
        if p == TRUE:
            return True
        reprs = {repr(x) for x in conjuncts(p)}
        if repr(FALSE) in reprs:
            return False
        return None

    # -- SMT dispatch ------------------------------------------------------

    def _smt_sat(self, query: ProverQuery) -> str:
        script = encode_smt(query)
        if script in self.cache:
            return self.cache[script]
        self.stats["smt"] += 1
        verdict = self.session.check(script)
        self.cache[script] = verdict
        return verdict

    # -- public operations -------------------------------------------------

    def is_valid(self, hyp: Expr, concl: Expr) -> bool:
        self.stats["queries"] += 1
        fast = self._fast_valid(hyp, concl)
        if fast is not None:
            self.stats["fast"] += 1
            return fast
        try:
            verdict = self._smt_sat(ProverQuery("valid", hyp, concl))
        except SolverTimeout:
            return False
        except UnsupportedTerm:
            return False
        if verdict == "unsat":
            return True
        return False  # sat or unknown: not (provably) valid

    def is_consistent(self, phi: Expr) -> bool:
        self.stats["queries"] += 1
        fast = self._fast_consistent(phi)
        if fast is not None:
            self.stats["fast"] += 1
            return fast
        try:
            verdict = self._smt_sat(ProverQuery("consistent", phi))
        except SolverTimeout:
            return True
        except UnsupportedTerm:
            return True
        if verdict == "unsat":
            return False
        return True  # sat or unknown: treated as consistent

    def equal_under_hypotheses(self, hyp: Expr, e1: Expr, e2: Expr) -> bool:
        return self.is_valid(hyp, BinOp("eq", e1, e2))
