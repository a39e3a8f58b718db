"""Depth-first backtracking proof search.

The engine walks the rule list for a goal; a rule application yields
alternative derivations whose subgoals are solved left to right, and the
continuation assembles subprograms on the way back.  Four optimizations
prune the space: eagerly committing to invertible rules, phase-restricted
rule lists, symmetry reduction via rule/footprint ordering, and early
failure rules.  Abduced branch guards travel upward as Guarded markers
until some enclosing goal can synthesize the matching else-branch.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

from .lang import (Assertion, Config, Expr, FunDef, Goal, Guarded, If, Load,
                   Magic, PredApp, RuleApp, Seq, Skip, Statement, UnOp,alloc_chunks,
                   conj, expr_vars, stmt_contains, stmt_vars)
from .prover import PureProver, SolverUnavailable
from . import rules as R

# Global rule order; also the primary index of the symmetry-reduction key.
RULE_ORDER = [
    "Inconsistency", "Emp", "Failure", "NullNotLVal", "StarPartial",
    "SubstLeft", "Read", "Induction", "Open", "Call", "AbduceCall", "Close",
    "UnifyHeapsPred", "FramePred", "Write", "Alloc", "Free",
    "UnifyHeapsFlat", "FrameFlat", "SubstRight", "UnifyPure", "Pick",
    "Branch",
]
_ORDER_INDEX = {r: i for i, r in enumerate(RULE_ORDER)}

UNFOLD_PHASE = [
    "Inconsistency", "Emp", "Failure", "NullNotLVal", "StarPartial",
    "SubstLeft", "Read", "Induction", "Open", "Call", "AbduceCall", "Close",
    "UnifyHeapsPred", "FramePred", "SubstRight", "UnifyPure", "Pick",
]
FLAT_PHASE = [
    "Inconsistency", "Emp", "Failure", "NullNotLVal", "StarPartial",
    "SubstLeft", "Read", "Write", "Alloc", "Free", "UnifyHeapsFlat",
    "FrameFlat", "SubstRight", "UnifyPure", "Pick", "Branch",
]

_RULE_FNS = {
    "Inconsistency": R.try_inconsistency,
    "Emp": R.try_emp,
    "Failure": R.try_failure,
    "NullNotLVal": R.try_null_not_lval,
    "StarPartial": R.try_star_partial,
    "SubstLeft": R.try_subst_left,
    "Read": R.try_read,
    "Induction": R.try_induction,
    "Open": R.try_open,
    "Call": R.try_call,
    "AbduceCall": R.try_abduce_call,
    "Close": R.try_close,
    "UnifyHeapsPred": lambda g, pv, cfg: R.try_unify_heaps(g, "predicates", pv, cfg),
    "FramePred": lambda g, pv, cfg: R.try_frame(g, "predicates", pv, cfg),
    "Write": R.try_write,
    "Alloc": R.try_alloc,
    "Free": R.try_free,
    "UnifyHeapsFlat": lambda g, pv, cfg: R.try_unify_heaps(g, "flat", pv, cfg),
    "FrameFlat": lambda g, pv, cfg: R.try_frame(g, "flat", pv, cfg),
    "SubstRight": R.try_subst_right,
    "UnifyPure": R.try_unify_pure,
    "Pick": R.try_pick,
    "Branch": R.try_branch_abduction,
}


@dataclass(frozen=True)
class TraceNode:
    rule: str
    children: tuple["TraceNode", ...] = ()

    def to_json(self):
        return {"rule": self.rule,
                "children": [c.to_json() for c in self.children]}


@dataclass
class SearchResult:
    program: FunDef | None = None
    trace: TraceNode | None = None
    reason: str | None = None     # 'exhausted' | 'timeout' | 'solverError'
    stats: dict | None = None

    @property
    def success(self) -> bool:
        return self.program is not None


class _Timeout(Exception):
    pass


class _Fail:
    """Failed subproblem (shared sentinel)."""


FAIL = _Fail()


def next_rules(g: Goal, cfg: Config) -> list[str]:
    """Phase-restricted rule list for a goal (full order if phases off)."""
    def enabled(name: str) -> bool:
        return cfg.failure_rules or name != "Failure"

    if not cfg.phases:
        return [r for r in RULE_ORDER if enabled(r)]
    numeric = any(isinstance(c.h, PredApp) and c.h.tag is not None
                  for c in g.pre.spatial.chunks + g.post.spatial.chunks)
    phase = UNFOLD_PHASE if numeric else FLAT_PHASE
    return [r for r in phase if enabled(r)]


def _order_key(rule_id: str, pre_fp, post_fp):
    return (_ORDER_INDEX.get(rule_id, len(RULE_ORDER)),
            tuple(sorted(pre_fp)), tuple(sorted(post_fp)))


def filter_comm(derivs, trace, cfg: Config):
    """Symmetry reduction: drop an alternative that commutes with the most
    recent rule application but precedes it in the global order."""
    if not cfg.commute or not trace:
        return derivs
    last = trace[-1]
    if last.rule_id not in R.COMMUTING_RULES:
        return derivs
    out = []
    for d in derivs:
        if d.rule_id in R.COMMUTING_RULES \
                and not (d.pre_fp & last.pre_hids) \
                and not (d.post_fp & last.post_hids) \
                and _order_key(d.rule_id, d.pre_fp, d.post_fp) < last.order_key:
            continue
        out.append(d)
    return out


class Engine:
    def __init__(self, cfg: Config, prover: PureProver):
        self.cfg = cfg
        self.pv = prover
        self.deadline = time.monotonic() + cfg.timeout_ms / 1000.0
        self.stats = {"nodes": 0, "alts": 0, "else_attempts": 0}
        self.memo: set[str] = set()

    # -- memoization of failed goals (off by default) ---------------------

    def _memo_key(self, g: Goal) -> str:
        names: dict[str, str] = {}

        def canon(s: str) -> str:
            out = []
            tok = ""
            for ch in s + "\0":
                if ch.isalnum() or ch in "_'":
                    tok += ch
                else:
                    if tok:
                        if tok in names:
                            out.append(names[tok])
                        elif tok[0].isalpha():
                            names[tok] = f"v{len(names)}"
                            out.append(names[tok])
                        else:
                            out.append(tok)
                        tok = ""
                    out.append(ch)
            return "".join(out)

        parts = [",".join(g.env), repr(g.pre), repr(g.post),
                 str(len(g.ctx.funcs))]
        for f in g.ctx.funcs:
            parts.append(repr((f.name, f.params, f.pre, f.post)))
        return canon("|".join(parts))

    # -- the algorithm -----------------------------------------------------

    def solve_goal(self, g: Goal):
        """synthesize(G): run the (phase-restricted) rule list on G."""
        if time.monotonic() > self.deadline:
            raise _Timeout()
        self.stats["nodes"] += 1
        key = None
        if self.cfg.memoize:
            key = self._memo_key(g)
            if key in self.memo:
                return FAIL
        res = self.with_rules(next_rules(g, self.cfg), g)
        if res is FAIL and key is not None:
            self.memo.add(key)
        return res

    def with_rules(self, rs: list[str], g: Goal):
        guarded_fallback = None
        for idx, rule_id in enumerate(rs):
            if time.monotonic() > self.deadline:
                raise _Timeout()
            derivs = _RULE_FNS[rule_id](g, self.pv, self.cfg)
            derivs = filter_comm(derivs, g.trace, self.cfg)
            if not derivs:
                continue
            res = self.try_alts(derivs, rule_id, g)
            if res is FAIL:
                if self.cfg.invertible and rule_id in R.INVERTIBLE_RULES:
                    break
                continue
            prog, tr = res
            if isinstance(prog, Guarded):
                if guarded_fallback is None:
                    guarded_fallback = res
                if self.cfg.invertible and rule_id in R.INVERTIBLE_RULES:
                    break
                continue
            return res
        return guarded_fallback if guarded_fallback is not None else FAIL

    def try_alts(self, derivs, rule_id: str, g: Goal):
        guarded_fallback = None
        for d in derivs:
            self.stats["alts"] += 1
            record = RuleApp(d.rule_id, d.pre_fp, d.post_fp,
                             _order_key(d.rule_id, d.pre_fp, d.post_fp))
            res = self.solve_subgoals(d, g, record)
            if res is FAIL:
                continue
            prog, tr = res
            if isinstance(prog, Magic):
                continue  # spurious solution: treat as failure
            if isinstance(prog, Guarded):
                mat = self.materialize(g, prog, tr)
                if mat is not None:
                    return mat
                if guarded_fallback is None:
                    guarded_fallback = res
                continue
            return res
        return guarded_fallback if guarded_fallback is not None else FAIL

    def solve_subgoals(self, d, g: Goal, record: RuleApp):
        progs = []
        traces = []
        for sub in d.subgoals:
            sub = replace(sub, trace=g.trace + (record,))
            res = self.solve_goal(sub)
            if res is FAIL:
                return FAIL
            progs.append(res[0])
            traces.append(res[1])
        assembled = R.apply_kont(d.kont, progs)
        if assembled is None:
            return FAIL
        return assembled, TraceNode(d.rule_id, tuple(traces))

    def materialize(self, g: Goal, prog: Guarded, tr: TraceNode):
        """Close an abduced guard at this goal by synthesizing the
        else-branch under its negation."""
        if expr_vars(prog.cond) - set(g.env):
            return None
        self.stats["else_attempts"] += 1
        neg = UnOp("not", prog.cond)
        else_goal = replace(
            g, pre=Assertion(conj(g.pre.pure, neg), g.pre.spatial),
            trace=g.trace + (RuleApp("Branch", frozenset(), frozenset(),
                                     _order_key("Branch", (), ())),))
        res = self.solve_goal(else_goal)
        if res is FAIL or isinstance(res[0], (Guarded, Magic)):
            return None
        stmt = If(prog.cond, prog.body, res[0])
        return stmt, TraceNode("Branch", (tr, res[1]))


# ---------------------------------------------------------------------------
# Program finalization.

def eliminate_dead_loads(s: Statement) -> Statement:
    """Drop loads whose destination is never used (to a fixpoint)."""
    while True:
        used = _used_vars(s)
        s2 = _drop_loads(s, used)
        if s2 == s:
            return s
        s = s2


def _used_vars(s: Statement) -> set[str]:
    """Variables read by the program (load destinations excluded)."""
    if isinstance(s, Load):
        return {s.src}
    if isinstance(s, Seq):
        return _used_vars(s.first) | _used_vars(s.rest)
    if isinstance(s, If):
        return expr_vars(s.cond) | _used_vars(s.then) | _used_vars(s.els)
    return stmt_vars(s)


def _drop_loads(s: Statement, used: set[str]) -> Statement:
    if isinstance(s, Load) and s.dst not in used:
        return Skip()
    if isinstance(s, Seq):
        from .lang import seq
        return seq(_drop_loads(s.first, used), _drop_loads(s.rest, used))
    if isinstance(s, If):
        return If(s.cond, _drop_loads(s.then, used), _drop_loads(s.els, used))
    return s


# ---------------------------------------------------------------------------
# Entry point.

def synthesize(goal: Goal, cfg: Config | None = None,
               prover: PureProver | None = None) -> SearchResult:
    """Search for a program solving the goal; every search owns one
    exclusive prover session unless one is passed in."""
    cfg = cfg or Config()
    own_prover = prover is None
    pv = prover or PureProver(list(cfg.smt_cmd) if cfg.smt_cmd else None,
                              cfg.smt_timeout_ms)
    eng = Engine(cfg, pv)
    try:
        res = eng.solve_goal(goal)
    except _Timeout:
        return SearchResult(reason="timeout", stats=eng.stats)
    except SolverUnavailable:
        return SearchResult(reason="solverError", stats=eng.stats)
    finally:
        if own_prover:
            pv.close()
    if res is FAIL or isinstance(res[0], (Guarded, Magic)):
        return SearchResult(reason="exhausted", stats=eng.stats)
    body, trace = res
    body = eliminate_dead_loads(body)
    assert not stmt_contains(body, Magic)
    assert not stmt_contains(body, Guarded)
    params = tuple(zip(goal.env[:len(goal.param_types)], goal.param_types))
    return SearchResult(program=FunDef(goal.fname, params, body),
                        trace=trace, stats=eng.stats)
