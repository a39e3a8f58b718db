"""Synthesis rules: partial functions from a goal to a set of alternative
derivations.  A derivation carries subgoals plus a continuation that
assembles the subgoals' programs into this goal's program.

Rules never mutate their input goal.  Heaplet chunk ids survive into
subgoals wherever a heaplet is untouched, which is what makes footprints
comparable across consecutive rule applications.
"""

from __future__ import annotations

from dataclasses import dataclass

from .lang import (Assertion, BinOp, Block, Call, Chunk, Context, Error,
                   Expr, Free, FunSpec, Goal, Guarded, Heaplet, If, IntConst,
                   Ite, Load, LocConst, Magic, Malloc, PointsTo, PredApp,
                   RuleApp, SemType, SetLit, Skip, Spatial, Statement, Store,
                   Subst, TRUE, UnOp, Var, alloc_chunks, conj, conjuncts,
                   expr_vars, fresh_var, heaplet_vars, seq, subst_assertion,
                   subst_expr, subst_heaplet)
from .prover import PureProver
from .typecheck import SpecTypeError, typecheck_goal
from .unify import find_frames, unify_expr, unify_pure, unify_spatial

# ---------------------------------------------------------------------------
# Derivations and continuations.

KONT_CONST = "const"
KONT_ID = "identity"
KONT_PREPEND = "prepend"
KONT_IF = "if"
KONT_SEQ2 = "seq2"


@dataclass(frozen=True)
class Kont:
    kind: str
    stmt: Statement | None = None
    guards: tuple[Expr, ...] = ()

    @property
    def arity(self) -> int:
        if self.kind == KONT_CONST:
            return 0
        if self.kind == KONT_IF:
            return len(self.guards) + 1
        if self.kind == KONT_SEQ2:
            return 2
        return 1


def bound_vars(s: Statement) -> set[str]:
    """Variables bound (introduced) by a statement."""
    from .lang import Seq
    if isinstance(s, (Load, Malloc)):
        return {s.dst}
    if isinstance(s, Seq):
        return bound_vars(s.first) | bound_vars(s.rest)
    if isinstance(s, If):
        return bound_vars(s.then) | bound_vars(s.els)
    if isinstance(s, Guarded):
        return bound_vars(s.body)
    return set()


def _apply_plain(k: Kont, progs: list[Statement]) -> Statement:
    if k.kind == KONT_CONST:
        return k.stmt
    if k.kind == KONT_ID:
        return progs[0]
    if k.kind == KONT_PREPEND:
        return seq(k.stmt, progs[0])
    if k.kind == KONT_SEQ2:
        return seq(progs[0], progs[1])
    if k.kind == KONT_IF:
        out = progs[-1]
        for g, c in zip(reversed(k.guards), reversed(progs[:-1])):
            out = If(g, c, out)
        return out
    raise ValueError(k.kind)


def apply_kont(k: Kont, progs: list[Statement]) -> Statement | None:
    """Assemble subgoal programs; an abduced-guard marker floats upward
    unless a binder it depends on would be hoisted past.  None = failure."""
    guarded = [i for i, p in enumerate(progs) if isinstance(p, Guarded)]
    if not guarded:
        return _apply_plain(k, progs)
    if len(guarded) > 1:
        return None
    i = guarded[0]
    gp: Guarded = progs[i]
    inner = list(progs)
    inner[i] = gp.body
    assembled = _apply_plain(k, inner)
    before: set[str] = set()
    if k.kind == KONT_PREPEND:
        before = bound_vars(k.stmt)
    elif k.kind == KONT_SEQ2 and i == 1:
        before = bound_vars(progs[0])
    if before & expr_vars(gp.cond):
        return None
    return Guarded(gp.cond, assembled)


@dataclass(frozen=True)
class Derivation:
    subgoals: tuple[Goal, ...]
    kont: Kont
    rule_id: str
    pre_fp: frozenset[int] = frozenset()
    post_fp: frozenset[int] = frozenset()


# Rules whose heaplet-local effect makes consecutive disjoint applications
# commute; only these take part in symmetry reduction.
COMMUTING_RULES = frozenset(
    ["FramePred", "FrameFlat", "Write", "Free", "NullNotLVal", "StarPartial"])

INVERTIBLE_RULES = frozenset(
    ["Read", "SubstLeft", "NullNotLVal", "StarPartial", "Induction",
     "PostInconsistent", "PostInvalid", "UnreachHeap"])


# ---------------------------------------------------------------------------
# Small helpers.

def _child(g: Goal, pre: Assertion, post: Assertion, *, env=None, ctx=None,
           next_hid=None, keep_top=False) -> Goal:
    return Goal(g.fname, ctx if ctx is not None else g.ctx,
                tuple(env) if env is not None else g.env,
                pre, post, trace=g.trace, is_top=keep_top,
                next_hid=next_hid if next_hid is not None else g.next_hid,
                param_types=g.param_types)


def _add_chunks(s: Spatial, heaplets, next_hid: int):
    new = []
    for h in heaplets:
        new.append(Chunk(next_hid, h))
        next_hid += 1
    return Spatial(s.chunks + tuple(new)), next_hid


def _seal_tag(tag, mode: str, max_unfold: int):
    if tag is None or mode == "erase":
        return None
    return min(tag + 1, max_unfold + 1)


def _seal_heaplet(h: Heaplet, mode: str, max_unfold: int) -> Heaplet:
    if isinstance(h, PredApp):
        return PredApp(h.name, h.args, _seal_tag(h.tag, mode, max_unfold))
    return h


def goal_types(g: Goal) -> dict[str, SemType]:
    params = tuple(zip(g.env[:len(g.param_types)], g.param_types))
    try:
        return typecheck_goal(g.ctx, params, g.pre, g.post)
    except SpecTypeError:
        return {}


def _freshen_spec(f: FunSpec, avoid: set[str]) -> FunSpec:
    """Rename all of a function spec's variables away from `avoid`."""
    from .lang import assertion_vars
    names = [n for n, _ in f.params]
    for n in sorted((assertion_vars(f.pre) | assertion_vars(f.post))
                    - set(names)):
        names.append(n)
    ren: Subst = {}
    taken = set(avoid)
    for n in names:
        fresh = fresh_var(n, taken)
        taken.add(fresh)
        ren[n] = Var(fresh)
    params = tuple((ren[n].name, t) for n, t in f.params)
    return FunSpec(f.name, params, subst_assertion(ren, f.pre),
                   subst_assertion(ren, f.post), f.from_induction)


def _kind_view(s: Spatial, kind: str) -> Spatial:
    if kind == "predicates":
        return Spatial(tuple(c for c in s.chunks if isinstance(c.h, PredApp)))
    return Spatial(tuple(c for c in s.chunks
                         if isinstance(c.h, (PointsTo, Block))))


# ---------------------------------------------------------------------------
# Terminals.

def try_emp(g: Goal, pv: PureProver, cfg) -> list[Derivation]:
    if not (g.pre.spatial.is_emp() and g.post.spatial.is_emp()):
        return []
    if g.existentials():
        return []
    if not pv.is_valid(g.pre.pure, g.post.pure):
        return []
    return [Derivation((), Kont(KONT_CONST, Skip()), "Emp")]


def try_inconsistency(g: Goal, pv: PureProver, cfg) -> list[Derivation]:
    if pv.is_consistent(g.pre.pure):
        return []
    return [Derivation((), Kont(KONT_CONST, Error()), "Inconsistency")]


# ---------------------------------------------------------------------------
# Normalization.

def try_read(g: Goal, pv, cfg) -> list[Derivation]:
    out = []
    ghosts = g.ghosts()
    env = set(g.env)
    for c in g.pre.spatial.chunks:
        h = c.h
        if not isinstance(h, PointsTo):
            continue
        if not (isinstance(h.src, Var) and h.src.name in env):
            continue
        if not (isinstance(h.val, Var) and h.val.name in ghosts):
            continue
        y = g.fresh(h.val.name)
        ren = {h.val.name: Var(y)}
        sub = _child(g, subst_assertion(ren, g.pre),
                     subst_assertion(ren, g.post), env=g.env + (y,))
        out.append(Derivation(
            (sub,), Kont(KONT_PREPEND, Load(y, h.src.name, h.off)), "Read",
            frozenset([c.hid]), frozenset()))
    return out


def try_subst_left(g: Goal, pv: PureProver, cfg) -> list[Derivation]:
    env = set(g.env)
    ghosts = g.ghosts()
    ex = g.existentials()
    cands: list[tuple[str, Expr]] = []
    for c in conjuncts(g.pre.pure):
        if not (isinstance(c, BinOp) and c.op == "eq"):
            continue
        for x, e in ((c.left, c.right), (c.right, c.left)):
            if not isinstance(x, Var) or e == x:
                continue
            if x.name in expr_vars(e):
                continue
            if x.name in ghosts:
                if expr_vars(e) & ex:
                    continue
                cands.append((x.name, e))
            elif x.name in env:
                if isinstance(e, (IntConst, LocConst)) or \
                        (isinstance(e, Var) and e.name in env):
                    cands.append((x.name, e))
    cands.sort(key=lambda xe: xe[0] not in ghosts)  # ghosts first
    out = []
    seen = set()
    all_pre = frozenset(c.hid for c in g.pre.spatial.chunks)
    all_post = frozenset(c.hid for c in g.post.spatial.chunks)
    for x, e in cands:
        if (x, repr(e)) in seen:
            continue
        seen.add((x, repr(e)))
        if not pv.is_valid(g.pre.pure, BinOp("eq", Var(x), e)):
            continue
        ren = {x: e}
        sub = _child(g, subst_assertion(ren, g.pre),
                     subst_assertion(ren, g.post))
        out.append(Derivation((sub,), Kont(KONT_ID), "SubstLeft",
                              all_pre, all_post))
    return out


def _has_conjunct(pure: Expr, want: Expr) -> bool:
    return repr(want) in {repr(c) for c in conjuncts(pure)}


def _neq_recorded(pure: Expr, a: Expr, b: Expr) -> bool:
    return _has_conjunct(pure, UnOp("not", BinOp("eq", a, b))) or \
        _has_conjunct(pure, UnOp("not", BinOp("eq", b, a)))


def try_null_not_lval(g: Goal, pv, cfg) -> list[Derivation]:
    out = []
    zero = IntConst(0)
    for c in g.pre.spatial.chunks:
        h = c.h
        if not (isinstance(h, PointsTo) and isinstance(h.src, Var)):
            continue
        if _neq_recorded(g.pre.pure, h.src, zero):
            continue
        neq = UnOp("not", BinOp("eq", h.src, zero))
        sub = _child(g, Assertion(conj(g.pre.pure, neq), g.pre.spatial),
                     g.post)
        out.append(Derivation((sub,), Kont(KONT_ID), "NullNotLVal",
                              frozenset([c.hid]), frozenset()))
    return out


def try_star_partial(g: Goal, pv, cfg) -> list[Derivation]:
    out = []
    chunks = g.pre.spatial.chunks
    for i, c1 in enumerate(chunks):
        for c2 in chunks[i + 1:]:
            h1, h2 = c1.h, c2.h
            if not (isinstance(h1, PointsTo) and isinstance(h2, PointsTo)):
                continue
            if h1.off != h2.off or h1.src == h2.src:
                continue
            if not (isinstance(h1.src, Var) and isinstance(h2.src, Var)):
                continue
            a, b = sorted([h1.src, h2.src], key=lambda v: v.name)
            if _neq_recorded(g.pre.pure, a, b):
                continue
            neq = UnOp("not", BinOp("eq", a, b))
            sub = _child(g, Assertion(conj(g.pre.pure, neq), g.pre.spatial),
                         g.post)
            out.append(Derivation((sub,), Kont(KONT_ID), "StarPartial",
                                  frozenset([c1.hid, c2.hid]), frozenset()))
    return out


# ---------------------------------------------------------------------------
# Flat rules.

def try_write(g: Goal, pv, cfg) -> list[Derivation]:
    out = []
    env = set(g.env)
    for qc in g.post.spatial.chunks:
        qh = qc.h
        if not isinstance(qh, PointsTo):
            continue
        if expr_vars(qh.val) - env:
            continue
        if not (isinstance(qh.src, Var) and qh.src.name in env):
            continue
        for pc in g.pre.spatial.chunks:
            ph = pc.h
            if not isinstance(ph, PointsTo):
                continue
            if ph.src != qh.src or ph.off != qh.off:
                continue
            if ph.val == qh.val:
                continue  # self-write suppressed; Frame covers it
            new_pre = Spatial(tuple(
                Chunk(c.hid, PointsTo(ph.src, ph.off, qh.val))
                if c.hid == pc.hid else c
                for c in g.pre.spatial.chunks))
            sub = _child(g, Assertion(g.pre.pure, new_pre), g.post)
            out.append(Derivation(
                (sub,), Kont(KONT_PREPEND, Store(qh.src.name, qh.off, qh.val)),
                "Write", frozenset([pc.hid]), frozenset([qc.hid])))
    return out


def try_frame(g: Goal, kind: str, pv, cfg) -> list[Derivation]:
    rule_id = "FramePred" if kind == "predicates" else "FrameFlat"
    ex = g.existentials()
    out = []
    for pc, qc in find_frames(g.pre.spatial, g.post.spatial, kind):
        if ex & heaplet_vars(pc.h):
            continue
        sub = _child(g,
                     Assertion(g.pre.pure, g.pre.spatial.without({pc.hid})),
                     Assertion(g.post.pure, g.post.spatial.without({qc.hid})))
        out.append(Derivation((sub,), Kont(KONT_ID), rule_id,
                              frozenset([pc.hid]), frozenset([qc.hid])))
    return out


def try_unify_heaps(g: Goal, kind: str, pv, cfg) -> list[Derivation]:
    rule_id = "UnifyHeapsPred" if kind == "predicates" else "UnifyHeapsFlat"
    ex = g.existentials()
    if not ex:
        return []
    out = []
    target = _kind_view(g.pre.spatial, kind)
    source = _kind_view(g.post.spatial, kind)
    for res in unify_spatial(target, source, ex, tag_mode="blind"):
        if not res.sigma:
            continue
        sub = _child(g, g.pre, subst_assertion(res.sigma, g.post))
        out.append(Derivation(
            (sub,), Kont(KONT_ID), rule_id,
            frozenset(c.hid for c in res.matched_target),
            frozenset(c.hid for c in res.matched_source)))
    return out


def _block_cells(s: Spatial, root: Expr, size: int):
    """Chunks of the `size` companion cells of a block, or None."""
    cells = []
    for i in range(size):
        found = None
        for c in s.chunks:
            if isinstance(c.h, PointsTo) and c.h.src == root and c.h.off == i:
                found = c
                break
        if found is None:
            return None
        cells.append(found)
    return cells


def try_alloc(g: Goal, pv, cfg) -> list[Derivation]:
    out = []
    ex = g.existentials()
    for bc in g.post.spatial.chunks:
        bh = bc.h
        if not isinstance(bh, Block):
            continue
        if not (isinstance(bh.root, Var) and bh.root.name in ex):
            continue
        cells = _block_cells(g.post.spatial, bh.root, bh.size)
        if cells is None:
            continue
        y = g.fresh(bh.root.name)
        taken = {y}
        ghosts = []
        for _ in range(bh.size):
            t = g.fresh("t", taken)
            taken.add(t)
            ghosts.append(t)
        new_heaplets = [Block(Var(y), bh.size)] + \
            [PointsTo(Var(y), i, Var(t)) for i, t in enumerate(ghosts)]
        new_pre_sp, nxt = _add_chunks(g.pre.spatial, new_heaplets, g.next_hid)
        sub = _child(g, Assertion(g.pre.pure, new_pre_sp), g.post,
                     env=g.env + (y,), next_hid=nxt)
        out.append(Derivation(
            (sub,), Kont(KONT_PREPEND, Malloc(y, bh.size)), "Alloc",
            frozenset(), frozenset([bc.hid] + [c.hid for c in cells])))
    return out


def try_free(g: Goal, pv, cfg) -> list[Derivation]:
    out = []
    env = set(g.env)
    for bc in g.pre.spatial.chunks:
        bh = bc.h
        if not isinstance(bh, Block):
            continue
        if not (isinstance(bh.root, Var) and bh.root.name in env):
            continue
        cells = _block_cells(g.pre.spatial, bh.root, bh.size)
        if cells is None:
            continue
        if any(expr_vars(c.h.val) - env for c in cells):
            continue
        removed = {bc.hid} | {c.hid for c in cells}
        sub = _child(g,
                     Assertion(g.pre.pure, g.pre.spatial.without(removed)),
                     g.post)
        out.append(Derivation(
            (sub,), Kont(KONT_PREPEND, Free(bh.root.name)), "Free",
            frozenset(removed), frozenset()))
    return out


# ---------------------------------------------------------------------------
# Unfolding rules.

def try_induction(g: Goal, pv, cfg) -> list[Derivation]:
    if not g.is_top:
        return []
    if any(f.from_induction for f in g.ctx.funcs):
        return []
    out = []
    mode = cfg.aux_call_tag_mode
    for c in g.pre.spatial.chunks:
        h = c.h
        if not (isinstance(h, PredApp) and h.tag == 0):
            continue
        hyp_pre = []
        for c2 in g.pre.spatial.chunks:
            if c2.hid == c.hid:
                hyp_pre.append(PredApp(h.name, h.args, 1))
            else:
                hyp_pre.append(_seal_heaplet(c2.h, mode, cfg.max_unfold))
        hyp_post = [_seal_heaplet(c2.h, mode, cfg.max_unfold)
                    for c2 in g.post.spatial.chunks]
        pre_chunks, nxt = alloc_chunks(hyp_pre, 0)
        post_chunks, _ = alloc_chunks(hyp_post, nxt)
        raw = FunSpec(g.fname,
                      tuple(zip(g.env[:len(g.param_types)], g.param_types)),
                      Assertion(g.pre.pure, Spatial(pre_chunks)),
                      Assertion(g.post.pure, Spatial(post_chunks)),
                      from_induction=True)
        hyp = _freshen_spec(raw, g.all_vars())
        sub = _child(g, g.pre, g.post, ctx=g.ctx.with_fun(hyp), keep_top=True)
        out.append(Derivation((sub,), Kont(KONT_ID), "Induction",
                              frozenset([c.hid]), frozenset()))
    return out


def _instantiate_clause(pred, j: int, sigma0: Subst, new_tag: int,
                        taken: set[str]):
    """Clause body with formals substituted and locals freshened."""
    cl = pred.clauses[j]
    ren = dict(sigma0)
    for loc in pred.clause_locals(j):
        f = fresh_var(loc, taken)
        taken.add(f)
        ren[loc] = Var(f)
    sel = subst_expr(ren, cl.selector)
    pure = subst_expr(ren, cl.pure)
    heaplets = []
    for h in cl.spatial:
        h2 = subst_heaplet(ren, h)
        if isinstance(h2, PredApp):
            h2 = PredApp(h2.name, h2.args, new_tag)
        heaplets.append(h2)
    return sel, pure, heaplets


def try_open(g: Goal, pv, cfg) -> list[Derivation]:
    out = []
    env = set(g.env)
    mode = cfg.aux_call_tag_mode
    for c in g.pre.spatial.chunks:
        h = c.h
        if not isinstance(h, PredApp) or h.tag is None:
            continue
        if h.tag >= cfg.max_unfold or not g.ctx.has_pred(h.name):
            continue
        arg_vars = set()
        for a in h.args:
            arg_vars |= expr_vars(a)
        if arg_vars - env:
            continue
        pred = g.ctx.pred(h.name)
        sigma0 = {n: a for (n, _), a in zip(pred.params, h.args)}
        guards = []
        subgoals = []
        fp = {c.hid}
        nxt = g.next_hid
        for j in range(len(pred.clauses)):
            taken = set(g.all_vars())
            sel, pure, heaplets = _instantiate_clause(
                pred, j, sigma0, h.tag + 1, taken)
            rest = []
            for c2 in g.pre.spatial.chunks:
                if c2.hid == c.hid:
                    continue
                nh = _seal_heaplet(c2.h, mode, cfg.max_unfold)
                if isinstance(c2.h, PredApp) and nh != c2.h:
                    fp.add(c2.hid)
                rest.append(Chunk(c2.hid, nh))
            sp, nxt = _add_chunks(Spatial(tuple(rest)), heaplets, nxt)
            sub = _child(g, Assertion(conj(g.pre.pure, sel, pure), sp),
                         g.post, next_hid=nxt)
            subgoals.append(sub)
            guards.append(sel)
        out.append(Derivation(tuple(subgoals),
                              Kont(KONT_IF, guards=tuple(guards[:-1])),
                              "Open", frozenset(fp), frozenset()))
    return out


def try_close(g: Goal, pv, cfg) -> list[Derivation]:
    out = []
    for c in g.post.spatial.chunks:
        h = c.h
        if not isinstance(h, PredApp) or h.tag is None:
            continue
        if h.tag >= cfg.max_unfold or not g.ctx.has_pred(h.name):
            continue
        pred = g.ctx.pred(h.name)
        sigma0 = {n: a for (n, _), a in zip(pred.params, h.args)}
        for j in range(len(pred.clauses)):
            taken = set(g.all_vars())
            sel, pure, heaplets = _instantiate_clause(
                pred, j, sigma0, h.tag + 1, taken)
            base = Spatial(tuple(c2 for c2 in g.post.spatial.chunks
                                 if c2.hid != c.hid))
            sp, nxt = _add_chunks(base, heaplets, g.next_hid)
            sub = _child(g, g.pre,
                         Assertion(conj(g.post.pure, sel, pure), sp),
                         next_hid=nxt)
            out.append(Derivation((sub,), Kont(KONT_ID), "Close",
                                  frozenset(), frozenset([c.hid])))
    return out


# ---------------------------------------------------------------------------
# Calls.

def _call_candidates(g: Goal, f: FunSpec, cfg, types: dict[str, SemType],
                     pred_only: bool):
    """Unifications of f's spatial pre against the goal pre, with unbound
    formals enumerated over same-typed program variables.  The recursion
    hypothesis is matched with exact tags; auxiliary specs accept any
    numeric level (erased instances still only match erased ones)."""
    fr = _freshen_spec(f, g.all_vars())
    from .lang import assertion_vars
    spec_vars = {n for n, _ in fr.params} \
        | assertion_vars(fr.pre) | assertion_vars(fr.post)
    tag_mode = "aware" if f.from_induction else "aware_numeric"
    source = _kind_view(fr.pre.spatial, "predicates") if pred_only \
        else fr.pre.spatial
    if not source.chunks:
        return
    try:
        spec_types = typecheck_goal(g.ctx, fr.params, fr.pre, fr.post)
    except SpecTypeError:
        return
    for res in unify_spatial(g.pre.spatial, source, spec_vars,
                             tag_mode=tag_mode, full_source=True):
        sigmas = [res.sigma]
        for pname, _ in fr.params:
            if pname in sigmas[0]:
                continue
            want = spec_types.get(pname, SemType.INT)
            grown = []
            for s in sigmas:
                for v in g.env:
                    if types.get(v, SemType.INT) == want:
                        s2 = dict(s)
                        s2[pname] = Var(v)
                        grown.append(s2)
            sigmas = grown
            if not sigmas:
                break
        for sigma in sigmas:
            yield fr, sigma, res, spec_types


def try_call(g: Goal, pv: PureProver, cfg) -> list[Derivation]:
    out = []
    env = set(g.env)
    types = goal_types(g)
    for f in g.ctx.funcs:
        for fr, sigma, res, _ in _call_candidates(g, f, cfg, types,
                                                  pred_only=False):
            if expr_vars(fr.pre.pure) - set(sigma):
                continue  # pure-only ghosts left unbound
            args = tuple(subst_expr(sigma, Var(n)) for n, _ in fr.params)
            arg_vars = set()
            for a in args:
                arg_vars |= expr_vars(a)
            if arg_vars - env:
                continue
            if not pv.is_valid(g.pre.pure, subst_expr(sigma, fr.pre.pure)):
                continue
            post_vars = expr_vars(fr.post.pure)
            for h in fr.post.spatial.heaplets:
                post_vars |= heaplet_vars(h)
            taken = set(g.all_vars())
            sigma2 = dict(sigma)
            for n in sorted(post_vars - set(sigma)):
                fv = fresh_var(n, taken)
                taken.add(fv)
                sigma2[n] = Var(fv)
            result = []
            exceeded = False
            for h in fr.post.spatial.heaplets:
                h2 = subst_heaplet(sigma2, h)
                if isinstance(h2, PredApp):
                    if cfg.aux_call_tag_mode == "increment" \
                            and h2.tag is not None:
                        if h2.tag + 1 > cfg.max_unfold + 1:
                            exceeded = True
                            break
                        h2 = PredApp(h2.name, h2.args, h2.tag + 1)
                    else:
                        h2 = PredApp(h2.name, h2.args, None)
                result.append(h2)
            if exceeded:
                continue
            removed = {c.hid for c in res.matched_target}
            sp, nxt = _add_chunks(g.pre.spatial.without(removed), result,
                                  g.next_hid)
            new_pure = conj(g.pre.pure, subst_expr(sigma2, fr.post.pure))
            sub = _child(g, Assertion(new_pure, sp), g.post, next_hid=nxt)
            out.append(Derivation(
                (sub,), Kont(KONT_PREPEND, Call(fr.name, args)), "Call",
                frozenset(removed), frozenset()))
    return out


def _skeleton_matches(flat_chunks, goal_chunks, spec_vars, sigma):
    """Injective maps of callee flat heaplets onto goal heaplets with the
    same shape (source/offset/size); stored values stay free."""
    def go(i, used, s, pairs):
        if i == len(flat_chunks):
            yield s, list(pairs)
            return
        fc = flat_chunks[i]
        for qc in goal_chunks:
            if qc.hid in used:
                continue
            s2 = None
            if isinstance(fc.h, PointsTo) and isinstance(qc.h, PointsTo) \
                    and fc.h.off == qc.h.off:
                s2 = unify_expr(fc.h.src, qc.h.src, spec_vars, s)
            elif isinstance(fc.h, Block) and isinstance(qc.h, Block) \
                    and fc.h.size == qc.h.size:
                s2 = unify_expr(fc.h.root, qc.h.root, spec_vars, s)
            if s2 is not None:
                yield from go(i + 1, used | {qc.hid}, s2, pairs + [(fc, qc)])
    yield from go(0, set(), sigma, [])


def _bind_leftover_values(fr, sigma, flat_chunks, g, types, spec_types):
    """Bind callee pre-cell values the predicate part did not fix, ranging
    over same-typed program variables."""
    unbound = []
    for fc in flat_chunks:
        if isinstance(fc.h, PointsTo):
            for v in sorted(expr_vars(fc.h.val)):
                if v not in sigma and v not in unbound:
                    unbound.append(v)
    out = [dict(sigma)]
    for v in unbound:
        want = spec_types.get(v, SemType.INT)
        grown = []
        for s in out:
            for w in g.env:
                if types.get(w, SemType.INT) == want:
                    s2 = dict(s)
                    s2[v] = Var(w)
                    grown.append(s2)
        out = grown
        if not out:
            return []
    return out


def try_abduce_call(g: Goal, pv: PureProver, cfg) -> list[Derivation]:
    out = []
    types = goal_types(g)
    for f in g.ctx.funcs:
        if all(isinstance(h, PredApp) for h in f.pre.spatial.heaplets):
            continue  # no flat part: plain Call covers it
        for fr, sigma, res, spec_types in _call_candidates(
                g, f, cfg, types, pred_only=True):
            matched = {c.hid for c in res.matched_target}
            flat_chunks = [c for c in fr.pre.spatial.chunks
                           if not isinstance(c.h, PredApp)]
            remaining = [c for c in g.pre.spatial.chunks
                         if c.hid not in matched
                         and not isinstance(c.h, PredApp)]
            from .lang import assertion_vars
            spec_vars = {n for n, _ in fr.params} \
                | assertion_vars(fr.pre) | assertion_vars(fr.post)
            for sigma1, pairs in _skeleton_matches(flat_chunks, remaining,
                                                   spec_vars, sigma):
                for sigma2 in _bind_leftover_values(
                        fr, sigma1, flat_chunks, g, types, spec_types):
                    goal_chunks = [qc for _, qc in pairs]
                    f_moved = [subst_heaplet(sigma2, fc.h)
                               for fc, _ in pairs]
                    if [qc.h for qc in goal_chunks] == f_moved:
                        continue  # already call-ready
                    fp = frozenset(matched | {qc.hid for qc in goal_chunks})
                    sub1_post, nxt = _add_chunks(Spatial(), f_moved,
                                                 g.next_hid)
                    sub1 = _child(g,
                                  Assertion(g.pre.pure,
                                            Spatial(tuple(goal_chunks))),
                                  Assertion(g.pre.pure, sub1_post),
                                  next_hid=nxt)
                    rest = g.pre.spatial.without(
                        {qc.hid for qc in goal_chunks})
                    sp2, nxt2 = _add_chunks(rest, f_moved, nxt)
                    sub2 = _child(g, Assertion(g.pre.pure, sp2), g.post,
                                  next_hid=nxt2)
                    out.append(Derivation((sub1, sub2), Kont(KONT_SEQ2),
                                          "AbduceCall", fp, frozenset()))
    return out


# ---------------------------------------------------------------------------
# Pure synthesis.

def try_subst_right(g: Goal, pv, cfg) -> list[Derivation]:
    out = []
    ex = g.existentials()
    cs = conjuncts(g.post.pure)
    for i, c in enumerate(cs):
        if not (isinstance(c, BinOp) and c.op in ("eq", "seteq")):
            continue
        for x, e in ((c.left, c.right), (c.right, c.left)):
            if not (isinstance(x, Var) and x.name in ex):
                continue
            if x.name in expr_vars(e):
                continue
            rest = conj(*(cc for k, cc in enumerate(cs) if k != i))
            new_post = subst_assertion({x.name: e},
                                       Assertion(rest, g.post.spatial))
            sub = _child(g, g.pre, new_post)
            out.append(Derivation((sub,), Kont(KONT_ID), "SubstRight",
                                  frozenset(), frozenset()))
            break
    return out


def try_unify_pure(g: Goal, pv, cfg) -> list[Derivation]:
    ex = g.existentials()
    if not ex:
        return []
    out = []
    for sigma in unify_pure(conjuncts(g.pre.pure), conjuncts(g.post.pure), ex):
        sub = _child(g, g.pre, subst_assertion(sigma, g.post))
        out.append(Derivation((sub,), Kont(KONT_ID), "UnifyPure",
                              frozenset(), frozenset()))
    return out


def try_pick(g: Goal, pv, cfg) -> list[Derivation]:
    ex = sorted(g.existentials())
    if not ex:
        return []
    types = goal_types(g)
    ghosts = sorted(g.ghosts())
    out = []
    for y in ex:
        want = types.get(y, SemType.INT)
        for cand in list(g.env) + ghosts:
            if cand == y or types.get(cand, SemType.INT) != want:
                continue
            sub = _child(g, g.pre, subst_assertion({y: Var(cand)}, g.post))
            out.append(Derivation((sub,), Kont(KONT_ID), "Pick",
                                  frozenset(), frozenset()))
    return out


# ---------------------------------------------------------------------------
# Failure rules and branch abduction.

def _int_literals(g: Goal) -> set[int]:
    out: set[int] = set()

    def visit(e: Expr):
        if isinstance(e, IntConst):
            out.add(e.value)
        elif isinstance(e, BinOp):
            visit(e.left)
            visit(e.right)
        elif isinstance(e, UnOp):
            visit(e.arg)
        elif isinstance(e, Ite):
            visit(e.cond)
            visit(e.then)
            visit(e.els)
        elif isinstance(e, SetLit):
            for x in e.elems:
                visit(x)

    visit(g.pre.pure)
    visit(g.post.pure)
    return out


def _atomic_guards(g: Goal, types: dict[str, SemType]):
    """Candidate branch guards: comparisons over program variables and the
    goal's integer literals (plus 0)."""
    ints = [v for v in g.env if types.get(v, SemType.INT) == SemType.INT]
    locs = [v for v in g.env if types.get(v) == SemType.LOC]
    lits = sorted({0} | _int_literals(g))
    for i, x in enumerate(ints):
        for y in ints[i + 1:]:
            yield BinOp("eq", Var(x), Var(y))
            yield BinOp("leq", Var(x), Var(y))
            yield BinOp("leq", Var(y), Var(x))
            yield BinOp("lt", Var(x), Var(y))
            yield BinOp("lt", Var(y), Var(x))
    for i, x in enumerate(locs):
        for y in locs[i + 1:]:
            yield BinOp("eq", Var(x), Var(y))
    for x in ints:
        for k in lits:
            yield BinOp("eq", Var(x), IntConst(k))
            yield BinOp("leq", Var(x), IntConst(k))
            yield BinOp("leq", IntConst(k), Var(x))
    for x in locs:
        yield BinOp("eq", Var(x), IntConst(0))


def _post_invalid_trigger(g: Goal, pv: PureProver) -> bool:
    if any(isinstance(c.h, PredApp) for c in g.pre.spatial.chunks):
        return False
    if g.existentials():
        return False
    return not pv.is_valid(g.pre.pure, g.post.pure)


def abducible_guard(g: Goal, pv: PureProver) -> Expr | None:
    """First atomic guard making the pure post follow from the pre."""
    types = goal_types(g)
    for gamma in _atomic_guards(g, types):
        if not pv.is_consistent(conj(g.pre.pure, gamma)):
            continue
        if pv.is_valid(conj(g.pre.pure, gamma), g.post.pure):
            return gamma
    return None


def try_failure(g: Goal, pv: PureProver, cfg) -> list[Derivation]:
    """Early failure rules; each emits the spurious terminal `magic`.
    Only sound after Inconsistency has been found inapplicable."""
    if not pv.is_consistent(conj(g.pre.pure, g.post.pure)):
        return [Derivation((), Kont(KONT_CONST, Magic()), "PostInconsistent")]
    if _post_invalid_trigger(g, pv):
        # abducible goals are left to the branch rule
        if abducible_guard(g, pv) is None:
            return [Derivation((), Kont(KONT_CONST, Magic()), "PostInvalid")]
    if _unreachable_heap(g, pv):
        return [Derivation((), Kont(KONT_CONST, Magic()), "UnreachHeap")]
    return []


def _unreachable_heap(g: Goal, pv: PureProver) -> bool:
    pre = g.pre.spatial.heaplets
    post = g.post.spatial.heaplets
    if not pre and not post:
        return False
    if not all(isinstance(h, PointsTo) for h in pre + post):
        return False
    rigid = set(g.env)

    def wildcard(e: Expr) -> bool:
        return isinstance(e, Var) and e.name not in rigid

    def lhs_unifiable(h1: PointsTo, h2: PointsTo) -> bool:
        if wildcard(h1.src) or wildcard(h2.src):
            return True
        if h1.off != h2.off:
            return False
        if h1.src == h2.src:
            return True
        return pv.is_valid(g.pre.pure, BinOp("eq", h1.src, h2.src))

    for h in post:
        if not any(lhs_unifiable(h, h2) for h2 in pre):
            return True
    for h in pre:
        if not any(lhs_unifiable(h, h2) for h2 in post):
            return True
    return False


def try_branch_abduction(g: Goal, pv: PureProver, cfg) -> list[Derivation]:
    if not _post_invalid_trigger(g, pv):
        return []
    gamma = abducible_guard(g, pv)
    if gamma is None:
        return []
    return [Derivation((), Kont(KONT_CONST, Guarded(gamma, Skip())), "Branch")]
