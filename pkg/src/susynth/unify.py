"""Spatial and pure unification.

Substitutions bind only caller-supplied variables (the `allowed` set, on
the source side) and only to terms occurring in the target, by decomposing
the two sides in lockstep.  Spatial matchings are enumerated largest
sub-heap first, then by heaplet index, so searches are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

from .lang import (BinOp, Block, Chunk, Expr, Heaplet, Ite, PointsTo,
                   PredApp, SetLit, Spatial, Subst, UnOp, Var, subst_expr,
                   subst_heaplet)

# Tag comparison modes for predicate instances:
#   blind          - tags ignored
#   aware          - tags must be identical
#   aware_numeric  - erased matches erased; numeric matches any numeric
#                    (used when matching auxiliary function specs)
TAG_MODES = ("blind", "aware", "aware_numeric")


def _tags_match(t1, t2, mode: str) -> bool:
    if mode == "blind":
        return True
    if mode == "aware":
        return t1 == t2
    if mode == "aware_numeric":
        return (t1 is None) == (t2 is None)
    raise ValueError(mode)


def unify_expr(source: Expr, target: Expr, allowed: set[str],
               sigma: Subst) -> Subst | None:
    """Extend sigma so that [sigma]source == target, or return None."""
    src = subst_expr(sigma, source)
    if src == target:
        return sigma
    if isinstance(src, Var) and src.name in allowed:
        out = dict(sigma)
        out[src.name] = target
        return out
    if isinstance(src, BinOp) and isinstance(target, BinOp) \
            and src.op == target.op:
        s1 = unify_expr(src.left, target.left, allowed, sigma)
        if s1 is None:
            return None
        return unify_expr(src.right, target.right, allowed, s1)
    if isinstance(src, UnOp) and isinstance(target, UnOp) \
            and src.op == target.op:
        return unify_expr(src.arg, target.arg, allowed, sigma)
    if isinstance(src, SetLit) and isinstance(target, SetLit) \
            and len(src.elems) == len(target.elems):
        for a, b in zip(src.elems, target.elems):
            sigma = unify_expr(a, b, allowed, sigma)
            if sigma is None:
                return None
        return sigma
    if isinstance(src, Ite) and isinstance(target, Ite):
        for a, b in ((src.cond, target.cond), (src.then, target.then),
                     (src.els, target.els)):
            sigma = unify_expr(a, b, allowed, sigma)
            if sigma is None:
                return None
        return sigma
    return None


def unify_heaplet(source: Heaplet, target: Heaplet, allowed: set[str],
                  sigma: Subst, tag_mode: str) -> Subst | None:
    if isinstance(source, PointsTo) and isinstance(target, PointsTo):
        if source.off != target.off:
            return None
        s1 = unify_expr(source.src, target.src, allowed, sigma)
        if s1 is None:
            return None
        return unify_expr(source.val, target.val, allowed, s1)
    if isinstance(source, Block) and isinstance(target, Block):
        if source.size != target.size:
            return None
        return unify_expr(source.root, target.root, allowed, sigma)
    if isinstance(source, PredApp) and isinstance(target, PredApp):
        if source.name != target.name or len(source.args) != len(target.args):
            return None
        if not _tags_match(source.tag, target.tag, tag_mode):
            return None
        for a, b in zip(source.args, target.args):
            sigma = unify_expr(a, b, allowed, sigma)
            if sigma is None:
                return None
        return sigma
    return None


@dataclass(frozen=True)
class UnifResult:
    sigma: Subst
    matched_target: tuple[Chunk, ...]
    matched_source: tuple[Chunk, ...]


def unify_spatial(target: Spatial, source: Spatial, allowed: set[str],
                  tag_mode: str = "blind", full_source: bool = False
                  ) -> Iterator[UnifResult]:
    """All matchings of sub-multisets of `source` against `target`.

    Yields substitutions over `allowed` making the matched source heaplets
    syntactically equal to their targets.  With full_source=True only
    matchings covering every source heaplet are produced (the Call rule's
    shape of unification).
    """
    assert tag_mode in TAG_MODES
    src = list(source.chunks)
    tgt = list(target.chunks)
    results: list[tuple[tuple, UnifResult]] = []

    def go(i: int, used: set[int], sigma: Subst,
           picked: list[tuple[Chunk, Chunk]]):
        if i == len(src):
            if not picked:
                return
            if full_source and len(picked) != len(src):
                return
            m_src = tuple(p[0] for p in picked)
            m_tgt = tuple(p[1] for p in picked)
            key = (-len(picked),
                   tuple(c.hid for c in m_tgt), tuple(c.hid for c in m_src))
            results.append((key, UnifResult(sigma, m_tgt, m_src)))
            return
        chunk = src[i]
        for j, tchunk in enumerate(tgt):
            if j in used:
                continue
            s1 = unify_heaplet(chunk.h, tchunk.h, allowed, sigma, tag_mode)
            if s1 is not None:
                go(i + 1, used | {j}, s1, picked + [(chunk, tchunk)])
        if not full_source:
            go(i + 1, used, sigma, picked)

    go(0, set(), {}, [])
    results.sort(key=lambda kv: kv[0])
    seen = set()
    for key, res in results:
        fp = (tuple(sorted((k, repr(v)) for k, v in res.sigma.items())),
              tuple(c.hid for c in res.matched_target),
              tuple(c.hid for c in res.matched_source))
        if fp in seen:
            continue
        seen.add(fp)
        yield res


def unify_pure(target_conjuncts: list[Expr], source_conjuncts: list[Expr],
               allowed: set[str]) -> Iterator[Subst]:
    """First-order unification of single source conjuncts against single
    target conjuncts; only nonempty substitutions are produced."""
    seen = set()
    for sc in source_conjuncts:
        for tc in target_conjuncts:
            sigma = unify_expr(sc, tc, allowed, {})
            if sigma:
                key = tuple(sorted((k, repr(v)) for k, v in sigma.items()))
                if key not in seen:
                    seen.add(key)
                    yield sigma


def find_frames(pre: Spatial, post: Spatial, kind: str
                ) -> Iterator[tuple[Chunk, Chunk]]:
    """Pairs (pre chunk, post chunk) equal modulo tags, filtered by kind:
    'predicates' keeps PredApp heaplets, 'flat' keeps points-to and blocks."""
    from .lang import strip_tag

    def keep(h: Heaplet) -> bool:
        if kind == "predicates":
            return isinstance(h, PredApp)
        if kind == "flat":
            return isinstance(h, (PointsTo, Block))
        raise ValueError(kind)

    used_post: set[int] = set()
    for pc in pre.chunks:
        if not keep(pc.h):
            continue
        for qc in post.chunks:
            if qc.hid in used_post or not keep(qc.h):
                continue
            if strip_tag(pc.h) == strip_tag(qc.h):
                yield (pc, qc)
                used_post.add(qc.hid)
                break
