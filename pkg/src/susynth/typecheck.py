"""Simple type inference for specs: loc / int / bool / set.

Types are inferred by unification from usage; value cells left
unconstrained default to int so the interpreter stays total.
"""

from __future__ import annotations

from .lang import (Assertion, BinOp, Block, BoolConst, Context, Expr,
                   InductivePredicate, IntConst, Ite, LocConst, PointsTo,
                   PredApp, SemType, SetLit, Spatial, UnOp, Var)


class SpecTypeError(Exception):
    def __init__(self, name: str, conflict: str):
        super().__init__(f"type error at '{name}': {conflict}")
        self.name = name
        self.conflict = conflict


class _Inference:
    """Union-find over variable names with optional concrete types."""

    def __init__(self):
        self.parent: dict[str, str] = {}
        self.ty: dict[str, SemType | None] = {}

    def _find(self, x: str) -> str:
        self.parent.setdefault(x, x)
        self.ty.setdefault(x, None)
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def fresh(self, hint: str) -> str:
        k = 0
        while f"${hint}.{k}" in self.parent:
            k += 1
        name = f"${hint}.{k}"
        self.parent[name] = name
        self.ty[name] = None
        return name

    def assign(self, x: str, t: SemType):
        r = self._find(x)
        cur = self.ty[r]
        if cur is None:
            self.ty[r] = t
        elif cur != t:
            raise SpecTypeError(x.lstrip("$"), f"used as both {cur} and {t}")

    def union(self, x: str, y: str):
        rx, ry = self._find(x), self._find(y)
        if rx == ry:
            return
        tx, ty_ = self.ty[rx], self.ty[ry]
        if tx is not None and ty_ is not None and tx != ty_:
            raise SpecTypeError(x.lstrip("$"), f"used as both {tx} and {ty_}")
        self.parent[rx] = ry
        if self.ty[ry] is None:
            self.ty[ry] = tx

    def resolve(self, x: str) -> SemType:
        t = self.ty[self._find(x)]
        return t if t is not None else SemType.INT

    # -- constraint generation ------------------------------------------

    def check_expr(self, e: Expr, ctx: Context) -> str:
        """Return a type handle for e while recording constraints."""
        if isinstance(e, Var):
            self._find(e.name)
            return e.name
        if isinstance(e, IntConst):
            h = self.fresh("c")
            # 0 doubles as the null pointer, so leave it polymorphic.
            if e.value != 0:
                self.assign(h, SemType.INT)
            return h
        if isinstance(e, BoolConst):
            h = self.fresh("c")
            self.assign(h, SemType.BOOL)
            return h
        if isinstance(e, LocConst):
            h = self.fresh("c")
            self.assign(h, SemType.LOC)
            return h
        if isinstance(e, SetLit):
            for x in e.elems:
                self.assign(self.check_expr(x, ctx), SemType.INT)
            h = self.fresh("set")
            self.assign(h, SemType.SET)
            return h
        if isinstance(e, UnOp):
            self.assign(self.check_expr(e.arg, ctx), SemType.BOOL)
            h = self.fresh("b")
            self.assign(h, SemType.BOOL)
            return h
        if isinstance(e, Ite):
            self.assign(self.check_expr(e.cond, ctx), SemType.BOOL)
            a = self.check_expr(e.then, ctx)
            b = self.check_expr(e.els, ctx)
            self.union(a, b)
            return a
        if isinstance(e, BinOp):
            l = self.check_expr(e.left, ctx)
            r = self.check_expr(e.right, ctx)
            h = self.fresh("b")
            if e.op == "eq":
                self.union(l, r)
                self.assign(h, SemType.BOOL)
            elif e.op in ("and", "or"):
                self.assign(l, SemType.BOOL)
                self.assign(r, SemType.BOOL)
                self.assign(h, SemType.BOOL)
            elif e.op in ("plus", "minus"):
                self.assign(l, SemType.INT)
                self.assign(r, SemType.INT)
                self.assign(h, SemType.INT)
            elif e.op in ("leq", "lt"):
                self.assign(l, SemType.INT)
                self.assign(r, SemType.INT)
                self.assign(h, SemType.BOOL)
            elif e.op in ("union", "dunion"):
                self.assign(l, SemType.SET)
                self.assign(r, SemType.SET)
                self.assign(h, SemType.SET)
            elif e.op == "seteq":
                self.assign(l, SemType.SET)
                self.assign(r, SemType.SET)
                self.assign(h, SemType.BOOL)
            elif e.op == "member":
                self.assign(l, SemType.INT)
                self.assign(r, SemType.SET)
                self.assign(h, SemType.BOOL)
            else:
                raise SpecTypeError(e.op, "unknown operator")
            return h
        raise SpecTypeError(str(e), "unknown expression form")

    def check_heaplets(self, heaplets, ctx: Context):
        for h in heaplets:
            if isinstance(h, PointsTo):
                self.assign(self.check_expr(h.src, ctx), SemType.LOC)
                self.check_expr(h.val, ctx)  # cell contents default to int
            elif isinstance(h, Block):
                self.assign(self.check_expr(h.root, ctx), SemType.LOC)
            elif isinstance(h, PredApp):
                try:
                    pred = ctx.pred(h.name)
                except KeyError:
                    raise SpecTypeError(h.name, "unknown predicate")
                if len(h.args) != len(pred.params):
                    raise SpecTypeError(
                        h.name,
                        f"arity {len(h.args)} vs declared {len(pred.params)}")
                for arg, (_, t) in zip(h.args, pred.params):
                    self.assign(self.check_expr(arg, ctx), t)

    def check_assertion(self, a: Assertion, ctx: Context):
        self.assign(self.check_expr(a.pure, ctx), SemType.BOOL)
        self.check_heaplets(a.spatial.heaplets, ctx)


def typecheck_goal(ctx: Context, params, pre: Assertion, post: Assertion
                   ) -> dict[str, SemType]:
    """Type environment for all variables of a pre/post pair.

    Raises SpecTypeError on inconsistent use.
    """
    inf = _Inference()
    for name, t in params:
        inf.assign(name, t)
    inf.check_assertion(pre, ctx)
    inf.check_assertion(post, ctx)
    from .lang import assertion_vars
    names = sorted({n for n, _ in params}
                   | assertion_vars(pre) | assertion_vars(post))
    return {n: inf.resolve(n) for n in names}


def typecheck_predicate(ctx: Context, pred: InductivePredicate
                        ) -> list[dict[str, SemType]]:
    """Per-clause type environments (params plus clause locals)."""
    out = []
    for j, cl in enumerate(pred.clauses):
        inf = _Inference()
        for name, t in pred.params:
            inf.assign(name, t)
        inf.assign(inf.check_expr(cl.selector, ctx), SemType.BOOL)
        inf.assign(inf.check_expr(cl.pure, ctx), SemType.BOOL)
        inf.check_heaplets(cl.spatial, ctx)
        names = sorted({n for n, _ in pred.params}
                       | set(pred.clause_locals(j)))
        out.append({n: inf.resolve(n) for n in names})
    return out
