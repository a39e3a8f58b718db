"""A small SMT-LIB v2 solver for quantifier-free boolean + linear integer
arithmetic, usable as a child process: reads commands from stdin, answers
(check-sat) with sat/unsat/unknown on stdout.

This is the default backend for the pure prover when no external solver
(e.g. z3) is configured via SUSYNTH_SMT.  It decides the exact fragment the
query encoder emits: Bool/Int constants, and/or/not/=>/ite, =, <=, <, >=, >,
+, -, and multiplication by literals.  Search is a case split over the
boolean structure; each leaf cube of linear constraints is checked for
integer feasibility with an exact MILP feasibility call.
"""

from __future__ import annotations

import sys


# ---------------------------------------------------------------------------
# S-expressions.

def tokenize_sexpr(text: str) -> list[str]:
    out = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c in "()":
            out.append(c)
            i += 1
        elif c.isspace():
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "()":
                j += 1
            out.append(text[i:j])
            i = j
    return out


def parse_sexprs(text: str):
    toks = tokenize_sexpr(text)
    pos = 0

    def parse():
        nonlocal pos
        t = toks[pos]
        pos += 1
        if t == "(":
            items = []
            while toks[pos] != ")":
                items.append(parse())
            pos += 1
            return items
        return t

    out = []
    while pos < len(toks):
        out.append(parse())
    return out


# ---------------------------------------------------------------------------
# Linear terms and formulas.

class Unsupported(Exception):
    pass


def _lin_zero():
    return ({}, 0)


def _lin_add(a, b, k=1):
    coeffs = dict(a[0])
    for v, c in b[0].items():
        coeffs[v] = coeffs.get(v, 0) + k * c
        if coeffs[v] == 0:
            del coeffs[v]
    return (coeffs, a[1] + k * b[1])


def _lin_scale(a, k):
    return ({v: k * c for v, c in a[0].items() if k * c != 0}, k * a[1])


class Solver:
    def __init__(self):
        self.sorts: dict[str, str] = {}
        self.asserts: list = []

    # -- command interface ------------------------------------------------

    def command(self, sx) -> str | None:
        if not isinstance(sx, list) or not sx:
            return None
        head = sx[0]
        if head in ("set-logic", "set-option", "set-info"):
            return None
        if head == "declare-const":
            self.sorts[sx[1]] = sx[2]
            return None
        if head == "declare-fun":
            if sx[2] == []:
                self.sorts[sx[1]] = sx[3]
            return None
        if head == "assert":
            self.asserts.append(sx[1])
            return None
        if head == "check-sat":
            try:
                return self.check_sat()
            except Unsupported:
                return "unknown"
        if head == "reset":
            self.sorts.clear()
            self.asserts.clear()
            return None
        if head == "exit":
            raise SystemExit(0)
        return None

    # -- sorts -------------------------------------------------------------

    def term_sort(self, sx) -> str:
        if isinstance(sx, str):
            if sx in ("true", "false"):
                return "Bool"
            if sx.lstrip("-").isdigit():
                return "Int"
            return self.sorts.get(sx, "Int")
        head = sx[0]
        if head in ("and", "or", "not", "=>", "=", "<=", "<", ">=", ">",
                    "distinct"):
            return "Bool"
        if head in ("+", "-", "*"):
            return "Int"
        if head == "ite":
            return self.term_sort(sx[2])
        raise Unsupported(head)

    # -- int terms to linear form ------------------------------------------

    def linearize(self, sx):
        """Int term -> (coeffs, const); raises on non-linear shapes."""
        if isinstance(sx, str):
            if sx.lstrip("-").isdigit():
                return ({}, int(sx))
            if self.sorts.get(sx, "Int") != "Int":
                raise Unsupported(f"non-int symbol {sx}")
            return ({sx: 1}, 0)
        head = sx[0]
        if head == "+":
            out = _lin_zero()
            for t in sx[1:]:
                out = _lin_add(out, self.linearize(t))
            return out
        if head == "-":
            if len(sx) == 2:
                return _lin_scale(self.linearize(sx[1]), -1)
            out = self.linearize(sx[1])
            for t in sx[2:]:
                out = _lin_add(out, self.linearize(t), -1)
            return out
        if head == "*":
            consts = [t for t in sx[1:] if isinstance(t, str)
                      and t.lstrip("-").isdigit()]
            others = [t for t in sx[1:] if t not in consts]
            if len(others) > 1:
                raise Unsupported("non-linear product")
            k = 1
            for t in consts:
                k *= int(t)
            if not others:
                return ({}, k)
            return _lin_scale(self.linearize(others[0]), k)
        raise Unsupported(head)

    # -- ite lifting out of atoms -------------------------------------------

    def _find_int_ite(self, sx):
        if isinstance(sx, str):
            return None
        if sx[0] == "ite" and self.term_sort(sx) == "Int":
            return sx
        for t in sx[1:]:
            found = self._find_int_ite(t)
            if found is not None:
                return found
        return None

    @staticmethod
    def _replace(sx, target, repl):
        if sx is target:
            return repl
        if isinstance(sx, str):
            return sx
        return [Solver._replace(t, target, repl) for t in sx]

    # -- to NNF over ('le', coeffs, const) / bool literals -------------------

    def to_nnf(self, sx, positive=True):
        if isinstance(sx, str):
            if sx == "true":
                return ("true",) if positive else ("false",)
            if sx == "false":
                return ("false",) if positive else ("true",)
            return ("lit", sx, positive)
        head = sx[0]
        if head == "not":
            return self.to_nnf(sx[1], not positive)
        if head == "and":
            parts = [self.to_nnf(t, positive) for t in sx[1:]]
            return ("and" if positive else "or", parts)
        if head == "or":
            parts = [self.to_nnf(t, positive) for t in sx[1:]]
            return ("or" if positive else "and", parts)
        if head == "=>":
            return self.to_nnf(["or", ["not", sx[1]], sx[2]], positive)
        if head == "ite" and self.term_sort(sx) == "Bool":
            c, a, b = sx[1], sx[2], sx[3]
            return self.to_nnf(
                ["or", ["and", c, a], ["and", ["not", c], b]], positive)
        if head in ("=", "<=", "<", ">=", ">", "distinct"):
            ite = self._find_int_ite(sx)
            if ite is not None:
                c, a, b = ite[1], ite[2], ite[3]
                lifted = ["or",
                          ["and", c, self._replace(sx, ite, a)],
                          ["and", ["not", c], self._replace(sx, ite, b)]]
                return self.to_nnf(lifted, positive)
            if head == "=" and self.term_sort(sx[1]) == "Bool":
                a, b = sx[1], sx[2]
                both = ["or", ["and", a, b], ["and", ["not", a], ["not", b]]]
                return self.to_nnf(both, positive)
            if head == "distinct":
                return self.to_nnf(["not", ["=", sx[1], sx[2]]], positive)
            return self._atom_nnf(head, sx[1], sx[2], positive)
        raise Unsupported(head)

    def _atom_nnf(self, op, lhs, rhs, positive):
        a = self.linearize(lhs)
        b = self.linearize(rhs)
        diff = _lin_add(a, b, -1)  # lhs - rhs

        def le(lin, k):  # lin <= k
            return ("le", tuple(sorted(lin[0].items())), k - lin[1])

        if op == "=":
            atoms = ("and", [le(diff, 0), le(_lin_scale(diff, -1), 0)])
            if positive:
                return atoms
            return ("or", [le(_lin_scale(diff, -1), -1), le(diff, -1)])
        if op == ">=":
            op, diff = "<=", _lin_scale(diff, -1)
        elif op == ">":
            op, diff = "<", _lin_scale(diff, -1)
        if op == "<=":
            return le(diff, 0) if positive else le(_lin_scale(diff, -1), -1)
        if op == "<":
            return le(diff, -1) if positive else le(_lin_scale(diff, -1), 0)
        raise Unsupported(op)

    # -- satisfiability -----------------------------------------------------

    def check_sat(self) -> str:
        nnf = [self.to_nnf(a) for a in self.asserts]
        return "sat" if self._search(nnf, {}, []) else "unsat"

    def _search(self, todo, bools, lins) -> bool:
        todo = list(todo)
        bools = dict(bools)
        lins = list(lins)
        while todo:
            f = todo.pop()
            kind = f[0]
            if kind == "true":
                continue
            if kind == "false":
                return False
            if kind == "and":
                todo.extend(f[1])
                continue
            if kind == "lit":
                _, name, pos = f
                if bools.get(name, pos) != pos:
                    return False
                bools[name] = pos
                continue
            if kind == "le":
                _, coeffs, k = f
                if not coeffs:
                    if 0 > k:
                        return False
                    continue
                lins.append((coeffs, k))
                continue
            if kind == "or":
                for branch in f[1]:
                    if self._search(todo + [branch], bools, lins):
                        return True
                return False
            raise Unsupported(kind)
        return self._lia_feasible(lins)

    @staticmethod
    def _lia_feasible(lins) -> bool:
        """Integer feasibility of a conjunction of sum(c_i x_i) <= k rows."""
        if not lins:
            return True
        names = sorted({v for coeffs, _ in lins for v, _ in coeffs})
        index = {v: i for i, v in enumerate(names)}
        import numpy as np
        from scipy.optimize import Bounds, LinearConstraint, milp

        a = np.zeros((len(lins), len(names)))
        ub = np.zeros(len(lins))
        for r, (coeffs, k) in enumerate(lins):
            for v, c in coeffs:
                a[r, index[v]] = c
            ub[r] = k
        res = milp(c=np.zeros(len(names)),
                   constraints=LinearConstraint(a, -np.inf, ub),
                   integrality=np.ones(len(names)),
                   bounds=Bounds(-np.inf, np.inf))
        return res.status == 0


def main(argv=None) -> int:
    solver = Solver()
    buf = ""
    depth = 0
    for line in sys.stdin:
        buf += line
        depth = buf.count("(") - buf.count(")")
        if depth > 0 or not buf.strip():
            continue
        try:
            exprs = parse_sexprs(buf)
        except IndexError:
            continue  # unbalanced mid-stream; keep buffering
        buf = ""
        for sx in exprs:
            try:
                out = solver.command(sx)
            except SystemExit:
                return 0
            except Unsupported:
                out = "unknown"
            if out is not None:
                print(out, flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
