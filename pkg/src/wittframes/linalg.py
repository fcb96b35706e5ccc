"""Exact linear algebra over Z/p^e.

Every per-weight carrier in this library is a finite abelian p-group
presented as a direct sum of cyclic lines  ⊕_i Z/p^{o_i}  with a
distinguished basis.  This module provides the machinery to compute with
subgroups, homomorphisms, kernels, cokernels and elementary divisors of
such groups, using only integer arithmetic:

  * Howell normal form over Z/p^E — canonical generating sets for
    subgroups, hence exact membership tests, canonical coset
    representatives and subgroup orders;
  * integer Smith normal form with column transforms — quotient group
    structure (elementary divisors) together with explicit projection
    and section maps.

No floating point is used anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional


def pval(x: int, p: int) -> int:
    """p-adic valuation of x; a large sentinel (10**9) for x == 0."""
    if x == 0:
        return 10**9
    v = 0
    while x % p == 0:
        x //= p
        v += 1
    return v


def unit_part_inverse(x: int, p: int, E: int) -> tuple[int, int]:
    """Write x = u * p^v mod p^E and return (v, u^{-1} mod p^E)."""
    v = pval(x, p)
    if v >= E:
        raise ValueError("zero has no unit part")
    u = (x // p**v) % p**E
    return v, pow(u, -1, p**E)


# ---------------------------------------------------------------------------
# Howell normal form
# ---------------------------------------------------------------------------

@dataclass
class HowellForm:
    """Canonical row-span form of a set of vectors over (Z/p^E)^n.

    Rows are in strong echelon form: each row has a pivot p^v at a
    distinct column, entries below a pivot are zero, entries above a
    pivot are reduced mod p^v, and the span is Howell-complete (for
    every row the annihilator shadow p^{E-v}*row is again in the span).
    Two generating sets span the same subgroup iff they produce the
    same HowellForm.
    """

    p: int
    E: int
    ncols: int
    rows: list[list[int]] = field(default_factory=list)
    pivots: list[tuple[int, int]] = field(default_factory=list)  # (col, val exponent)

    def reduce(self, vec: list[int]) -> list[int]:
        """Canonical representative of vec modulo the row span."""
        q = p_E = self.p ** self.E
        v = [x % p_E for x in vec]
        for row, (col, e) in zip(self.rows, self.pivots):
            piv = self.p ** e
            c = (v[col] // piv) % (p_E // piv)
            if c:
                v = [(a - c * b) % p_E for a, b in zip(v, row)]
        return v

    def contains(self, vec: list[int]) -> bool:
        return all(x == 0 for x in self.reduce(vec))

    def order_exponent(self) -> int:
        """log_p of the order of the spanned subgroup of (Z/p^E)^n."""
        return sum(self.E - e for _, e in self.pivots)

    def key(self) -> tuple:
        return tuple(tuple(r) for r in self.rows)


def howell_form(gens: list[list[int]], ncols: int, p: int, E: int) -> HowellForm:
    """Howell normal form of the span of ``gens`` inside (Z/p^E)^ncols."""
    p_E = p**E
    work = [[x % p_E for x in g] for g in gens]
    work = [r for r in work if any(r)]
    result_rows: list[list[int]] = []
    result_pivs: list[tuple[int, int]] = []

    for col in range(ncols):
        # pick the row with minimal valuation in this column
        best = None
        best_v = E
        for r in work:
            if r[col] % p_E != 0:
                v = pval(r[col], p)
                if v < best_v:
                    best_v = v
                    best = r
        if best is None:
            continue
        work.remove(best)
        v, uinv = unit_part_inverse(best[col], p, E)
        piv_row = [(x * uinv) % p_E for x in best]  # pivot entry is p^v
        piv = p**v
        new_work = []
        for r in work:
            if r[col] % p_E != 0:
                c = r[col] // piv  # exact: v minimal in this column
                r = [(a - c * b) % p_E for a, b in zip(r, piv_row)]
            if any(r):
                new_work.append(r)
        work = new_work
        if v > 0:
            # annihilator shadow keeps the span Howell-complete
            shadow = [(x * p ** (E - v)) % p_E for x in piv_row]
            if any(shadow):
                work.append(shadow)
        result_rows.append(piv_row)
        result_pivs.append((col, v))

    # reduce entries above each pivot
    for i in range(len(result_rows) - 1, -1, -1):
        col, e = result_pivs[i]
        piv = p**e
        for j in range(i):
            c = result_rows[j][col] // piv
            if c:
                result_rows[j] = [
                    (a - c * b) % p_E for a, b in zip(result_rows[j], result_rows[i])
                ]
    return HowellForm(p=p, E=E, ncols=ncols, rows=result_rows, pivots=result_pivs)


# ---------------------------------------------------------------------------
# Integer Smith normal form
# ---------------------------------------------------------------------------

@dataclass
class SNF:
    """U * A * V = diag(divisors), with tracked unimodular transforms."""

    divisors: list[int]
    U: list[list[int]]
    Uinv: list[list[int]]
    V: list[list[int]]
    Vinv: list[list[int]]


def smith_normal_form(mat: list[list[int]]) -> SNF:
    """Smith normal form with row and column transforms.

    Returns SNF with U (m x m) and V (k x k) unimodular such that
    U * mat * V is diagonal with the listed divisors (padded with zeros
    to length min(m, k); entries beyond the achieved rank are zero).
    The divisibility chain d_i | d_{i+1} is not enforced; callers here
    only use p-parts of the divisors, for which the diagonal form
    suffices after sorting.
    """
    A = [list(r) for r in mat]
    m = len(A)
    k = len(A[0]) if m else 0
    U = [[1 if i == j else 0 for j in range(m)] for i in range(m)]
    Uinv = [[1 if i == j else 0 for j in range(m)] for i in range(m)]
    V = [[1 if i == j else 0 for j in range(k)] for i in range(k)]
    Vinv = [[1 if i == j else 0 for j in range(k)] for i in range(k)]

    def row_op(i1, i2, c):
        # row_{i2} -= c * row_{i1}
        A[i2] = [a - c * b for a, b in zip(A[i2], A[i1])]
        U[i2] = [a - c * b for a, b in zip(U[i2], U[i1])]
        for r in range(m):
            Uinv[r][i1] += c * Uinv[r][i2]

    def row_swap(i1, i2):
        A[i1], A[i2] = A[i2], A[i1]
        U[i1], U[i2] = U[i2], U[i1]
        for r in range(m):
            Uinv[r][i1], Uinv[r][i2] = Uinv[r][i2], Uinv[r][i1]

    def col_op(j1, j2, c):
        # col_{j2} -= c * col_{j1}
        for r in A:
            r[j2] -= c * r[j1]
        for r in V:
            r[j2] -= c * r[j1]
        Vinv[j1] = [a + c * b for a, b in zip(Vinv[j1], Vinv[j2])]

    def col_swap(j1, j2):
        for r in A:
            r[j1], r[j2] = r[j2], r[j1]
        for r in V:
            r[j1], r[j2] = r[j2], r[j1]
        Vinv[j1], Vinv[j2] = Vinv[j2], Vinv[j1]

    divisors: list[int] = []
    t = 0
    while t < min(m, k):
        pivot = None
        best = None
        for i in range(t, m):
            for j in range(t, k):
                a = abs(A[i][j])
                if a and (best is None or a < best):
                    best = a
                    pivot = (i, j)
        if pivot is None:
            break
        i0, j0 = pivot
        if i0 != t:
            row_swap(t, i0)
        if j0 != t:
            col_swap(t, j0)
        dirty = False
        for i in range(t + 1, m):
            if A[i][t]:
                c = A[i][t] // A[t][t]
                if c:
                    row_op(t, i, c)
                if A[i][t]:
                    dirty = True
        for j in range(t + 1, k):
            if A[t][j]:
                c = A[t][j] // A[t][t]
                if c:
                    col_op(t, j, c)
                if A[t][j]:
                    dirty = True
        if dirty:
            continue
        if A[t][t] < 0:
            A[t] = [-a for a in A[t]]
            U[t] = [-a for a in U[t]]
            for r in range(m):
                Uinv[r][t] = -Uinv[r][t]
        divisors.append(A[t][t])
        t += 1
    while len(divisors) < min(m, k):
        divisors.append(0)
    return SNF(divisors, U, Uinv, V, Vinv)


def kernel_mod(rows: list[list[int]], ncols: int, p: int, E: int) -> list[list[int]]:
    """Generators of {x : sum_i x_i rows[i] = 0 in (Z/p^E)^ncols}.

    Via integer SNF: with U A V = D the substitution z = x U^{-1} turns
    the condition into z_i d_i = 0 mod p^E, so the kernel is spanned by
    p^{max(0, E - v_p(d_i))} times the i-th row of U.
    """
    m = len(rows)
    if m == 0:
        return []
    snf = smith_normal_form(rows)
    gens = []
    for i in range(m):
        if i < len(snf.divisors) and snf.divisors[i] != 0:
            e = max(0, E - min(pval(snf.divisors[i], p), E))
        else:
            e = 0
        g = [(p**e * x) % p**E for x in snf.U[i]]
        if any(g):
            gens.append(g)
    return gens


def solve_mod(rows: list[list[int]], target: list[int], p: int, E: int) -> Optional[list[int]]:
    """One x with sum_i x_i rows[i] = target in (Z/p^E)^ncols, or None.

    With U A V = D the condition becomes z_i d_i = (target V)_i mod p^E
    for z = x U^{-1}; each coordinate is solvable iff the p-valuation of
    the right side is at least that of d_i.
    """
    m = len(rows)
    if m == 0:
        return None if any(t % p**E for t in target) else []
    snf = smith_normal_form(rows)
    k = len(rows[0])
    tv = [sum(target[j] * snf.V[j][i] for j in range(k)) % p**E for i in range(k)]
    z = [0] * m
    for i in range(k):
        d = snf.divisors[i] if i < len(snf.divisors) else 0
        rhs = tv[i] % p**E
        if i >= m or d == 0:
            if rhs:
                return None
            continue
        vd = min(pval(d, p), E)
        if rhs == 0:
            z[i] = 0
            continue
        if pval(rhs, p) < vd:
            return None
        unit = d // p ** pval(d, p)
        z[i] = ((rhs // p**vd) * pow(unit, -1, p**E)) % p**E
    x = [sum(z[i] * snf.U[i][j] for i in range(m)) % p**E for j in range(m)]
    return x


# ---------------------------------------------------------------------------
# Finite modules: ⊕ Z/p^{o_i}
# ---------------------------------------------------------------------------

class FinModule:
    """⊕_i Z/p^{orders[i]} with a distinguished basis.

    Elements are integer coordinate lists of length ``rank``; the i-th
    coordinate is read mod p^{orders[i]}.  Order exponents may be zero,
    in which case the line is trivial (kept to preserve labelling).
    """

    def __init__(self, p: int, orders: list[int], labels: list | None = None):
        self.p = p
        self.orders = list(orders)
        self.rank = len(orders)
        self.E = max(orders, default=0)
        self.labels = labels if labels is not None else list(range(self.rank))

    def __repr__(self):
        return f"FinModule(p={self.p}, orders={self.orders})"

    def zero(self) -> list[int]:
        return [0] * self.rank

    def reduce(self, v: list[int]) -> list[int]:
        return [x % self.p ** o for x, o in zip(v, self.orders)]

    def is_zero(self, v: list[int]) -> bool:
        return all(x % self.p ** o == 0 for x, o in zip(v, self.orders))

    def eq(self, v: list[int], w: list[int]) -> bool:
        return self.is_zero([a - b for a, b in zip(v, w)])

    def add(self, v, w):
        return self.reduce([a + b for a, b in zip(v, w)])

    def neg(self, v):
        return self.reduce([-a for a in v])

    def smul(self, c, v):
        return self.reduce([c * a for a in v])

    def order_exponent(self) -> int:
        return sum(self.orders)

    def elements(self):
        """Iterate over all elements; only safe for small modules."""
        if self.rank == 0:
            yield []
            return
        radii = [self.p**o for o in self.orders]
        idx = [0] * self.rank
        while True:
            yield list(idx)
            j = 0
            while j < self.rank:
                idx[j] += 1
                if idx[j] < radii[j]:
                    break
                idx[j] = 0
                j += 1
            if j == self.rank:
                return

    def random_element(self, rng) -> list[int]:
        return [rng.randrange(self.p**o) for o in self.orders]

    # -- scaled embedding into (Z/p^E)^rank ---------------------------------

    def _scale(self, v: list[int]) -> list[int]:
        return [
            (x * self.p ** (self.E - o)) % self.p**self.E
            for x, o in zip(v, self.orders)
        ]

    def _unscale(self, v: list[int]) -> list[int]:
        out = []
        for x, o in zip(v, self.orders):
            s = self.p ** (self.E - o)
            if x % s:
                raise ValueError("vector not in the scaled image of the module")
            out.append((x // s) % self.p**o)
        return out

    # -- subgroups -----------------------------------------------------------

    def span(self, gens: list[list[int]]) -> HowellForm:
        """Canonical form of the subgroup generated by ``gens``."""
        scaled = [self._scale(self.reduce(g)) for g in gens]
        return howell_form(scaled, self.rank, self.p, self.E)

    def member(self, sub: HowellForm, v: list[int]) -> bool:
        return sub.contains(self._scale(self.reduce(v)))

    def coset_rep(self, sub: HowellForm, v: list[int]) -> list[int]:
        return self._unscale(sub.reduce(self._scale(self.reduce(v))))

    def subgroup_order_exponent(self, sub: HowellForm) -> int:
        return sub.order_exponent()

    def subgroup_gens(self, sub: HowellForm) -> list[list[int]]:
        return [self._unscale(r) for r in sub.rows]

    def spans_equal(self, s1: HowellForm, s2: HowellForm) -> bool:
        return s1.key() == s2.key()

    def full_span(self) -> HowellForm:
        gens = []
        for i in range(self.rank):
            e = self.zero()
            e[i] = 1
            gens.append(e)
        return self.span(gens)

    # -- quotients -----------------------------------------------------------

    def quotient(self, sub: HowellForm) -> "QuotientModule":
        rel = [self._unscale(r) for r in sub.rows]
        for i, o in enumerate(self.orders):
            row = [0] * self.rank
            row[i] = self.p**o
            rel.append(row)
        if not rel:
            rel = [[0] * self.rank]
        snf = smith_normal_form(rel)
        exps = []
        for d in snf.divisors[: self.rank]:
            if d == 0:
                raise ArithmeticError("quotient of a finite module must be finite")
            exps.append(min(pval(d, self.p), self.E))
        if len(exps) < self.rank:
            raise ArithmeticError("quotient of a finite module must be finite")
        keep = [i for i, e in enumerate(exps) if e > 0]
        target = FinModule(self.p, [exps[i] for i in keep])
        return QuotientModule(self, target, snf.V, snf.Vinv, keep)

    def structure(self, sub: HowellForm) -> list[int]:
        """Elementary divisor exponents of the subgroup itself."""
        gens = self.subgroup_gens(sub)
        if not gens:
            return []
        free = FinModule(self.p, [self.E] * len(gens))
        f = Morphism(free, self, gens)
        ker = f.kernel()
        q = free.quotient(ker)
        return sorted(q.target.orders, reverse=True)


@dataclass
class QuotientModule:
    """M/S with explicit projection and section maps."""

    source: FinModule
    target: FinModule
    V: list[list[int]]
    Vinv: list[list[int]]
    keep: list[int]

    def project(self, v: list[int]) -> list[int]:
        x = self.source.reduce(v)
        y = [sum(x[i] * self.V[i][j] for i in range(len(x))) for j in range(len(self.V[0]))]
        return self.target.reduce([y[i] for i in self.keep])

    def lift(self, w: list[int]) -> list[int]:
        y = [0] * self.source.rank
        for idx, i in enumerate(self.keep):
            y[i] = w[idx]
        x = [
            sum(y[i] * self.Vinv[i][j] for i in range(len(y)))
            for j in range(self.source.rank)
        ]
        return self.source.reduce(x)

    def as_morphism(self) -> "Morphism":
        rows = []
        for i in range(self.source.rank):
            e = self.source.zero()
            e[i] = 1
            rows.append(self.project(e))
        return Morphism(self.source, self.target, rows)


class Morphism:
    """Additive map between FinModules, given on the distinguished basis."""

    def __init__(self, source: FinModule, target: FinModule, rows: list[list[int]],
                 check: bool = True):
        self.source = source
        self.target = target
        self.rows = [target.reduce(r) for r in rows]
        if check:
            p = source.p
            for i, o in enumerate(source.orders):
                if not target.is_zero([x * p**o for x in self.rows[i]]):
                    raise ValueError(f"map not well defined on basis line {i}")

    def apply(self, v: list[int]) -> list[int]:
        out = self.target.zero()
        for c, row in zip(v, self.rows):
            if c:
                out = [a + c * b for a, b in zip(out, row)]
        return self.target.reduce(out)

    def image(self) -> HowellForm:
        return self.target.span(self.rows)

    def kernel(self) -> HowellForm:
        src, tgt = self.source, self.target
        E = max(src.E, tgt.E, 1)
        pE = src.p**E
        scaled = [
            [(x * src.p ** (E - o)) % pE for x, o in zip(r, tgt.orders)]
            for r in self.rows
        ]
        gens = kernel_mod(scaled, tgt.rank, src.p, E)
        return src.span([list(g) for g in gens])

    def preimage(self, sub: HowellForm) -> HowellForm:
        q = self.target.quotient(sub)
        proj = q.as_morphism()
        rows = [proj.apply(r) for r in self.rows]
        comp = Morphism(self.source, q.target, rows, check=False)
        return comp.kernel()

    def is_injective(self) -> bool:
        return self.kernel().order_exponent() == 0

    def is_surjective(self) -> bool:
        return self.image().order_exponent() == self.target.full_span().order_exponent()

    def is_bijective(self) -> bool:
        return self.is_injective() and self.is_surjective()

    def compose(self, other: "Morphism") -> "Morphism":
        """self ∘ other (other first)."""
        rows = [self.apply(r) for r in other.rows]
        return Morphism(other.source, self.target, rows, check=False)


def express(m: FinModule, rows: list[list[int]], v: list[int]) -> Optional[list[int]]:
    """Coefficients c with sum_i c_i rows[i] = v in m, or None."""
    E = max(m.E, 1)
    pE = m.p**E
    scaled_rows = [
        [(x * m.p ** (E - o)) % pE for x, o in zip(r, m.orders)] for r in rows
    ]
    scaled_v = [(x * m.p ** (E - o)) % pE for x, o in zip(m.reduce(v), m.orders)]
    return solve_mod(scaled_rows, scaled_v, m.p, E)


def subgroup_basis(m: FinModule, sub: HowellForm) -> tuple[FinModule, list[list[int]]]:
    """Present a subgroup as its own FinModule with an embedding.

    Returns (S, rows) where S = ⊕ Z/p^{e_i} and rows[i] in m generate the
    subgroup independently: the map S -> m, basis line i -> rows[i], is
    injective with image the subgroup.
    """
    gens = m.subgroup_gens(sub)
    if not gens:
        return FinModule(m.p, []), []
    free = FinModule(m.p, [max(m.E, 1)] * len(gens))
    f = Morphism(free, m, gens, check=False)
    q = free.quotient(f.kernel())
    rows = []
    for i in range(q.target.rank):
        e = q.target.zero()
        e[i] = 1
        c = q.lift(e)
        rows.append(f.apply(c))
    return q.target, rows


def two_term_homology(d: Morphism) -> tuple[list[int], list[int]]:
    """(H^{-1}, H^0) elementary divisor exponents of [X --d--> Y]."""
    hm1 = d.source.structure(d.kernel())
    q = d.target.quotient(d.image())
    h0 = sorted(q.target.orders, reverse=True)
    return hm1, h0


def divisor_exponents_of_quotient(m: FinModule, sub: HowellForm) -> list[int]:
    q = m.quotient(sub)
    return sorted(q.target.orders, reverse=True)
