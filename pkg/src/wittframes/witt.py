"""p-typical Witt vectors over monomial test rings.

Two element representations are provided.

``WittVector`` stores coordinate vectors (a_0, ..., a_{L-1}) and
multiplies via the universal sum/product polynomials, built once per
(p, L) by the ghost-component recursion and cached.  A second,
independent engine computes the same operations through ghost
components of integer lifts; the two must agree exactly, which is one
of the acceptance suites.

``TeichmullerSum`` is the workhorse for everything graded: an element
of W(R')/p^M for a monomial algebra R' is a finite sum of Teichmüller
lines sum_a m_a * [x^a], and on such sums addition is plain integer
addition of multiplicities, multiplication is exponent convolution,
F is a -> pa and V is a -> a/p with multiplicity p*m.  Each line is a
cyclic group Z/p^{ord(a)} where ord(a) counts how many of the Witt
coordinates x^{a p^j} survive the ring's cut (bounded by the level M).
This turns all per-weight linear algebra into work over Z/p^e.
"""

from __future__ import annotations

import json
import os
from fractions import Fraction
from typing import Optional

from .rings import (
    CapExceeded,
    GradedElement,
    IdealBasis,
    PrecisionError,
    RingHandle,
    is_prime,
)

TABLE_LENGTH_CAP = 4


# ---------------------------------------------------------------------------
# sparse integer polynomials (exponent tuple -> coefficient)
# ---------------------------------------------------------------------------

def _padd(f: dict, g: dict) -> dict:
    out = dict(f)
    for e, c in g.items():
        c2 = out.get(e, 0) + c
        if c2:
            out[e] = c2
        elif e in out:
            del out[e]
    return out


def _pscale(f: dict, c: int) -> dict:
    return {e: c * v for e, v in f.items()} if c else {}


def _pmul(f: dict, g: dict) -> dict:
    out: dict = {}
    for e1, c1 in f.items():
        for e2, c2 in g.items():
            e = tuple(a + b for a, b in zip(e1, e2))
            c = out.get(e, 0) + c1 * c2
            if c:
                out[e] = c
            elif e in out:
                del out[e]
    return out


def _ppow(f: dict, k: int, nvars: int) -> dict:
    out = {(0,) * nvars: 1}
    base = f
    while k:
        if k & 1:
            out = _pmul(out, base)
        base = _pmul(base, base)
        k >>= 1
    return out


def _pdiv_exact(f: dict, c: int) -> dict:
    out = {}
    for e, v in f.items():
        if v % c:
            raise ArithmeticError("inexact division in ghost recursion")
        out[e] = v // c
    return out


def _var(i: int, nvars: int) -> dict:
    e = [0] * nvars
    e[i] = 1
    return {tuple(e): 1}


def _ghost(coords: list[dict], j: int, p: int, nvars: int) -> dict:
    out: dict = {}
    for i in range(j + 1):
        out = _padd(out, _pscale(_ppow(coords[i], p ** (j - i), nvars), p**i))
    return out


class WittPolynomialTable:
    """Universal sum/product/negation polynomials for W_L, prime p.

    Polynomials are over Z in 2L variables a_0..a_{L-1}, b_0..b_{L-1}
    (negation uses only the a block).  The ghost identities
    w_j(S(a,b)) = w_j(a) + w_j(b) and w_j(P(a,b)) = w_j(a) w_j(b)
    hold exactly by construction; ``selfcheck`` re-verifies them.
    """

    def __init__(self, p: int, length: int, sum_polys, prod_polys, neg_polys):
        self.p = p
        self.length = length
        self.sum_polys = sum_polys
        self.prod_polys = prod_polys
        self.neg_polys = neg_polys

    def selfcheck(self) -> None:
        p, L = self.p, self.length
        nv = 2 * L
        a = [_var(i, nv) for i in range(L)]
        b = [_var(L + i, nv) for i in range(L)]
        for j in range(L):
            ga = _ghost(a, j, p, nv)
            gb = _ghost(b, j, p, nv)
            gs = _ghost(self.sum_polys, j, p, nv)
            gp = _ghost(self.prod_polys, j, p, nv)
            gn = _ghost(self.neg_polys, j, p, nv)
            if gs != _padd(ga, gb):
                raise AssertionError(f"sum ghost identity fails at j={j}")
            if gp != _pmul(ga, gb):
                raise AssertionError(f"product ghost identity fails at j={j}")
            if _padd(gn, ga) != {}:
                raise AssertionError(f"negation ghost identity fails at j={j}")

    def to_json(self) -> dict:
        def dump(polys):
            return [[[list(e), c] for e, c in sorted(f.items())] for f in polys]

        return {
            "p": self.p,
            "length": self.length,
            "sum": dump(self.sum_polys),
            "prod": dump(self.prod_polys),
            "neg": dump(self.neg_polys),
        }

    @classmethod
    def from_json(cls, data: dict) -> "WittPolynomialTable":
        def load(polys):
            return [{tuple(e): c for e, c in f} for f in polys]

        return cls(data["p"], data["length"], load(data["sum"]),
                   load(data["prod"]), load(data["neg"]))


_TABLE_CACHE: dict[tuple[int, int], WittPolynomialTable] = {}


def _cache_dir() -> str:
    base = os.environ.get("WITTFRAMES_CACHE") or os.path.join(
        os.path.expanduser("~"), ".cache", "wittframes"
    )
    return base


def build_tables(p: int, length: int, length_cap: int = TABLE_LENGTH_CAP,
                 use_disk: bool = True) -> WittPolynomialTable:
    """Build (or load from cache) the universal Witt polynomials."""
    if not is_prime(p):
        raise ValueError(f"{p} is not prime")
    if length < 1:
        raise ValueError("length must be >= 1")
    if length > length_cap:
        raise CapExceeded(
            f"Witt table length {length} exceeds cap {length_cap}; raise the cap knowingly"
        )
    key = (p, length)
    if key in _TABLE_CACHE:
        return _TABLE_CACHE[key]
    path = os.path.join(_cache_dir(), f"witt_table_p{p}_L{length}.json")
    if use_disk and os.path.exists(path):
        try:
            with open(path) as fh:
                table = WittPolynomialTable.from_json(json.load(fh))
            _TABLE_CACHE[key] = table
            return table
        except (ValueError, KeyError, json.JSONDecodeError):
            pass

    nv = 2 * length
    a = [_var(i, nv) for i in range(length)]
    b = [_var(length + i, nv) for i in range(length)]
    sums: list[dict] = []
    prods: list[dict] = []
    negs: list[dict] = []
    for j in range(length):
        ga, gb = _ghost(a, j, p, nv), _ghost(b, j, p, nv)
        tgt_s = _padd(ga, gb)
        tgt_p = _pmul(ga, gb)
        tgt_n = _pscale(ga, -1)
        for i in range(j):
            tgt_s = _padd(tgt_s, _pscale(_ppow(sums[i], p ** (j - i), nv), -(p**i)))
            tgt_p = _padd(tgt_p, _pscale(_ppow(prods[i], p ** (j - i), nv), -(p**i)))
            tgt_n = _padd(tgt_n, _pscale(_ppow(negs[i], p ** (j - i), nv), -(p**i)))
        sums.append(_pdiv_exact(tgt_s, p**j))
        prods.append(_pdiv_exact(tgt_p, p**j))
        negs.append(_pdiv_exact(tgt_n, p**j))
    table = WittPolynomialTable(p, length, sums, prods, negs)
    if use_disk:
        try:
            os.makedirs(_cache_dir(), exist_ok=True)
            with open(path, "w") as fh:
                json.dump(table.to_json(), fh)
        except OSError:
            pass
    _TABLE_CACHE[key] = table
    return table


def _eval_poly(poly: dict, values: list[GradedElement], ring: RingHandle) -> GradedElement:
    out = ring.zero()
    for expo, coeff in poly.items():
        term = ring.scalar(coeff)
        for i, e in enumerate(expo):
            if e:
                term = term * values[i] ** e
        out = out + term
    return out


# ---------------------------------------------------------------------------
# coordinate Witt vectors
# ---------------------------------------------------------------------------

class WittVector:
    """Fixed-length Witt vector with GradedElement coordinates.

    Coordinate i of a homogeneous weight-d vector lives at exponent
    d * p^i; the optional weight tag records d and is maintained by the
    arithmetic (sums keep equal tags, products add them).
    """

    __slots__ = ("base", "coords", "weight")

    def __init__(self, base: RingHandle, coords, weight: Optional[Fraction] = None):
        self.base = base
        self.coords = tuple(coords)
        self.weight = weight
        if weight is not None:
            for i, c in enumerate(self.coords):
                for a, _ in c.terms:
                    if a != weight * base.p**i:
                        raise ValueError(
                            f"coordinate {i} breaks the weight-{weight} contract"
                        )

    @property
    def length(self) -> int:
        return len(self.coords)

    def __repr__(self):
        return "(" + ", ".join(repr(c) for c in self.coords) + ")"

    def __eq__(self, other):
        return (
            isinstance(other, WittVector)
            and self.base == other.base
            and self.coords == other.coords
        )

    def __hash__(self):
        return hash((self.base, self.coords))

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.coords)

    def _combine_weight_add(self, other) -> Optional[Fraction]:
        if self.weight is not None and self.weight == other.weight:
            return self.weight
        return None

    def __add__(self, other: "WittVector") -> "WittVector":
        if self.base != other.base or self.length != other.length:
            raise ValueError("length/base mismatch")
        table = build_tables(self.base.p, self.length)
        vals = list(self.coords) + list(other.coords)
        coords = [_eval_poly(s, vals, self.base) for s in table.sum_polys]
        return WittVector(self.base, coords, self._combine_weight_add(other))

    def __neg__(self) -> "WittVector":
        table = build_tables(self.base.p, self.length)
        vals = list(self.coords) + [self.base.zero()] * self.length
        coords = [_eval_poly(s, vals, self.base) for s in table.neg_polys]
        return WittVector(self.base, coords, self.weight)

    def __sub__(self, other: "WittVector") -> "WittVector":
        return self + (-other)

    def __mul__(self, other: "WittVector") -> "WittVector":
        if self.base != other.base or self.length != other.length:
            raise ValueError("length/base mismatch")
        table = build_tables(self.base.p, self.length)
        vals = list(self.coords) + list(other.coords)
        coords = [_eval_poly(s, vals, self.base) for s in table.prod_polys]
        w = None
        if self.weight is not None and other.weight is not None:
            w = self.weight + other.weight
        return WittVector(self.base, coords, w)

    # -- characteristic p operators -------------------------------------------

    def frobenius_W(self) -> "WittVector":
        """Coordinatewise p-th power; valid over characteristic-p bases."""
        if self.base.n != 1:
            raise ValueError("coordinatewise Frobenius needs a characteristic-p base")
        w = None if self.weight is None else self.weight * self.base.p
        return WittVector(self.base, [c.frobenius() for c in self.coords], w)

    def verschiebung_W(self) -> "WittVector":
        """(a_0, ..) -> (0, a_0, ..), dropping the top coordinate."""
        coords = (self.base.zero(),) + self.coords[:-1]
        w = None
        if self.weight is not None:
            w = self.weight / self.base.p
            self.base.check_exponent(w) if w else None
        return WittVector(self.base, coords, w)


def witt_zero(base: RingHandle, length: int) -> WittVector:
    return WittVector(base, [base.zero()] * length)


def witt_one(base: RingHandle, length: int) -> WittVector:
    return WittVector(base, [base.one()] + [base.zero()] * (length - 1))


def teichmuller(r: GradedElement, length: int) -> WittVector:
    w = None
    if len(r.terms) == 1:
        w = r.terms[0][0]
    return WittVector(r.ring, [r] + [r.ring.zero()] * (length - 1), w)


def witt_add(u: WittVector, v: WittVector) -> WittVector:
    return u + v


def witt_mul(u: WittVector, v: WittVector) -> WittVector:
    return u * v


def frobenius_W(u: WittVector) -> WittVector:
    return u.frobenius_W()


def verschiebung_W(u: WittVector) -> WittVector:
    return u.verschiebung_W()


# ---------------------------------------------------------------------------
# ghost-component oracle
# ---------------------------------------------------------------------------

def _lift(el: GradedElement) -> dict:
    return {a: c for a, c in el.terms}


def _free_add(f: dict, g: dict) -> dict:
    out = dict(f)
    for a, c in g.items():
        c2 = out.get(a, 0) + c
        if c2:
            out[a] = c2
        elif a in out:
            del out[a]
    return out


def _free_mul(f: dict, g: dict) -> dict:
    out: dict = {}
    for a, c in f.items():
        for b, d in g.items():
            e = a + b
            c2 = out.get(e, 0) + c * d
            if c2:
                out[e] = c2
            elif e in out:
                del out[e]
    return out


def _free_pow(f: dict, k: int) -> dict:
    out = {Fraction(0): 1}
    base = f
    while k:
        if k & 1:
            out = _free_mul(out, base)
        base = _free_mul(base, base)
        k >>= 1
    return out


def _free_ghost(lifts: list[dict], j: int, p: int) -> dict:
    out: dict = {}
    for i in range(j + 1):
        out = _free_add(out, {a: p**i * c for a, c in _free_pow(lifts[i], p ** (j - i)).items()})
    return out


def _unghost(ghosts: list[dict], p: int) -> list[dict]:
    coords: list[dict] = []
    for j, g in enumerate(ghosts):
        acc = dict(g)
        for i in range(j):
            sub = {a: -(p**i) * c for a, c in _free_pow(coords[i], p ** (j - i)).items()}
            acc = _free_add(acc, sub)
        out = {}
        for a, c in acc.items():
            if c % p**j:
                raise ArithmeticError("unghosting hit an inexact division")
            out[a] = c // p**j
        coords.append(out)
    return coords


def _reduce_free(base: RingHandle, f: dict) -> GradedElement:
    return base.element(f)


def ghost_add(u: WittVector, v: WittVector) -> WittVector:
    """Independent oracle: add through ghost components of integer lifts."""
    p = u.base.p
    lu = [_lift(c) for c in u.coords]
    lv = [_lift(c) for c in v.coords]
    ghosts = [
        _free_add(_free_ghost(lu, j, p), _free_ghost(lv, j, p))
        for j in range(u.length)
    ]
    coords = [_reduce_free(u.base, c) for c in _unghost(ghosts, p)]
    return WittVector(u.base, coords)


def ghost_mul(u: WittVector, v: WittVector) -> WittVector:
    p = u.base.p
    lu = [_lift(c) for c in u.coords]
    lv = [_lift(c) for c in v.coords]
    ghosts = [
        _free_mul(_free_ghost(lu, j, p), _free_ghost(lv, j, p))
        for j in range(u.length)
    ]
    coords = [_reduce_free(u.base, c) for c in _unghost(ghosts, p)]
    return WittVector(u.base, coords)


def ghost_frobenius(u: WittVector) -> WittVector:
    """Oracle F at one shorter length: unghost of (w_1, ..., w_{L-1})."""
    p = u.base.p
    lu = [_lift(c) for c in u.coords]
    ghosts = [_free_ghost(lu, j + 1, p) for j in range(u.length - 1)]
    coords = [_reduce_free(u.base, c) for c in _unghost(ghosts, p)]
    return WittVector(u.base, coords)


def ghost_verschiebung(u: WittVector) -> WittVector:
    p = u.base.p
    lu = [_lift(c) for c in u.coords]
    ghosts = [{}] + [
        {a: p * c for a, c in _free_ghost(lu, j, p).items()}
        for j in range(u.length - 1)
    ]
    coords = [_reduce_free(u.base, c) for c in _unghost(ghosts, p)]
    return WittVector(u.base, coords)


# ---------------------------------------------------------------------------
# Teichmüller-line representation
# ---------------------------------------------------------------------------

def line_order_exponent(ring: RingHandle, a: Fraction, level: int) -> int:
    """ord(a): length of the surviving coordinate tail of the line [x^a].

    Coordinate j of m*[x^a] sits at exponent a*p^j; it dies once
    a*p^j >= cut.  The line [x^a] generates a cyclic group of order
    p^{min(level, #surviving coordinates)}.
    """
    if ring.cut is None:
        return level
    if a == 0:
        return level
    if a >= ring.cut:
        return 0
    j = 0
    b = a
    while b < ring.cut and j < level:
        j += 1
        b *= ring.p
    return j


class TeichmullerSum:
    """Element of W(R')/p^level as sum_a m_a * [x^a] with integer m_a."""

    __slots__ = ("ring", "level", "terms")

    def __init__(self, ring: RingHandle, level: int, terms: dict):
        self.ring = ring
        self.level = level
        norm = {}
        for a, m in terms.items():
            a = Fraction(a)
            o = line_order_exponent(ring, a, level)
            m %= ring.p**o
            if m:
                norm[a] = m
        self.terms = norm

    # -- constructors ----------------------------------------------------------

    @classmethod
    def zero(cls, ring: RingHandle, level: int) -> "TeichmullerSum":
        return cls(ring, level, {})

    @classmethod
    def one(cls, ring: RingHandle, level: int) -> "TeichmullerSum":
        return cls(ring, level, {Fraction(0): 1})

    @classmethod
    def teich(cls, ring: RingHandle, a, m: int = 1, level: int = 1) -> "TeichmullerSum":
        return cls(ring, level, {Fraction(a): m})

    # -- basics ----------------------------------------------------------------

    def __repr__(self):
        if not self.terms:
            return "W:0"
        return "W:" + " + ".join(
            (f"{m}[x^{a}]" if a else f"{m}") for a, m in sorted(self.terms.items())
        )

    def __eq__(self, other):
        return (
            isinstance(other, TeichmullerSum)
            and self.ring == other.ring
            and self.level == other.level
            and self.terms == other.terms
        )

    def __hash__(self):
        return hash((self.ring, self.level, tuple(sorted(self.terms.items()))))

    def is_zero(self) -> bool:
        return not self.terms

    def _require_compatible(self, other: "TeichmullerSum"):
        if self.ring != other.ring or self.level != other.level:
            raise ValueError("TeichmullerSum level/ring mismatch")

    # -- arithmetic --------------------------------------------------------------

    def __add__(self, other: "TeichmullerSum") -> "TeichmullerSum":
        self._require_compatible(other)
        acc = dict(self.terms)
        for a, m in other.terms.items():
            acc[a] = acc.get(a, 0) + m
        return TeichmullerSum(self.ring, self.level, acc)

    def __neg__(self):
        return TeichmullerSum(self.ring, self.level, {a: -m for a, m in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other: "TeichmullerSum") -> "TeichmullerSum":
        self._require_compatible(other)
        acc: dict = {}
        for a, m in self.terms.items():
            for b, k in other.terms.items():
                e = a + b
                acc[e] = acc.get(e, 0) + m * k
        return TeichmullerSum(self.ring, self.level, acc)

    def __rmul__(self, c: int):
        if not isinstance(c, int):
            return NotImplemented
        return TeichmullerSum(self.ring, self.level, {a: c * m for a, m in self.terms.items()})

    def __pow__(self, k: int):
        out = TeichmullerSum.one(self.ring, self.level)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    # -- Witt operators ----------------------------------------------------------

    def frob(self) -> "TeichmullerSum":
        return TeichmullerSum(self.ring, self.level, {a * self.ring.p: m for a, m in self.terms.items()})

    def vers(self) -> "TeichmullerSum":
        """V, computed exactly into level+1."""
        p = self.ring.p
        out = {}
        for a, m in self.terms.items():
            b = a / p
            try:
                self.ring.check_exponent(b)
            except PrecisionError as exc:
                raise PrecisionError(f"V needs exponent {b}: {exc}") from exc
            out[b] = p * m
        return TeichmullerSum(self.ring, self.level + 1, out)

    def reduce_level(self, level: int) -> "TeichmullerSum":
        if level > self.level:
            raise PrecisionError(
                f"cannot lift level {self.level} to {level} without new data"
            )
        return TeichmullerSum(self.ring, level, dict(self.terms))

    def p_divide(self, k: int = 1) -> "TeichmullerSum":
        """Exact division by p^k; the result lives k levels lower."""
        if self.level - k < 0:
            raise PrecisionError("no precision left for division by p")
        pk = self.ring.p**k
        out = {}
        for a, m in self.terms.items():
            if m % pk:
                raise ArithmeticError(f"line [x^{a}] multiplicity {m} not divisible by {pk}")
            out[a] = m // pk
        return TeichmullerSum(self.ring, self.level - k, out)

    def p_divisible(self, k: int = 1) -> bool:
        return all(m % self.ring.p**k == 0 for m in self.terms.values())

    # -- structure ----------------------------------------------------------------

    def weights(self) -> list[Fraction]:
        return sorted(self.terms.keys())

    def component(self, a) -> int:
        return self.terms.get(Fraction(a), 0)

    def split(self) -> dict:
        return {a: TeichmullerSum(self.ring, self.level, {a: m}) for a, m in self.terms.items()}

    def map_ring(self, target: RingHandle, level: Optional[int] = None) -> "TeichmullerSum":
        """Functoriality along a monomial quotient/inclusion R' -> target."""
        return TeichmullerSum(target, self.level if level is None else level, dict(self.terms))

    def residue(self) -> GradedElement:
        """Image under W(R') -> R' (the 0-th coordinate)."""
        out = {}
        for a, m in self.terms.items():
            out[a] = out.get(a, 0) + m
        return self.ring.element(out) if self.ring.n == 1 else self.ring.element(out)

    def to_coordinates(self, length: int) -> WittVector:
        """Convert to coordinate form by table arithmetic (small lengths)."""
        acc = witt_zero(self.ring, length)
        for a, m in sorted(self.terms.items()):
            t = teichmuller(self.ring.monomial(a), length)
            mm = m % self.ring.p**min(self.level, length)
            for _ in range(mm):
                acc = acc + t
        return acc

    def to_json(self) -> list:
        from .rings import format_exp

        return [[format_exp(a, self.ring.p), m] for a, m in sorted(self.terms.items())]


def from_coordinates(w: WittVector, level: int) -> TeichmullerSum:
    """Digit-peel a coordinate vector into Teichmüller lines."""
    ring = w.base
    p = ring.p
    acc = w
    out = TeichmullerSum.zero(ring, level)
    scale = 1
    for step in range(min(w.length, level)):
        c0 = acc.coords[0]
        piece = TeichmullerSum(ring, level, {a: scale * c for a, c in c0.terms})
        out = out + piece
        tsub = witt_zero(ring, w.length)
        for a, c in c0.terms:
            tv = teichmuller(ring.monomial(a, 1), w.length)
            for _ in range(c):
                tsub = tsub + tv
        acc = acc - tsub
        # now acc is in V(W); shift down one level
        if not acc.coords[0].is_zero():
            raise ArithmeticError("digit peeling failed: nonzero head after subtraction")
        coords = list(acc.coords[1:]) + [ring.zero()]
        coords = [c.pth_root() for c in coords]  # undo the coordinate twist of V
        acc = WittVector(ring, coords)
        scale *= p
    return out


# ---------------------------------------------------------------------------
# hat ideals
# ---------------------------------------------------------------------------

def hat_line_valuation(b: IdealBasis, a: Fraction, cap: int = 200) -> int:
    """j0(a): first Witt coordinate of the line [x^a] lying in the ideal.

    m*[x^a] has all coordinates in the monomial ideal b iff p^{j0} | m,
    where j0 counts the coordinates a*p^j below the ideal threshold.
    The cap bounds the count; any working level stays far below it.
    """
    if a == 0:
        return cap if b.threshold > 0 else 0
    j = 0
    e = Fraction(a)
    while e < b.threshold and j < cap:
        j += 1
        e *= b.ring.p
    return j


def hat_ideal(b: IdealBasis, w_max: Fraction, level: int) -> list[tuple[Fraction, TeichmullerSum, int]]:
    """Per-weight generators of hat-W(b) inside W(R')/p^level.

    Within a weight window homogeneity forces finite support, so the
    hat ideal coincides with the homogeneous Witt vectors with
    coordinates in b: at weight a it is the subgroup generated by
    p^{j0(a)} [x^a].  Returns (weight, generator, order exponent)
    triples with trivial lines skipped.
    """
    out = []
    for a in b.ring.weight_window(Fraction(w_max)):
        j0 = hat_line_valuation(b, a)
        o = line_order_exponent(b.ring, a, level)
        if j0 >= o:
            continue
        gen = TeichmullerSum(b.ring, level, {a: b.ring.p**j0})
        out.append((a, gen, o - j0))
    return out


# ---------------------------------------------------------------------------
# Witt carriers and frames
# ---------------------------------------------------------------------------

class WittCarrier:
    """W(R')/p^level on Teichmüller lines, optionally mod a hat ideal.

    Per weight a the carrier is the cyclic group generated by [x^a] of
    order p^{line_order(a)}; a hat quotient shortens the line further
    by the ideal valuation j0(a).  This is the degree-0 ring of the
    even frames (Witt, truncated Witt, sheared Witt).
    """

    def __init__(self, ring: RingHandle, level: int,
                 hat_quotient: Optional[IdealBasis] = None, name: str = ""):
        if ring.n != 1:
            raise ValueError("Witt carriers take characteristic-p coefficient rings")
        self.ring = ring
        self.p = ring.p
        self.level = level
        self.hat_quotient = hat_quotient
        self.name = name or f"W_{level}"

    def line_order(self, a: Fraction) -> int:
        o = line_order_exponent(self.ring, a, self.level)
        if self.hat_quotient is not None:
            o = min(o, hat_line_valuation(self.hat_quotient, a))
        return o

    def norm(self, x: TeichmullerSum) -> TeichmullerSum:
        if self.hat_quotient is None:
            return x
        return TeichmullerSum(
            self.ring, self.level,
            {a: m % self.p ** self.line_order(a) for a, m in x.terms.items()},
        )

    # -- ring operations -----------------------------------------------------

    def zero(self) -> TeichmullerSum:
        return TeichmullerSum.zero(self.ring, self.level)

    def one(self) -> TeichmullerSum:
        return TeichmullerSum.one(self.ring, self.level)

    def teich(self, a, m: int = 1) -> TeichmullerSum:
        return self.norm(TeichmullerSum(self.ring, self.level, {Fraction(a): m}))

    def add(self, x, y):
        return self.norm(x + y)

    def neg(self, x):
        return self.norm(-x)

    def mul(self, x, y):
        return self.norm(x * y)

    def smul(self, c: int, x):
        return self.norm(c * x)

    def frob(self, x):
        return self.norm(x.frob())

    def vers_trunc(self, x):
        """V truncated back into the carrier's level."""
        return self.norm(x.vers().reduce_level(self.level))

    def is_zero(self, x) -> bool:
        return self.norm(x).is_zero()

    def eq(self, x, y) -> bool:
        return self.is_zero(x - y)

    # -- graded structure ------------------------------------------------------

    def weights(self, w_max: Fraction) -> list[Fraction]:
        return [a for a in self.ring.weight_window(Fraction(w_max))
                if self.line_order(a) > 0]

    def lines(self, a: Fraction) -> list[tuple[TeichmullerSum, int]]:
        o = self.line_order(a)
        if o <= 0:
            return []
        return [(TeichmullerSum(self.ring, self.level, {Fraction(a): 1}), o)]

    def encode(self, a: Fraction, x: TeichmullerSum) -> list[int]:
        o = self.line_order(a)
        if o <= 0:
            return []
        return [self.norm(x).component(a) % self.p**o]

    def split(self, x: TeichmullerSum) -> dict:
        return self.norm(x).split()


def witt_frame(ring: RingHandle, n: int, window) -> "object":
    """The n-truncated Witt frame of a characteristic-p monomial ring.

    Degree 0 is W_n(R), positive degrees are V-tagged copies realising
    I_{n+1} with sigma_i = V^{-1}; over semiperfect R this agrees with
    W(R)/p^n.
    """
    from .frames import EvenFrame

    carrier = WittCarrier(ring, n, name=f"W_{n}")
    return EvenFrame(carrier, window, name=f"uW_{n}")


class HatWittModule:
    """The module hat-W(b)^⊕ over a Witt frame, as Γ-complex coefficients.

    Payloads coincide with the ambient even frame's payloads (carrier
    sums in degree 0, V-tags in positive degrees, τ-values in negative
    degrees); only the per-weight lines are restricted by the ideal
    valuation j0.
    """

    def __init__(self, frame, b: IdealBasis, name: str = ""):
        self.frame = frame
        self.carrier: WittCarrier = frame.carrier
        self.b = b
        self.p = frame.p
        self.window = frame.window
        self.name = name or f"hatW({b.describe()['threshold']})"
        self._modules: dict = {}

    # -- delegated element ops -------------------------------------------------

    def zero(self, d):
        return self.frame.zero(d)

    def add(self, d, x, y):
        return self.frame.add(d, x, y)

    def neg(self, d, x):
        return self.frame.neg(d, x)

    def smul(self, c, d, x):
        return self.frame.smul(c, d, x)

    def sigma(self, d, x):
        return self.frame.sigma(d, x)

    def tau(self, d, x):
        return self.frame.tau(d, x)

    def t_mul(self, d, x):
        return self.frame.t_mul(d, x)

    def scalar_mul(self, a0, x):
        return self.frame.mul(0, a0, 0, x)

    def split(self, d, x):
        return self.frame.split(d, x)

    def eq(self, d, x, y):
        diff = self.frame.sub(d, x, y)
        for w, comp in self.split(d, diff).items():
            if w > self.window.w_max:
                continue
            v = self.encode(d, w, comp)
            if any(c % self.p**o for c, o in zip(v, self.module(d, w).orders)):
                return False
        return True

    # -- restricted lines --------------------------------------------------------

    def _wt_shift(self, d) -> Fraction:
        return Fraction(self.p) if max(d, 0) >= 1 else Fraction(1)

    def weights(self, d) -> list[Fraction]:
        shift = self._wt_shift(d)
        out = []
        for a in self.carrier.weights(self.window.w_max * shift):
            w = a / shift
            if w > self.window.w_max:
                continue
            if _den_ok(w, self.carrier.ring) and self._line_data(a) is not None:
                out.append(w)
        return out

    def _line_data(self, a: Fraction):
        j0 = hat_line_valuation(self.b, a)
        o = self.carrier.line_order(a)
        if j0 >= o:
            return None
        return j0, o - j0

    def lines(self, d, w) -> list[tuple[object, int]]:
        a = Fraction(w) * self._wt_shift(d)
        data = self._line_data(a)
        if data is None:
            return []
        j0, o = data
        gen = TeichmullerSum(self.carrier.ring, self.carrier.level, {a: self.p**j0})
        return [(gen, o)]

    def encode(self, d, w, x) -> list[int]:
        a = Fraction(w) * self._wt_shift(d)
        data = self._line_data(a)
        if data is None:
            return []
        j0, o = data
        m = x.component(a) if hasattr(x, "component") else 0
        if m % self.p**j0:
            raise ValueError(f"element escapes the hat ideal at weight {w}")
        return [(m // self.p**j0) % self.p**o]

    def module(self, d, w) -> "FinModule":
        from .linalg import FinModule

        key = (max(d, 0) >= 1, Fraction(w))
        if key not in self._modules:
            self._modules[key] = FinModule(self.p, [o for _, o in self.lines(d, w)])
        return self._modules[key]

    def decode(self, d, w, vec):
        out = self.zero(d)
        for c, (gen, _) in zip(vec, self.lines(d, w)):
            if c:
                out = self.add(d, out, self.smul(c, d, gen))
        return out

    def random_element(self, d, rng, weights=None):
        out = self.zero(d)
        for w in weights if weights is not None else self.weights(d):
            m = self.module(d, w)
            v = m.random_element(rng)
            if any(v):
                out = self.add(d, out, self.decode(d, w, v))
        return out

    def contains(self, d, x) -> bool:
        for w, comp in self.split(d, x).items():
            if w > self.window.w_max:
                continue
            a = Fraction(w) * self._wt_shift(d)
            data = self._line_data(a)
            m = comp.component(a)
            if m % self.p ** self.carrier.line_order(a) == 0:
                continue
            if data is None:
                return False
            if m % self.p ** hat_line_valuation(self.b, a):
                return False
        return True


def _den_ok(w: Fraction, ring: RingHandle) -> bool:
    from .rings import exp_denominator_power

    try:
        return exp_denominator_power(w, ring.p) <= ring.kmax
    except ValueError:
        return False
