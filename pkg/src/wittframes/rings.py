"""Computable base rings: fractional-exponent monomial algebras.

The test rings are spanned by monomials x^a with exponents a in
Z[1/p]_{>=0} and coefficients in Z/p^n:

  * perfect:        F_p[x^{1/p^inf}]                  (cut = None)
  * monogenic-qrsp: F_p[x^{1/p^inf}]/(x^c), c >= 1    (cut = c)
  * finite-table:   the point algebra F_p             (no variable)

All arithmetic is exact.  Exponents are Fractions whose denominators
are powers of p bounded by p^kmax; any operation that would need a
deeper denominator raises PrecisionError instead of truncating.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional


class PrecisionError(ArithmeticError):
    """An exact operation would exceed the configured precision caps."""


class CapExceeded(RuntimeError):
    """A configured resource cap (length, enumeration, degree) was hit."""


def is_prime(p: int) -> bool:
    if p < 2:
        return False
    d = 2
    while d * d <= p:
        if p % d == 0:
            return False
        d += 1
    return True


def exp_denominator_power(a: Fraction, p: int) -> int:
    """k such that denominator(a) = p^k, or raise if not a p-power."""
    d = a.denominator
    k = 0
    while d > 1:
        if d % p:
            raise ValueError(f"exponent {a} does not have a p-power denominator")
        d //= p
        k += 1
    return k


def format_exp(a: Fraction, p: int) -> str:
    k = exp_denominator_power(a, p)
    return f"{a.numerator}/{p}^{k}" if k else str(a.numerator)


def parse_exp(s: str, p: int) -> Fraction:
    if "/" in s:
        num, den = s.split("/")
        base, k = den.split("^")
        if int(base) != p:
            raise ValueError(f"denominator base {base} does not match p={p}")
        return Fraction(int(num), p ** int(k))
    return Fraction(int(s))


@dataclass(frozen=True)
class RingHandle:
    """Descriptor of a monomial test ring; also the element factory."""

    p: int
    n: int                      # coefficients in Z/p^n
    cut: Optional[Fraction]     # None means no cut (perfect)
    kmax: int
    kind: str                   # "perfect" | "monogenic-qrsp" | "finite-table"

    @property
    def modulus(self) -> int:
        return self.p**self.n

    @property
    def is_perfect(self) -> bool:
        return self.kind in ("perfect", "finite-table")

    @property
    def semiperfect(self) -> bool:
        return self.n == 1

    def check_exponent(self, a: Fraction) -> Fraction:
        if a < 0:
            raise ValueError(f"negative exponent {a}")
        k = exp_denominator_power(a, self.p)
        if k > self.kmax:
            raise PrecisionError(
                f"exponent {a} needs denominator {self.p}^{k} > cap {self.p}^{self.kmax}"
            )
        if self.kind == "finite-table" and a != 0:
            raise ValueError("point algebra has no variable")
        return a

    # -- element constructors -------------------------------------------------

    def element(self, terms: dict[Fraction, int] | Iterable[tuple[Fraction, int]]) -> "GradedElement":
        if isinstance(terms, dict):
            items = terms.items()
        else:
            items = terms
        acc: dict[Fraction, int] = {}
        for a, c in items:
            a = self.check_exponent(Fraction(a))
            if self.cut is not None and a >= self.cut:
                continue
            c %= self.modulus
            if c:
                acc[a] = (acc.get(a, 0) + c) % self.modulus
        acc = {a: c for a, c in acc.items() if c}
        return GradedElement(self, tuple(sorted(acc.items())))

    def zero(self) -> "GradedElement":
        return GradedElement(self, ())

    def one(self) -> "GradedElement":
        return self.element({Fraction(0): 1})

    def monomial(self, a, c: int = 1) -> "GradedElement":
        return self.element({Fraction(a): c})

    def scalar(self, c: int) -> "GradedElement":
        return self.element({Fraction(0): c})

    # -- basis enumeration ----------------------------------------------------

    def weight_window(self, w_max: Fraction) -> list[Fraction]:
        """Sorted exponents a <= w_max with denominator <= p^kmax, a < cut."""
        if self.kmax < 0:
            raise ValueError("denominator cap must be finite for enumeration")
        w_max = Fraction(w_max)
        if self.kind == "finite-table":
            return [Fraction(0)] if w_max >= 0 else []
        step = Fraction(1, self.p**self.kmax)
        out = []
        a = Fraction(0)
        while a <= w_max:
            if self.cut is None or a < self.cut:
                out.append(a)
            a += step
        return out

    def monomial_basis(self, w_max: Fraction) -> list["GradedElement"]:
        return [self.monomial(a) for a in self.weight_window(w_max)]

    # -- serialisation --------------------------------------------------------

    def describe(self) -> dict:
        return {
            "p": self.p,
            "n": self.n,
            "cut": "inf" if self.cut is None else format_exp(self.cut, self.p),
            "kmax": self.kmax,
            "kind": self.kind,
        }


def make_ring(p: int, n: int, c, kmax: int = 6) -> RingHandle:
    """Build a test ring handle.

    c is the truncation cut (a rational >= 1 with p-power denominator)
    or None for the perfect ring F_p[x^{1/p^inf}].
    """
    if not is_prime(p):
        raise ValueError(f"{p} is not prime")
    if n < 1:
        raise ValueError("coefficient modulus exponent must be >= 1")
    if c is None:
        return RingHandle(p=p, n=n, cut=None, kmax=kmax, kind="perfect")
    c = Fraction(c)
    if c < 1:
        raise ValueError(f"cut {c} < 1: quotient is not qrsp in the supported family")
    k = exp_denominator_power(c, p)
    if k > kmax:
        raise ValueError(f"cut denominator {p}^{k} exceeds cap {p}^{kmax}")
    if n != 1:
        raise ValueError("monogenic-qrsp rings are F_p-algebras; need n = 1")
    return RingHandle(p=p, n=n, cut=c, kmax=kmax, kind="monogenic-qrsp")


def point_ring(p: int, n: int = 1, kmax: int = 0) -> RingHandle:
    """The lookup-table algebra F_p (n = 1) or Z/p^n scalars."""
    if not is_prime(p):
        raise ValueError(f"{p} is not prime")
    return RingHandle(p=p, n=n, cut=None, kmax=kmax, kind="finite-table")


class GradedElement:
    """Finitely supported sum of monomials c * x^a, coefficients mod p^n.

    Zero is the empty term tuple; elements are normalised on
    construction and immutable afterwards.
    """

    __slots__ = ("ring", "terms")

    def __init__(self, ring: RingHandle, terms: tuple[tuple[Fraction, int], ...]):
        self.ring = ring
        self.terms = terms

    # -- basics ---------------------------------------------------------------

    def __eq__(self, other):
        return (
            isinstance(other, GradedElement)
            and self.ring == other.ring
            and self.terms == other.terms
        )

    def __hash__(self):
        return hash((self.ring, self.terms))

    def __bool__(self):
        return bool(self.terms)

    def __repr__(self):
        if not self.terms:
            return "0"
        bits = []
        for a, c in self.terms:
            if a == 0:
                bits.append(str(c))
            elif c == 1:
                bits.append(f"x^{a}")
            else:
                bits.append(f"{c}*x^{a}")
        return " + ".join(bits)

    def is_zero(self) -> bool:
        return not self.terms

    def exponents(self) -> list[Fraction]:
        return [a for a, _ in self.terms]

    def coefficient(self, a) -> int:
        a = Fraction(a)
        for b, c in self.terms:
            if b == a:
                return c
        return 0

    def is_homogeneous(self) -> bool:
        return len(self.terms) <= 1

    def weight(self) -> Optional[Fraction]:
        """Exponent of a nonzero homogeneous element."""
        if len(self.terms) != 1:
            raise ValueError("weight of a non-homogeneous or zero element")
        return self.terms[0][0]

    # -- arithmetic -----------------------------------------------------------

    def _require_same_ring(self, other: "GradedElement"):
        if self.ring != other.ring:
            raise ValueError("elements of different rings")

    def __add__(self, other: "GradedElement") -> "GradedElement":
        self._require_same_ring(other)
        acc = dict(self.terms)
        for a, c in other.terms:
            acc[a] = acc.get(a, 0) + c
        return self.ring.element(acc)

    def __neg__(self) -> "GradedElement":
        return self.ring.element({a: -c for a, c in self.terms})

    def __sub__(self, other: "GradedElement") -> "GradedElement":
        return self + (-other)

    def __mul__(self, other: "GradedElement") -> "GradedElement":
        self._require_same_ring(other)
        acc: dict[Fraction, int] = {}
        for a, c in self.terms:
            for b, d in other.terms:
                e = a + b
                if self.ring.cut is not None and e >= self.ring.cut:
                    continue
                acc[e] = acc.get(e, 0) + c * d
        return self.ring.element(acc)

    def __rmul__(self, c: int) -> "GradedElement":
        if not isinstance(c, int):
            return NotImplemented
        return self.ring.element({a: c * co for a, co in self.terms})

    def __pow__(self, k: int) -> "GradedElement":
        if k < 0:
            raise ValueError("negative powers are not defined here")
        out = self.ring.one()
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    # -- Frobenius structure --------------------------------------------------

    def frobenius(self) -> "GradedElement":
        """x^a -> x^{pa}, coefficients to their p-th power.

        A ring homomorphism for n = 1; for n > 1 this is the declared
        coefficient-wise lift of Frobenius.
        """
        p = self.ring.p
        return self.ring.element({a * p: pow(c, p, self.ring.modulus) for a, c in self.terms})

    def pth_root(self) -> "GradedElement":
        """The monomial-wise section of Frobenius (n = 1 only)."""
        if self.ring.n != 1:
            raise ValueError("p-th roots only in characteristic p")
        p = self.ring.p
        return self.ring.element({a / p: c for a, c in self.terms})

    # -- serialisation --------------------------------------------------------

    def to_json(self) -> list:
        return [[format_exp(a, self.ring.p), c] for a, c in self.terms]


def element_from_json(ring: RingHandle, data: list) -> GradedElement:
    return ring.element({parse_exp(s, ring.p): c for s, c in data})


def frobenius(r: GradedElement) -> GradedElement:
    return r.frobenius()


@dataclass(frozen=True)
class IdealBasis:
    """Monomial ideal given by an exponent threshold: span{x^a : a >= t}.

    For the supported family all the ideals we need (J, F^m(J), R[F^m])
    are of this shape; membership is decided by exponent comparison.
    """

    ring: RingHandle
    threshold: Fraction

    def contains(self, el: GradedElement) -> bool:
        return all(a >= self.threshold for a, _ in el.terms)

    def is_zero_ideal(self) -> bool:
        return self.ring.cut is not None and self.threshold >= self.ring.cut

    def monomials(self, w_max: Fraction) -> list[Fraction]:
        return [a for a in self.ring.weight_window(w_max) if a >= self.threshold]

    def describe(self) -> dict:
        return {"threshold": format_exp(self.threshold, self.ring.p)}


def kernel_of_frobenius_power(ring: RingHandle, m: int) -> IdealBasis:
    """R[F^m] = ker(F^m) = span{x^a : c/p^m <= a < c} for the qrsp family."""
    if ring.kind != "monogenic-qrsp":
        if ring.is_perfect:
            # Frobenius is injective; represent the zero ideal
            return IdealBasis(ring, Fraction(10**9))
        raise ValueError("kernel_of_frobenius_power needs a monogenic-qrsp ring")
    if m < 0:
        raise ValueError("negative Frobenius power")
    assert ring.cut is not None
    return IdealBasis(ring, ring.cut / ring.p**m)


def cut_ideal(ring: RingHandle) -> IdealBasis:
    """J = ker(R^flat -> R) inside the perfection, as a threshold ideal."""
    if ring.cut is None:
        return IdealBasis(ring, Fraction(10**9))
    return IdealBasis(ring, ring.cut)


def perfection(ring: RingHandle) -> RingHandle:
    """R^flat of a monogenic-qrsp ring (the same ring without the cut)."""
    return RingHandle(p=ring.p, n=ring.n, cut=None, kmax=ring.kmax, kind="perfect")


def deeper_cut(ring: RingHandle, m: int) -> RingHandle:
    """R_m = R^flat / F^m(J) = F_p[x^{1/p^inf}]/(x^{c p^m})."""
    if ring.cut is None:
        return ring
    return RingHandle(
        p=ring.p, n=ring.n, cut=ring.cut * ring.p**m, kmax=ring.kmax,
        kind="monogenic-qrsp",
    )
