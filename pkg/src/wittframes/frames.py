"""Graded frames: axioms, ideals, quotients, modules and windows.

A frame here is a Z-graded ring A = ⊕ A_i with ring maps σ, τ: A → A_0
such that τ_0 = id, τ_m is bijective for m < 0, σ_0 is a Frobenius
lift, and σ_{-1}(t) = p for the element t in degree -1 with τ(t) = 1.

Carriers are weight-graded with finite per-weight bases inside an
explicit window; degrees m < 0 are represented canonically through the
bijection τ_m, i.e. a degree -m payload *is* its τ-value in A_0 and
the frame routes σ, t and multiplication accordingly.  Frame axioms
are certified on the window basis by ``validate_frame``; failures are
reported as data with witnesses, never raised.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

from .linalg import FinModule, HowellForm, Morphism, subgroup_basis
from .rings import CapExceeded, RingHandle


@dataclass(frozen=True)
class Window:
    """Finite computation window: weight cap, Witt length cap, reserve."""

    w_max: Fraction
    lmax: int = 3
    reserve: int = 2
    deg_max: int = 2
    action_cap: int = 10**6

    def __post_init__(self):
        object.__setattr__(self, "w_max", Fraction(self.w_max))
        if self.lmax < 1 or self.reserve < 0 or self.deg_max < 1:
            raise ValueError("window caps must be positive")

    def bumped(self) -> "Window":
        """The stabilisation re-check window (one notch larger)."""
        return Window(self.w_max * 2, self.lmax + 1, self.reserve,
                      self.deg_max, self.action_cap)

    def describe(self) -> dict:
        return {
            "w_max": str(self.w_max),
            "lmax": self.lmax,
            "reserve": self.reserve,
            "deg_max": self.deg_max,
        }


class Frame:
    """Base frame; subclasses provide degrees >= 0, negatives are routed.

    Payloads are degree-dependent: a frame element is handled as a pair
    (degree, payload) by the caller.  For degrees m < 0 the payload is
    the τ_m-image in A_0, which realises the axiom that τ_m is
    bijective with an explicit inverse.

    Equality of elements is window equality: components in weights
    above the window cap are quotiented away, so every constructed
    frame is literally the quotient of the ideal of high weights.
    """

    name: str = "frame"

    def __init__(self, residue_ring: RingHandle, window: Window):
        self.ring = residue_ring
        self.p = residue_ring.p
        self.window = window
        self._modules: dict = {}

    # -- hooks for degrees >= 0 (subclass API) ---------------------------------

    def _zero(self, d):
        raise NotImplementedError

    def _one(self):
        raise NotImplementedError

    def _add(self, d, x, y):
        raise NotImplementedError

    def _neg(self, d, x):
        raise NotImplementedError

    def _mul(self, d1, x, d2, y):
        raise NotImplementedError

    def _sigma(self, d, x):
        raise NotImplementedError

    def _tau(self, d, x):
        raise NotImplementedError

    def _t(self, d, x):
        """Multiplication by t: degree d >= 1 payload to degree d-1."""
        raise NotImplementedError

    def _weights(self, d) -> list[Fraction]:
        raise NotImplementedError

    def _lines(self, d, w) -> list[tuple[object, int]]:
        raise NotImplementedError

    def _encode(self, d, w, x) -> list[int]:
        raise NotImplementedError

    def _split(self, d, x) -> dict:
        raise NotImplementedError

    # -- public degree-routed interface ----------------------------------------

    def _d(self, d: int) -> int:
        if d > self.window.deg_max:
            raise CapExceeded(f"degree {d} beyond window cap {self.window.deg_max}")
        return max(d, 0)

    def zero(self, d: int):
        return self._zero(self._d(d))

    def one(self):
        return self._one()

    def add(self, d: int, x, y):
        return self._add(self._d(d), x, y)

    def neg(self, d: int, x):
        return self._neg(self._d(d), x)

    def sub(self, d: int, x, y):
        return self.add(d, x, self.neg(d, y))

    def smul(self, c: int, d: int, x):
        if c < 0:
            return self.neg(d, self.smul(-c, d, x))
        out = self.zero(d)
        base = x
        while c:
            if c & 1:
                out = self.add(d, out, base)
            base = self.add(d, base, base)
            c >>= 1
        return out

    def mul(self, d1: int, x, d2: int, y):
        if d1 > d2:
            d1, x, d2, y = d2, y, d1, x
        if d1 >= 0:
            return self._mul(d1, x, d2, y)
        m = -d1
        if d2 <= 0:
            return self._mul(0, x, 0, y)
        if d2 - m >= 1:
            deg, yy = d2, y
            for _ in range(m):
                yy = self._t(deg, yy)
                deg -= 1
            return self._mul(0, x, deg, yy)
        return self._mul(0, x, 0, self._tau(d2, y))

    def sigma(self, d: int, x):
        if d >= 0:
            return self._sigma(d, x)
        return self.smul(self.p ** (-d), 0, self._sigma(0, x))

    def tau(self, d: int, x):
        if d >= 0:
            return self._tau(d, x)
        return x

    def tau_inverse(self, d: int, y):
        """Inverse of τ_d for d <= 0 (witnesses bijectivity)."""
        if d > 0:
            raise ValueError("tau is only inverted in degrees <= 0")
        return y

    def t_mul(self, d: int, x):
        if d >= 1:
            return self._t(d, x)
        return x

    def is_zero(self, d: int, x) -> bool:
        for w, comp in self.split(d, x).items():
            if w > self.window.w_max:
                continue
            mod = self.module(d, w)
            if not mod.is_zero(self.encode(d, w, comp)):
                return False
        return True

    def eq(self, d: int, x, y) -> bool:
        return self.is_zero(d, self.sub(d, x, y))

    def weights(self, d: int) -> list[Fraction]:
        return self._weights(self._d(d))

    def lines(self, d: int, w) -> list[tuple[object, int]]:
        return self._lines(self._d(d), Fraction(w))

    def encode(self, d: int, w, x) -> list[int]:
        return self._encode(self._d(d), Fraction(w), x)

    def split(self, d: int, x) -> dict:
        return self._split(self._d(d), x)

    # -- per-weight modules ------------------------------------------------------

    def module(self, d: int, w) -> FinModule:
        key = (self._d(d), Fraction(w))
        if key not in self._modules:
            self._modules[key] = FinModule(self.p, [o for _, o in self.lines(d, w)])
        return self._modules[key]

    def decode(self, d: int, w, vec: list[int]):
        out = self.zero(d)
        for c, (gen, _) in zip(vec, self.lines(d, w)):
            if c:
                out = self.add(d, out, self.smul(c, d, gen))
        return out

    def component(self, d: int, w, x):
        return self.split(d, x).get(Fraction(w), self.zero(d))

    def encode_component(self, d: int, w, x) -> list[int]:
        return self.encode(d, w, self.component(d, w, x))

    def random_element(self, d: int, rng, weights=None):
        out = self.zero(d)
        for w in weights if weights is not None else self.weights(d):
            m = self.module(d, w)
            v = m.random_element(rng)
            if any(v):
                out = self.add(d, out, self.decode(d, w, v))
        return out

    def basis_elements(self, d: int):
        for w in self.weights(d):
            for gen, o in self.lines(d, w):
                if o > 0:
                    yield w, gen

    def describe(self) -> dict:
        return {"frame": self.name, "window": self.window.describe()}


# ---------------------------------------------------------------------------
# graded spaces: finite direct sums of per-weight modules
# ---------------------------------------------------------------------------

class GradedSpace:
    """⊕ over (slot, weight) of frame modules; encodes full elements.

    ``slots`` is a list of (frame_like, degree) pairs; an element is a
    list of payloads, one per slot.  frame_like may be a Frame or any
    object with the same weights/lines/encode/split/module interface
    (ideal modules use this).
    """

    def __init__(self, slots: list[tuple[object, int]]):
        self.slots = slots
        self.index: list[tuple[int, Fraction]] = []
        orders: list[int] = []
        self._offsets = {}
        for si, (fr, d) in enumerate(slots):
            for w in fr.weights(d):
                if w > fr.window.w_max:
                    continue
                mod = fr.module(d, w)
                self._offsets[(si, w)] = (len(orders), mod.rank)
                self.index.append((si, w))
                orders.extend(mod.orders)
        p = slots[0][0].p if slots else 2
        self.ambient = FinModule(p, orders)

    def encode(self, payloads: list) -> list[int]:
        vec = [0] * self.ambient.rank
        for si, (fr, d) in enumerate(self.slots):
            for w, comp in fr.split(d, payloads[si]).items():
                if (si, w) not in self._offsets:
                    continue
                off, rank = self._offsets[(si, w)]
                coords = fr.encode(d, w, comp)
                for j in range(rank):
                    vec[off + j] = coords[j]
        return self.ambient.reduce(vec)

    def decode(self, vec: list[int]) -> list:
        payloads = []
        for si, (fr, d) in enumerate(self.slots):
            x = fr.zero(d)
            for (sj, w), (off, rank) in self._offsets.items():
                if sj != si:
                    continue
                coords = vec[off:off + rank]
                if any(coords):
                    x = fr.add(d, x, fr.decode(d, w, coords))
            payloads.append(x)
        return payloads

    def as_morphism(self, target: "GradedSpace", fn: Callable) -> Morphism:
        """Matrix of an additive map given on payload lists."""
        rows = []
        for i in range(self.ambient.rank):
            e = self.ambient.zero()
            e[i] = 1
            rows.append(target.encode(fn(self.decode(e))))
        return Morphism(self.ambient, target.ambient, rows, check=False)


# ---------------------------------------------------------------------------
# even frames over a Witt-like carrier
# ---------------------------------------------------------------------------

class EvenFrame(Frame):
    """Frame with A_i ≅ A_0 via σ_i for all i >= 1.

    The carrier provides the degree-0 ring (Teichmüller-line Witt
    vectors, possibly modulo a hat ideal); a degree d >= 1 payload is
    the tag u = σ_d(x), the element itself being V(u) placed in degree
    d.  The Witt frame, the truncated Witt frame and the sheared Witt
    frames are all instances.
    """

    def __init__(self, carrier, window: Window, name: str):
        super().__init__(carrier.ring, window)
        self.carrier = carrier
        self.name = name

    # degree-0 payloads are carrier elements; degree >= 1 payloads are tags

    def _zero(self, d):
        return self.carrier.zero()

    def _one(self):
        return self.carrier.one()

    def _add(self, d, x, y):
        return self.carrier.add(x, y)

    def _neg(self, d, x):
        return self.carrier.neg(x)

    def _mul(self, d1, x, d2, y):
        if d1 + d2 > self.window.deg_max:
            raise CapExceeded(f"product degree {d1 + d2} beyond window cap")
        if d1 == 0 and d2 == 0:
            return self.carrier.mul(x, y)
        if d1 == 0:
            # a * V(u) = V(F(a) u)
            return self.carrier.mul(self.carrier.frob(x), y)
        # V(u) V(v) = V(u v) in matching degrees
        return self.carrier.mul(x, y)

    def _sigma(self, d, x):
        if d == 0:
            return self.carrier.frob(x)
        return x

    def _tau(self, d, x):
        if d == 0:
            return x
        out = self.carrier.smul(self.p ** (d - 1), x)
        return self.carrier.vers_trunc(out)

    def _t(self, d, x):
        if d == 1:
            return self.carrier.vers_trunc(x)
        return self.carrier.smul(self.p, x)

    def _weights(self, d):
        if d == 0:
            return self.carrier.weights(self.window.w_max)
        return [w / self.p for w in self.carrier.weights(self.window.w_max * self.p)
                if (w / self.p) <= self.window.w_max
                and not _exceeds_kmax(w / self.p, self.ring)]

    def _lines(self, d, w):
        if d == 0:
            return self.carrier.lines(w)
        return self.carrier.lines(w * self.p)

    def _encode(self, d, w, x):
        if d == 0:
            return self.carrier.encode(w, x)
        return self.carrier.encode(w * self.p, x)

    def _split(self, d, x):
        if d == 0:
            return self.carrier.split(x)
        return {w / self.p: comp for w, comp in self.carrier.split(x).items()}


def _exceeds_kmax(w: Fraction, ring: RingHandle) -> bool:
    from .rings import exp_denominator_power

    try:
        return exp_denominator_power(w, ring.p) > ring.kmax
    except ValueError:
        return True


# ---------------------------------------------------------------------------
# frame validation
# ---------------------------------------------------------------------------

@dataclass
class AxiomCheck:
    name: str
    passed: bool
    witness: Optional[str] = None

    def to_json(self) -> dict:
        out = {"name": self.name, "pass": self.passed}
        if self.witness is not None:
            out["witness"] = self.witness
        return out


@dataclass
class AxiomReport:
    frame: str
    checks: list[AxiomCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self) -> dict:
        return {"frame": self.frame, "pass": self.passed,
                "axioms": [c.to_json() for c in self.checks]}


def validate_frame(fr: Frame, rng=None, samples: int = 25) -> AxiomReport:
    """Check the frame axioms on the window basis plus random samples."""
    import random as _random

    rng = rng or _random.Random(0)
    checks: list[AxiomCheck] = []
    dmax = fr.window.deg_max

    def sample_pairs():
        degs = list(range(-dmax, dmax + 1))
        for _ in range(samples):
            d1, d2 = rng.choice(degs), rng.choice(degs)
            if d1 + d2 > dmax:
                continue
            yield d1, fr.random_element(d1, rng), d2, fr.random_element(d2, rng)

    # tau_0 = id
    bad = None
    for w, b in fr.basis_elements(0):
        if not fr.eq(0, fr.tau(0, b), b):
            bad = f"weight {w}"
            break
    checks.append(AxiomCheck("tau0_identity", bad is None, bad))

    # tau_m bijective for m < 0 (explicit inverse round-trips)
    bad = None
    for m in range(1, dmax + 1):
        for w, b in fr.basis_elements(-m):
            v = fr.tau_inverse(-m, fr.tau(-m, b))
            if not fr.eq(-m, v, b):
                bad = f"degree {-m}, weight {w}"
                break
    checks.append(AxiomCheck("tau_negative_bijective", bad is None, bad))

    # sigma is a ring homomorphism
    bad = None
    for d1, x, d2, y in sample_pairs():
        lhs = fr.sigma(d1 + d2, fr.mul(d1, x, d2, y))
        rhs = fr.mul(0, fr.sigma(d1, x), 0, fr.sigma(d2, y))
        if not fr.eq(0, lhs, rhs):
            bad = f"degrees ({d1},{d2})"
            break
    checks.append(AxiomCheck("sigma_multiplicative", bad is None, bad))

    # tau is a ring homomorphism
    bad = None
    for d1, x, d2, y in sample_pairs():
        lhs = fr.tau(d1 + d2, fr.mul(d1, x, d2, y))
        rhs = fr.mul(0, fr.tau(d1, x), 0, fr.tau(d2, y))
        if not fr.eq(0, lhs, rhs):
            bad = f"degrees ({d1},{d2})"
            break
    checks.append(AxiomCheck("tau_multiplicative", bad is None, bad))

    # sigma_0 is a Frobenius lift: sigma(a) = a^p mod p
    bad = None
    for w, b in fr.basis_elements(0):
        diff = fr.sub(0, fr.sigma(0, b), _frame_pow(fr, b, fr.p))
        if not _divisible_by_p(fr, 0, diff):
            bad = f"weight {w}: sigma(b) != b^p mod p"
            break
    checks.append(AxiomCheck("sigma0_frobenius_lift", bad is None, bad))

    # sigma_{-1}(t) = p, where t has tau(t) = 1
    t_payload = fr.t_mul(0, fr.one())  # t * 1 in degree -1, payload = tau-value 1
    ok = fr.eq(0, fr.sigma(-1, t_payload), fr.smul(fr.p, 0, fr.one()))
    ok = ok and fr.eq(0, fr.tau(-1, t_payload), fr.one())
    checks.append(AxiomCheck("sigma_minus1_t_is_p", ok, None if ok else "t"))

    # tau_d = multiplication by t^d into degree 0
    bad = None
    for d in range(1, dmax + 1):
        for w, b in fr.basis_elements(d):
            x, deg = b, d
            for _ in range(d):
                x = fr.t_mul(deg, x)
                deg -= 1
            if not fr.eq(0, x, fr.tau(d, b)):
                bad = f"degree {d}, weight {w}"
                break
    checks.append(AxiomCheck("tau_is_t_power", bad is None, bad))

    # sigma(t x) = p sigma(x)
    bad = None
    for d in range(1, dmax + 1):
        for w, b in fr.basis_elements(d):
            lhs = fr.sigma(d - 1, fr.t_mul(d, b))
            rhs = fr.smul(fr.p, 0, fr.sigma(d, b))
            if not fr.eq(0, lhs, rhs):
                bad = f"degree {d}, weight {w}"
                break
    checks.append(AxiomCheck("sigma_t_compat", bad is None, bad))

    return AxiomReport(fr.name, checks)


def _frame_pow(fr: Frame, x, k: int):
    out = fr.one()
    for _ in range(k):
        out = fr.mul(0, out, 0, x)
    return out


def _divisible_by_p(fr: Frame, d: int, x) -> bool:
    """x in p*A_d, checked per weight by solving in the module."""
    from .linalg import express

    for w, comp in fr.split(d, x).items():
        if w > fr.window.w_max:
            continue
        mod = fr.module(d, w)
        v = fr.encode(d, w, comp)
        if mod.is_zero(v):
            continue
        rows = []
        for i in range(mod.rank):
            e = mod.zero()
            e[i] = fr.p
            rows.append(e)
        if express(mod, rows, v) is None:
            return False
    return True


class SabotagedFrame(Frame):
    """Negative control: wrap a frame and replace sigma_0 by a given map."""

    def __init__(self, inner: Frame, sigma0: Callable):
        super().__init__(inner.ring, inner.window)
        self.inner = inner
        self._sigma0 = sigma0
        self.name = inner.name + "[sabotaged-sigma]"

    def _zero(self, d):
        return self.inner._zero(d)

    def _one(self):
        return self.inner._one()

    def _add(self, d, x, y):
        return self.inner._add(d, x, y)

    def _neg(self, d, x):
        return self.inner._neg(d, x)

    def _mul(self, d1, x, d2, y):
        return self.inner._mul(d1, x, d2, y)

    def _sigma(self, d, x):
        if d == 0:
            return self._sigma0(x)
        return self.inner._sigma(d, x)

    def _tau(self, d, x):
        return self.inner._tau(d, x)

    def _t(self, d, x):
        return self.inner._t(d, x)

    def _weights(self, d):
        return self.inner._weights(d)

    def _lines(self, d, w):
        return self.inner._lines(d, w)

    def _encode(self, d, w, x):
        return self.inner._encode(d, w, x)

    def _split(self, d, x):
        return self.inner._split(d, x)


# ---------------------------------------------------------------------------
# frame ideals
# ---------------------------------------------------------------------------

class FrameIdeal:
    """Homogeneous ideal of a frame, stored as per-(degree, weight) spans."""

    def __init__(self, frame: Frame, name: str = "ideal"):
        self.frame = frame
        self.name = name
        self.spans: dict[tuple[int, Fraction], HowellForm] = {}

    def degrees(self) -> list[int]:
        return sorted({d for d, _ in self.spans})

    def span_at(self, d: int, w) -> HowellForm:
        key = (d, Fraction(w))
        if key not in self.spans:
            self.spans[key] = self.frame.module(d, w).span([])
        return self.spans[key]

    def contains(self, d: int, x) -> bool:
        fr = self.frame
        for w, comp in fr.split(d, x).items():
            if w > fr.window.w_max:
                continue
            if not fr.module(d, w).member(self.span_at(d, w), fr.encode(d, w, comp)):
                return False
        return True

    def gens_at(self, d: int, w) -> list:
        fr = self.frame
        mod = fr.module(d, w)
        return [fr.decode(d, w, g) for g in mod.subgroup_gens(self.span_at(d, w))]

    def basis_at(self, d: int, w) -> tuple[FinModule, list]:
        """Independent generators with orders (payloads)."""
        fr = self.frame
        mod = fr.module(d, w)
        sub, rows = subgroup_basis(mod, self.span_at(d, w))
        return sub, [fr.decode(d, w, r) for r in rows]

    def order_exponent(self, d: int) -> int:
        return sum(
            s.order_exponent() for (dd, _), s in self.spans.items() if dd == d
        )

    def all_gens(self, d: int) -> list:
        out = []
        for (dd, w), _ in sorted(self.spans.items(), key=lambda kv: (kv[0][0], kv[0][1])):
            if dd == d:
                out.extend(self.gens_at(dd, w))
        return out

    @classmethod
    def from_generators(cls, frame: Frame, gens: list[tuple[int, object]],
                        name: str = "ideal", saturate: bool = True) -> "FrameIdeal":
        ideal = cls(frame, name)
        buckets: dict[tuple[int, Fraction], list] = {}
        degs = range(-frame.window.deg_max, frame.window.deg_max + 1)

        def push(d, x):
            for w, comp in frame.split(d, x).items():
                if w > frame.window.w_max:
                    continue
                buckets.setdefault((d, w), []).append(frame.encode(d, w, comp))

        for d, g in gens:
            push(d, g)
        if saturate:
            for d, g in gens:
                for e in degs:
                    if d + e > frame.window.deg_max or d + e < -frame.window.deg_max:
                        continue
                    for _, b in frame.basis_elements(e):
                        push(d + e, frame.mul(e, b, d, g))
        for (d, w), vecs in buckets.items():
            ideal.spans[(d, w)] = frame.module(d, w).span(vecs)
        return ideal

    @classmethod
    def principal_p_power(cls, frame: Frame, n: int, name: str | None = None) -> "FrameIdeal":
        """The ideal p^n A."""
        ideal = cls(frame, name or f"p^{n}A")
        for d in range(-frame.window.deg_max, frame.window.deg_max + 1):
            for w in frame.weights(d):
                mod = frame.module(d, w)
                gens = []
                for i in range(mod.rank):
                    e = mod.zero()
                    e[i] = frame.p**n
                    gens.append(e)
                ideal.spans[(d, Fraction(w))] = mod.span(gens)
        return ideal


def validate_ideal(K: FrameIdeal, rng=None, samples: int = 20) -> AxiomReport:
    """Certify sigma/tau stability, t-power bijectivity and the ideal law."""
    import random as _random

    rng = rng or _random.Random(0)
    fr = K.frame
    checks = []
    dmax = fr.window.deg_max

    def gens_of(d):
        out = []
        for w in fr.weights(d):
            out.extend(K.gens_at(d, w))
        return out

    # sigma(K_d) and tau(K_d) inside K_0
    bad_s = bad_t = None
    for d in range(-dmax, dmax + 1):
        for g in gens_of(d):
            if not K.contains(0, fr.sigma(d, g)):
                bad_s = f"degree {d}"
            if not K.contains(0, fr.tau(d, g)):
                bad_t = f"degree {d}"
    checks.append(AxiomCheck("sigma_stable", bad_s is None, bad_s))
    checks.append(AxiomCheck("tau_stable", bad_t is None, bad_t))

    # t^i : K_0 -> K_{-i} bijective for i >= 0: in the canonical negative-
    # degree presentation t acts as the identity on payloads, so this is
    # span equality of K_0 and K_{-i}.
    bad = None
    for i in range(1, dmax + 1):
        for w in fr.weights(0):
            if not fr.module(0, w).spans_equal(K.span_at(0, w), K.span_at(-i, w)):
                bad = f"i={i}, weight {w}"
                break
    checks.append(AxiomCheck("t_power_bijective", bad is None, bad))

    # ideal law: A_e * K_d ⊆ K_{d+e} on sampled basis products
    bad = None
    for _ in range(samples):
        d = rng.randrange(-dmax, dmax + 1)
        e = rng.randrange(-dmax, dmax + 1)
        if not (-dmax <= d + e <= dmax):
            continue
        gl = gens_of(d)
        if not gl:
            continue
        g = rng.choice(gl)
        a = fr.random_element(e, rng)
        if not K.contains(d + e, fr.mul(e, a, d, g)):
            bad = f"degrees ({e},{d})"
            break
    checks.append(AxiomCheck("ideal_multiplicative", bad is None, bad))
    return AxiomReport(f"{fr.name}/{K.name}", checks)


class QuotientFrame(Frame):
    """Frame A/K with canonical coset representatives per weight."""

    def __init__(self, inner: Frame, K: FrameIdeal, name: str):
        super().__init__(inner.ring, inner.window)
        self.inner = inner
        self.K = K
        self.name = name
        self._line_cache: dict = {}

    def reduce(self, d: int, x):
        fr = self.inner
        d0 = max(d, 0)
        out = fr.zero(d0)
        for w, comp in fr.split(d0, x).items():
            if w > fr.window.w_max:
                continue
            mod = fr.module(d0, w)
            rep = mod.coset_rep(self.K.span_at(d0, w), fr.encode(d0, w, comp))
            if any(rep):
                out = fr.add(d0, out, fr.decode(d0, w, rep))
        return out

    # payloads are inner payloads; all ops reduce afterwards

    def _zero(self, d):
        return self.inner._zero(d)

    def _one(self):
        return self.inner._one()

    def _add(self, d, x, y):
        return self.reduce(d, self.inner._add(d, x, y))

    def _neg(self, d, x):
        return self.reduce(d, self.inner._neg(d, x))

    def _mul(self, d1, x, d2, y):
        return self.reduce(d1 + d2, self.inner._mul(d1, x, d2, y))

    def _sigma(self, d, x):
        return self.reduce(0, self.inner._sigma(d, x))

    def _tau(self, d, x):
        return self.reduce(0, self.inner._tau(d, x))

    def _t(self, d, x):
        return self.reduce(d - 1, self.inner._t(d, x))

    def _weights(self, d):
        return self.inner._weights(d)

    def _quotient(self, d, w):
        key = (d, Fraction(w))
        if key not in self._line_cache:
            mod = self.inner.module(d, w)
            self._line_cache[key] = mod.quotient(self.K.span_at(d, w))
        return self._line_cache[key]

    def _lines(self, d, w):
        q = self._quotient(d, w)
        out = []
        for i in range(q.target.rank):
            e = q.target.zero()
            e[i] = 1
            payload = self.inner.decode(d, w, q.lift(e))
            out.append((payload, q.target.orders[i]))
        return out

    def _encode(self, d, w, x):
        q = self._quotient(d, w)
        return q.project(self.inner.encode(d, w, x))

    def _split(self, d, x):
        return {w: c for w, c in self.inner._split(d, x).items()}

    def project_payload(self, d: int, x):
        """The quotient map A -> A/K on payloads (canonical rep)."""
        return self.reduce(d, x)


# ---------------------------------------------------------------------------
# leveled ideals
# ---------------------------------------------------------------------------

@dataclass
class LeveledData:
    is_leveled: bool
    witness: Optional[str]
    sigma_dot: Optional[Callable]          # payload K_0 -> K_0 (weight w -> pw)
    is_nilpotent: Optional[bool] = None
    bound: Optional[int] = None
    nil_witness: Optional[str] = None


def leveled_data(K: FrameIdeal, check_nilpotence: bool = True) -> LeveledData:
    """Is τ_1: K_1 -> K_0 bijective; if so build σ̇ = σ_1 ∘ τ_1^{-1}.

    σ̇-nilpotence is certified per weight: σ̇ multiplies weight by p, so
    each positive-weight chain leaves the window, and on the weight-0
    line the matrix of σ̇ mod p is iterated until it vanishes or cycles.
    """
    fr = K.frame
    tau_sections: dict = {}
    for w in fr.weights(1):
        sub1, rows1 = subgroup_basis(fr.module(1, w), K.span_at(1, w))
        mod0 = fr.module(0, w)
        span0 = K.span_at(0, w)
        img_rows = [fr.encode(0, w, fr.tau(1, b)) for b in
                    (fr.decode(1, w, r) for r in rows1)]
        sub0, rows0 = subgroup_basis(mod0, span0)
        from .linalg import express

        expressed = []
        for r in img_rows:
            if not mod0.member(span0, r):
                return LeveledData(False, f"tau(K_1) escapes K_0 at weight {w}", None)
            c = express(mod0, rows0, r)
            expressed.append(sub0.reduce(c) if c is not None else None)
        if any(c is None for c in expressed):
            return LeveledData(False, f"tau image not expressible at weight {w}", None)
        m = Morphism(sub1, sub0, expressed, check=False)
        if not m.is_bijective():
            return LeveledData(False, f"tau_1 not bijective on K at weight {w}", None)
        tau_sections[Fraction(w)] = (sub1, rows1, sub0, rows0, m)

    # weights present in K_0 but absent from K_1 must carry trivial K_0
    for w in fr.weights(0):
        if Fraction(w) in tau_sections:
            continue
        if K.span_at(0, w).order_exponent() != 0:
            return LeveledData(False, f"K_0 nonzero at weight {w} with K_1 empty", None)

    def sigma_dot(payload):
        out = fr.zero(0)
        for w, comp in fr.split(0, payload).items():
            if w > fr.window.w_max or Fraction(w) not in tau_sections:
                continue
            sub1, rows1, sub0, rows0, m = tau_sections[Fraction(w)]
            vec = fr.encode(0, w, comp)
            from .linalg import express

            c0 = express(fr.module(0, w), rows0, vec)
            if c0 is None:
                raise ValueError("sigma_dot applied outside K_0")
            # invert tau_1 on the subgroup basis
            c1 = _invert_on_basis(m, sub0.reduce(c0))
            pre = fr.zero(1)
            for ci, r in zip(c1, rows1):
                if ci:
                    pre = fr.add(1, pre, fr.smul(ci, 1, fr.decode(1, w, r)))
            out = fr.add(0, out, fr.sigma(1, pre))
        return out

    data = LeveledData(True, None, sigma_dot)
    if not check_nilpotence:
        return data

    # nilpotence of sigma_dot on K_0/p
    bound = 0
    for w in fr.weights(0):
        sub0_span = K.span_at(0, w)
        if sub0_span.order_exponent() == 0:
            continue
        _, rows0 = subgroup_basis(fr.module(0, w), sub0_span)
        for r in rows0:
            x = fr.decode(0, w, r)
            m = 0
            seen = set()
            while not _in_pK(fr, K, x):
                x = sigma_dot(x)
                m += 1
                key = _payload_key(fr, 0, x)
                if key in seen or m > 4 * (fr.window.lmax + fr.window.reserve + K.frame.window.deg_max + 8):
                    data.is_nilpotent = False
                    data.nil_witness = f"sigma_dot-stable line from weight {w}"
                    data.bound = None
                    return data
                seen.add(key)
            bound = max(bound, m)
    data.is_nilpotent = True
    data.bound = bound
    return data


def _invert_on_basis(m: Morphism, target_coords: list[int]) -> list[int]:
    from .linalg import express

    c = express(m.target, m.rows, target_coords)
    if c is None:
        raise ValueError("morphism not surjective where inversion was requested")
    return c


def _in_pK(fr: Frame, K: FrameIdeal, x) -> bool:
    for w, comp in fr.split(0, x).items():
        if w > fr.window.w_max:
            continue
        mod = fr.module(0, w)
        vec = fr.encode(0, w, comp)
        if mod.is_zero(vec):
            continue
        gens = [mod.smul(fr.p, g) for g in mod.subgroup_gens(K.span_at(0, w))]
        if not mod.member(mod.span(gens), vec):
            return False
    return True


def _payload_key(fr: Frame, d: int, x) -> tuple:
    items = []
    for w, comp in sorted(fr.split(d, x).items()):
        if w > fr.window.w_max:
            continue
        items.append((w, tuple(fr.encode(d, w, comp))))
    return tuple(items)


# ---------------------------------------------------------------------------
# frame homomorphisms
# ---------------------------------------------------------------------------

class FrameHom:
    """Homomorphism of frames given by payload maps per degree."""

    def __init__(self, source: Frame, target: Frame, fn: Callable,
                 name: str = "hom", section: Optional[Callable] = None):
        self.source = source
        self.target = target
        self.fn = fn              # (degree, payload) -> payload
        self.section = section    # (degree, payload) -> payload, right inverse
        self.name = name

    def map(self, d: int, x):
        return self.fn(d, x)

    def kernel_ideal(self, name: str | None = None) -> FrameIdeal:
        fr, tg = self.source, self.target
        K = FrameIdeal(fr, name or f"ker({self.name})")
        for d in range(-fr.window.deg_max, fr.window.deg_max + 1):
            for w in fr.weights(d):
                mod = fr.module(d, w)
                rows = []
                for gen, _ in fr.lines(d, w):
                    img = self.map(d, gen)
                    rows.append(_encode_full_weight(tg, d, img))
                tgt_mod = _full_module(tg, d)
                mor = Morphism(mod, tgt_mod, rows, check=False)
                K.spans[(d, Fraction(w))] = mor.kernel()
        return K

    def check_commutes(self, rng, samples: int = 20) -> Optional[str]:
        """Spot-check that the map intertwines sigma, tau and products."""
        fr, tg = self.source, self.target
        dmax = fr.window.deg_max
        for _ in range(samples):
            d = rng.randrange(-dmax, dmax + 1)
            x = fr.random_element(d, rng)
            if not tg.eq(0, self.map(0, fr.sigma(d, x)), tg.sigma(d, self.map(d, x))):
                return f"sigma at degree {d}"
            if not tg.eq(0, self.map(0, fr.tau(d, x)), tg.tau(d, self.map(d, x))):
                return f"tau at degree {d}"
            d2 = rng.randrange(-dmax, dmax + 1)
            if not (-dmax <= d + d2 <= dmax):
                continue
            y = fr.random_element(d2, rng)
            lhs = self.map(d + d2, fr.mul(d, x, d2, y))
            rhs = tg.mul(d, self.map(d, x), d2, self.map(d2, y))
            if not tg.eq(d + d2, lhs, rhs):
                return f"mul at degrees ({d},{d2})"
        return None

    def verify_section(self, rng, samples: int = 20) -> Optional[str]:
        if self.section is None:
            return "no section stored"
        tg = self.target
        dmax = tg.window.deg_max
        for _ in range(samples):
            d = rng.randrange(-dmax, dmax + 1)
            y = tg.random_element(d, rng)
            if not tg.eq(d, self.map(d, self.section(d, y)), y):
                return f"section fails at degree {d}"
        return None


def _full_module(fr: Frame, d: int) -> FinModule:
    orders = []
    for w in fr.weights(d):
        orders.extend(fr.module(d, w).orders)
    return FinModule(fr.p, orders)


def _encode_full_weight(fr: Frame, d: int, x) -> list[int]:
    comps = fr.split(d, x)
    vec: list[int] = []
    for w in fr.weights(d):
        mod = fr.module(d, w)
        if Fraction(w) in comps:
            vec.extend(fr.encode(d, w, comps[Fraction(w)]))
        else:
            vec.extend(mod.zero())
    return vec


# ---------------------------------------------------------------------------
# modules and windows
# ---------------------------------------------------------------------------

class FrameModule:
    """Free graded module ⊕_k A(-d_k) e_k with a structure map.

    phi is the matrix of F on M^σ = M^τ = A_0^r: F(e_k^σ) =
    Σ_j phi[j][k] e_j^τ.  A window additionally certifies bijectivity
    of F by an explicit inverse matrix.
    """

    def __init__(self, frame: Frame, gen_degrees: list[int], phi: list[list],
                 phi_inv: Optional[list[list]] = None, name: str = "module"):
        self.frame = frame
        self.gen_degrees = list(gen_degrees)
        self.rank = len(gen_degrees)
        self.phi = phi
        self.phi_inv = phi_inv
        self.name = name

    @property
    def is_window(self) -> bool:
        return self.phi_inv is not None

    def is_effective(self) -> bool:
        return all(d >= 0 for d in self.gen_degrees)

    def tangent_degrees(self) -> list[int]:
        return [k for k, d in enumerate(self.gen_degrees) if d == 0]

    def shift(self, m: int) -> "FrameModule":
        """(M, F)(m): generator degrees move by -m, F unchanged."""
        return FrameModule(self.frame, [d - m for d in self.gen_degrees],
                           self.phi, self.phi_inv, f"{self.name}({m})")

    def tensor(self, other: "FrameModule") -> "FrameModule":
        fr = self.frame
        degs = []
        phi = []
        pairs = [(k, l) for k in range(self.rank) for l in range(other.rank)]
        for k, l in pairs:
            degs.append(self.gen_degrees[k] + other.gen_degrees[l])
        for kj, lj in pairs:
            row = []
            for kk, ll in pairs:
                row.append(fr.mul(0, self.phi[kj][kk], 0, other.phi[lj][ll]))
            phi.append(row)
        phi_inv = None
        if self.phi_inv is not None and other.phi_inv is not None:
            phi_inv = []
            for kj, lj in pairs:
                row = []
                for kk, ll in pairs:
                    row.append(fr.mul(0, self.phi_inv[kj][kk], 0, other.phi_inv[lj][ll]))
                phi_inv.append(row)
        return FrameModule(fr, degs, phi, phi_inv, f"{self.name}⊗{other.name}")

    def base_change(self, hom: FrameHom, target_frame: Optional[Frame] = None) -> "FrameModule":
        tg = target_frame or hom.target
        phi = [[hom.map(0, e) for e in row] for row in self.phi]
        phi_inv = None
        if self.phi_inv is not None:
            phi_inv = [[hom.map(0, e) for e in row] for row in self.phi_inv]
        return FrameModule(tg, self.gen_degrees, phi, phi_inv, self.name)

    def certify_window(self, rng, samples: int = 10) -> bool:
        """phi * phi_inv = identity over A_0."""
        if self.phi_inv is None:
            return False
        fr = self.frame
        for i in range(self.rank):
            for j in range(self.rank):
                acc = fr.zero(0)
                for k in range(self.rank):
                    acc = fr.add(0, acc, fr.mul(0, self.phi[i][k], 0, self.phi_inv[k][j]))
                want = fr.one() if i == j else fr.zero(0)
                if not fr.eq(0, acc, want):
                    return False
        return True


@dataclass
class TwoTermComplex:
    """[source --d--> target] in degrees {-1, 0} with per-weight matrices."""

    source: GradedSpace
    target: GradedSpace
    d: Morphism
    label: str = ""

    def homology(self) -> tuple[list[int], list[int]]:
        from .linalg import two_term_homology

        return two_term_homology(self.d)

    def h0_quotient(self):
        return self.target.ambient.quotient(self.d.image())


def gamma_complex(M: FrameModule, i: int, coeff=None) -> TwoTermComplex:
    """Γ_i(M ⊗ coeff): [ (M ⊗ N)_i --γ_F--> (M ⊗ N)^τ ].

    γ_F(y) = F(y^σ) - y^τ.  With M free on generators of degrees d_k
    the degree-i part is ⊕_k N_{i-d_k} and the τ-side is ⊕_k N_0-line;
    ``coeff`` is a graded object over the same frame (default: the
    frame itself, giving the plain complex of the module).
    """
    fr = M.frame
    N = coeff if coeff is not None else fr
    src = GradedSpace([(N, i - dk) for dk in M.gen_degrees])
    tgt = GradedSpace([(N, 0) for _ in M.gen_degrees])

    def dmap(payloads):
        sig = [N.sigma(i - dk, a) for dk, a in zip(M.gen_degrees, payloads)]
        out = []
        for j in range(M.rank):
            acc = N.zero(0)
            for k in range(M.rank):
                acc = N.add(0, acc, _scalar_mul(N, M.phi[j][k], sig[k]))
            acc = N.add(0, acc, N.neg(0, N.tau(i - M.gen_degrees[j], payloads[j])))
            out.append(acc)
        return out

    return TwoTermComplex(src, tgt, src.as_morphism(tgt, dmap),
                          label=f"Gamma_{i}({M.name})")


def _scalar_mul(N, a0_payload, x):
    """Multiply a degree-0 frame scalar into a coefficient payload."""
    if hasattr(N, "scalar_mul"):
        return N.scalar_mul(a0_payload, x)
    return N.mul(0, a0_payload, 0, x)
