"""Cantor-normal-form ordinal arithmetic below w^w.

Ordinals are kept in CNF as a tuple of (exponent, coefficient) pairs with
strictly decreasing natural exponents.  This range covers every length,
layer and step count that a representable proof term can produce: family
nesting depth is finite, so exponents never need to reach w themselves.

Infinite sums of described sequences (`ord_inf_sum`) and the unique
decomposition of an ordinal against such a sequence (`ord_decompose`)
are the two operations the rest of the library leans on when indexing
components of infinite concatenations.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import total_ordering
from typing import Callable

from .errors import OrdinalOverflow, PreconditionViolated, UnsupportedFamily

# Number of indices at which a sampled family is checked against its
# declared pattern.
FAMILY_SAMPLES = 8


@total_ordering
@dataclass(frozen=True)
class Ordinal:
    """An ordinal < w^w in Cantor normal form.

    `terms` is a tuple of (exponent, coefficient) pairs, exponents strictly
    decreasing, coefficients >= 1.  The empty tuple is 0.
    """

    terms: tuple = ()

    def __post_init__(self):
        last = None
        for e, c in self.terms:
            if not (isinstance(e, int) and isinstance(c, int)):
                raise TypeError("ordinal terms must be pairs of ints")
            if e < 0 or c < 1:
                raise ValueError(f"bad CNF term (w^{e})*{c}")
            if last is not None and e >= last:
                raise ValueError("CNF exponents must strictly decrease")
            last = e

    # -- constructors ------------------------------------------------
    @staticmethod
    def from_int(n: int) -> "Ordinal":
        if n < 0:
            raise ValueError("ordinals are non-negative")
        return Ordinal(((0, n),)) if n else Ordinal()

    @staticmethod
    def omega_power(e: int, c: int = 1) -> "Ordinal":
        return Ordinal(((e, c),)) if c else Ordinal()

    # -- basic structure ---------------------------------------------
    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def is_successor(self) -> bool:
        return bool(self.terms) and self.terms[-1][0] == 0

    @property
    def is_limit(self) -> bool:
        return bool(self.terms) and self.terms[-1][0] != 0

    @property
    def is_finite(self) -> bool:
        return not self.terms or (len(self.terms) == 1 and self.terms[0][0] == 0)

    def as_int(self) -> int:
        if self.is_zero:
            return 0
        if not self.is_finite:
            raise OrdinalOverflow(f"{self} is not finite")
        return self.terms[0][1]

    # -- arithmetic ---------------------------------------------------
    def __add__(self, other) -> "Ordinal":
        if isinstance(other, int):
            other = Ordinal.from_int(other)
        if not isinstance(other, Ordinal):
            return NotImplemented
        if other.is_zero:
            return self
        lead = other.terms[0][0]
        kept = [t for t in self.terms if t[0] > lead]
        merged = list(other.terms)
        if self.terms and any(t[0] == lead for t in self.terms):
            c = next(c for e, c in self.terms if e == lead)
            merged[0] = (lead, merged[0][1] + c)
        return Ordinal(tuple(kept) + tuple(merged))

    def __radd__(self, other):
        if isinstance(other, int):
            return Ordinal.from_int(other) + self
        return NotImplemented

    def times_omega(self) -> "Ordinal":
        """self * w, the only multiplication ord_inf_sum needs."""
        if self.is_zero:
            return self
        return Ordinal.omega_power(self.terms[0][0] + 1)

    def minus(self, other: "Ordinal") -> "Ordinal":
        """The unique g with other + g == self; requires other <= self."""
        if isinstance(other, int):
            other = Ordinal.from_int(other)
        if other > self:
            raise PreconditionViolated(f"{other} > {self}, cannot subtract")
        a, b = self.terms, other.terms
        for i in range(len(b)):
            if i >= len(a) or a[i] != b[i]:
                # first divergence: everything of self from here on, with
                # the coefficient difference when exponents agree
                ea, ca = a[i]
                eb, cb = b[i]
                if ea == eb:
                    rest = ((ea, ca - cb),) if ca > cb else ()
                    return Ordinal(rest + a[i + 1:])
                return Ordinal(a[i:])
        return Ordinal(a[len(b):])

    # -- comparison ---------------------------------------------------
    def __lt__(self, other):
        if isinstance(other, int):
            other = Ordinal.from_int(other)
        if not isinstance(other, Ordinal):
            return NotImplemented
        return self.terms < other.terms  # lexicographic on CNF works

    def __eq__(self, other):
        if isinstance(other, int):
            other = Ordinal.from_int(other)
        if not isinstance(other, Ordinal):
            return NotImplemented
        return self.terms == other.terms

    def __hash__(self):
        return hash(self.terms)

    # -- text format:  w^2*3 + w*1 + 5 --------------------------------
    def __str__(self):
        if self.is_zero:
            return "0"
        parts = []
        for e, c in self.terms:
            if e == 0:
                parts.append(str(c))
            else:
                base = "w" if e == 1 else f"w^{e}"
                parts.append(base if c == 1 else f"{base}*{c}")
        return " + ".join(parts)

    def __repr__(self):
        return f"Ordinal({self})"

    @staticmethod
    def parse(text: str) -> "Ordinal":
        text = text.strip()
        if text == "0":
            return Ordinal()
        terms = []
        for part in text.split("+"):
            part = part.strip()
            if not part:
                raise ValueError("empty ordinal component")
            if part.startswith("w"):
                rest = part[1:]
                e = 1
                if rest.startswith("^"):
                    rest = rest[1:]
                    num = ""
                    while rest and rest[0].isdigit():
                        num += rest[0]
                        rest = rest[1:]
                    e = int(num)
                c = 1
                if rest.startswith("*"):
                    c = int(rest[1:])
                elif rest:
                    raise ValueError(f"bad ordinal component {part!r}")
                terms.append((e, c))
            else:
                terms.append((0, int(part)))
        return Ordinal(tuple(terms))


ZERO = Ordinal()
ONE = Ordinal.from_int(1)
OMEGA = Ordinal.omega_power(1)


def ord_add(a: Ordinal, b: Ordinal) -> Ordinal:
    return a + b


def ord_cmp(a: Ordinal, b: Ordinal) -> int:
    """-1, 0 or 1."""
    if a == b:
        return 0
    return -1 if a < b else 1


# ---------------------------------------------------------------------
# Families <a_i>_{i<w}


@dataclass(frozen=True)
class ConstantFamily:
    value: Ordinal

    def at(self, i: int) -> Ordinal:
        return self.value


@dataclass(frozen=True)
class AffineFamily:
    """a_i = a*i + b, a natural-valued sequence."""

    a: int
    b: int

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise ValueError("affine family needs natural coefficients")

    def at(self, i: int) -> Ordinal:
        return Ordinal.from_int(self.a * i + self.b)


@dataclass(frozen=True)
class SampledFamily:
    """An evaluator plus a declared eventually-constant pattern.

    The declaration says a_i == tail for every i >= tail_from; it is
    verified at indices 0..FAMILY_SAMPLES before being trusted.
    """

    fn: Callable[[int], Ordinal]
    tail_from: int
    tail: Ordinal

    def at(self, i: int) -> Ordinal:
        return self.fn(i)

    def check(self, samples: int = FAMILY_SAMPLES):
        for i in range(self.tail_from, max(samples, self.tail_from + 1) + 1):
            if self.fn(i) != self.tail:
                raise UnsupportedFamily(
                    f"declared tail {self.tail} but a_{i} = {self.fn(i)}")


@dataclass(frozen=True)
class EventuallyAffineFamily:
    """a_i = a*i + b (naturals) for every i >= tail_from; arbitrary
    sampled head before that."""

    fn: Callable[[int], Ordinal]
    tail_from: int
    a: int
    b: int

    def at(self, i: int) -> Ordinal:
        return self.fn(i)

    def check(self, samples: int = FAMILY_SAMPLES):
        for i in range(self.tail_from, max(samples, self.tail_from + 2) + 1):
            want = Ordinal.from_int(self.a * i + self.b)
            if self.fn(i) != want:
                raise UnsupportedFamily(
                    f"declared affine tail fails at a_{i} = {self.fn(i)}")


OrdinalFamily = (ConstantFamily, AffineFamily, SampledFamily,
                 EventuallyAffineFamily)


def ord_inf_sum(f) -> Ordinal:
    """sup of the partial sums a_0 + ... + a_n over all n < w."""
    if isinstance(f, ConstantFamily):
        return f.value.times_omega()
    if isinstance(f, AffineFamily):
        if f.a == 0 and f.b == 0:
            return ZERO
        return OMEGA
    if isinstance(f, SampledFamily):
        f.check()
        prefix = ZERO
        for i in range(f.tail_from):
            prefix = prefix + f.fn(i)
        if f.tail.is_zero:
            return prefix
        return prefix + f.tail.times_omega()
    if isinstance(f, EventuallyAffineFamily):
        f.check()
        prefix = ZERO
        for i in range(f.tail_from):
            prefix = prefix + f.fn(i)
        if f.a == 0 and f.b == 0:
            return prefix
        return prefix + OMEGA
    raise UnsupportedFamily(f"not an ordinal family: {f!r}")


def ord_decompose(beta: Ordinal, f) -> tuple:
    """Split beta against the sequence: the unique (k, g) with
    a_0 + ... + a_{k-1} + g == beta and g < a_k, k minimal."""
    total = ord_inf_sum(f)
    if not beta < total:
        raise PreconditionViolated(f"{beta} >= sum of the family ({total})")
    partial = ZERO
    k = 0
    while True:
        nxt = partial + f.at(k)
        if beta < nxt:
            return k, beta.minus(partial)
        partial = nxt
        k += 1


def ord_cofinal_split(alpha: Ordinal):
    """A sequence of nonzero ordinals < alpha whose infinite sum is alpha.

    Only limit ordinals qualify.  No monotonicity is promised; the tail is
    constant w^(e-1) where w^e is alpha's final CNF term.
    """
    if not alpha.is_limit:
        raise PreconditionViolated(f"{alpha} is not a limit ordinal")
    e_last, c_last = alpha.terms[-1]
    tail = Ordinal.omega_power(e_last - 1)
    head_terms = alpha.terms[:-1]
    if c_last > 1:
        head_terms = head_terms + ((e_last, c_last - 1),)
    beta = Ordinal(head_terms)
    if beta.is_zero:
        return ConstantFamily(tail)
    return SampledFamily(lambda i, b=beta, t=tail: b if i == 0 else t, 1, tail)
