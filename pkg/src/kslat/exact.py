"""Exact arithmetic in the field Q(i, sqrt(2), sqrt(3), ...).

Elements are finite sums ``q * i**e * sqrt(m)`` with rational ``q``, ``e`` in
{0, 1} and ``m`` a positive squarefree integer.  These basis elements are
linearly independent over Q, so an element is zero exactly when every
coefficient is zero.  That gives a decidable equality test, which is all the
orthogonality computations need.  Division goes through the Galois
automorphisms that flip the sign of one radical at a time.
"""

from __future__ import annotations

import math
import re
from fractions import Fraction
from functools import lru_cache
from numbers import Rational
from typing import Iterable, Union

from .errors import ParseError

Key = tuple[int, int]  # (power of i, squarefree radicand)
Scalar = Union["Surd", int, Fraction]

__all__ = ["Surd", "as_surd", "is_exact_scalar"]


@lru_cache(maxsize=None)
def _squarefree_split(n: int) -> tuple[int, int]:
    """Return (g, m) with n == g*g*m and m squarefree."""
    g, m, p = 1, 1, 2
    while p * p <= n:
        while n % (p * p) == 0:
            n //= p * p
            g *= p
        if n % p == 0:
            n //= p
            m *= p
        p += 1
    return g, m * n


@lru_cache(maxsize=None)
def _primes(m: int) -> tuple[int, ...]:
    out, p = [], 2
    while p * p <= m:
        if m % p == 0:
            out.append(p)
            m //= p
        p += 1
    if m > 1:
        out.append(m)
    return tuple(out)


def _mul_keys(a: Key, b: Key) -> tuple[int, Key]:
    e = a[0] + b[0]
    sign = 1
    if e == 2:
        e, sign = 0, -1
    g = math.gcd(a[1], b[1])
    return sign * g, (e, (a[1] // g) * (b[1] // g))


class Surd:
    """Immutable exact complex number with square-root radicals."""

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms: dict[Key, Fraction] | None = None):
        clean = {k: Fraction(v) for k, v in (terms or {}).items() if v != 0}
        self._terms: tuple[tuple[Key, Fraction], ...] = tuple(sorted(clean.items()))
        self._hash: int | None = None

    # construction ----------------------------------------------------------

    @classmethod
    def rational(cls, q: int | Fraction) -> "Surd":
        return cls({(0, 1): Fraction(q)})

    @classmethod
    def sqrt(cls, n: int | Fraction) -> "Surd":
        """Exact square root of a non-negative rational."""
        q = Fraction(n)
        if q < 0:
            return cls.sqrt(-q) * I_UNIT
        # sqrt(a/b) = sqrt(a*b)/b
        g, m = _squarefree_split(q.numerator * q.denominator)
        return cls({(0, m): Fraction(g, q.denominator)})

    @classmethod
    def parse(cls, text: str) -> "Surd":
        """Parse literals such as ``3``, ``-1/2``, ``1+√2``, ``2sqrt(3)``, ``1/2i``."""
        s = text.strip().replace(" ", "")
        if not s:
            raise ParseError("empty exact literal")
        pos, total, matched = 0, ZERO, False
        while pos < len(s):
            m = _TERM.match(s, pos)
            if m is None or m.end() == pos:
                raise ParseError(f"bad exact literal {text!r}")
            sign, num, root_a, root_b, imag = m.groups()
            if pos > 0 and not sign:
                raise ParseError(f"bad exact literal {text!r}")
            if num is None and root_a is None and root_b is None and imag is None:
                raise ParseError(f"bad exact literal {text!r}")
            coeff = Fraction(num) if num is not None else Fraction(1)
            if sign == "-":
                coeff = -coeff
            term = cls.rational(coeff)
            root = root_a or root_b
            if root is not None:
                term = term * cls.sqrt(int(root))
            if imag:
                term = term * I_UNIT
            total = total + term
            matched = True
            pos = m.end()
        if not matched:
            raise ParseError(f"bad exact literal {text!r}")
        return total

    # structure ---------------------------------------------------------------

    @property
    def terms(self) -> tuple[tuple[Key, Fraction], ...]:
        return self._terms

    def is_zero(self) -> bool:
        return not self._terms

    def is_rational(self) -> bool:
        return all(k == (0, 1) for k, _ in self._terms)

    def is_real(self) -> bool:
        return all(k[0] == 0 for k, _ in self._terms)

    def to_fraction(self) -> Fraction:
        if not self.is_rational():
            raise ValueError(f"{self} is not rational")
        return self._terms[0][1] if self._terms else Fraction(0)

    @property
    def real(self) -> "Surd":
        return Surd({k: v for k, v in self._terms if k[0] == 0})

    @property
    def imag(self) -> "Surd":
        return Surd({(0, k[1]): v for k, v in self._terms if k[0] == 1})

    def conjugate(self) -> "Surd":
        return Surd({k: (-v if k[0] else v) for k, v in self._terms})

    def _flip(self, prime: int) -> "Surd":
        return Surd({k: (-v if k[1] % prime == 0 else v) for k, v in self._terms})

    def _generators(self) -> list[int]:
        gens: set[int] = set()
        for (e, m), _ in self._terms:
            gens.update(_primes(m))
            if e:
                gens.add(-1)
        return sorted(gens)

    def inverse(self) -> "Surd":
        if self.is_zero():
            raise ZeroDivisionError("Surd division by zero")
        norm, acc = self, ONE
        for g in self._generators():
            conj = norm.conjugate() if g == -1 else norm._flip(g)
            acc = acc * conj
            norm = norm * conj
        return acc * Surd.rational(1 / norm.to_fraction())

    # arithmetic --------------------------------------------------------------

    def __add__(self, other: Scalar) -> "Surd":
        other = as_surd(other)
        out = dict(self._terms)
        for k, v in other._terms:
            out[k] = out.get(k, 0) + v
        return Surd(out)

    __radd__ = __add__

    def __neg__(self) -> "Surd":
        return Surd({k: -v for k, v in self._terms})

    def __sub__(self, other: Scalar) -> "Surd":
        return self + (-as_surd(other))

    def __rsub__(self, other: Scalar) -> "Surd":
        return as_surd(other) - self

    def __mul__(self, other: Scalar) -> "Surd":
        other = as_surd(other)
        out: dict[Key, Fraction] = {}
        for ka, va in self._terms:
            for kb, vb in other._terms:
                c, k = _mul_keys(ka, kb)
                out[k] = out.get(k, 0) + c * va * vb
        return Surd(out)

    __rmul__ = __mul__

    def __truediv__(self, other: Scalar) -> "Surd":
        other = as_surd(other)
        if other.is_rational():
            q = other.to_fraction()
            if q == 0:
                raise ZeroDivisionError("Surd division by zero")
            return Surd({k: v / q for k, v in self._terms})
        return self * other.inverse()

    def __rtruediv__(self, other: Scalar) -> "Surd":
        return as_surd(other) / self

    def __pow__(self, n: int) -> "Surd":
        if n < 0:
            return self.inverse() ** (-n)
        out = ONE
        for _ in range(n):
            out = out * self
        return out

    # comparison / conversion -------------------------------------------------

    def __eq__(self, other: object) -> bool:
        if isinstance(other, (int, Fraction, Surd)):
            return self._terms == as_surd(other)._terms
        if isinstance(other, (float, complex)):
            return complex(self) == other
        return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(self._terms)
        return self._hash

    def __complex__(self) -> complex:
        re_, im_ = 0.0, 0.0
        for (e, m), v in self._terms:
            x = float(v) * math.sqrt(m)
            if e:
                im_ += x
            else:
                re_ += x
        return complex(re_, im_)

    def __float__(self) -> float:
        if not self.is_real():
            raise TypeError(f"{self} is not real")
        return complex(self).real

    def __bool__(self) -> bool:
        return not self.is_zero()

    def __repr__(self) -> str:
        return f"Surd({str(self)!r})"

    def __str__(self) -> str:
        if not self._terms:
            return "0"
        parts = []
        for (e, m), v in self._terms:
            mag = abs(v)
            body = "" if (mag == 1 and (m != 1 or e)) else str(mag)
            if m != 1:
                body += f"√{m}"
            if e:
                body += "i"
            parts.append(("-" if v < 0 else "+") + body)
        out = "".join(parts)
        return out[1:] if out.startswith("+") else out

    def to_json(self) -> list[list]:
        return [[e, m, str(v)] for (e, m), v in self._terms]

    @classmethod
    def from_json(cls, data: Iterable) -> "Surd":
        try:
            return cls({(int(e), int(m)): Fraction(v) for e, m, v in data})
        except (TypeError, ValueError) as exc:
            raise ParseError(f"bad exact payload {data!r}") from exc


_TERM = re.compile(
    r"([+-])?(\d+(?:/\d+)?)?(?:√(\d+)|sqrt\((\d+)\))?(i)?"
)

ZERO = Surd()
ONE = Surd({(0, 1): Fraction(1)})
I_UNIT = Surd({(1, 1): Fraction(1)})


def as_surd(x: Scalar) -> Surd:
    if isinstance(x, Surd):
        return x
    if isinstance(x, (int, Rational)) and not isinstance(x, bool):
        return Surd.rational(Fraction(x))
    if isinstance(x, bool):
        return Surd.rational(int(x))
    raise TypeError(f"cannot convert {type(x).__name__} to an exact scalar")


def is_exact_scalar(x: object) -> bool:
    return isinstance(x, (Surd, int, Fraction)) and not isinstance(x, bool)
