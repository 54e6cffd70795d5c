"""Approximation functions psi with certified rational brackets at dyadic arguments.

A PowerLawPsi evaluates psi_v(q) = q^{-v} at arguments q = 2^m.  For rational
v = a/b the value 2^{-ma/b} is irrational unless b divides m*a; it is bracketed
by directed-rounded exact rationals within relative error 2^-64, rounding DOWN
where a computation asserts a hit/containment and UP where it asserts that
disjointness fails.  The `scale` multiplier realizes the derived functions
2*psi and psi/3 exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

Rat = Fraction

BRACKET_BITS = 64


def int_nth_root(x: int, n: int) -> int:
    """floor(x^(1/n)) for nonnegative integer x, by Newton iteration on integers."""
    if n <= 0:
        raise ValueError("n must be positive")
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x == 0:
        return 0
    if n == 1:
        return x
    r = 1 << -(-x.bit_length() // n)  # upper-ish initial guess
    while True:
        nr = ((n - 1) * r + x // r ** (n - 1)) // n
        if nr >= r:
            break
        r = nr
    while r**n > x:
        r -= 1
    while (r + 1) ** n <= x:
        r += 1
    return r


def pow2_bracket(exponent: Rat) -> tuple[Rat, Rat]:
    """Directed bracket [lo, hi] of 2^exponent with hi/lo <= 1 + 2^-64; exact when integral."""
    e = Fraction(exponent)
    if e.denominator == 1:
        v = Fraction(2) ** e.numerator
        return (v, v)
    k, r = divmod(e.numerator, e.denominator)  # e = k + r/b with 0 < r < b
    b = e.denominator
    # 2^(r/b) in (1, 2): floor of the b-th root of 2^(64 b + r) gives 64 good bits
    c = int_nth_root(1 << (BRACKET_BITS * b + r), b)
    frac_lo = Fraction(c, 1 << BRACKET_BITS)
    frac_hi = Fraction(c + 1, 1 << BRACKET_BITS)
    base = Fraction(2) ** k
    return (base * frac_lo, base * frac_hi)


class ApproxSpec:
    """Monotonically non-increasing psi, queried at dyadic arguments 2^m."""

    scale: Rat

    def bracket_at_level(self, m: int) -> tuple[Rat, Rat]:
        """Certified rational bracket of scale * psi(2^m); lo == hi when the value is exact."""
        raise NotImplementedError

    def scaled(self, factor: Rat) -> "ApproxSpec":
        raise NotImplementedError

    @property
    def is_zero(self) -> bool:
        return self.scale == 0


@dataclass(frozen=True)
class PowerLawPsi(ApproxSpec):
    """psi_v(q) = q^{-v} with exact rational exponent v > 0, times an exact scale."""

    v: Rat
    scale: Rat = Fraction(1)

    def __post_init__(self):
        object.__setattr__(self, "v", Fraction(self.v))
        object.__setattr__(self, "scale", Fraction(self.scale))
        if self.v <= 0:
            raise ValueError(f"power-law exponent must be positive, got {self.v}")
        if self.scale < 0:
            raise ValueError("scale must be nonnegative")

    def bracket_at_level(self, m: int) -> tuple[Rat, Rat]:
        if self.scale == 0:
            return (Fraction(0), Fraction(0))
        lo, hi = pow2_bracket(-m * self.v)
        return (self.scale * lo, self.scale * hi)

    def scaled(self, factor: Rat) -> "PowerLawPsi":
        return PowerLawPsi(self.v, self.scale * Fraction(factor))


@dataclass(frozen=True)
class TablePsi(ApproxSpec):
    """psi given by exact values at arguments 2^m; monotone non-increasing on the table."""

    values: tuple[tuple[int, Rat], ...]  # sorted (m, psi(2^m)) pairs
    scale: Rat = Fraction(1)

    def __post_init__(self):
        object.__setattr__(self, "scale", Fraction(self.scale))
        raw = self.values.items() if isinstance(self.values, Mapping) else self.values
        vals = tuple(sorted((int(m), Fraction(v)) for m, v in raw))
        if not vals:
            raise ValueError("table must be nonempty")
        for (m1, v1), (m2, v2) in zip(vals, vals[1:]):
            if v2 > v1:
                raise ValueError(f"table values must be non-increasing: psi(2^{m1})={v1} < psi(2^{m2})={v2}")
        if any(v < 0 for _, v in vals):
            raise ValueError("table values must be nonnegative")
        object.__setattr__(self, "values", vals)

    def bracket_at_level(self, m: int) -> tuple[Rat, Rat]:
        for mm, v in self.values:
            if mm == m:
                x = self.scale * v
                return (x, x)
        raise KeyError(f"no table value at level m={m}")

    def scaled(self, factor: Rat) -> "TablePsi":
        return TablePsi(self.values, self.scale * Fraction(factor))
