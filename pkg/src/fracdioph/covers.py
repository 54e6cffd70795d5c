"""Primitive-rational ball families at dyadic levels.

Level-m family A consists of open balls B(p/q, psi(2^m)/q) over primitive
pairs with 2^m <= q < 2^{m+1}; family D uses 2^{m-1} <= q < 2^m.  Membership
decisions use the certified radius bracket: the upper radius when asking
whether a ball can meet something (so no true member is missed) and the lower
radius when certifying that a ball really contains attractor structure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Optional, Sequence

from .approx import ApproxSpec
from .ifs import (
    AttractorDecision,
    IntervalQ,
    Ifs1D,
    TriBool,
    Word,
    attractor_intersection,
    default_search_depth,
)

Rat = Fraction


class Family(Enum):
    A = "A"
    D = "D"


def q_range(family: Family, m: int) -> tuple[int, int]:
    """Half-open denominator range [q_lo, q_hi) of the level-m family."""
    if m < 1:
        raise ValueError("level m must be >= 1")
    if family is Family.A:
        return (2**m, 2 ** (m + 1))
    return (2 ** (m - 1), 2**m)


@dataclass(frozen=True)
class RationalBall:
    """Open ball B(p/q, psi(2^m)/q) with primitive (p,q) and a certified radius bracket."""

    p: int
    q: int
    m: int
    family: Family
    radius_lo: Rat
    radius_hi: Rat

    def __post_init__(self):
        if self.q <= 0:
            raise ValueError("q must be positive")
        if math.gcd(self.p, self.q) != 1:
            raise ValueError(f"({self.p},{self.q}) is not primitive")
        qlo, qhi = q_range(self.family, self.m)
        if not qlo <= self.q < qhi:
            raise ValueError(f"q={self.q} outside family {self.family.value} range [{qlo},{qhi}) at m={self.m}")
        if not 0 < self.radius_lo <= self.radius_hi:
            raise ValueError("radius bracket must satisfy 0 < lo <= hi")

    @property
    def center(self) -> Rat:
        return Fraction(self.p, self.q)

    def inner_interval(self) -> IntervalQ:
        """Open interval certainly contained in the true ball."""
        return IntervalQ(self.center - self.radius_lo, self.center + self.radius_lo, True, True)

    def outer_interval(self) -> IntervalQ:
        """Closed interval certainly containing the true ball."""
        return IntervalQ(self.center - self.radius_hi, self.center + self.radius_hi)

    def scaled(self, factor: Rat) -> "RationalBall":
        f = Fraction(factor)
        return RationalBall(self.p, self.q, self.m, self.family, self.radius_lo * f, self.radius_hi * f)


def window_p_bounds(q: int, psi_hi: Rat, window: IntervalQ) -> tuple[int, int]:
    """Inclusive numerator range of balls at denominator q meeting the window.

    The open ball (p/q - r, p/q + r) with r <= psi_hi/q meets the window iff
    p > q*lo - psi_hi and p < q*hi + psi_hi (strict; positive-width ball).
    """
    x_lo = q * window.lo - psi_hi
    x_hi = q * window.hi + psi_hi
    p_min = math.floor(x_lo) + 1
    p_max = math.ceil(x_hi) - 1
    return (p_min, p_max)


def enumerate_balls(spec: ApproxSpec, m: int, family: Family, window: IntervalQ) -> list[RationalBall]:
    """Exactly the primitive balls of the level-m family meeting the window, sorted by (q, p).

    Uses the upper radius bound so no true member is missed.  Cost is
    proportional to the number of numerator candidates inside the window,
    per denominator.
    """
    psi_lo, psi_hi = spec.bracket_at_level(m)
    if psi_hi == 0 or window.is_empty:
        return []
    qlo, qhi = q_range(family, m)
    out = []
    for q in range(qlo, qhi):
        p_min, p_max = window_p_bounds(q, psi_hi, window)
        for p in range(p_min, p_max + 1):
            if math.gcd(p, q) == 1:
                out.append(RationalBall(p, q, m, family, psi_lo / q, psi_hi / q))
    return out


def classify_ball(ifs: Ifs1D, ball: RationalBall, max_depth: Optional[int] = None
                  ) -> tuple[TriBool, Optional[Word]]:
    """Certified classification of a ball against the attractor.

    YES: some cylinder sits inside the deflated open ball, so the true ball
    meets K (witness word returned).  NO: even the inflated closed ball misses
    every cylinder chain, so the true ball misses K.  UNDECIDED otherwise.
    """
    if max_depth is None:
        max_depth = default_search_depth(ifs, 2 * ball.radius_lo)
    inner = attractor_intersection(ifs, ball.inner_interval(), max_depth)
    if inner.decision is TriBool.YES:
        return (TriBool.YES, inner.witness)
    if ball.radius_lo == ball.radius_hi:
        # exact radius: the inner query already decided the true ball
        return (inner.decision, None)
    outer = attractor_intersection(ifs, ball.outer_interval(), max_depth)
    if outer.decision is TriBool.NO:
        return (TriBool.NO, None)
    return (TriBool.UNDECIDED, None)


@dataclass(frozen=True)
class CoverLevel:
    """Attractor-filtered level family: exhaustive hit/miss/undecided partition."""

    m: int
    balls: tuple[RationalBall, ...]
    hits: tuple[RationalBall, ...]
    misses: tuple[RationalBall, ...]
    undecided: tuple[RationalBall, ...]
    hit_witnesses: tuple[Word, ...]  # aligned with hits; cylinder inside each hit ball

    def __post_init__(self):
        if len(self.hits) + len(self.misses) + len(self.undecided) != len(self.balls):
            raise ValueError("partition does not cover the ball list")
        if len(self.hit_witnesses) != len(self.hits):
            raise ValueError("one witness per hit required")


def filter_attractor_hits(ifs: Ifs1D, balls: Sequence[RationalBall],
                          depth: Optional[int] = None) -> CoverLevel:
    """Classify each ball with certified hit/miss decisions; undecided reported separately."""
    hits, misses, und, wits = [], [], [], []
    m = balls[0].m if balls else 0
    for b in balls:
        decision, witness = classify_ball(ifs, b, depth)
        if decision is TriBool.YES:
            hits.append(b)
            wits.append(witness)
        elif decision is TriBool.NO:
            misses.append(b)
        else:
            und.append(b)
    return CoverLevel(m, tuple(balls), tuple(hits), tuple(misses), tuple(und), tuple(wits))


def check_pairwise_disjoint(balls: Sequence[RationalBall]) -> tuple[bool, Optional[Rat]]:
    """Exact pairwise disjointness of the closed balls (upper radii).

    Sorting by center reduces the check to adjacent pairs: if any two adjacent
    closed intervals are disjoint then all pairs are, because radii are
    nonnegative and center gaps accumulate.  min_gap is the smallest closure
    gap over adjacent sorted centers (negative when overlapping).
    """
    if len(balls) < 2:
        return (True, None)
    ordered = sorted(balls, key=lambda b: b.center)
    ok = True
    min_gap: Optional[Rat] = None
    for b1, b2 in zip(ordered, ordered[1:]):
        gap = (b2.center - b1.center) - (b1.radius_hi + b2.radius_hi)
        if min_gap is None or gap < min_gap:
            min_gap = gap
        if gap <= 0:
            ok = False
    return (ok, min_gap)


@dataclass(frozen=True)
class CountRow:
    m: int
    count_all: int
    count_hits: int
    count_undecided: int
    log2_radius_hi: float  # radius at the smallest denominator of the level


@dataclass(frozen=True)
class CountTable:
    family: Family
    rows: tuple[CountRow, ...]

    def row(self, m: int) -> CountRow:
        for r in self.rows:
            if r.m == m:
                return r
        raise KeyError(f"no row for m={m}")


def count_table(ifs: Ifs1D, spec: ApproxSpec, family: Family, m_range: Sequence[int],
                window: IntervalQ, depth: Optional[int] = None, workers: int = 1) -> CountTable:
    """Per-level counts: all primitive balls meeting the window, certified hits, undecided.

    count_all is computed arithmetically (Moebius counting of primitive
    numerators per denominator); hits come from the window-local candidate
    kernel, so the cost scales with the candidates near the attractor rather
    than the full Farey count.
    """
    from . import kernels  # deferred: numpy machinery

    if not m_range:
        raise ValueError("m_range must be nonempty")

    def one(m: int) -> CountRow:
        total = kernels.primitive_count_in_window(spec, m, family, window)
        cand = kernels.generate_candidates(ifs, spec, m, family, window)
        cls = kernels.classify_candidates(ifs, cand, max_depth=depth)
        psi_lo, psi_hi = spec.bracket_at_level(m)
        qlo, _ = q_range(family, m)
        log2r = float("-inf") if psi_hi == 0 else math.log2(psi_hi.numerator) - math.log2(psi_hi.denominator) - math.log2(qlo)
        return CountRow(m, total, int(cls.n_hits), int(cls.n_undecided), log2r)

    rows = _run_keyed(one, list(m_range), workers)
    return CountTable(family, tuple(rows))


def _run_keyed(fn, keys, workers: int):
    """Run fn over keys, possibly in a thread pool; results returned in key order."""
    if workers <= 1 or len(keys) <= 1:
        return [fn(k) for k in keys]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as ex:
        futs = {k: ex.submit(fn, k) for k in keys}
        return [futs[k].result() for k in keys]


def family_pairwise_disjoint(spec: ApproxSpec, m: int, family: Family,
                             window: IntervalQ) -> tuple[bool, Optional[Rat], int]:
    """Exact closure-disjointness of the full level family within a window.

    Array-based equivalent of enumerate_balls + check_pairwise_disjoint for
    family sizes where materializing ball objects is wasteful; returns
    (disjoint, min_gap, ball_count).
    """
    from . import kernels

    return kernels.family_disjointness(spec, m, family, window)
