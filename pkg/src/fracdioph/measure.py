"""Certified computation of the natural self-similar measure.

mu is the unique probability measure with mu = sum_i c_i^s (f_i)_* mu, where s
is the similarity dimension.  The weights c_i^s are irrational in general and
are stored as doubles with a recorded relative error bound from the dimension
solver; every enclosure is inflated by the accumulated weight drift, so the
reported [lo, hi] always contains the true measure.  Interval queries are
treated as closed; single-point overlaps carry no mass (the measure is
non-atomic for two or more maps).
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import islice, product
from typing import Optional, Sequence

import numpy as np

from .approx import ApproxSpec
from .covers import Family, RationalBall
from .dimension import LineFit, ScalingFit, fit_line
from .ifs import IntervalQ, Ifs1D, Word, attractor_hull, solve_dimension_bracket

Rat = Fraction


@dataclass(frozen=True)
class MeasureEnclosure:
    """Certified interval containing a true measure value."""

    lo: float
    hi: float
    depth: int

    def __post_init__(self):
        if not (0.0 <= self.lo <= self.hi <= 1.0):
            raise ValueError(f"enclosure out of order: [{self.lo}, {self.hi}]")

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi


@dataclass(frozen=True)
class RegularityEstimate:
    """Empirical stand-ins for the regularity constants a1 <= mu(B(x,r))/r^s <= a2."""

    a1_hat: float
    a2_hat: float
    sample_count: int
    scale_range: tuple[Rat, Rat]

    def __post_init__(self):
        if not (0 < self.a1_hat <= self.a2_hat) or not math.isfinite(self.a2_hat):
            raise ValueError("regularity estimates must be finite, positive and ordered")


@dataclass(frozen=True)
class SelfSimilarMeasure:
    """The measure with weight vector (c_i^s); support is the attractor."""

    ifs: Ifs1D
    s: float
    weights: tuple[float, ...]
    weight_rel_err: float
    s_bracket: tuple[float, float]

    @classmethod
    def build(cls, ifs: Ifs1D, tol: float = 1e-12) -> "SelfSimilarMeasure":
        if ifs.l < 2:
            raise ValueError("single-map IFS rejected: the measure degenerates to an atom (s = 0)")
        hull = attractor_hull(ifs)
        if hull.width == 0:
            raise ValueError("degenerate attractor (all maps share a fixed point)")
        s_lo, s_hi = solve_dimension_bracket(ifs, tol)
        s = 0.5 * (s_lo + s_hi)
        weights = tuple(float(f.ratio) ** s for f in ifs.maps)
        # |c^s_hat - c^s_true| / c^s_true <= exp(|ln c| * ds) - 1; add float slack
        max_log = max(-math.log(float(f.ratio)) for f in ifs.maps)
        rel = math.expm1(max_log * (s_hi - s_lo)) + 2.0**-48
        return cls(ifs, s, weights, rel, (s_lo, s_hi))

    @property
    def hull(self) -> IntervalQ:
        return attractor_hull(self.ifs)


def _inflate(lo_sum: float, hi_sum: float, depth: int, rel_err: float) -> tuple[float, float]:
    # weight products along depth-d paths drift by at most (1+rel)^d - 1
    rel = math.expm1(depth * (rel_err + 2.0**-50))
    pad = hi_sum * rel + 2.0**-45
    return (max(0.0, lo_sum - pad), min(1.0, hi_sum + pad))


def measure_interval(mu: SelfSimilarMeasure, target: IntervalQ, depth: int) -> MeasureEnclosure:
    """Enclosure of mu(target) by the self-similarity recursion with exact base cases.

    A cylinder hull inside the target contributes its full weight; one disjoint
    from it (or overlapping in a single point) contributes nothing; only
    cylinders straddling a target endpoint recurse, so at most two chains stay
    undecided per level and the width shrinks like (max_i c_i^s)^depth.
    """
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    tgt = target.closure()
    lo_sum = 0.0
    hi_sum = 0.0
    stack = [(mu.hull, 1.0, 0)]
    while stack:
        iv, w, d = stack.pop()
        r = iv.intersect(tgt)
        if r is None or r.width == 0:
            continue
        if tgt.contains(iv):
            lo_sum += w
            hi_sum += w
            continue
        if d >= depth:
            hi_sum += w
            continue
        for f, cw in zip(mu.ifs.maps, mu.weights):
            stack.append((f.apply_interval(iv), w * cw, d + 1))
    lo, hi = _inflate(lo_sum, hi_sum, depth, mu.weight_rel_err)
    return MeasureEnclosure(lo, hi, depth)


def branch_measure_interval(mu: SelfSimilarMeasure, alpha: Word, target: IntervalQ,
                            depth: int) -> MeasureEnclosure:
    """Enclosure of mu_alpha(target) = mu(f_alpha^{-1}(target))."""
    return measure_interval(mu, alpha.map.inverse_apply_interval(target), depth)


def estimate_regularity(mu: SelfSimilarMeasure, n_centers: int, scales: Sequence[Rat],
                        depth: int) -> RegularityEstimate:
    """Min/max of mu(B(x,r))/r^s over cylinder-representative centers and the given scales.

    Centers are the images of the hull minimum under the lexicographically
    first n_centers words at the smallest depth k with l^k >= n_centers, so
    the sample is deterministic and refining it only widens the estimates.
    """
    if n_centers < 1:
        raise ValueError("need at least one center")
    scales = [Fraction(r) for r in scales]
    hull = mu.hull
    if not scales or any(r <= 0 or r > hull.width for r in scales):
        raise ValueError("scales must lie in (0, diam hull]")
    l = mu.ifs.l
    k = 0
    while l**k < n_centers:
        k += 1
    base = hull.lo
    ratios = []
    count = 0
    for symbols in islice(product(range(1, l + 1), repeat=k), n_centers):
        x = mu.ifs.word(symbols).map(base)
        for r in scales:
            enc = measure_interval(mu, IntervalQ(x - r, x + r), depth)
            ratios.append(enc.mid / float(r) ** mu.s)
            count += 1
    return RegularityEstimate(min(ratios), max(ratios), count, (min(scales), max(scales)))


def _merged_closed_intervals(intervals: Sequence[IntervalQ]) -> list[IntervalQ]:
    ivs = sorted((iv for iv in intervals if not iv.is_empty), key=lambda iv: (iv.lo, iv.hi))
    merged: list[IntervalQ] = []
    for iv in ivs:
        if merged and iv.lo <= merged[-1].hi:
            if iv.hi > merged[-1].hi:
                merged[-1] = IntervalQ(merged[-1].lo, iv.hi)
        else:
            merged.append(IntervalQ(iv.lo, iv.hi))
    return merged


def _measure_union_exact(mu: SelfSimilarMeasure, merged: list[IntervalQ], depth: int
                         ) -> tuple[float, float]:
    """Recursion against a disjoint sorted closed-interval list (exact geometry)."""
    if not merged:
        return (0.0, 0.0)
    los = [iv.lo for iv in merged]
    his = [iv.hi for iv in merged]
    lo_sum = 0.0
    hi_sum = 0.0
    stack = [(mu.hull, 1.0, 0)]
    while stack:
        iv, w, d = stack.pop()
        j0 = bisect.bisect_left(his, iv.lo)
        if j0 == len(los) or los[j0] > iv.hi:
            continue
        # gaps between merged intervals are positive, so containment in the
        # union means containment in the single overlapping interval
        if los[j0] <= iv.lo and iv.hi <= his[j0]:
            lo_sum += w
            hi_sum += w
            continue
        j1 = bisect.bisect_right(los, iv.hi)
        if all(max(los[j], iv.lo) == min(his[j], iv.hi) for j in range(j0, j1)):
            continue  # only single-point overlaps: no mass
        if d >= depth:
            hi_sum += w
            continue
        for f, cw in zip(mu.ifs.maps, mu.weights):
            stack.append((f.apply_interval(iv), w * cw, d + 1))
    return _inflate(lo_sum, hi_sum, depth, mu.weight_rel_err)


def measure_level_union(mu: SelfSimilarMeasure, balls: Sequence[RationalBall],
                        depth: int) -> MeasureEnclosure:
    """Enclosure of mu of a finite ball union: merge into disjoint intervals, then enclose.

    The lower bound uses the union of deflated balls (certainly inside the
    true union), the upper bound the union of inflated ones (certainly
    covering it); for exact radii the two unions coincide.
    """
    if not balls:
        return MeasureEnclosure(0.0, 0.0, depth)
    inner = _merged_closed_intervals([b.inner_interval().closure() for b in balls])
    outer = _merged_closed_intervals([b.outer_interval() for b in balls])
    lo = _measure_union_exact(mu, inner, depth)[0]
    hi = _measure_union_exact(mu, outer, depth)[1]
    return MeasureEnclosure(min(lo, hi), hi, depth)


@dataclass(frozen=True)
class LevelMassRow:
    m: int
    mu_lo: float
    mu_hi: float
    log2_mid: Optional[float]  # None when the enclosure contains 0
    n_hits: int
    n_undecided: int


@dataclass(frozen=True)
class LevelScalingResult:
    family: Family
    rows: tuple[LevelMassRow, ...]
    fit: ScalingFit
    dropped_levels: tuple[int, ...]

    @property
    def slope(self) -> float:
        return self.fit.slope


def fit_level_scaling(mu: SelfSimilarMeasure, spec: ApproxSpec, family: Family,
                      m_range: Sequence[int], window: Optional[IntervalQ] = None,
                      depth: int = 30, classify_depth: Optional[int] = None,
                      workers: int = 1) -> LevelScalingResult:
    """Least-squares slope of log2 mu(level set) against m.

    The level set is the union of the whole family's balls, but balls disjoint
    from every attractor cylinder carry no mass, so the union is computed from
    the window-local candidates: certified hits enter both bounds and
    undecided balls only the upper one.  Levels whose enclosure contains 0 are
    dropped and reported.
    """
    from . import kernels
    from .covers import _run_keyed

    if not m_range:
        raise ValueError("m_range must be nonempty")
    if window is None:
        psi0_hi = max(spec.bracket_at_level(m)[1] for m in m_range)
        pad = psi0_hi / min(2 ** (m - 1) for m in m_range)
        window = IntervalQ(mu.hull.lo - pad, mu.hull.hi + pad)

    def one(m: int) -> LevelMassRow:
        cand = kernels.generate_candidates(mu.ifs, spec, m, family, window)
        cls = kernels.classify_candidates(mu.ifs, cand, max_depth=classify_depth)
        hit = cls.status == kernels.HIT
        und = cls.status == kernels.UNDECIDED
        qf = cand.q.astype(float)
        r_lo = kernels.f_dn(cand.psi_lo) / qf
        r_hi = kernels.f_up(cand.psi_hi) / qf
        pad_f = (1.0 + np.abs(cand.centers)) * 2.0**-48
        inner = kernels.merged_float_intervals(
            (cand.centers - r_lo + pad_f)[hit], (cand.centers + r_lo - pad_f)[hit])
        keep = hit | und
        outer = kernels.merged_float_intervals(
            (cand.centers - r_hi - pad_f)[keep], (cand.centers + r_hi + pad_f)[keep])
        lo, _ = kernels.union_measure_fast(mu.ifs, mu.weights, mu.weight_rel_err,
                                           inner, inner, depth)
        _, hi = kernels.union_measure_fast(mu.ifs, mu.weights, mu.weight_rel_err,
                                           ([], []), outer, depth)
        log2_mid = None
        if lo > 0:
            log2_mid = math.log2(0.5 * (lo + hi))
        return LevelMassRow(m, lo, hi, log2_mid, int(hit.sum()), int(und.sum()))

    rows = _run_keyed(one, list(m_range), workers)
    used = [r for r in rows if r.log2_mid is not None]
    dropped = tuple(r.m for r in rows if r.log2_mid is None)
    if len(used) < 2:
        from .dimension import DegenerateFitError

        raise DegenerateFitError(f"only {len(used)} usable levels (dropped {dropped})")
    mid_fit = fit_line([r.m for r in used], [r.log2_mid for r in used])
    lo_fit = fit_line([r.m for r in used], [math.log2(r.mu_lo) for r in used])
    hi_fit = fit_line([r.m for r in used], [math.log2(r.mu_hi) for r in used])
    fit = ScalingFit(mid_fit.slope, mid_fit.intercept, mid_fit.r2,
                     tuple(r.m for r in used), (lo_fit, hi_fit))
    return LevelScalingResult(family, tuple(rows), fit, dropped)
