"""Upper-bound machinery: cover sums over level families and critical exponents.

Convergence of an infinite cover sum cannot be certified from finitely many
levels; what the data supports is the sign of the fitted per-level log2-mass
slope, so verdicts carry a dead zone around zero and report "inconclusive"
inside it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .approx import PowerLawPsi

Rat = Fraction

SLOPE_DEAD_ZONE = 0.05


class DegenerateFitError(ValueError):
    """Raised when too few usable data points remain for a least-squares fit."""


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    r2: float
    n: int


def fit_line(xs: Sequence[float], ys: Sequence[float]) -> LineFit:
    """Ordinary least squares; deterministic; exact line data is recovered to machine precision."""
    n = len(xs)
    if n != len(ys) or n < 2:
        raise DegenerateFitError(f"need at least 2 points, got {n}")
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    sxx = math.fsum((x - mx) ** 2 for x in xs)
    if sxx == 0:
        raise DegenerateFitError("all x values coincide")
    sxy = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    slope = sxy / sxx
    intercept = my - slope * mx
    syy = math.fsum((y - my) ** 2 for y in ys)
    if syy == 0:
        r2 = 1.0
    else:
        resid = math.fsum((y - (slope * x + intercept)) ** 2 for x, y in zip(xs, ys))
        r2 = max(0.0, 1.0 - resid / syy)
    return LineFit(slope, intercept, r2, n)


@dataclass(frozen=True)
class ScalingFit:
    """A primary log-scale fit with its bracketing pair (lower-count fit, upper-count fit)."""

    slope: float
    intercept: float
    r2: float
    levels_used: tuple[int, ...]
    bracket: Optional[tuple[LineFit, LineFit]] = None

    def __post_init__(self):
        if not self.levels_used:
            raise ValueError("levels_used must be nonempty")


@dataclass(frozen=True)
class CoverSumReport:
    """Partial Hausdorff cover sums sum_m count(m) * diam(m)^l with a fitted verdict."""

    l: float
    start: int
    per_level: tuple[tuple[int, float], ...]  # (m, mass)
    partial_sums: tuple[tuple[int, float], ...]  # running sums from `start`
    tail_sums: tuple[tuple[int, float], ...]  # sums from each start level onward
    verdict: str  # converging | diverging | inconclusive
    mass_slope: Optional[float]


def hausdorff_partial_sum(counts, spec, l: float, start: int) -> CoverSumReport:
    """Cover-sum masses count_hits(m) * (2 psi(2^m)/2^m)^l from the given start level.

    Diameters use the upper radius bound (upper-rounded), so the reported sums
    over-estimate the true cover sums; the verdict comes from the sign of the
    fitted per-level log2-mass slope with a +-0.05 dead zone.
    """
    if l < 0:
        raise ValueError("Hausdorff exponent l must be nonnegative")
    rows = [r for r in counts.rows if r.m >= start]
    if not rows:
        raise ValueError(f"no table rows at or above start level {start}")
    per_level = []
    for r in rows:
        psi_hi = spec.bracket_at_level(r.m)[1]
        diam = 2.0 * float(psi_hi) / 2.0**r.m
        per_level.append((r.m, r.count_hits * diam**l))
    running = []
    acc = 0.0
    for m, mass in per_level:
        acc += mass
        running.append((m, acc))
    tails = []
    for i, (m, _) in enumerate(per_level):
        tails.append((m, math.fsum(mass for _, mass in per_level[i:])))
    usable = [(m, mass) for m, mass in per_level if mass > 0]
    if len(usable) >= 2:
        fit = fit_line([m for m, _ in usable], [math.log2(mass) for _, mass in usable])
        slope = fit.slope
        if slope < -SLOPE_DEAD_ZONE:
            verdict = "converging"
        elif slope > SLOPE_DEAD_ZONE:
            verdict = "diverging"
        else:
            verdict = "inconclusive"
    elif not usable:
        slope, verdict = None, "converging"  # identically zero masses
    else:
        slope, verdict = None, "inconclusive"
    return CoverSumReport(l, start, tuple(per_level), tuple(running), tuple(tails),
                          verdict, slope)


@dataclass(frozen=True)
class CriticalExponent:
    """Zero-crossing exponent of the per-level cover mass, from count data."""

    l_star_hits: float
    l_star_bracketed: float
    fit: ScalingFit
    v: Rat

    @property
    def pair(self) -> tuple[float, float]:
        return (self.l_star_hits, self.l_star_bracketed)


def critical_exponent(counts, spec: PowerLawPsi, m_range: Sequence[int]) -> CriticalExponent:
    """The l where the fitted per-level mass exponent crosses zero.

    With diam(m) = 2 psi_v(2^m)/2^m the per-level log2 mass is
    log2 count(m) + l (1 - m(v+1)), so the m-slope is slope(counts) - l(v+1)
    and the crossing sits at l* = slope/(v+1).  Both the hits-only and the
    hits-plus-undecided slopes are returned.
    """
    if not isinstance(spec, PowerLawPsi):
        raise TypeError("critical_exponent needs a power-law psi")
    if spec.v <= 1:
        raise ValueError("critical exponent requires v > 1")
    rows = [counts.row(m) for m in m_range]
    hit_pts = [(r.m, math.log2(r.count_hits)) for r in rows if r.count_hits > 0]
    brk_pts = [(r.m, math.log2(r.count_hits + r.count_undecided)) for r in rows
               if r.count_hits + r.count_undecided > 0]
    if len(hit_pts) < 3:
        raise DegenerateFitError(f"fewer than 3 usable levels ({len(hit_pts)})")
    hits_fit = fit_line([m for m, _ in hit_pts], [y for _, y in hit_pts])
    brk_fit = fit_line([m for m, _ in brk_pts], [y for _, y in brk_pts])
    denom = float(spec.v) + 1.0
    fit = ScalingFit(hits_fit.slope, hits_fit.intercept, hits_fit.r2,
                     tuple(m for m, _ in hit_pts), (hits_fit, brk_fit))
    return CriticalExponent(hits_fit.slope / denom, brk_fit.slope / denom, fit, spec.v)


def theorem_upper_bound(s: float, v: float) -> float:
    """Closed form s - 1 + 2/(v+1) for the dimension upper bound at psi_v."""
    return s - 1.0 + 2.0 / (v + 1.0)


@dataclass(frozen=True)
class ConjectureRow:
    v: float
    coprime_branch: float  # s - 1 + 2/(v+1)
    intrinsic_branch: float  # s/(v+1)
    value: float
    active: str


@dataclass(frozen=True)
class ConjectureTable:
    s: float
    rows: tuple[ConjectureRow, ...]
    crossover_v: Optional[float]  # where the two branches meet: v = 1/(1-s)


def conjecture_table(s: float, v_list: Sequence[float]) -> ConjectureTable:
    """Both conjectured branches and their max, per v, with the crossover marked."""
    if not 0 < s <= 1:
        raise ValueError("s must lie in (0, 1]")
    rows = []
    for v in v_list:
        b1 = theorem_upper_bound(s, v)
        b2 = s / (v + 1.0)
        if b1 > b2:
            active = "coprime"
        elif b2 > b1:
            active = "intrinsic"
        else:
            active = "equal"
        rows.append(ConjectureRow(float(v), b1, b2, max(b1, b2), active))
    crossover = None if s >= 1 else 1.0 / (1.0 - s)
    return ConjectureTable(s, tuple(rows), crossover)
