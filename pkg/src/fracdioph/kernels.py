"""Vectorized enumeration and classification kernels.

Candidate generation walks attractor cylinders and emits integer numerators
only near the cylinder shadow, so cost scales with the number of candidates
near K inside the window rather than with the full Farey count.
Classification walks the cylinder tree once for the whole center-sorted
candidate array.  Floats are used only through conservatively rounded bounds:
a MISS means even the inflated ball misses every inflated cylinder chain, and
every float HIT is re-verified exactly with Fractions (float-ambiguous
candidates are re-tested exactly), so the reported partition is certified.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .approx import ApproxSpec
from .covers import Family, RationalBall, classify_ball, q_range, window_p_bounds
from .ifs import IntervalQ, Ifs1D, TriBool, attractor_hull, default_search_depth

Rat = Fraction

# int64 products p*q' must stay well below 2^63 and centers must stay distinct
# as floats; both hold comfortably up to this level for windows of unit scale
MAX_VECTOR_LEVEL = 22

_CHUNK_FLUSH = 40_000_000


def f_dn(x: Rat) -> float:
    """Float lower bound of an exact rational."""
    return math.nextafter(float(x), -math.inf)


def f_up(x: Rat) -> float:
    """Float upper bound of an exact rational."""
    return math.nextafter(float(x), math.inf)


def _pad_dn(x: float, k: float = 8.0) -> float:
    """x minus a slack dominating a handful of rounding errors at x's magnitude."""
    return x - (abs(x) + 1.0) * (k * 2.0**-52)


def _pad_up(x: float, k: float = 8.0) -> float:
    return x + (abs(x) + 1.0) * (k * 2.0**-52)


@dataclass
class LevelCandidates:
    """Center-sorted candidate (p, q) pairs of one level, plus the generation instrument."""

    m: int
    family: Family
    window: IntervalQ
    psi_lo: Rat
    psi_hi: Rat
    p: np.ndarray
    q: np.ndarray
    centers: np.ndarray
    generated: int  # candidates emitted before dedupe/gcd (window-local cost instrument)

    @property
    def size(self) -> int:
        return int(self.p.size)

    def ball(self, i: int) -> RationalBall:
        q = int(self.q[i])
        return RationalBall(int(self.p[i]), q, self.m, self.family, self.psi_lo / q, self.psi_hi / q)


def _empty_candidates(m, family, window, psi_lo, psi_hi) -> LevelCandidates:
    z = np.zeros(0, dtype=np.int64)
    return LevelCandidates(m, family, window, psi_lo, psi_hi, z, z, np.zeros(0), 0)


def generate_candidates(ifs: Ifs1D, spec: ApproxSpec, m: int, family: Family,
                        window: IntervalQ) -> LevelCandidates:
    """All primitive level-m balls meeting the window that can touch the cylinder shadow.

    Guaranteed superset of the balls meeting both window and K: any omitted
    family ball is certified disjoint from every attractor cylinder or from
    the window.  Candidates are deduped, gcd-filtered and sorted by center.
    """
    qlo, qhi = q_range(family, m)
    if m > MAX_VECTOR_LEVEL:
        raise ValueError(f"vector kernel supports levels up to m={MAX_VECTOR_LEVEL}")
    psi_lo, psi_hi = spec.bracket_at_level(m)
    if psi_hi == 0 or window.is_empty:
        return _empty_candidates(m, family, window, psi_lo, psi_hi)

    hull = attractor_hull(ifs)
    rmax = psi_hi / qlo
    # cylinders are relevant iff within rmax of a center that is itself within
    # rmax of the window and the hull shadow
    glo = max(window.lo, hull.lo - rmax) - 2 * rmax
    ghi = min(window.hi, hull.hi + rmax) + 2 * rmax
    if glo > ghi:
        return _empty_candidates(m, family, window, psi_lo, psi_hi)

    # exact per-q numerator window (meets-window rule, upper radius)
    nq = qhi - qlo
    pw_lo = np.empty(nq, dtype=np.int64)
    pw_hi = np.empty(nq, dtype=np.int64)
    for i, q in enumerate(range(qlo, qhi)):
        a, b = window_p_bounds(q, psi_hi, window)
        pw_lo[i], pw_hi[i] = a, b
    if (pw_lo > pw_hi).all():
        return _empty_candidates(m, family, window, psi_lo, psi_hi)

    offset = int(pw_lo.min())
    span = int(pw_hi.max()) - offset + 2
    if span <= 0 or nq * span >= 2**62:
        raise ValueError("candidate packing would overflow int64")

    # leaf cylinders: split while wider than ~2/q so each (cylinder, q) pair
    # contributes only a few numerators
    stop_w = Fraction(2, qhi)
    leaves = []
    stack = [hull]
    while stack:
        cyl = stack.pop()
        if cyl.hi < glo or cyl.lo > ghi:
            continue
        if cyl.width <= stop_w:
            leaves.append(cyl)
            continue
        for fmap in reversed(ifs.maps):
            stack.append(fmap.apply_interval(cyl))

    q_arr = np.arange(qlo, qhi, dtype=np.int64)
    qf = q_arr.astype(np.float64)
    r_up = np.nextafter(f_up(psi_hi) / qf, np.inf)

    generated = 0
    chunks: list[np.ndarray] = []
    pending = 0
    for cyl in leaves:
        lof, hif = f_dn(cyl.lo), f_up(cyl.hi)
        a = np.floor(qf * lof - qf * r_up).astype(np.int64) - 1
        b = np.ceil(qf * hif + qf * r_up).astype(np.int64) + 1
        np.maximum(a, pw_lo, out=a)
        np.minimum(b, pw_hi, out=b)
        cnt = b - a + 1
        mask = cnt > 0
        if not mask.any():
            continue
        counts = cnt[mask]
        total = int(counts.sum())
        generated += total
        base_key = (q_arr[mask] - qlo) * span + (a[mask] - offset)
        reps = np.repeat(base_key, counts)
        bump = np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(counts) - counts, counts)
        chunks.append(reps + bump)
        pending += total
        if pending >= _CHUNK_FLUSH:
            chunks = [np.unique(np.concatenate(chunks))]
            pending = int(chunks[0].size)

    if not chunks:
        return _empty_candidates(m, family, window, psi_lo, psi_hi)
    keys = np.unique(np.concatenate(chunks))
    qq = keys // span + qlo
    pp = keys % span + offset
    prim = np.gcd(pp, qq) == 1
    pp, qq = pp[prim], qq[prim]
    centers = pp / qq
    order = np.argsort(centers, kind="stable")
    return LevelCandidates(m, family, window, psi_lo, psi_hi,
                           pp[order], qq[order], centers[order], generated)


@dataclass
class LevelClassification:
    """Certified hit/miss/undecided partition of a candidate array."""

    status: np.ndarray  # uint8: 0 miss, 1 hit, 2 undecided
    witnesses: dict[int, tuple[int, ...]]  # candidate index -> cylinder word symbols
    n_hits: int
    n_miss: int
    n_undecided: int
    max_depth: int
    exact_retests: int
    confirm_failures: int


MISS, HIT, UNDECIDED = 0, 1, 2


def classify_candidates(ifs: Ifs1D, cand: LevelCandidates,
                        max_depth: Optional[int] = None) -> LevelClassification:
    """Walk the cylinder tree once over the sorted candidate array; certified partition."""
    n = cand.size
    if max_depth is None:
        q_hi = int(cand.q.max()) if n else q_range(cand.family, cand.m)[1]
        max_depth = default_search_depth(ifs, 2 * cand.psi_lo / q_hi)
    if n == 0:
        return LevelClassification(np.zeros(0, np.uint8), {}, 0, 0, 0, max_depth, 0, 0)

    c_f = cand.centers
    qf = cand.q.astype(np.float64)
    # per-candidate deflated ball bounds: bl_in_up >= c - r_lo, br_in_dn <= c + r_lo
    r_lo_f = np.nextafter(f_dn(cand.psi_lo) / qf, -np.inf)
    pad = (np.abs(c_f) + 1.0) * 2.0**-48
    bl_in_up = c_f - r_lo_f + pad
    br_in_dn = c_f + r_lo_f - pad
    r_hi_up = np.nextafter(f_up(cand.psi_hi) / qf, np.inf)
    rmax_pad = _pad_up(float(r_hi_up.max()), 16.0)

    status = np.zeros(n, dtype=np.uint8)
    pending = np.zeros(n, dtype=bool)
    witnesses: dict[int, tuple] = {}

    hull = attractor_hull(ifs)
    maps = [(f.ratio, f.offset) for f in ifs.maps]
    hit_width = 4.0 * rmax_pad

    stack = [((), hull.lo, hull.hi, 0, n, 0)]
    while stack:
        symbols, lo, hi, i0, i1, d = stack.pop()
        lo_dn, hi_up = f_dn(lo), f_up(hi)
        if hi_up - lo_dn <= hit_width:
            sl = slice(i0, i1)
            hm = (bl_in_up[sl] < lo_dn) & (hi_up < br_in_dn[sl]) & (status[sl] != HIT)
            if hm.any():
                for ix in np.nonzero(hm)[0] + i0:
                    status[ix] = HIT
                    witnesses.setdefault(int(ix), (symbols, lo, hi))
        if d >= max_depth:
            pending[i0:i1] = True
            continue
        for sym in range(len(maps), 0, -1):
            cm, cb = maps[sym - 1]
            clo = cm * lo + cb
            chi = cm * hi + cb
            a = _pad_dn(float(clo)) - rmax_pad
            b = _pad_up(float(chi)) + rmax_pad
            j0 = max(int(np.searchsorted(c_f, a, side="left")), i0)
            j1 = min(int(np.searchsorted(c_f, b, side="right")), i1)
            if j0 < j1:
                stack.append((symbols + (sym,), clo, chi, j0, j1, d + 1))

    # float-ambiguous candidates: exact re-test
    exact_retests = 0
    for ix in np.nonzero(pending & (status != HIT))[0]:
        exact_retests += 1
        decision, wit = classify_ball(ifs, cand.ball(int(ix)), max_depth)
        if decision is TriBool.YES:
            status[ix] = HIT
            witnesses[int(ix)] = (wit.symbols, None, None)
        elif decision is TriBool.NO:
            status[ix] = MISS
        else:
            status[ix] = UNDECIDED

    # exact confirmation of every float-certified hit
    confirm_failures = 0
    clean_witnesses: dict[int, tuple[int, ...]] = {}
    for ix in sorted(witnesses):
        if status[ix] != HIT:
            continue
        symbols, wlo, whi = witnesses[ix]
        if wlo is None:  # came from the exact path
            clean_witnesses[ix] = symbols
            continue
        q = int(cand.q[ix])
        c = Fraction(int(cand.p[ix]), q)
        r_lo = cand.psi_lo / q
        if c - r_lo < wlo and whi < c + r_lo:
            clean_witnesses[ix] = symbols
            continue
        confirm_failures += 1
        decision, wit = classify_ball(ifs, cand.ball(ix), max_depth)
        if decision is TriBool.YES:
            clean_witnesses[ix] = wit.symbols
        else:
            status[ix] = MISS if decision is TriBool.NO else UNDECIDED

    n_hits = int((status == HIT).sum())
    n_und = int((status == UNDECIDED).sum())
    return LevelClassification(status, clean_witnesses, n_hits, n - n_hits - n_und,
                               n_und, max_depth, exact_retests, confirm_failures)


def _spf_sieve(limit: int) -> np.ndarray:
    """Smallest prime factor for 0..limit (0 marked for 0 and 1)."""
    spf = np.zeros(limit + 1, dtype=np.int64)
    for i in range(2, limit + 1):
        if spf[i] == 0:
            spf[i::i][spf[i::i] == 0] = i
    return spf


def _distinct_primes(q: int, spf: np.ndarray) -> list[int]:
    out = []
    while q > 1:
        pr = int(spf[q])
        out.append(pr)
        while q % pr == 0:
            q //= pr
    return out


def primitive_count_in_window(spec: ApproxSpec, m: int, family: Family,
                              window: IntervalQ) -> int:
    """Exact number of primitive level-m balls meeting the window (Moebius counting, no enumeration)."""
    psi_lo, psi_hi = spec.bracket_at_level(m)
    if psi_hi == 0 or window.is_empty:
        return 0
    qlo, qhi = q_range(family, m)
    spf = _spf_sieve(qhi - 1)
    total = 0
    for q in range(qlo, qhi):
        pmin, pmax = window_p_bounds(q, psi_hi, window)
        if pmin > pmax:
            continue
        terms = [(1, 1)]
        for pr in _distinct_primes(q, spf):
            terms += [(d * pr, -s) for d, s in terms]
        total += sum(s * (pmax // d - (pmin - 1) // d) for d, s in terms)
    return total


def family_disjointness(spec: ApproxSpec, m: int, family: Family,
                        window: IntervalQ) -> tuple[bool, Optional[Rat], int]:
    """Exact closure-disjointness of the whole level family inside the window.

    Enumerates primitive pairs per denominator (vectorized), sorts by center
    and checks adjacent pairs: |p1/q1 - p2/q2| > psi(2^m)*(q1+q2)/(q1 q2),
    decided in float with an error margin and re-checked exactly whenever the
    margin is inconclusive.  Adjacent disjointness implies pairwise
    disjointness because radii are positive and center gaps accumulate.
    """
    psi_lo, psi_hi = spec.bracket_at_level(m)
    qlo, qhi = q_range(family, m)
    if m > MAX_VECTOR_LEVEL:
        raise ValueError(f"vector disjointness supports levels up to m={MAX_VECTOR_LEVEL}")
    if psi_hi == 0 or window.is_empty:
        return (True, None, 0)

    p_parts, q_parts = [], []
    block = 2048
    for q0 in range(qlo, qhi, block):
        q1 = min(q0 + block, qhi)
        bounds = [window_p_bounds(q, psi_hi, window) for q in range(q0, q1)]
        counts = np.array([max(0, b - a + 1) for a, b in bounds], dtype=np.int64)
        if counts.sum() == 0:
            continue
        qs = np.arange(q0, q1, dtype=np.int64)
        starts = np.array([a for a, _ in bounds], dtype=np.int64)
        mask = counts > 0
        qs, starts, counts = qs[mask], starts[mask], counts[mask]
        total = int(counts.sum())
        q_rep = np.repeat(qs, counts)
        p_rep = np.repeat(starts, counts) + (np.arange(total, dtype=np.int64)
                                             - np.repeat(np.cumsum(counts) - counts, counts))
        keep = np.gcd(p_rep, q_rep) == 1
        p_parts.append(p_rep[keep])
        q_parts.append(q_rep[keep])

    if not p_parts:
        return (True, None, 0)
    p_all = np.concatenate(p_parts)
    q_all = np.concatenate(q_parts)
    n = int(p_all.size)
    if n < 2:
        return (True, None, n)
    order = np.argsort(p_all / q_all, kind="stable")
    p_all, q_all = p_all[order], q_all[order]

    pa, pb = p_all[:-1], p_all[1:]
    qa, qb = q_all[:-1], q_all[1:]
    gap_num = pb * qa - pa * qb  # exact in int64; >= 1 for distinct reduced fractions
    qsum = qa + qb
    num_f, den_f = float(psi_hi.numerator), float(psi_hi.denominator)
    x = gap_num.astype(np.float64) * den_f
    y = qsum.astype(np.float64) * num_f
    margin = (np.abs(x) + np.abs(y)) * 2.0**-46
    certain_ok = x > y + margin
    certain_bad = x < y - margin
    ok = True
    if certain_bad.any():
        ok = False
    ambiguous = np.nonzero(~certain_ok & ~certain_bad)[0]
    for i in ambiguous:
        if int(gap_num[i]) * psi_hi.denominator <= psi_hi.numerator * int(qsum[i]):
            ok = False
            break

    # exact min closure gap among the float-smallest adjacent slacks
    slack_f = (x - y) / (qa.astype(np.float64) * qb.astype(np.float64)) / den_f
    k = min(n - 1, 256)
    idxs = np.argpartition(slack_f, k - 1)[:k] if n - 1 > k else np.arange(n - 1)
    min_gap: Optional[Rat] = None
    for i in idxs:
        g = (Fraction(int(gap_num[i])) - psi_hi * int(qsum[i])) / (int(qa[i]) * int(qb[i]))
        if min_gap is None or g < min_gap:
            min_gap = g
    return (ok, min_gap, n)


def merged_float_intervals(lo: np.ndarray, hi: np.ndarray) -> tuple[list[float], list[float]]:
    """Merge possibly-overlapping float intervals into disjoint sorted ones (touching merged)."""
    if lo.size == 0:
        return ([], [])
    order = np.argsort(lo, kind="stable")
    lo, hi = lo[order], hi[order]
    running = np.maximum.accumulate(hi)
    breaks = np.nonzero(lo[1:] > running[:-1])[0] + 1
    starts = np.concatenate([[0], breaks])
    ends = np.concatenate([breaks, [lo.size]])
    return (lo[starts].tolist(), running[ends - 1].tolist())


def union_measure_fast(ifs: Ifs1D, weights: Sequence[float], weight_rel_err: float,
                       inner: tuple[list[float], list[float]],
                       outer: tuple[list[float], list[float]],
                       depth: int) -> tuple[float, float]:
    """Certified bounds on mu(union) from inward/outward-rounded interval lists.

    `inner` intervals are certified subsets of the true union, `outer` ones a
    certified cover (both merged, disjoint, sorted).  Cylinder bounds are kept
    as outward-rounded floats, so every containment/disjointness decision is
    conservative; unresolved mass at the depth cap widens only the upper bound.
    """
    in_lo, in_hi = inner
    out_lo, out_hi = outer
    if not out_lo:
        return (0.0, 0.0)
    hull = attractor_hull(ifs)
    maps_f = [(float(f.ratio), float(f.offset), float(w)) for f, w in zip(ifs.maps, weights)]
    lo_sum = 0.0
    hi_sum = 0.0

    stack = [(f_dn(hull.lo), f_up(hull.hi), 1.0, 0)]
    while stack:
        clo, chi, w, d = stack.pop()
        # disjoint from every outer interval?
        j = bisect.bisect_left(out_hi, clo)
        if j == len(out_lo) or out_lo[j] > chi:
            continue
        # fully inside one inner interval?
        if in_lo:
            k = bisect.bisect_right(in_lo, clo) - 1
            if k >= 0 and in_hi[k] >= chi:
                lo_sum += w
                hi_sum += w
                continue
        if d >= depth:
            hi_sum += w
            continue
        for cm, cb, cw in maps_f:
            stack.append((_pad_dn(cm * clo + cb), _pad_up(cm * chi + cb), w * cw, d + 1))

    # inflate for weight drift (solver error compounding along depth-d products)
    # plus float accumulation slack
    rel = math.expm1(depth * (weight_rel_err + 2.0**-50))
    pad = hi_sum * rel + 2.0**-45
    lo = max(0.0, lo_sum - pad)
    hi = min(1.0, hi_sum + pad)
    return (lo, hi)
