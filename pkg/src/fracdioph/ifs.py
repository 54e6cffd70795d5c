"""Exact 1-D iterated function systems.

Contraction systems f_i(x) = c_i x + b_i with rational coefficients, the word
algebra of finite compositions, attractor geometry (hull, open set condition),
symbolic coding via nested cylinder intervals, and branch selection by diameter
window.  Everything here is exact: coefficients, cylinder endpoints and all
containment/disjointness decisions are Fractions.  Points of the attractor are
never represented as floats; they are handled intensionally through coding
words and the cylinder intervals enclosing them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

Rat = Fraction


class TriBool(Enum):
    """Three-valued decision; UNDECIDED is always tied to the depth cap that produced it."""

    YES = "yes"
    NO = "no"
    UNDECIDED = "undecided"


class BranchTooShortError(ValueError):
    """Raised when a coding word is too short to reach the requested diameter window."""


@dataclass(frozen=True)
class Affine1D:
    """Orientation-preserving affine map x -> ratio*x + offset with exact coefficients."""

    ratio: Rat
    offset: Rat

    def __post_init__(self):
        object.__setattr__(self, "ratio", Fraction(self.ratio))
        object.__setattr__(self, "offset", Fraction(self.offset))
        if self.ratio <= 0:
            raise ValueError(f"ratio must be positive, got {self.ratio}")

    @staticmethod
    def identity() -> "Affine1D":
        return Affine1D(Fraction(1), Fraction(0))

    def __call__(self, x: Rat) -> Rat:
        return self.ratio * x + self.offset

    def compose(self, other: "Affine1D") -> "Affine1D":
        # (c, b) o (c', b') = (c c', c b' + b)
        return Affine1D(self.ratio * other.ratio, self.ratio * other.offset + self.offset)

    def inverse_apply(self, y: Rat) -> Rat:
        return (y - self.offset) / self.ratio

    def apply_interval(self, iv: "IntervalQ") -> "IntervalQ":
        return IntervalQ(self(iv.lo), self(iv.hi), iv.lo_open, iv.hi_open)

    def inverse_apply_interval(self, iv: "IntervalQ") -> "IntervalQ":
        return IntervalQ(self.inverse_apply(iv.lo), self.inverse_apply(iv.hi), iv.lo_open, iv.hi_open)


@dataclass(frozen=True)
class IntervalQ:
    """Rational interval with per-endpoint openness flags; all decisions exact."""

    lo: Rat
    hi: Rat
    lo_open: bool = False
    hi_open: bool = False

    def __post_init__(self):
        object.__setattr__(self, "lo", Fraction(self.lo))
        object.__setattr__(self, "hi", Fraction(self.hi))
        if self.lo > self.hi:
            raise ValueError(f"interval endpoints out of order: {self.lo} > {self.hi}")

    @property
    def width(self) -> Rat:
        return self.hi - self.lo

    @property
    def is_empty(self) -> bool:
        return self.lo == self.hi and (self.lo_open or self.hi_open)

    def closure(self) -> "IntervalQ":
        return IntervalQ(self.lo, self.hi)

    def interior(self) -> "IntervalQ":
        return IntervalQ(self.lo, self.hi, True, True)

    def contains_point(self, x: Rat) -> bool:
        if self.is_empty:
            return False
        if x < self.lo or (x == self.lo and self.lo_open):
            return False
        if x > self.hi or (x == self.hi and self.hi_open):
            return False
        return True

    def contains(self, other: "IntervalQ") -> bool:
        """Set containment other <= self (an empty interval is contained in anything)."""
        if other.is_empty:
            return True
        if self.is_empty:
            return False
        lo_ok = self.lo < other.lo or (self.lo == other.lo and (not self.lo_open or other.lo_open))
        hi_ok = other.hi < self.hi or (other.hi == self.hi and (not self.hi_open or other.hi_open))
        return lo_ok and hi_ok

    def intersects(self, other: "IntervalQ") -> bool:
        if self.is_empty or other.is_empty:
            return False
        if self.hi < other.lo or other.hi < self.lo:
            return False
        if self.hi == other.lo:
            return not (self.hi_open or other.lo_open)
        if other.hi == self.lo:
            return not (other.hi_open or self.lo_open)
        return True

    def intersect(self, other: "IntervalQ") -> Optional["IntervalQ"]:
        if not self.intersects(other):
            return None
        if self.lo > other.lo:
            lo, lo_open = self.lo, self.lo_open
        elif self.lo < other.lo:
            lo, lo_open = other.lo, other.lo_open
        else:
            lo, lo_open = self.lo, self.lo_open or other.lo_open
        if self.hi < other.hi:
            hi, hi_open = self.hi, self.hi_open
        elif self.hi > other.hi:
            hi, hi_open = other.hi, other.hi_open
        else:
            hi, hi_open = self.hi, self.hi_open or other.hi_open
        return IntervalQ(lo, hi, lo_open, hi_open)

    def __str__(self):
        lb = "(" if self.lo_open else "["
        rb = ")" if self.hi_open else "]"
        return f"{lb}{self.lo}, {self.hi}{rb}"


@dataclass(frozen=True)
class Word:
    """Finite symbol string over {1..l} together with its composed map f_alpha."""

    symbols: tuple[int, ...]
    map: Affine1D

    @staticmethod
    def empty() -> "Word":
        return Word((), Affine1D.identity())

    def __len__(self):
        return len(self.symbols)

    @property
    def ratio(self) -> Rat:
        return self.map.ratio

    def concat(self, other: "Word") -> "Word":
        # f_{alpha gamma} = f_alpha o f_gamma
        return Word(self.symbols + other.symbols, self.map.compose(other.map))

    def is_prefix_of(self, other: "Word") -> bool:
        """Prefix-or-equal partial order: beta = alpha gamma with gamma possibly empty."""
        n = len(self.symbols)
        return other.symbols[:n] == self.symbols

    def is_strict_prefix_of(self, other: "Word") -> bool:
        return len(self.symbols) < len(other.symbols) and self.is_prefix_of(other)


@dataclass(frozen=True)
class Ifs1D:
    """Finite system of exact affine contractions, canonically sorted so c_1 is the smallest ratio."""

    maps: tuple[Affine1D, ...]

    def __post_init__(self):
        maps = tuple(self.maps)
        if not maps:
            raise ValueError("an IFS needs at least one map")
        for f in maps:
            if not (0 < f.ratio < 1):
                raise ValueError(f"contraction ratio must lie in (0,1), got {f.ratio}")
        # canonical symbol order: ascending by ratio (ties by offset) so that
        # symbol 1 always carries the smallest contraction ratio
        object.__setattr__(self, "maps", tuple(sorted(maps, key=lambda f: (f.ratio, f.offset))))

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[Rat, Rat]]) -> "Ifs1D":
        return cls(tuple(Affine1D(Fraction(c), Fraction(b)) for c, b in pairs))

    @property
    def l(self) -> int:
        return len(self.maps)

    @property
    def min_ratio(self) -> Rat:
        return self.maps[0].ratio

    @property
    def max_ratio(self) -> Rat:
        return max(f.ratio for f in self.maps)

    def map(self, symbol: int) -> Affine1D:
        if not 1 <= symbol <= self.l:
            raise ValueError(f"symbol {symbol} out of range 1..{self.l}")
        return self.maps[symbol - 1]

    def word(self, symbols: Sequence[int]) -> Word:
        m = Affine1D.identity()
        for s in symbols:
            m = m.compose(self.map(s))
        return Word(tuple(symbols), m)


WordLike = Union[Word, Sequence[int]]


def _as_word(ifs: Ifs1D, w: WordLike) -> Word:
    if isinstance(w, Word):
        return w
    return ifs.word(tuple(w))


def compose_word(ifs: Ifs1D, word: WordLike) -> Affine1D:
    """Exact composed map f_alpha = f_{i1} o ... o f_{ik}; the empty word gives the identity."""
    return _as_word(ifs, word).map


def solve_dimension_bracket(ifs: Ifs1D, tol: float = 1e-12) -> tuple[float, float]:
    """Bisection bracket [lo, hi] of width <= tol around the root of sum c_i^s = 1.

    The sum is strictly decreasing in s, equals l at s=0 and is <= 1 at
    s = log(l)/log(1/min c_i), so the root is bracketed from the start.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    ratios = [float(f.ratio) for f in ifs.maps]
    if len(ratios) == 1:
        return (0.0, 0.0)

    def excess(s: float) -> float:
        return math.fsum(c**s for c in ratios) - 1.0

    lo = 0.0
    hi = math.log(len(ratios)) / -math.log(min(ratios))
    # guard against rounding at the analytic right endpoint
    while excess(hi) > 0:
        hi *= 1.0 + 2**-40
    for _ in range(200):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
    return (lo, hi)


def solve_dimension(ifs: Ifs1D, tol: float = 1e-12) -> float:
    """Similarity dimension: the root s of sum_i c_i^s = 1 (monotone bisection)."""
    lo, hi = solve_dimension_bracket(ifs, tol)
    return 0.5 * (lo + hi)


def attractor_hull(ifs: Ifs1D) -> IntervalQ:
    """Smallest closed interval [a,b] with a = min_i f_i(a), b = max_i f_i(b).

    The endpoints are fixed points of the extreme maps: a = min_i b_i/(1-c_i)
    and b = max_i b_i/(1-c_i); the attractor is contained in [a,b].
    """
    fixed = [f.offset / (1 - f.ratio) for f in ifs.maps]
    return IntervalQ(min(fixed), max(fixed))


def hull_min_symbol(ifs: Ifs1D) -> int:
    """Smallest symbol whose map fixes the hull minimum (its infinite repetition codes min K)."""
    a = attractor_hull(ifs).lo
    for i, f in enumerate(ifs.maps, start=1):
        if f(a) == a:
            return i
    raise AssertionError("hull minimum is a fixed point of some map by construction")


def check_osc(ifs: Ifs1D, open_set: Optional[IntervalQ] = None) -> bool:
    """Open set condition on a bounded open interval: f_i(U) ⊆ U, pairwise disjoint.

    Defaults to the interior of the attractor hull, the common 1-D witness.
    Decided exactly on rational endpoints; touching closures are fine because
    the images are compared as open intervals.
    """
    if open_set is None:
        open_set = attractor_hull(ifs).interior()
    if open_set.is_empty or open_set.width <= 0:
        raise ValueError("open set must be a nonempty bounded open interval")
    if not (open_set.lo_open and open_set.hi_open):
        raise ValueError("open set must be open at both endpoints")
    images = [f.apply_interval(open_set) for f in ifs.maps]
    for img in images:
        if not open_set.contains(img):
            return False
    for i in range(len(images)):
        for j in range(i + 1, len(images)):
            if images[i].intersects(images[j]):
                return False
    return True


def code_point(ifs: Ifs1D, word_prefix: WordLike) -> IntervalQ:
    """Cylinder interval f_alpha(hull): encloses pi(omega) for every extension omega of the prefix."""
    w = _as_word(ifs, word_prefix)
    return w.map.apply_interval(attractor_hull(ifs))


def default_search_depth(ifs: Ifs1D, width: Rat) -> int:
    """Depth resolving targets of the given width with an 8-level margin."""
    hull = attractor_hull(ifs)
    if width <= 0 or hull.width <= 0:
        return 64
    rel = float(width / hull.width)
    if rel >= 1:
        return 8
    d = math.ceil(math.log(rel) / math.log(float(ifs.max_ratio))) + 8
    return max(8, min(d, 4096))


@dataclass(frozen=True)
class AttractorDecision:
    """Certified intersection decision; `witness` is a cylinder word with f_w(hull) ⊆ target."""

    decision: TriBool
    witness: Optional[Word]
    depth_cap: int


def attractor_intersection(ifs: Ifs1D, target: IntervalQ, max_depth: Optional[int] = None) -> AttractorDecision:
    """Certified decision whether K meets `target`.

    YES iff some cylinder f_alpha(hull) with |alpha| <= max_depth is contained
    in target (so K ∩ target is certainly nonempty); NO iff no cylinder at any
    explored level meets target (certified empty intersection); UNDECIDED
    otherwise, always together with the depth cap used.  DFS visits children
    in symbol order, so a YES witness is the lexicographically smallest
    fitting cylinder word.
    """
    hull = attractor_hull(ifs)
    if max_depth is None:
        max_depth = default_search_depth(ifs, target.width)
    if target.is_empty:
        return AttractorDecision(TriBool.NO, None, max_depth)
    # stack of (word symbols, cylinder interval); children pushed in reverse so
    # that pops explore lexicographic order
    stack: list[tuple[tuple[int, ...], IntervalQ]] = [((), hull)]
    undecided = False
    while stack:
        symbols, cyl = stack.pop()
        if not cyl.intersects(target):
            continue
        if target.contains(cyl):
            return AttractorDecision(TriBool.YES, ifs.word(symbols), max_depth)
        if len(symbols) >= max_depth:
            undecided = True
            continue
        for i in range(ifs.l, 0, -1):
            stack.append((symbols + (i,), ifs.map(i).apply_interval(cyl)))
    if undecided:
        return AttractorDecision(TriBool.UNDECIDED, None, max_depth)
    return AttractorDecision(TriBool.NO, None, max_depth)


def intersects_attractor(ifs: Ifs1D, target: IntervalQ, max_depth: Optional[int] = None) -> TriBool:
    """TriBool wrapper around attractor_intersection (YES/NO are exact certificates)."""
    return attractor_intersection(ifs, target, max_depth).decision


def find_branch(ifs: Ifs1D, base: WordLike, target_code: WordLike, Q: Rat) -> Word:
    """First truncation beta of target_code extending `base` with c_beta*diam(hull) in [c_1 Q, Q].

    Scans truncation lengths n = len(base), len(base)+1, ...; the first length
    whose cylinder diameter drops to <= Q is returned.  Since one symbol
    shrinks the diameter by at most the factor c_1, that diameter is also
    >= c_1 Q.  Raises BranchTooShortError when even the full word is too wide
    (the caller must extend the target coding).
    """
    Q = Fraction(Q)
    base_w = _as_word(ifs, base)
    target_w = _as_word(ifs, target_code)
    if not base_w.is_prefix_of(target_w):
        raise ValueError("target_code must extend base")
    diam = attractor_hull(ifs).width
    if Q <= 0:
        raise ValueError("Q must be positive")
    if base_w.ratio * diam < ifs.min_ratio * Q:
        raise ValueError("Q exceeds diam(supp mu_base)/c_1; no qualifying truncation exists")
    m = base_w.map
    symbols = list(base_w.symbols)
    if m.ratio * diam <= Q:
        return Word(tuple(symbols), m)
    for sym in target_w.symbols[len(base_w.symbols):]:
        m = m.compose(ifs.map(sym))
        symbols.append(sym)
        if m.ratio * diam <= Q:
            return Word(tuple(symbols), m)
    raise BranchTooShortError(
        f"coding of length {len(target_w)} never reaches diameter window [{ifs.min_ratio * Q}, {Q}]"
    )


def parse_rational(text: str) -> Rat:
    """Parse an exact rational from 'num/den' or integer text (den > 0 enforced)."""
    s = text.strip()
    if "/" in s:
        num_s, den_s = s.split("/", 1)
        num, den = int(num_s), int(den_s)
        if den <= 0:
            raise ValueError(f"denominator must be positive in {text!r}")
        return Fraction(num, den)
    return Fraction(int(s))


def ifs_from_dict(data: dict) -> Ifs1D:
    """Build an IFS from the config-file form {'maps': [{'c': 'num/den', 'b': 'num/den'}, ...]}."""
    if "maps" not in data or not isinstance(data["maps"], list) or not data["maps"]:
        raise ValueError("IFS config must contain a nonempty 'maps' list")
    pairs = []
    for k, entry in enumerate(data["maps"]):
        try:
            c = parse_rational(str(entry["c"]))
            b = parse_rational(str(entry["b"]))
        except KeyError as exc:
            raise ValueError(f"maps[{k}] missing field {exc}") from None
        if not (0 < c < 1):
            raise ValueError(f"maps[{k}].c must lie in (0,1), got {c}")
        pairs.append((c, b))
    return Ifs1D.from_pairs(pairs)


def cantor_ifs() -> Ifs1D:
    """The middle-third system {x/3, x/3 + 2/3}."""
    return Ifs1D.from_pairs([(Fraction(1, 3), Fraction(0)), (Fraction(1, 3), Fraction(2, 3))])
