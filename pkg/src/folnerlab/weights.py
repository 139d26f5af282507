"""Weights on a group window, self-correlations, the sets S_{δ,L,R}(c) and A_N,
and the finite-horizon condition-(⊥) checker.

One-dimensional weights on contiguous windows driven by interval sequences
take a prefix-sum route that evaluates every scale ``n`` in ``[L, R]`` at
once; everything else goes through the generic per-element route.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import rng
from .folner import DensityEstimate, FolnerSeq, lower_density
from .groups import FiniteRegion, GroupElement, GroupModel, UsageError


class OutOfWindowError(ValueError):
    """A weight was evaluated outside the window it is known on."""


@dataclass(eq=False)
class WeightFn:
    """A real function bounded by 1, known on the finite window ``domain``.

    ``values[i]`` is the value at ``domain.coords[i]``.
    """

    domain: FiniteRegion
    values: np.ndarray
    provenance: str = "synthetic"

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.domain),):
            raise UsageError("one value per domain element required")
        if len(self.values) and np.max(np.abs(self.values)) > 1.0:
            raise UsageError("weights must be bounded by 1 in absolute value")
        self.values.setflags(write=False)
        self._dense = self.domain.interval_bounds()

    @property
    def model(self) -> GroupModel:
        return self.domain.model

    @property
    def dense(self) -> tuple[int, np.ndarray] | None:
        """``(lo, values)`` when the domain is a contiguous 1-d range starting at ``lo``."""
        if self._dense is None:
            return None
        return self._dense[0], self.values

    def evaluate(self, coords: np.ndarray) -> np.ndarray:
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, self.model.dim)
        if self._dense is not None:
            lo, hi = self._dense
            idx = coords[:, 0] - lo
            if len(idx) and (idx.min() < 0 or idx.max() >= hi - lo):
                raise OutOfWindowError(
                    f"weight known on [{lo}, {hi}) but evaluated on [{coords[:, 0].min()}, {coords[:, 0].max()}]"
                )
            return self.values[idx]
        pos = self.domain.index_of(coords)
        if (pos < 0).any():
            bad = coords[np.argmax(pos < 0)]
            raise OutOfWindowError(f"weight evaluated outside its window at {tuple(int(v) for v in bad)}")
        return self.values[pos]

    def __call__(self, g: GroupElement) -> float:
        return float(self.evaluate(np.array([g.coords]))[0])

    # constructors
    @classmethod
    def constant(cls, domain: FiniteRegion, value: float = 0.0) -> WeightFn:
        return cls(domain, np.full(len(domain), float(value)), "synthetic")

    @classmethod
    def from_function(cls, domain: FiniteRegion, fn: Callable[[np.ndarray], np.ndarray], provenance="synthetic") -> WeightFn:
        return cls(domain, np.asarray(fn(domain.coords), dtype=np.float64), provenance)

    @classmethod
    def bernoulli(cls, domain: FiniteRegion, seed: int) -> WeightFn:
        """Independent fair ±1 values from the counter-based stream ``seed``."""
        return cls(domain, rng.signs(seed, domain.coords), "synthetic")

    @classmethod
    def from_csv(cls, path: str | Path, model: GroupModel) -> WeightFn:
        """Rows ``coord_1, ..., coord_d, value``; values outside [-1, 1] are rejected."""
        rows = []
        with open(path, newline="") as fh:
            for rec in csv.reader(fh):
                if not rec or rec[0].lstrip().startswith("#"):
                    continue
                try:
                    nums = [float(x) for x in rec]
                except ValueError:
                    continue  # header
                if len(nums) != model.dim + 1:
                    raise UsageError(f"expected {model.dim + 1} columns, got {len(nums)}")
                if abs(nums[-1]) > 1:
                    raise UsageError(f"weight value {nums[-1]} outside [-1, 1]")
                rows.append(nums)
        if not rows:
            raise UsageError(f"no weight values in {path}")
        arr = np.array(rows)
        coords = arr[:, :-1].astype(np.int64)
        domain = FiniteRegion(model, coords)
        if len(domain) != len(coords):
            raise UsageError("duplicate coordinates in weight file")
        order = domain.index_of(coords)
        values = np.empty(len(domain))
        values[order] = arr[:, -1]
        return cls(domain, values, "file")

    def to_csv(self, path: str | Path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for row, v in zip(self.domain.coords, self.values):
                w.writerow([*map(int, row), repr(float(v))])


def _fsum_mean(values: np.ndarray) -> float:
    return math.fsum(values) / len(values)


def self_correlation(c: WeightFn, a: GroupElement, F_n: FiniteRegion) -> float:
    """``E_{g in F_n} c(g) c(g a)``."""
    return cross_correlation(c, c, a, F_n)


def cross_correlation(c: WeightFn, f: WeightFn, a: GroupElement, F_n: FiniteRegion) -> float:
    """``E_{g in F_n} c(g) f(g a)``."""
    if len(F_n) == 0:
        raise UsageError("average over an empty set")
    model = F_n.model
    ga = model.mul_arrays(F_n.coords.copy(), np.broadcast_to(np.asarray(a.coords, dtype=np.int64), F_n.coords.shape).copy())
    return _fsum_mean(c.evaluate(F_n.coords) * f.evaluate(ga))


# prefix-sum route for 1-d interval data

def _interval_scales(seq: FolnerSeq, L: int, R: int):
    if seq.model.dim != 1:
        return None
    bounds = [seq[n].interval_bounds() for n in range(L, R + 1)]
    if any(b is None for b in bounds):
        return None
    return np.array(bounds, dtype=np.int64)


def correlation_table(c: WeightFn, f: WeightFn, shifts: np.ndarray, bounds: np.ndarray, *, block: int = 64,
                      reduce: Callable[[np.ndarray], np.ndarray] | None = None) -> np.ndarray:
    """``|E_{g in [lo_n, hi_n)} c(g) f(g + a)|`` for every shift ``a`` and scale ``n``.

    ``bounds`` is an ``(m, 2)`` array of interval bounds.  Returns an
    ``(len(shifts), m)`` array, or ``reduce`` applied to each block of rows
    when given (to avoid materializing the full table).
    """
    dc, df = c.dense, f.dense
    if dc is None or df is None:
        raise UsageError("prefix-sum route needs contiguous 1-d weights")
    t0 = int(bounds[:, 0].min())
    t1 = int(bounds[:, 1].max())
    shifts = np.asarray(shifts, dtype=np.int64)
    c_lo, cv = dc
    f_lo, fv = df
    if t0 < c_lo or t1 > c_lo + len(cv):
        raise OutOfWindowError(f"weight c must be known on [{t0}, {t1}); it is known on [{c_lo}, {c_lo + len(cv)})")
    if len(shifts):
        need_lo, need_hi = t0 + int(shifts.min()), t1 + int(shifts.max())
        if need_lo < f_lo or need_hi > f_lo + len(fv):
            raise OutOfWindowError(
                f"weight must be known on [{need_lo}, {need_hi}); it is known on [{f_lo}, {f_lo + len(fv)})"
            )
    cseg = cv[t0 - c_lo:t1 - c_lo]
    T = t1 - t0
    lo_idx = bounds[:, 0] - t0
    hi_idx = bounds[:, 1] - t0
    sizes = (bounds[:, 1] - bounds[:, 0]).astype(np.float64)
    cols = np.arange(T, dtype=np.int64)
    out = []
    for start in range(0, len(shifts), block):
        s = shifts[start:start + block]
        fseg = fv[(t0 - f_lo + s)[:, None] + cols[None, :]]
        prefix = np.zeros((len(s), T + 1))
        np.cumsum(cseg[None, :] * fseg, axis=1, out=prefix[:, 1:])
        tab = np.abs(prefix[:, hi_idx] - prefix[:, lo_idx]) / sizes
        out.append(tab if reduce is None else reduce(tab))
    if not out:
        return np.zeros((0, len(bounds)))
    return np.concatenate(out, axis=0)


# S_{δ,L,R}(c)

@dataclass
class GoodSetReport:
    delta: float
    L: int
    R: int
    members: FiniteRegion
    density: DensityEstimate | None
    probe_size: int = 0

    def to_json(self) -> dict:
        return {
            "delta": self.delta,
            "L": self.L,
            "R": self.R,
            "probe_size": self.probe_size,
            "members": len(self.members),
            "density": None if self.density is None else self.density.to_json(),
        }


def max_abs_correlation(c: WeightFn, f: WeightFn, seq: FolnerSeq, L: int, R: int, probe: FiniteRegion) -> np.ndarray:
    """``max_{L<=n<=R} |E_{g in F_n} c(g) f(g a)|`` for each ``a`` in ``probe``."""
    if not 1 <= L <= R <= len(seq):
        raise UsageError(f"scales [{L}, {R}] outside the sequence")
    bounds = _interval_scales(seq, L, R)
    if bounds is not None and c.dense is not None and f.dense is not None:
        return correlation_table(c, f, probe.coords[:, 0], bounds, reduce=lambda t: t.max(axis=1)).reshape(-1)
    out = np.zeros(len(probe))
    for i, a in enumerate(probe):
        out[i] = max(abs(cross_correlation(c, f, a, seq[n])) for n in range(L, R + 1))
    return out


def default_density_window(seq: FolnerSeq, probe: FiniteRegion) -> tuple[int, int] | None:
    """Upper half of the indices ``N`` with ``F_N`` inside ``probe``."""
    inside = [n for n in range(1, len(seq) + 1) if _subset_fast(seq[n], probe)]
    if not inside:
        return None
    top = max(inside)
    return (max(min(inside), (top + 1) // 2), top)


def _subset_fast(F: FiniteRegion, probe: FiniteRegion) -> bool:
    fb, pb = F.interval_bounds(), probe.interval_bounds()
    if fb is not None and pb is not None:
        return pb[0] <= fb[0] and fb[1] <= pb[1]
    return F.issubset(probe)


def good_set(c: WeightFn, delta: float, L: int, R: int, seq: FolnerSeq, probe: FiniteRegion,
             window: tuple[int, int] | None = None) -> GoodSetReport:
    """Members of ``S_{δ,L,R}(c) = {a : |E_{g in F_n} c(g)c(ga)| < δ for all L <= n <= R}`` in ``probe``."""
    if not delta > 0:
        raise UsageError("delta must be positive")
    if not L <= R:
        raise UsageError("need L <= R")
    worst = max_abs_correlation(c, c, seq, L, R, probe)
    members = FiniteRegion(probe.model, probe.coords[worst < delta], _normalized=True)
    if window is None:
        window = default_density_window(seq, probe)
    density = lower_density(members, seq, window) if window is not None else None
    return GoodSetReport(delta, L, R, members, density, len(probe))


# condition (⊥)

@dataclass
class DeltaResult:
    delta: float
    n_delta: int | None
    probed: list[dict] = field(default_factory=list)
    worst_density: float = 0.0

    @property
    def exceed_density(self) -> float:
        """Lower-density deficit ``1 - d(S)`` at the best candidate scale."""
        return 1.0 - self.worst_density

    def to_json(self) -> dict:
        return {
            "delta": self.delta,
            "N_delta": self.n_delta,
            "found": self.n_delta is not None,
            "worst_density": self.worst_density,
            "exceed_density": self.exceed_density,
            "probed": self.probed,
        }


@dataclass
class PerpVerdict:
    deltas: list[float]
    ladder: list[int]
    probe_size: int
    window: tuple[int, int]
    results: list[DeltaResult]

    @property
    def passed(self) -> bool:
        return all(r.n_delta is not None for r in self.results)

    def result(self, delta: float) -> DeltaResult:
        for r in self.results:
            if r.delta == delta:
                return r
        raise KeyError(delta)

    def to_json(self) -> dict:
        return {
            "deltas": list(self.deltas),
            "ladder": list(self.ladder),
            "probe_size": self.probe_size,
            "density_window": list(self.window),
            "pass": self.passed,
            "per_delta": [r.to_json() for r in self.results],
        }


DEFAULT_DELTAS = (0.2, 0.1, 0.05)


def pow2_ladder(n_max: int) -> list[int]:
    out, k = [], 1
    while k <= n_max:
        out.append(k)
        k *= 2
    return out


def _ladder_tables(c: WeightFn, seq: FolnerSeq, ladder: list[int], probe: FiniteRegion):
    """Per shift ``a``: max |corr_n(a)| over each half-open rung segment, and |corr| at each rung."""
    lo, top = ladder[0], ladder[-1]
    edges = [n - lo for n in ladder]
    m = len(ladder)

    def reduce(tab):
        seg = [tab[:, edges[s]:edges[s + 1]].max(axis=1) for s in range(m - 1)]
        seg.append(tab[:, edges[-1]])
        return np.concatenate([np.stack(seg, axis=1), tab[:, edges]], axis=1)

    bounds = _interval_scales(seq, lo, top)
    if bounds is not None and c.dense is not None:
        both = correlation_table(c, c, probe.coords[:, 0], bounds, reduce=reduce)
    else:
        tab = np.zeros((len(probe), top - lo + 1))
        for i, a in enumerate(probe):
            tab[i] = [abs(self_correlation(c, a, seq[n])) for n in range(lo, top + 1)]
        both = reduce(tab)
    return both[:, :m], both[:, m:]


def _closed_pair_maxima(seg: np.ndarray, point: np.ndarray) -> dict:
    """``max_{ladder[li] <= n <= ladder[ri]} |corr_n|`` for every rung pair ``li <= ri``."""
    out = {}
    m = seg.shape[1]
    for li in range(m):
        out[(li, li)] = point[:, li]
        acc = seg[:, li]
        for ri in range(li + 1, m):
            out[(li, ri)] = np.maximum(acc, point[:, ri])
            acc = np.maximum(acc, seg[:, ri])
    return out


def _density_evaluator(seq: FolnerSeq, probe: FiniteRegion, window: tuple[int, int]):
    """``mask over probe -> (inf, sup)`` of ``|S ∩ F_N| / |F_N|`` over ``window``."""
    n0, n1 = window
    bounds = _interval_scales(seq, n0, n1)
    pb = probe.interval_bounds()
    if bounds is not None and pb is not None and pb[0] <= bounds[:, 0].min() and bounds[:, 1].max() <= pb[1]:
        lo_idx, hi_idx = bounds[:, 0] - pb[0], bounds[:, 1] - pb[0]
        sizes = (bounds[:, 1] - bounds[:, 0]).astype(np.float64)

        def fast(mask):
            prefix = np.concatenate([[0], np.cumsum(mask, dtype=np.int64)])
            r = (prefix[hi_idx] - prefix[lo_idx]) / sizes
            return float(r.min()), float(r.max())
        return fast

    def slow(mask):
        d = lower_density(FiniteRegion(probe.model, probe.coords[mask], _normalized=True), seq, window)
        return float(d.inf_value), float(d.sup_value)
    return slow


def check_perp(c: WeightFn, seq: FolnerSeq, deltas: Sequence[float] = DEFAULT_DELTAS, *,
               ladder: Sequence[int] | None = None, probe: FiniteRegion | None = None,
               window: tuple[int, int] | None = None) -> PerpVerdict:
    """Finite-horizon test of condition (⊥).

    For each δ the candidate ``N_δ`` runs up the ladder (default powers of 2
    up to ``len(seq)``); a candidate is accepted when every probed ladder
    pair ``N_δ <= L <= R`` gives ``S_{δ,L,R}(c)`` lower density ``> 1 - δ``
    along ``seq`` over ``window``.  Membership in ``S`` is decided exactly
    over ``probe`` (default ``F_{N_max}``), with every integer scale between
    ``L`` and ``R`` included.
    """
    ladder = sorted(set(ladder)) if ladder is not None else pow2_ladder(len(seq))
    if not ladder or ladder[0] < 1 or ladder[-1] > len(seq):
        raise UsageError("ladder must lie within the sequence indices")
    probe = probe if probe is not None else seq[len(seq)]
    if window is None:
        window = default_density_window(seq, probe)
        if window is None:
            raise UsageError("no Følner set fits inside the probe; pass a density window")
    try:
        seg, point = _ladder_tables(c, seq, ladder, probe)
    except OutOfWindowError as exc:
        raise OutOfWindowError(f"condition check needs a larger weight window: {exc}") from None
    closed = _closed_pair_maxima(seg, point)
    density = _density_evaluator(seq, probe, window)
    results = []
    for delta in deltas:
        res = DeltaResult(float(delta), None)
        best = -1.0
        for i, nd in enumerate(ladder):
            probed, worst = [], 1.0
            for li in range(i, len(ladder)):
                for ri in range(li, len(ladder)):
                    d_inf, d_sup = density(closed[(li, ri)] < delta)
                    probed.append({"L": ladder[li], "R": ladder[ri], "inf": d_inf, "sup": d_sup})
                    worst = min(worst, d_inf)
            if worst > best:
                best = worst
                res.probed = probed
            if worst > 1 - delta:
                res.n_delta = nd
                res.worst_density = worst
                res.probed = probed
                break
        if res.n_delta is None:
            res.worst_density = best
        results.append(res)
    return PerpVerdict([float(d) for d in deltas], list(ladder), len(probe), tuple(window), results)


# A_N

def exceptional_set(c: WeightFn, f: WeightFn, eps: float, F_N: FiniteRegion, probe: FiniteRegion) -> FiniteRegion:
    """``A_N = {a in probe : |E_{g in F_N} c(g) f(g a)| >= eps}``."""
    if not eps > 0:
        raise UsageError("eps must be positive")
    b = F_N.interval_bounds()
    if b is not None and c.dense is not None and f.dense is not None:
        vals = correlation_table(c, f, probe.coords[:, 0], np.array([b], dtype=np.int64))[:, 0]
    else:
        vals = np.array([abs(cross_correlation(c, f, a, F_N)) for a in probe])
    return FiniteRegion(probe.model, probe.coords[vals >= eps], _normalized=True)


def exceptional_union(c: WeightFn, f: WeightFn, eps: float, seq: FolnerSeq, L: int, R: int, probe: FiniteRegion) -> FiniteRegion:
    """``A_(j) = ∪_{L<=N<=R} A_N`` restricted to ``probe``."""
    worst = max_abs_correlation(c, f, seq, L, R, probe)
    return FiniteRegion(probe.model, probe.coords[worst >= eps], _normalized=True)
