"""Følner sequences: boundaries, invariance defects, temperedness, densities.

Ratios of measures inside one model are ratios of element counts (the Haar
weight cancels), so defects and tempered ratios are returned as exact
``Fraction`` values.
"""
from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .groups import (
    SCALE_CAP,
    FiniteRegion,
    GroupModel,
    ScaleCapError,
    UsageError,
    dense_convolve,
    indicator,
    inverse_set,
    product_set,
)


class StrongifyWarning(UserWarning):
    pass


@dataclass
class FolnerSeq:
    """Indexed family ``N -> F_N`` for ``N = 1..len(sets)``."""

    model: GroupModel
    sets: list[FiniteRegion]
    tag: str = "user"

    def __post_init__(self):
        for n, F in enumerate(self.sets, start=1):
            if F.model != self.model:
                raise UsageError(f"F_{n} belongs to {F.model.name}, not {self.model.name}")
            if len(F) == 0:
                raise UsageError(f"F_{n} is empty; Følner sets must be nonnull")

    def __len__(self):
        return len(self.sets)

    def __getitem__(self, n: int) -> FiniteRegion:
        if not 1 <= n <= len(self.sets):
            raise IndexError(f"index {n} outside 1..{len(self.sets)}")
        return self.sets[n - 1]

    @property
    def n_max(self) -> int:
        return len(self.sets)

    def subsequence(self, indices: Sequence[int]) -> FolnerSeq:
        return FolnerSeq(self.model, [self[i] for i in indices], tag=f"{self.tag}[sub]")

    def interval_bounds(self, n: int) -> tuple[int, int] | None:
        return self[n].interval_bounds()


# generators

def interval_family(model: GroupModel, n_max: int, *, start: int = 1) -> FolnerSeq:
    """``F_N = [0, N)``; for LatticeR the lattice points of ``[0, N)``."""
    scale = 1
    if model.kind == "latticeR":
        inv = 1 / model.eps
        if inv.denominator != 1:
            raise UsageError("interval family on LatticeR needs 1/eps integral")
        scale = int(inv)
    sets = [FiniteRegion.interval(model, 0, n * scale) for n in range(start, start + n_max)]
    return FolnerSeq(model, sets, tag="interval")


def pow2_family(model: GroupModel, lo: int, hi: int) -> FolnerSeq:
    """``F_k = [0, 2^N)`` for ``N = lo..hi`` (re-indexed from 1)."""
    return FolnerSeq(model, [FiniteRegion.interval(model, 0, 2**n) for n in range(lo, hi + 1)], tag=f"pow2:{lo}..{hi}")


def cube_family(model: GroupModel, n_max: int) -> FolnerSeq:
    return FolnerSeq(model, [FiniteRegion.box(model, [0] * model.dim, [n] * model.dim) for n in range(1, n_max + 1)], tag="cube")


def heisenberg_box_family(model: GroupModel, n_max: int) -> FolnerSeq:
    """Boxes ``[0,N) x [0,N) x [0,N^2)``, a Følner sequence of the discrete Heisenberg group."""
    if model.kind != "heis":
        raise UsageError("Heisenberg boxes need the heis model")
    return FolnerSeq(model, [FiniteRegion.box(model, [0, 0, 0], [n, n, n * n]) for n in range(1, n_max + 1)], tag="heisbox")


def swiss_cheese_gap(n: int, eps: Fraction) -> int:
    """Spacing (in lattice steps) of the single-point gaps of the swiss-cheese set ``F_n``.

    Nominally ``ceil(1/(n eps^2))``; capped at ``floor(1/eps)`` so gaps recur
    in every unit window, which is what makes ``[-1, 0]``-boundaries fill ``[0, n+1]``.
    """
    nominal = math.ceil(1 / (n * eps * eps))
    return max(2, min(nominal, math.floor(1 / eps)))


def swiss_cheese(model: GroupModel, n: int) -> FiniteRegion:
    """Lattice points of ``[0, n]`` minus an evenly spaced pattern of isolated gaps."""
    if model.kind != "latticeR":
        raise UsageError("swiss-cheese sets live in LatticeR")
    top = Fraction(n) / model.eps
    if top.denominator != 1:
        raise UsageError("n must be a lattice point")
    top = int(top)
    s = swiss_cheese_gap(n, model.eps)
    k = np.arange(0, top + 1, dtype=np.int64)
    keep = (k % s != s // 2) | (k == 0) | (k == top)
    return FiniteRegion(model, k[keep].reshape(-1, 1), _normalized=True)


def swiss_cheese_family(model: GroupModel, n_max: int) -> FolnerSeq:
    return FolnerSeq(model, [swiss_cheese(model, n) for n in range(1, n_max + 1)], tag="swiss")


def parse_seq(model: GroupModel, spec: str, n_max: int | None = None) -> FolnerSeq:
    """``interval[:N]``, ``pow2:lo..hi``, ``cube[:N]``, ``heisbox[:N]``, ``swiss[:N]``."""
    s = spec.strip()
    m = re.fullmatch(r"pow2:(\d+)\.\.(\d+)", s)
    if m:
        return pow2_family(model, int(m.group(1)), int(m.group(2)))
    m = re.fullmatch(r"(interval|cube|heisbox|swiss)(?::(\d+))?", s)
    if not m:
        raise UsageError(f"unknown sequence spec {spec!r}")
    n = int(m.group(2)) if m.group(2) else n_max
    if n is None:
        raise UsageError(f"sequence {spec!r} needs a length")
    builder = {
        "interval": interval_family,
        "cube": cube_family,
        "heisbox": heisenberg_box_family,
        "swiss": swiss_cheese_family,
    }[m.group(1)]
    return builder(model, n)


# boundaries and defects

def _boundary_counts_abelian(K: FiniteRegion, F: FiniteRegion):
    # count(a) = #{k in K : k + a in F}, over the box of candidates a = f - k
    negK = FiniteRegion(K.model, -K.coords)
    iF, loF = indicator(F)
    iK, loK = indicator(negK)
    counts = dense_convolve(iF, iK)
    origin = loF + loK
    return counts, origin


def k_boundary(K: FiniteRegion, F: FiniteRegion) -> FiniteRegion:
    """``K^-1 F  ∩  K^-1 F^c``: points ``a`` whose translate ``K a`` meets both ``F`` and its complement."""
    if K.model != F.model:
        raise UsageError("model mismatch")
    if len(K) == 0:
        raise UsageError("K-boundary needs a nonempty K")
    model = K.model
    if len(F) == 0:
        return FiniteRegion.empty(model)
    nK = len(K)
    if model.abelian:
        counts, origin = _boundary_counts_abelian(K, F)
        if counts.size <= 50_000_000:
            pts = np.argwhere((counts > 0.5) & (counts < nK - 0.5)).astype(np.int64) + origin
            return FiniteRegion(model, pts, _normalized=True)
    cand = product_set(inverse_set(K), F)
    hits = np.zeros(len(cand), dtype=np.int64)
    for k in K.coords:
        moved = model.mul_arrays(np.broadcast_to(k, cand.coords.shape).copy(), cand.coords.copy())
        hits += F.isin(moved)
    return FiniteRegion(model, cand.coords[hits < nK], _normalized=True)


def weak_defect(K: FiniteRegion, F: FiniteRegion) -> Fraction:
    """``|F Δ KF| / |F|``."""
    if len(F) == 0:
        raise UsageError("weak defect needs a nonempty F")
    KF = product_set(K, F)
    common = len(F.intersection(KF))
    return Fraction(len(F) + len(KF) - 2 * common, len(F))


def strong_defect(K: FiniteRegion, F: FiniteRegion) -> Fraction:
    """``|∂_K F| / |F|``."""
    if len(F) == 0:
        raise UsageError("strong defect needs a nonempty F")
    return Fraction(len(k_boundary(K, F)), len(F))


def tempered_ratios(seq: FolnerSeq, up_to: int | None = None) -> list[Fraction]:
    """``|∪_{i<j} F_i^-1 F_j| / |F_j|`` for ``j = 1..up_to`` (0 at ``j = 1``)."""
    up_to = len(seq) if up_to is None else min(up_to, len(seq))
    ratios = [Fraction(0)] if up_to >= 1 else []
    # ∪_{i<j} F_i^-1 F_j = (∪_{i<j} F_i^-1) F_j
    prefix = inverse_set(seq[1]) if up_to >= 1 else None
    for j in range(2, up_to + 1):
        Fj = seq[j]
        U = product_set(prefix, Fj)
        if len(U) > SCALE_CAP:
            raise ScaleCapError("scale cap: union exceeds 1e7 elements")
        ratios.append(Fraction(len(U), len(Fj)))
        prefix = prefix.union(inverse_set(Fj))
    return ratios


def tempered_constant(seq: FolnerSeq, up_to: int | None = None) -> Fraction:
    """Smallest ``C`` with ``|∪_{i<j} F_i^-1 F_j| <= C |F_j|`` for ``j <= up_to``."""
    ratios = tempered_ratios(seq, up_to)
    return max(ratios, default=Fraction(0))


def tempered_subsequence(seq: FolnerSeq, C: float) -> list[int]:
    """Greedy extraction: keep ``j`` iff ``|∪_{kept i<j} F_i^-1 F_j| < C |F_j|``."""
    if not C > 1:
        raise UsageError("tempered extraction needs C > 1")
    C = Fraction(C) if not isinstance(C, float) else Fraction(str(C))
    kept = [1]
    prefix = inverse_set(seq[1])
    for j in range(2, len(seq) + 1):
        Fj = seq[j]
        U = product_set(prefix, Fj)
        if Fraction(len(U), len(Fj)) < C:
            kept.append(j)
            prefix = prefix.union(inverse_set(Fj))
    return kept


def strongify(K: FiniteRegion, F_n: FiniteRegion, eps: float | None = None) -> FiniteRegion:
    """Return ``K F_n``, whose ``K``-boundary lies inside ``K^-1 K F_n \\ F_n``.

    When ``eps`` is given the precondition ``|K^-1 K F_n Δ F_n| < eps |F_n|``
    is measured; a violation only emits a ``StrongifyWarning``.
    """
    if eps is not None:
        KinvK = product_set(inverse_set(K), K)
        measured = weak_defect(KinvK, F_n)
        if not measured < eps:
            warnings.warn(
                f"strongify precondition violated: |K^-1 K F Δ F|/|F| = {float(measured):.6g} >= {eps}",
                StrongifyWarning,
                stacklevel=2,
            )
    return product_set(K, F_n)


# densities

@dataclass(frozen=True)
class DensityEstimate:
    inf_value: Fraction
    sup_value: Fraction
    window: tuple[int, int]
    argmin: int = 0

    def to_json(self) -> dict:
        return {
            "inf": float(self.inf_value),
            "sup": float(self.sup_value),
            "window": list(self.window),
            "argmin": self.argmin,
        }


Membership = Callable[[np.ndarray], np.ndarray]


def _membership_mask(S, F: FiniteRegion) -> np.ndarray:
    if isinstance(S, FiniteRegion):
        return S.isin(F.coords)
    mask = np.asarray(S(F.coords), dtype=bool)
    if mask.shape != (len(F),):
        raise UsageError("membership predicate must return one boolean per row")
    return mask


def lower_density(S, seq: FolnerSeq, window: tuple[int, int]) -> DensityEstimate:
    """Finite-window inf/sup of ``|S ∩ F_N| / |F_N|`` over ``N`` in ``window``.

    ``S`` is a ``FiniteRegion`` or a vectorized predicate taking an
    ``(n, dim)`` coordinate array and returning a boolean mask.
    """
    n0, n1 = window
    if not 1 <= n0 <= n1 <= len(seq):
        raise UsageError(f"window {window} outside 1..{len(seq)}")
    ratios = _nested_interval_counts(S, seq, n0, n1)
    if ratios is None:
        ratios = []
        for n in range(n0, n1 + 1):
            F = seq[n]
            ratios.append(Fraction(int(_membership_mask(S, F).sum()), len(F)))
    lo = min(ratios)
    return DensityEstimate(lo, max(ratios), (n0, n1), argmin=n0 + ratios.index(lo))


def _nested_interval_counts(S, seq: FolnerSeq, n0: int, n1: int):
    # fast path: 1-d sequences of intervals; one membership pass over the hull
    if seq.model.dim != 1:
        return None
    bounds = [seq[n].interval_bounds() for n in range(n0, n1 + 1)]
    if any(b is None for b in bounds):
        return None
    lo = min(b[0] for b in bounds)
    hi = max(b[1] for b in bounds)
    if hi - lo > 50_000_000:
        return None
    hull = FiniteRegion.interval(seq.model, lo, hi)
    prefix = np.concatenate([[0], np.cumsum(_membership_mask(S, hull), dtype=np.int64)])
    return [Fraction(int(prefix[b - lo] - prefix[a - lo]), b - a) for a, b in bounds]


def interval_boundary_size(k_lo: int, k_hi: int, f_lo: int, f_hi: int) -> int:
    """``|∂_K F|`` for 1-d intervals ``K = [k_lo, k_hi)`` and ``F = [f_lo, f_hi)``.

    ``a`` is a boundary point iff ``[a + k_lo, a + k_hi)`` meets ``F`` without
    being contained in it.
    """
    r = k_hi - k_lo
    n = f_hi - f_lo
    if r <= 0 or n <= 0:
        return 0
    if r == 1:
        return 0
    if n >= r:
        return 2 * (r - 1)
    return n + r - 1
