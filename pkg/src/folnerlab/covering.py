"""Random coverings by Poisson-placed Følner sets and Monte Carlo checks of their moments.

Scales are processed in descending order.  At scale ``N`` the centers
``Σ_N`` are the Poisson points of ``Υ_N`` that land in the current target
``A_{N|N+1}``; every smaller scale ``i`` then drops the candidates ``a``
whose ``F_i a`` meets ``F_N Σ_N``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import rng
from .folner import FolnerSeq, tempered_constant
from .groups import FiniteRegion, GroupElement, GroupModel, UsageError, inverse_set, pack_keys, product_set


class TemperednessWarning(UserWarning):
    pass


def _generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_poisson(region: FiniteRegion, alpha: float, seed) -> np.ndarray:
    """Poisson point process of intensity ``alpha`` (w.r.t. Haar measure) restricted to ``region``.

    Returns the multiset of points as an ``(m, dim)`` array with repeats,
    rows sorted.  Each element carries an independent Poisson(``alpha *
    haar_weight``) multiplicity; the draw is made as a Poisson total
    followed by uniform placement, which has the same law.
    """
    if alpha < 0:
        raise UsageError("intensity must be nonnegative")
    model = region.model
    if alpha == 0 or len(region) == 0:
        return np.zeros((0, model.dim), dtype=np.int64)
    g = _generator(seed)
    lam = alpha * float(region.model.haar_weight) * len(region)
    total = int(g.poisson(lam))
    picks = np.sort(g.integers(0, len(region), size=total))
    return region.coords[picks]


@dataclass
class PoissonParams:
    """Per-scale intensities ``α_N = scale_factor / |F_N|`` and the master seed.

    ``scale_factor`` defaults to ``1/C``; pass ``delta`` explicitly to use
    ``α_N = δ/|F_N|`` instead.
    """

    C: float
    seed: int = 0
    delta: float | None = None

    @property
    def scale_factor(self) -> float:
        return self.delta if self.delta is not None else 1.0 / self.C

    def intensity(self, F: FiniteRegion) -> float:
        return self.scale_factor / float(F.measure)


@dataclass
class CoveringSample:
    """One realization of the descending construction on scales ``L..R``."""

    seq: FolnerSeq
    scales: tuple[int, int]
    centers: dict[int, np.ndarray]  # N -> Σ_N as (m, dim) multiset
    surviving: dict[tuple[int, int], FiniteRegion]  # (i, N) -> A_{i|N}
    raw: dict[int, np.ndarray] = field(default_factory=dict)  # N -> Υ_N on the initial target

    @property
    def model(self) -> GroupModel:
        return self.seq.model

    def counting_array(self, window: FiniteRegion) -> np.ndarray:
        """``Λ`` evaluated on every element of ``window``."""
        lam = np.zeros(len(window), dtype=np.int64)
        model = self.model
        for N, cen in self.centers.items():
            if len(cen) == 0:
                continue
            F = self.seq[N].coords
            pts = model.mul_arrays(np.repeat(F, len(cen), axis=0), np.tile(cen, (len(F), 1)))
            pos = window.index_of(pts)
            if (pos < 0).any():
                raise UsageError("counting window does not contain every covering piece")
            lam += np.bincount(pos, minlength=len(window))
        return lam

    def total_mass(self) -> Fraction:
        """``∫ Λ = Σ_N |F_N| · #Σ_N``."""
        return sum((self.seq[N].measure * len(c) for N, c in self.centers.items()), Fraction(0))

    def check_invariants(self, initial_targets: dict[int, FiniteRegion]):
        """Assert the structural properties of the construction (exact, piece by piece)."""
        L, R = self.scales
        model = self.model
        for N in range(L, R + 1):
            cen = self.centers[N]
            target = self.surviving.get((N, N + 1), initial_targets[N])
            assert target.isin(cen).all(), f"Σ_{N} leaves A_{{{N}|{N + 1}}}"
        for N in range(L, R + 1):
            if len(self.centers[N]) == 0:
                continue
            cover = product_set(self.seq[N], FiniteRegion(model, self.centers[N]))
            for i in range(L, N):
                F_i = self.seq[i].coords
                for a in self.surviving[(i, N)].coords:
                    piece = model.mul_arrays(F_i.copy(), np.broadcast_to(a, F_i.shape).copy())
                    assert not cover.isin(piece).any(), f"F_{i}{tuple(a)} meets F_{N} Σ_{N}"


def random_covering(seq: FolnerSeq, scales: tuple[int, int], targets: Sequence[FiniteRegion] | dict,
                    params: PoissonParams, *, trial: int = 0, check_tempered: bool = True) -> CoveringSample:
    """Run the descending construction once.

    ``targets`` gives ``A_{N|R+1}`` for ``N = L..R`` (a list in that order or
    a dict keyed by ``N``).  ``Υ_N`` is drawn on the initial target from the
    stream ``(params.seed, trial, N)`` and restricted to ``A_{N|N+1}``.
    """
    L, R = scales
    if not 1 <= L <= R <= len(seq):
        raise UsageError(f"scales {scales} outside the sequence")
    if not isinstance(targets, dict):
        targets = {N: t for N, t in zip(range(L, R + 1), targets)}
    if set(targets) != set(range(L, R + 1)):
        raise UsageError("one target per scale L..R required")
    if check_tempered:
        C_seq = tempered_constant(seq.subsequence(range(L, R + 1)))
        if C_seq > params.C:
            warnings.warn(f"sequence is not {params.C}-tempered on [{L}, {R}] (ratio {float(C_seq):.4g})",
                          TemperednessWarning, stacklevel=2)
    model = seq.model
    current = dict(targets)  # current[i] = A_{i|N+1} while processing N
    surviving: dict[tuple[int, int], FiniteRegion] = {}
    centers: dict[int, np.ndarray] = {}
    raw: dict[int, np.ndarray] = {}
    for N in range(R, L - 1, -1):
        F_N = seq[N]
        ups = sample_poisson(targets[N], params.intensity(F_N), rng.stream(params.seed, trial, N))
        raw[N] = ups
        surviving[(N, N + 1)] = current[N]
        sigma = ups[current[N].isin(ups)] if len(ups) else ups
        centers[N] = sigma
        if len(sigma) and N > L:
            cover = product_set(F_N, FiniteRegion(model, sigma))
            for i in range(L, N):
                removed = product_set(inverse_set(seq[i]), cover)
                current[i] = current[i].difference(removed)
        for i in range(L, N):
            surviving[(i, N)] = current[i]
    return CoveringSample(seq, (L, R), centers, surviving, raw)


def counting_function(sample: CoveringSample, g: GroupElement, window: FiniteRegion | None = None) -> int:
    """``Λ(g) = Σ_N #{a in Σ_N : g in F_N a}`` (with multiplicity)."""
    if window is not None and g not in window:
        raise UsageError(f"{g} lies outside the evaluation window")
    model = sample.model
    gc = np.asarray(g.coords, dtype=np.int64)[None, :]
    total = 0
    for N, cen in sample.centers.items():
        if len(cen) == 0:
            continue
        # g in F_N a  <=>  g a^-1 in F_N
        ainv = model.inv_arrays(cen)
        total += int(sample.seq[N].isin(model.mul_arrays(np.repeat(gc, len(cen), axis=0), ainv)).sum())
    return total


def covering_window(seq: FolnerSeq, scales: tuple[int, int], targets: dict[int, FiniteRegion]) -> FiniteRegion:
    """Union of ``F_N A_{N|R+1}``: every point where ``Λ`` can be nonzero."""
    L, R = scales
    parts = [product_set(seq[N], targets[N]) for N in range(L, R + 1) if len(targets[N])]
    if not parts:
        return FiniteRegion.empty(seq.model)
    return FiniteRegion(seq.model, np.concatenate([p.coords for p in parts]))


@dataclass
class MomentReport:
    trials: int
    C: float
    scale_factor: float
    union_measure: float
    hit_cells: int
    cond_mean: float | None
    cond_mean_se: float | None
    cond_second: float | None
    cond_second_se: float | None
    mass_mean: float
    mass_se: float
    bounds: dict
    passes: dict
    max_cell_cond_mean: float | None = None
    tempered_ratio: float = 0.0
    warnings: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.passes.values())

    @property
    def no_mass(self) -> bool:
        return self.cond_mean is None

    def to_json(self) -> dict:
        return {
            "trials": self.trials,
            "C": self.C,
            "intensity_factor": self.scale_factor,
            "right_haar": "equal to left Haar (unimodular model)",
            "union_measure": self.union_measure,
            "hit_cells": self.hit_cells,
            "estimates": {
                "E[Lambda | Lambda>=1]": self.cond_mean,
                "E[Lambda^2 | Lambda>=1]": self.cond_second,
                "E[int Lambda]": self.mass_mean,
                "max_cell_E[Lambda | Lambda>=1]": self.max_cell_cond_mean,
            },
            "standard_errors": {
                "E[Lambda | Lambda>=1]": self.cond_mean_se,
                "E[Lambda^2 | Lambda>=1]": self.cond_second_se,
                "E[int Lambda]": self.mass_se,
            },
            "bounds": self.bounds,
            "pass": self.passes,
            "no_mass": self.no_mass,
            "tempered_ratio": self.tempered_ratio,
            "warnings": list(self.warnings),
        }


def _ratio_se(num: np.ndarray, den: np.ndarray) -> tuple[float, float]:
    # ratio of means with a delta-method SE clustered by trial
    T = len(num)
    r = num.sum() / den.sum()
    resid = num - r * den
    var = resid.var(ddof=1) / (T * den.mean() ** 2) if T > 1 else math.inf
    return float(r), float(math.sqrt(var))


def covering_moments(seq: FolnerSeq, scales: tuple[int, int], targets: Sequence[FiniteRegion] | dict,
                     params: PoissonParams, trials: int, *, slack: float = 3.0,
                     min_cell_hits: int = 50) -> MomentReport:
    """Monte Carlo estimates of the conditional moments of ``Λ`` and of ``E ∫Λ``.

    Conditional moments pool all ``(g, trial)`` cells with ``Λ(g) >= 1``;
    cells never hit carry no conditional mass and drop out.  Standard
    errors treat trials as independent clusters.  Each bound is checked
    with ``slack`` standard errors.
    """
    L, R = scales
    if trials < 1:
        raise UsageError("need at least one trial")
    if not isinstance(targets, dict):
        targets = {N: t for N, t in zip(range(L, R + 1), targets)}
    C = params.C
    ratio = float(tempered_constant(seq.subsequence(range(L, R + 1))))
    warn = []
    if ratio > C:
        warn.append(f"sequence is not {C}-tempered on scales [{L}, {R}]: ratio {ratio:.6g}")
    window = covering_window(seq, scales, targets)
    union = FiniteRegion(seq.model, np.concatenate([targets[N].coords for N in range(L, R + 1)]))
    union_measure = float(union.measure)
    w = float(seq.model.haar_weight)

    s1 = np.zeros(trials)
    s2 = np.zeros(trials)
    hits = np.zeros(trials)
    mass = np.zeros(trials)
    cell_hits = np.zeros(len(window))
    cell_sum = np.zeros(len(window))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TemperednessWarning)
        for t in range(trials):
            sample = random_covering(seq, scales, targets, params, trial=t, check_tempered=False)
            lam = sample.counting_array(window) if len(window) else np.zeros(0, dtype=np.int64)
            pos = lam > 0
            s1[t] = lam.sum()
            s2[t] = (lam.astype(np.float64) ** 2).sum()
            hits[t] = pos.sum()
            mass[t] = s1[t] * w
            cell_hits += pos
            cell_sum += lam

    mass_mean = float(mass.mean())
    mass_se = float(mass.std(ddof=1) / math.sqrt(trials)) if trials > 1 else math.inf
    b1 = 1 + 1 / C
    bounds = {
        "E[Lambda | Lambda>=1] <=": b1,
        "E[Lambda^2 | Lambda>=1] <=": b1 * b1,
        "E[int Lambda] >=": union_measure / (2 * C),
    }
    if hits.sum() == 0:
        passes = {
            "conditional_first": True,
            "conditional_second": True,
            "coverage": mass_mean >= bounds["E[int Lambda] >="] - slack * (mass_se if math.isfinite(mass_se) else 0.0),
        }
        return MomentReport(trials, C, params.scale_factor, union_measure, 0, None, None, None, None,
                            mass_mean, mass_se, bounds, passes, None, ratio, warn)
    m1, se1 = _ratio_se(s1, hits)
    m2, se2 = _ratio_se(s2, hits)
    busy = cell_hits >= min_cell_hits
    max_cell = float((cell_sum[busy] / cell_hits[busy]).max()) if busy.any() else None
    passes = {
        "conditional_first": m1 <= b1 + slack * se1,
        "conditional_second": m2 <= b1 * b1 + slack * se2,
        "coverage": mass_mean >= bounds["E[int Lambda] >="] - slack * mass_se,
    }
    return MomentReport(trials, C, params.scale_factor, union_measure, int((cell_hits > 0).sum()),
                        m1, se1, m2, se2, mass_mean, mass_se, bounds, passes, max_cell, ratio, warn)


def single_scale_oracle(F: FiniteRegion, target: FiniteRegion, alpha: float) -> dict:
    """Closed-form pooled moments for one scale.

    ``Λ(g)`` is Poisson with mean ``λ_g = α w |{a in A : g in F a}|``, so the
    pooled conditional moments are ``Σλ / Σ(1-e^-λ)`` and
    ``Σ(λ+λ²) / Σ(1-e^-λ)``, and ``E ∫Λ = α |F| |A|``.
    """
    model = F.model
    w = float(model.haar_weight)
    pts = model.mul_arrays(np.repeat(F.coords, len(target), axis=0), np.tile(target.coords, (len(F), 1)))
    keys = pack_keys(pts)[0]
    _, mult = np.unique(keys, return_counts=True)
    lam = alpha * w * mult.astype(np.float64)
    p_hit = -np.expm1(-lam)
    return {
        "cond_mean": float(lam.sum() / p_hit.sum()),
        "cond_second": float((lam + lam * lam).sum() / p_hit.sum()),
        "mass": alpha * float(F.measure) * float(target.measure),
    }


def random_targets(model: GroupModel, density: float, window: int, seed: int, scales: tuple[int, int]) -> dict[int, FiniteRegion]:
    """Seeded random subsets of ``[0, window)`` with the given density, one per scale."""
    L, R = scales
    out = {}
    for N in range(L, R + 1):
        g = rng.stream(seed, N)
        keep = g.random(window) < density
        out[N] = FiniteRegion(model, np.flatnonzero(keep).reshape(-1, 1), _normalized=True)
    return out
