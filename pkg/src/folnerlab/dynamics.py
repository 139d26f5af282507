"""Model measure-preserving Z^k-systems, orbit weights and weighted averages.

Only systems whose Kronecker factor is known in closed form are provided:
torus rotations (their own Kronecker factor), Bernoulli shifts (trivial
Kronecker factor), rotation x Bernoulli products, and the Anzai skew
product ``(x, y) -> (x + θ, y + x)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import rng
from .folner import FolnerSeq
from .groups import FiniteRegion, GroupModel, UsageError
from .weights import WeightFn


class NoAnalyticDecomposition(ValueError):
    """The (system, observable) pair has no closed-form Kronecker decomposition."""


# exact phases

_S21 = float(2**21)
_S42 = float(2**42)


def _frac(x):
    return x - np.floor(x)


def frac_mul(n: np.ndarray, theta: float) -> np.ndarray:
    """``n * theta mod 1`` for int64 ``n``, accurate to a few ulps of 1.

    ``theta`` is cut into 21-bit pieces so each partial product is exact
    for ``|n| < 2^32``; larger ``n`` are split into 32-bit halves first.
    """
    n = np.asarray(n, dtype=np.int64)
    theta = float(theta) % 1.0
    big = np.abs(n) >= 2**31
    if big.any():
        hi = n >> 32
        lo = n & 0xFFFFFFFF
        r = (theta * 2.0**32) % 1.0
        return _frac(_frac_mul_small(hi, r) + _frac_mul_small(lo, theta))
    return _frac_mul_small(n, theta)


def _frac_mul_small(n: np.ndarray, theta: float) -> np.ndarray:
    t1 = math.floor(theta * _S21) / _S21
    t2 = math.floor((theta - t1) * _S42) / _S42
    t3 = theta - t1 - t2
    nf = n.astype(np.float64)
    return _frac(_frac(nf * t1) + _frac(nf * t2) + nf * t3)


# points and states

@dataclass(frozen=True)
class TorusState:
    x: np.ndarray  # (n, d) phases in [0, 1)

    def __len__(self):
        return len(self.x)


@dataclass(frozen=True)
class BernoulliState:
    seed: int
    index: np.ndarray  # (n, k) group coordinates; ω shifted by g reads coordinate g + j

    def __len__(self):
        return len(self.index)


@dataclass(frozen=True)
class PairState:
    first: object
    second: object

    def __len__(self):
        return len(self.first)


@dataclass(frozen=True)
class SkewState:
    x: np.ndarray
    y: np.ndarray

    def __len__(self):
        return len(self.x)


def _coords(g, rank: int) -> np.ndarray:
    g = np.asarray(g, dtype=np.int64)
    if g.ndim == 1:
        g = g.reshape(-1, 1) if rank == 1 else g.reshape(1, -1)
    if g.shape[1] != rank:
        raise UsageError(f"acting group has rank {rank}, got coordinates of width {g.shape[1]}")
    return g


class SystemModel:
    """A measure-preserving action of ``Z^rank`` with a sampler for its invariant measure."""

    kind = "abstract"
    rank = 1

    @property
    def group(self) -> GroupModel:
        return GroupModel("Z") if self.rank == 1 else GroupModel("Zd", self.rank)

    def sample_point(self, gen: np.random.Generator):
        raise NotImplementedError

    def orbit(self, point, g) -> object:
        """State of ``g · point`` for each row of the coordinate array ``g``."""
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


class Rotation(SystemModel):
    """``g · x = x + g θ mod 1`` on the torus ``T^d``; ``θ`` has shape ``(rank, d)``."""

    kind = "rotation"

    def __init__(self, theta):
        th = np.atleast_1d(np.asarray(theta, dtype=np.float64))
        if th.ndim == 1:
            th = th.reshape(1, -1)
        self.theta = np.mod(th, 1.0)
        self.rank, self.dim = self.theta.shape

    def sample_point(self, gen):
        return gen.random(self.dim)

    def orbit(self, point, g) -> TorusState:
        g = _coords(g, self.rank)
        x = np.broadcast_to(np.asarray(point, dtype=np.float64).reshape(-1), (self.dim,))
        out = np.empty((len(g), self.dim))
        for j in range(self.dim):
            acc = np.full(len(g), x[j])
            for i in range(self.rank):
                acc = acc + frac_mul(g[:, i], self.theta[i, j])
            out[:, j] = _frac(acc)
        return TorusState(out)

    def describe(self):
        return {"kind": "rotation", "theta": self.theta.tolist()}


class BernoulliShift(SystemModel):
    """Shift on ``{±1}^(Z^rank)`` with the fair product measure.

    A point is an integer seed; its coordinate ``ω_h`` is the counter-based
    sign ``signs(seed, h)``, so ``(g · ω)_h = ω_{h+g}`` holds exactly.
    """

    kind = "bernoulli"

    def __init__(self, rank: int = 1):
        self.rank = rank

    def sample_point(self, gen):
        return int(gen.integers(0, 2**62))

    def orbit(self, point, g) -> BernoulliState:
        return BernoulliState(int(point), _coords(g, self.rank))

    def describe(self):
        return {"kind": "bernoulli", "rank": self.rank}


class ProductSystem(SystemModel):
    """Diagonal action on ``X × Y``; points are pairs."""

    kind = "product"

    def __init__(self, first: SystemModel, second: SystemModel):
        if first.rank != second.rank:
            raise UsageError("product factors must share the acting group")
        self.first, self.second = first, second
        self.rank = first.rank

    def sample_point(self, gen):
        return (self.first.sample_point(gen), self.second.sample_point(gen))

    def orbit(self, point, g) -> PairState:
        return PairState(self.first.orbit(point[0], g), self.second.orbit(point[1], g))

    def describe(self):
        return {"kind": "product", "factors": [self.first.describe(), self.second.describe()]}


class SkewProduct(SystemModel):
    """``T(x, y) = (x + θ, y + x)`` on ``T^2`` (a Z-action)."""

    kind = "skew"

    def __init__(self, theta: float):
        self.theta = float(theta) % 1.0
        self.rank = 1

    def sample_point(self, gen):
        return (float(gen.random()), float(gen.random()))

    def orbit(self, point, g) -> SkewState:
        n = _coords(g, 1)[:, 0]
        x0, y0 = point
        x = _frac(x0 + frac_mul(n, self.theta))
        # T^n(x, y) = (x + nθ, y + n x + n(n-1)/2 θ)
        tri = n * (n - 1) // 2
        y = _frac(y0 + frac_mul(n, x0) + frac_mul(tri, self.theta))
        return SkewState(x, y)

    def describe(self):
        return {"kind": "skew", "theta": self.theta}


# observables

class Observable:
    """A closed-form real function on a system's points, bounded by ``bound``."""

    bound = 1.0

    def __call__(self, state) -> np.ndarray:
        raise NotImplementedError

    def integral(self, system: SystemModel) -> float:
        raise NoAnalyticDecomposition(f"no closed-form integral for {self!r}")

    def describe(self) -> str:
        return repr(self)


@dataclass(frozen=True)
class Const(Observable):
    value: float = 0.0

    def __post_init__(self):
        if abs(self.value) > 1:
            raise UsageError("observables are bounded by 1")

    def __call__(self, state):
        return np.full(len(state), float(self.value))

    def integral(self, system):
        return float(self.value)

    def describe(self):
        return f"const:{self.value!r}"


@dataclass(frozen=True)
class TorusCos(Observable):
    """``cos(2π(k · x + phase))`` on a torus."""

    freq: tuple = (1,)
    phase: float = 0.0

    def __call__(self, state):
        if not isinstance(state, TorusState):
            raise UsageError("torus observable evaluated on a non-torus state")
        k = np.asarray(self.freq, dtype=np.int64)
        if len(k) != state.x.shape[1]:
            raise UsageError("frequency dimension mismatch")
        arg = np.zeros(len(state))
        for j, kj in enumerate(k):
            if kj:
                arg = arg + _frac(kj * state.x[:, j])
        return np.cos(2 * np.pi * _frac(arg + self.phase))

    def integral(self, system):
        return 0.0 if any(self.freq) else math.cos(2 * math.pi * self.phase)

    def describe(self):
        return f"cos:k={'/'.join(map(str, self.freq))},phase={self.phase!r}"


@dataclass(frozen=True)
class Coord(Observable):
    """``Π_j ω_{offset_j}`` on a Bernoulli shift (``ω_0`` by default)."""

    offsets: tuple = (0,)

    def __call__(self, state):
        if not isinstance(state, BernoulliState):
            raise UsageError("coordinate observable evaluated on a non-Bernoulli state")
        out = np.ones(len(state))
        for off in self.offsets:
            shift = np.asarray(off if isinstance(off, tuple) else (off,), dtype=np.int64)
            out = out * rng.signs(state.seed, state.index + shift)
        return out

    def integral(self, system):
        # a product of independent fair signs has mean 1 only if every sign appears squared
        return 0.0 if self._unpaired() else 1.0

    def _unpaired(self) -> bool:
        counts = {}
        for off in self.offsets:
            counts[off] = counts.get(off, 0) + 1
        return any(v % 2 for v in counts.values())

    def describe(self):
        return "coord:j=" + "/".join(map(str, self.offsets))


@dataclass(frozen=True)
class Tensor(Observable):
    """``φ(x) ψ(y)`` on a product system."""

    left: Observable
    right: Observable

    def __call__(self, state):
        if not isinstance(state, PairState):
            raise UsageError("tensor observable needs a product-system state")
        return self.left(state.first) * self.right(state.second)

    def integral(self, system):
        if not isinstance(system, ProductSystem):
            raise UsageError("tensor observable needs a product system")
        return self.left.integral(system.first) * self.right.integral(system.second)

    def describe(self):
        return f"tensor:{self.left.describe()}*{self.right.describe()}"


@dataclass(frozen=True)
class SkewCos(Observable):
    """``cos(2π(k x + m y))`` on the skew product."""

    k: int = 0
    m: int = 1

    def __call__(self, state):
        if not isinstance(state, SkewState):
            raise UsageError("skew observable needs a skew-product state")
        return np.cos(2 * np.pi * _frac(_frac(self.k * state.x) + _frac(self.m * state.y)))

    def integral(self, system):
        return 1.0 if self.k == 0 and self.m == 0 else 0.0

    def describe(self):
        return f"skewcos:k={self.k},m={self.m}"


@dataclass(frozen=True)
class Linear(Observable):
    """``Σ coef_i f_i``; its bound is ``Σ |coef_i| bound_i``."""

    terms: tuple  # ((coef, Observable), ...)

    @property
    def bound(self):
        return sum(abs(c) * f.bound for c, f in self.terms)

    def __call__(self, state):
        out = np.zeros(len(state))
        for c, f in self.terms:
            out = out + c * f(state)
        return out

    def integral(self, system):
        return sum(c * f.integral(system) for c, f in self.terms)

    def describe(self):
        return " + ".join(f"{c!r}*({f.describe()})" for c, f in self.terms)


def _minus(f: Observable, g: Observable) -> Observable:
    if isinstance(g, Const) and g.value == 0:
        return f
    return Linear(((1.0, f), (-1.0, g)))


def kronecker_project(system: SystemModel, f: Observable) -> tuple[Observable, Observable]:
    """Closed-form split ``f = f_kr + f_perp`` with ``f_perp`` orthogonal to the Kronecker factor."""
    if isinstance(f, Linear):
        parts = [kronecker_project(system, g) for _, g in f.terms]
        kr = Linear(tuple((c, p[0]) for (c, _), p in zip(f.terms, parts)))
        perp = Linear(tuple((c, p[1]) for (c, _), p in zip(f.terms, parts)))
        return kr, perp
    if isinstance(f, Const):
        return f, Const(0.0)
    if isinstance(system, Rotation) and isinstance(f, TorusCos):
        return f, Const(0.0)
    if isinstance(system, BernoulliShift) and isinstance(f, Coord):
        mean = f.integral(system)
        return Const(mean), _minus(f, Const(mean))
    if isinstance(system, ProductSystem) and isinstance(f, Tensor) \
            and isinstance(system.first, Rotation) and isinstance(system.second, BernoulliShift):
        m = f.right.integral(system.second)
        if m == 0:
            return Const(0.0), f
        kr = Tensor(f.left, Const(m))
        return kr, Tensor(f.left, _minus(f.right, Const(m)))
    if isinstance(system, SkewProduct) and isinstance(f, SkewCos):
        return (Const(0.0), f) if f.m != 0 else (f, Const(0.0))
    raise NoAnalyticDecomposition(f"no analytic decomposition for {f.describe()} on {system.kind}")


# characters

@dataclass(frozen=True)
class CharacterId:
    """The character ``g -> exp(2πi θ·g)`` of ``Z^d``."""

    theta: tuple

    def __post_init__(self):
        th = tuple(float(t) for t in np.atleast_1d(self.theta))
        if any(not 0 <= t < 1 for t in th):
            raise UsageError("character frequencies must lie in [0, 1)")
        object.__setattr__(self, "theta", th)

    def phases(self, g: np.ndarray) -> np.ndarray:
        g = _coords(g, len(self.theta))
        acc = np.zeros(len(g))
        for i, t in enumerate(self.theta):
            acc = acc + frac_mul(g[:, i], t)
        return _frac(acc)


# averages

def _mean(values: np.ndarray) -> float:
    return math.fsum(values) / len(values)


def orbit_weight(system: SystemModel, f: Observable, x, window: FiniteRegion) -> WeightFn:
    """``g -> f(g x)`` on ``window``."""
    vals = f(system.orbit(x, window.coords))
    if np.max(np.abs(vals), initial=0.0) > 1.0 + 1e-12:
        raise UsageError("orbit weight exceeds 1 in absolute value")
    return WeightFn(window, np.clip(vals, -1.0, 1.0), "orbit")


def weighted_average(c: WeightFn, system: SystemModel, g_obs: Observable, y, F_N: FiniteRegion) -> float:
    """``E_{g in F_N} c(g) g_obs(g y)``."""
    if len(F_N) == 0:
        raise UsageError("average over an empty set")
    return _mean(c.evaluate(F_N.coords) * g_obs(system.orbit(y, F_N.coords)))


def character_average(c: WeightFn, chi: CharacterId, F_N: FiniteRegion) -> complex:
    """``E_{g in F_N} c(g) exp(2πi θ·g)``."""
    if len(F_N) == 0:
        raise UsageError("average over an empty set")
    cv = c.evaluate(F_N.coords)
    ph = 2 * np.pi * chi.phases(F_N.coords)
    return complex(_mean(cv * np.cos(ph)), _mean(cv * np.sin(ph)))


def geometric_ladder(n_min: int, n_max: int, factor: int = 2) -> list[int]:
    """``n_max, n_max/factor, ...`` down to ``n_min``, returned ascending."""
    out = []
    n = n_max
    while n >= n_min:
        out.append(int(n))
        n //= factor
    return sorted(set(out))


def ladder_averages(values: np.ndarray, ladder: Sequence[int]) -> list[float]:
    """Compensated means of ``values[:N]`` for each ``N`` in ``ladder``."""
    return [_mean(values[:n]) for n in ladder]


def orbit_products(c: WeightFn, system: SystemModel, g_obs: Observable, y, n_max: int) -> np.ndarray:
    """``c(n) g_obs(n y)`` for ``n = 0..n_max-1`` (Z-actions)."""
    g = np.arange(n_max, dtype=np.int64).reshape(-1, 1)
    return c.evaluate(g) * g_obs(system.orbit(y, g))


def genericity_gap(system: SystemModel, f: Observable, x, seq: FolnerSeq, window: tuple[int, int]) -> float:
    """``max_{N in window} |E_{g in F_N} f(g x) - ∫ f|``."""
    target = f.integral(system)
    n0, n1 = window
    bounds = [seq[n].interval_bounds() for n in range(n0, n1 + 1)]
    if all(b is not None for b in bounds):
        lo = min(b[0] for b in bounds)
        hi = max(b[1] for b in bounds)
        g = np.arange(lo, hi, dtype=np.int64).reshape(-1, 1)
        vals = f(system.orbit(x, g))
        prefix = np.concatenate([[0.0], np.cumsum(vals)])
        return max(abs((prefix[b - lo] - prefix[a - lo]) / (b - a) - target) for a, b in bounds)
    return max(abs(_mean(f(system.orbit(x, seq[n].coords))) - target) for n in range(n0, n1 + 1))
