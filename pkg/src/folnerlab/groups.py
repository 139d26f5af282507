"""Discrete models of lcsc amenable groups with exact finite set algebra.

Every model stores elements as integer coordinate tuples.  ``LatticeR``
stores the integer index ``k`` of the lattice point ``k * eps``, so set
membership never touches floating point.  All models are unimodular and
the Haar measure of a finite region is ``len(region) * haar_weight``.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy import signal

SCALE_CAP = 10_000_000

# pairwise products are materialized in chunks of at most this many rows
_PAIR_CHUNK = 2_000_000
# abelian products switch to dense convolution above this many pairs
_DENSE_PAIRS = 20_000
_DENSE_CELLS = 50_000_000


class UsageError(ValueError):
    """Invalid arguments: mismatched models, empty inputs where forbidden."""


class ScaleCapError(RuntimeError):
    """A materialized set would exceed the scale cap."""


@dataclass(frozen=True)
class GroupModel:
    kind: str  # "Z", "Zd", "heis", "latticeR"
    dim: int = 1
    eps: Fraction | None = None

    def __post_init__(self):
        if self.kind not in ("Z", "Zd", "heis", "latticeR"):
            raise UsageError(f"unknown group kind {self.kind!r}")
        if self.kind == "heis" and self.dim != 3:
            raise UsageError("Heisenberg model has dimension 3")
        if self.kind in ("Z", "latticeR") and self.dim != 1:
            raise UsageError(f"{self.kind} has dimension 1")
        if self.kind == "latticeR" and (self.eps is None or self.eps <= 0):
            raise UsageError("LatticeR needs a positive spacing")

    @property
    def name(self) -> str:
        if self.kind == "Zd":
            return f"Z^{self.dim}"
        if self.kind == "latticeR":
            return f"latticeR:{float(self.eps)!r}"
        return self.kind

    @property
    def abelian(self) -> bool:
        return self.kind != "heis"

    @property
    def haar_weight(self) -> Fraction:
        return self.eps if self.kind == "latticeR" else Fraction(1)

    @property
    def identity(self) -> GroupElement:
        return GroupElement(self, (0,) * self.dim)

    def element(self, *coords: int) -> GroupElement:
        if len(coords) == 1 and isinstance(coords[0], (tuple, list)):
            coords = tuple(coords[0])
        if len(coords) != self.dim:
            raise UsageError(f"{self.name} elements have {self.dim} coordinates")
        return GroupElement(self, tuple(int(c) for c in coords))

    def from_real(self, x: float | str | Fraction) -> GroupElement:
        """Lattice point at real position ``x`` (LatticeR only)."""
        if self.kind != "latticeR":
            raise UsageError("from_real is only defined for LatticeR")
        q = Fraction(str(x)) / self.eps if not isinstance(x, Fraction) else x / self.eps
        if q.denominator != 1:
            raise UsageError(f"{x} is not on the lattice {float(self.eps)}Z")
        return GroupElement(self, (int(q),))

    def mul_arrays(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Row-wise group product of two ``(n, dim)`` coordinate arrays."""
        if self.kind != "heis":
            return a + b
        out = a + b
        out[:, 2] += a[:, 0] * b[:, 1]
        return out

    def inv_arrays(self, a: np.ndarray) -> np.ndarray:
        if self.kind != "heis":
            return -a
        out = -a
        out[:, 2] += a[:, 0] * a[:, 1]
        return out


def parse_model(spec: str) -> GroupModel:
    """Parse ``"Z"``, ``"Z^d"``, ``"heis"`` or ``"latticeR:eps"``."""
    s = spec.strip()
    if s == "Z":
        return GroupModel("Z")
    m = re.fullmatch(r"Z\^(\d+)", s)
    if m:
        d = int(m.group(1))
        if d < 1:
            raise UsageError("Z^d needs d >= 1")
        return GroupModel("Z") if d == 1 else GroupModel("Zd", d)
    if s in ("heis", "heisenberg", "H3"):
        return GroupModel("heis", 3)
    m = re.fullmatch(r"latticeR(?::(.+))?", s)
    if m:
        eps = Fraction(m.group(1) or "0.01")
        return GroupModel("latticeR", 1, eps)
    raise UsageError(f"unknown group model {spec!r}")


@dataclass(frozen=True)
class GroupElement:
    model: GroupModel
    coords: tuple[int, ...]

    def __mul__(self, other: GroupElement) -> GroupElement:
        return multiply(self, other)

    @property
    def value(self) -> float | tuple[int, ...]:
        """Real position for LatticeR, coordinates otherwise."""
        if self.model.kind == "latticeR":
            return float(self.coords[0] * self.model.eps)
        return self.coords

    def __repr__(self):
        return f"{self.model.name}{self.coords}"


def _check_same(a: GroupModel, b: GroupModel):
    if a != b:
        raise UsageError(f"model mismatch: {a.name} vs {b.name}")


def multiply(a: GroupElement, b: GroupElement) -> GroupElement:
    _check_same(a.model, b.model)
    out = a.model.mul_arrays(np.array([a.coords], dtype=np.int64), np.array([b.coords], dtype=np.int64))
    return GroupElement(a.model, tuple(int(v) for v in out[0]))


def invert(a: GroupElement) -> GroupElement:
    out = a.model.inv_arrays(np.array([a.coords], dtype=np.int64))
    return GroupElement(a.model, tuple(int(v) for v in out[0]))


def pack_keys(*arrays: np.ndarray) -> list[np.ndarray]:
    """Encode rows of several ``(n, d)`` arrays as comparable int64 keys.

    The radix is shared by all inputs, so keys from different arrays can be
    compared, intersected and searched against each other.
    """
    nonempty = [a for a in arrays if len(a)]
    if not nonempty:
        return [np.zeros(0, dtype=np.int64) for _ in arrays]
    d = nonempty[0].shape[1]
    if d == 1:
        return [a[:, 0].astype(np.int64, copy=False) if len(a) else np.zeros(0, dtype=np.int64) for a in arrays]
    lo = np.min([a.min(axis=0) for a in nonempty], axis=0)
    hi = np.max([a.max(axis=0) for a in nonempty], axis=0)
    spans = [int(s) for s in hi - lo + 1]
    total = 1
    for s in spans:
        total *= s
    if total >= 2**62:
        raise ScaleCapError("coordinate range too wide to index exactly")
    keys = []
    for a in arrays:
        k = np.zeros(len(a), dtype=np.int64)
        for j in range(d):
            k = k * spans[j] + (a[:, j] - lo[j])
        keys.append(k)
    return keys


class FiniteRegion:
    """A finite set of group elements; the computational stand-in for a compact set.

    ``coords`` is a read-only ``(n, dim)`` int64 array of distinct rows in
    lexicographic order.
    """

    __slots__ = ("model", "coords")

    def __init__(self, model: GroupModel, coords, *, _normalized: bool = False):
        arr = np.asarray(coords, dtype=np.int64)
        if arr.size == 0:
            arr = np.zeros((0, model.dim), dtype=np.int64)
        elif arr.ndim == 1:
            arr = arr.reshape(-1, 1) if model.dim == 1 else arr.reshape(1, -1)
        if arr.shape[1] != model.dim:
            raise UsageError(f"{model.name} regions need {model.dim} columns, got {arr.shape[1]}")
        if not _normalized and len(arr):
            if model.dim == 1:
                arr = np.unique(arr[:, 0]).reshape(-1, 1)
            else:
                arr = np.unique(arr, axis=0)
        if len(arr) > SCALE_CAP:
            raise ScaleCapError(f"scale cap: region of {len(arr)} elements exceeds {SCALE_CAP}")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        self.model = model
        self.coords = arr

    # constructors
    @classmethod
    def empty(cls, model: GroupModel) -> FiniteRegion:
        return cls(model, np.zeros((0, model.dim), dtype=np.int64), _normalized=True)

    @classmethod
    def from_elements(cls, model: GroupModel, elements: Iterable) -> FiniteRegion:
        rows = []
        for e in elements:
            if isinstance(e, GroupElement):
                _check_same(model, e.model)
                rows.append(e.coords)
            elif isinstance(e, (tuple, list)):
                rows.append(tuple(e))
            else:
                rows.append((e,))
        return cls(model, np.array(rows, dtype=np.int64).reshape(-1, model.dim))

    @classmethod
    def interval(cls, model: GroupModel, lo: int, hi: int) -> FiniteRegion:
        """Integer indices ``lo <= k < hi`` of a one-dimensional model."""
        if model.dim != 1:
            raise UsageError("interval needs a one-dimensional model")
        return cls(model, np.arange(lo, max(lo, hi), dtype=np.int64).reshape(-1, 1), _normalized=True)

    @classmethod
    def real_interval(cls, model: GroupModel, a, b) -> FiniteRegion:
        """Lattice points of LatticeR in the closed interval ``[a, b]``."""
        lo = model.from_real(a).coords[0]
        hi = model.from_real(b).coords[0]
        return cls.interval(model, lo, hi + 1)

    @classmethod
    def box(cls, model: GroupModel, lows: Sequence[int], highs: Sequence[int]) -> FiniteRegion:
        """Product of half-open coordinate ranges ``[lows[i], highs[i])``."""
        if len(lows) != model.dim or len(highs) != model.dim:
            raise UsageError("box bounds must match the model dimension")
        axes = [np.arange(l, h, dtype=np.int64) for l, h in zip(lows, highs)]
        if any(len(ax) == 0 for ax in axes):
            return cls.empty(model)
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, model.dim)
        return cls(model, grid, _normalized=True)

    # basic protocol
    def __len__(self) -> int:
        return len(self.coords)

    @property
    def measure(self) -> Fraction:
        return len(self.coords) * self.model.haar_weight

    def __iter__(self) -> Iterator[GroupElement]:
        for row in self.coords:
            yield GroupElement(self.model, tuple(int(v) for v in row))

    def __contains__(self, g: GroupElement) -> bool:
        _check_same(self.model, g.model)
        return bool(self.isin(np.array([g.coords], dtype=np.int64))[0])

    def __eq__(self, other) -> bool:
        if not isinstance(other, FiniteRegion):
            return NotImplemented
        return self.model == other.model and np.array_equal(self.coords, other.coords)

    def __repr__(self):
        if len(self) <= 6:
            body = ", ".join(str(tuple(int(v) for v in r)) for r in self.coords)
        else:
            body = f"{len(self)} elements"
        return f"FiniteRegion({self.model.name}: {body})"

    def keys(self) -> np.ndarray:
        return pack_keys(self.coords)[0]

    def isin(self, coords: np.ndarray) -> np.ndarray:
        """Boolean membership mask for the rows of ``coords``."""
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, self.model.dim)
        if len(self) == 0 or len(coords) == 0:
            return np.zeros(len(coords), dtype=bool)
        ka, kb = pack_keys(coords, self.coords)
        # kb is sorted because rows are lexicographically sorted
        idx = np.searchsorted(kb, ka)
        idx[idx == len(kb)] = 0
        return kb[idx] == ka

    def index_of(self, coords: np.ndarray) -> np.ndarray:
        """Row positions of ``coords`` inside this region, -1 where absent."""
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, self.model.dim)
        if len(self) == 0:
            return np.full(len(coords), -1, dtype=np.int64)
        ka, kb = pack_keys(coords, self.coords)
        idx = np.searchsorted(kb, ka)
        idx[idx == len(kb)] = 0
        return np.where(kb[idx] == ka, idx, -1)

    # set algebra
    def union(self, other: FiniteRegion) -> FiniteRegion:
        _check_same(self.model, other.model)
        return FiniteRegion(self.model, np.concatenate([self.coords, other.coords]))

    def intersection(self, other: FiniteRegion) -> FiniteRegion:
        _check_same(self.model, other.model)
        return FiniteRegion(self.model, self.coords[other.isin(self.coords)], _normalized=True)

    def difference(self, other: FiniteRegion) -> FiniteRegion:
        _check_same(self.model, other.model)
        return FiniteRegion(self.model, self.coords[~other.isin(self.coords)], _normalized=True)

    def symmetric_difference(self, other: FiniteRegion) -> FiniteRegion:
        return self.difference(other).union(other.difference(self))

    def issubset(self, other: FiniteRegion) -> bool:
        _check_same(self.model, other.model)
        return bool(other.isin(self.coords).all())

    def interval_bounds(self) -> tuple[int, int] | None:
        """``(lo, hi)`` when this is a nonempty contiguous 1-d range ``[lo, hi)``."""
        if self.model.dim != 1 or len(self) == 0:
            return None
        lo, last = int(self.coords[0, 0]), int(self.coords[-1, 0])
        return (lo, last + 1) if last - lo + 1 == len(self) else None

    # serialization
    def to_json(self) -> dict:
        return {"model": self.model.name, "elements": [list(map(int, r)) for r in self.coords]}

    @classmethod
    def from_json(cls, data: dict | str) -> FiniteRegion:
        if isinstance(data, str):
            data = json.loads(data)
        model = parse_model(data["model"])
        return cls(model, np.array(data["elements"], dtype=np.int64).reshape(-1, model.dim))


def set_measure(region: FiniteRegion) -> Fraction:
    return region.measure


def inverse_set(region: FiniteRegion) -> FiniteRegion:
    return FiniteRegion(region.model, region.model.inv_arrays(region.coords))


def _bounding_box(arr: np.ndarray):
    lo = arr.min(axis=0)
    hi = arr.max(axis=0)
    return lo, hi - lo + 1


def indicator(region: FiniteRegion, lo=None, shape=None) -> tuple[np.ndarray, np.ndarray]:
    """Dense 0/1 array of ``region`` over its bounding box (or a given box)."""
    if lo is None:
        lo, shape = _bounding_box(region.coords)
    arr = np.zeros(tuple(int(s) for s in shape), dtype=np.float64)
    idx = tuple((region.coords - lo).T)
    arr[idx] = 1.0
    return arr, lo


def dense_convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Integer-exact full convolution of two nonnegative count arrays."""
    if a.size * b.size <= 4_000_000:
        return signal.convolve(a, b, mode="full", method="direct")
    # counts are integers bounded by min(a.sum(), b.sum()); rounding FFT output is exact
    return np.rint(signal.fftconvolve(a, b, mode="full"))


def _pairwise_product(model: GroupModel, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    parts = []
    rows = max(1, _PAIR_CHUNK // max(1, len(B)))
    for start in range(0, len(A), rows):
        a = A[start:start + rows]
        prod = model.mul_arrays(np.repeat(a, len(B), axis=0), np.tile(B, (len(a), 1)))
        parts.append(np.unique(prod, axis=0) if model.dim > 1 else np.unique(prod[:, 0]).reshape(-1, 1))
        if sum(len(p) for p in parts) > 4 * SCALE_CAP:
            raise ScaleCapError("scale cap exceeded while forming a product set")
    return np.concatenate(parts) if parts else np.zeros((0, model.dim), dtype=np.int64)


def product_set(A: FiniteRegion, B: FiniteRegion) -> FiniteRegion:
    """``{a * b : a in A, b in B}``."""
    _check_same(A.model, B.model)
    model = A.model
    if len(A) == 0 or len(B) == 0:
        return FiniteRegion.empty(model)
    if model.abelian and len(A) * len(B) > _DENSE_PAIRS:
        lo_a, sh_a = _bounding_box(A.coords)
        lo_b, sh_b = _bounding_box(B.coords)
        cells = int(np.prod(sh_a + sh_b - 1))
        if cells <= _DENSE_CELLS:
            ia, _ = indicator(A, lo_a, sh_a)
            ib, _ = indicator(B, lo_b, sh_b)
            conv = dense_convolve(ia, ib)
            pts = np.argwhere(conv > 0.5).astype(np.int64) + (lo_a + lo_b)
            return FiniteRegion(model, pts, _normalized=True)
    return FiniteRegion(model, _pairwise_product(model, A.coords, B.coords))


def translate(g: GroupElement, region: FiniteRegion, side: str = "left") -> FiniteRegion:
    single = FiniteRegion(region.model, np.array([g.coords], dtype=np.int64), _normalized=True)
    return product_set(single, region) if side == "left" else product_set(region, single)


def region_from_spec(model: GroupModel, spec: str) -> FiniteRegion:
    """Parse ``"0,1"``, ``"-1..0"`` or ``"(0,0,0);(1,0,0)"`` into a region.

    For LatticeR, ``"a..b"`` and listed values are real positions.
    """
    s = spec.strip()
    if model.dim == 1:
        m = re.fullmatch(r"(-?[\d.]+)\.\.(-?[\d.]+)", s)
        if m:
            if model.kind == "latticeR":
                return FiniteRegion.real_interval(model, m.group(1), m.group(2))
            return FiniteRegion.interval(model, int(m.group(1)), int(m.group(2)) + 1)
        vals = [v for v in s.split(",") if v.strip()]
        if model.kind == "latticeR":
            return FiniteRegion.from_elements(model, [model.from_real(v.strip()) for v in vals])
        return FiniteRegion.from_elements(model, [int(v) for v in vals])
    rows = []
    for tok in s.split(";"):
        tok = tok.strip().strip("()")
        if tok:
            rows.append(tuple(int(v) for v in tok.split(",")))
    return FiniteRegion.from_elements(model, rows)
