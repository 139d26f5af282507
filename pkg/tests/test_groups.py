from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from folnerlab.groups import (
    FiniteRegion,
    GroupModel,
    UsageError,
    inverse_set,
    invert,
    multiply,
    parse_model,
    product_set,
    region_from_spec,
    set_measure,
    translate,
)

import oracles

MODELS = [parse_model(s) for s in ("Z", "Z^2", "heis", "latticeR:0.5")]
Z = GroupModel("Z")
H = parse_model("heis")


def test_parse_model_variants():
    assert parse_model("Z") == Z
    assert parse_model("Z^1") == Z
    assert parse_model("Z^3").dim == 3
    assert parse_model("latticeR").eps == Fraction(1, 100)
    assert parse_model("latticeR:0.5").haar_weight == Fraction(1, 2)
    assert not H.abelian
    with pytest.raises(UsageError):
        parse_model("SL2")


def test_multiply_examples():
    assert multiply(Z.element(2), Z.element(3)) == Z.element(5)
    assert (H.element(1, 0, 0) * H.element(0, 1, 0)).coords == (1, 1, 1)
    assert (H.element(0, 1, 0) * H.element(1, 0, 0)).coords == (1, 1, 0)
    R = parse_model("latticeR:0.5")
    assert (R.from_real("1.0") * R.from_real("1.5")).value == 2.5


def test_invert_examples():
    assert invert(Z.element(5)) == Z.element(-5)
    assert invert(H.element(1, 1, 1)).coords == (-1, -1, 0)
    assert H.element(1, 1, 1) * H.element(-1, -1, 0) == H.identity
    for m in MODELS:
        assert invert(m.identity) == m.identity


def test_mixed_models_rejected():
    with pytest.raises(UsageError):
        multiply(Z.element(1), H.element(1, 0, 0))


def test_lattice_rejects_off_lattice_point():
    with pytest.raises(UsageError):
        parse_model("latticeR:0.5").from_real("0.3")


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.name)
def test_associativity_1000_triples(model):
    gen = np.random.default_rng(11)
    a, b, c = (gen.integers(-50, 50, size=(1000, model.dim)) for _ in range(3))
    left = model.mul_arrays(model.mul_arrays(a, b), c)
    right = model.mul_arrays(a, model.mul_arrays(b, c))
    assert np.array_equal(left, right)
    # and against the tuple oracle
    kind = "heis" if model.kind == "heis" else "ab"
    for i in range(0, 1000, 97):
        ab = oracles.mul(kind, tuple(a[i]), tuple(b[i]))
        assert tuple(model.mul_arrays(a[i:i + 1], b[i:i + 1])[0]) == ab


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.name)
def test_identity_and_inverses(model):
    gen = np.random.default_rng(5)
    a = gen.integers(-1000, 1000, size=(500, model.dim))
    e = np.zeros_like(a)
    assert np.array_equal(model.mul_arrays(a, e), a)
    assert np.array_equal(model.mul_arrays(e, a), a)
    assert not model.mul_arrays(a, model.inv_arrays(a)).any()
    assert not model.mul_arrays(model.inv_arrays(a), a).any()


heis_coord = st.integers(-10**6, 10**6)


@settings(max_examples=200, deadline=None)
@given(st.tuples(heis_coord, heis_coord, heis_coord), st.tuples(heis_coord, heis_coord, heis_coord),
       st.tuples(heis_coord, heis_coord, heis_coord))
def test_heisenberg_elements_property(a, b, c):
    x, y, z = H.element(*a), H.element(*b), H.element(*c)
    assert (x * y) * z == x * (y * z)
    assert invert(invert(x)) == x
    assert (x * y).coords == oracles.mul("heis", a, b)


def test_region_basics():
    R = FiniteRegion.from_elements(Z, [3, 1, 1, 2])
    assert len(R) == 3 and R.coords[:, 0].tolist() == [1, 2, 3]
    assert set_measure(FiniteRegion.interval(Z, 0, 10)) == 10
    L = parse_model("latticeR:0.5")
    assert FiniteRegion.real_interval(L, "0", "1.0").measure == Fraction(3, 2)
    assert set_measure(FiniteRegion.empty(H)) == 0
    assert Z.element(2) in R and Z.element(7) not in R
    assert FiniteRegion.from_json(R.to_json()) == R


def test_product_set_examples():
    A = FiniteRegion.from_elements(Z, [0, 1])
    B = FiniteRegion.from_elements(Z, [0, 1, 2])
    assert product_set(A, B) == FiniteRegion.interval(Z, 0, 4)
    assert inverse_set(FiniteRegion.from_elements(Z, [1, 2])) == FiniteRegion.from_elements(Z, [-1, -2])
    for i in range(1, 21):
        for j in range(1, 21, 3):
            P = product_set(inverse_set(FiniteRegion.interval(Z, 0, i)), FiniteRegion.interval(Z, 0, j))
            assert P == FiniteRegion.interval(Z, -(i - 1), j)
            assert len(P) == i + j - 1


def test_dense_product_path_matches_pairwise():
    gen = np.random.default_rng(3)
    Z2 = parse_model("Z^2")
    A = FiniteRegion(Z2, gen.integers(-40, 40, size=(300, 2)))
    B = FiniteRegion(Z2, gen.integers(-40, 40, size=(300, 2)))
    fast = product_set(A, B)  # dense path (90000 pairs)
    slow = oracles.product("ab", [tuple(r) for r in A.coords], [tuple(r) for r in B.coords])
    assert {tuple(r) for r in fast.coords} == slow


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.name)
def test_translation_invariance_and_involution(model):
    gen = np.random.default_rng(8)
    for _ in range(20):
        A = FiniteRegion(model, gen.integers(-20, 20, size=(30, model.dim)))
        g = model.element(*gen.integers(-100, 100, size=model.dim).tolist())
        assert translate(g, A, "left").measure == A.measure
        assert translate(g, A, "right").measure == A.measure
        assert inverse_set(inverse_set(A)) == A


def test_set_operations():
    A = FiniteRegion.interval(Z, 0, 10)
    B = FiniteRegion.interval(Z, 5, 15)
    assert len(A.union(B)) == 15
    assert A.intersection(B) == FiniteRegion.interval(Z, 5, 10)
    assert A.difference(B) == FiniteRegion.interval(Z, 0, 5)
    assert len(A.symmetric_difference(B)) == 10
    assert FiniteRegion.interval(Z, 2, 4).issubset(A)
    assert A.interval_bounds() == (0, 10)
    assert FiniteRegion.from_elements(Z, [0, 2]).interval_bounds() is None


def test_region_from_spec():
    assert region_from_spec(Z, "0,1") == FiniteRegion.interval(Z, 0, 2)
    assert region_from_spec(Z, "-1..0") == FiniteRegion.interval(Z, -1, 1)
    L = parse_model("latticeR:0.01")
    assert len(region_from_spec(L, "-1..0")) == 101
    K = region_from_spec(H, "(0,0,0);(1,0,0)")
    assert len(K) == 2
