import numpy as np
import pytest

from folnerlab.dynamics import BernoulliShift, Const, Coord, ProductSystem, Rotation, SkewCos, SkewProduct, Tensor, TorusCos
from folnerlab.groups import GroupModel, UsageError
from folnerlab.specs import (
    parse_observable,
    parse_range,
    parse_sequence,
    parse_system,
    parse_targets,
    parse_weight,
)

Z = GroupModel("Z")


def test_systems():
    R = parse_system("rotation:theta=0.25")
    assert isinstance(R, Rotation) and R.theta[0, 0] == 0.25
    assert parse_system("rotation:theta=0.1/0.2").dim == 2
    assert isinstance(parse_system("bernoulli"), BernoulliShift)
    assert parse_system("bernoulli:rank=2").rank == 2
    assert isinstance(parse_system("product:theta=0.3"), ProductSystem)
    assert isinstance(parse_system("skew:theta=0.3"), SkewProduct)
    with pytest.raises(UsageError):
        parse_system("horocycle")


def test_observables():
    assert parse_observable("cos") == TorusCos((1,), 0.0)
    assert parse_observable("cos:k=2,phase=0.25") == TorusCos((2,), 0.25)
    assert parse_observable("coord:j=0/3") == Coord((0, 3))
    assert parse_observable("const:0.5") == Const(0.5)
    assert parse_observable("tensor:cos*coord") == Tensor(TorusCos((1,)), Coord((0,)))
    assert parse_observable("skewcos:k=1,m=2") == SkewCos(1, 2)
    with pytest.raises(UsageError):
        parse_observable("sin")


def test_weights():
    w = parse_weight("orbit:rotation:theta=0.41421356,obs=cos,x=0")
    assert w.kind == "orbit" and isinstance(w.system, Rotation) and w.obs == TorusCos((1,))
    assert np.array_equal(w.point, [0.0])
    w = parse_weight("orbit:bernoulli:seed=7")
    assert w.kind == "orbit" and w.point == 7 and w.obs == Coord((0,))
    assert parse_weight("orbit:bernoulli").point is None
    assert parse_weight("zero").value == 0.0
    assert parse_weight("const:0.25").value == 0.25
    assert parse_weight("bernoulli:seed=3").point == 3
    assert parse_weight("file:w.csv").path == "w.csv"
    w = parse_weight("orbit:rotation:theta=0.3,obs=cos:k=2;phase=0.1")
    assert w.obs == TorusCos((2,), 0.1)
    with pytest.raises(UsageError):
        parse_weight("mystery")


def test_targets_and_sequences():
    t = parse_targets(Z, "random:density=0.3,window=1000,seed=11", (1, 6))
    assert sorted(t) == [1, 2, 3, 4, 5, 6]
    dens = np.mean([len(t[N]) / 1000 for N in t])
    assert 0.25 < dens < 0.35
    assert t == parse_targets(Z, "random:density=0.3,window=1000,seed=11", (1, 6))
    alt = parse_sequence(Z, "alt2:1..4")
    assert alt[2].interval_bounds() == (-4, 0)
    assert parse_range("1..100") == (1, 100)
    with pytest.raises(UsageError):
        parse_range("1-100")
    with pytest.raises(UsageError):
        parse_targets(Z, "grid:step=2", (1, 2))
