import math

import numpy as np
import pytest

from folnerlab.covering import (
    PoissonParams,
    TemperednessWarning,
    counting_function,
    covering_moments,
    covering_window,
    random_covering,
    random_targets,
    sample_poisson,
    single_scale_oracle,
)
from folnerlab.folner import FolnerSeq, pow2_family
from folnerlab.groups import FiniteRegion, GroupModel, UsageError, parse_model
from folnerlab.specs import alternating_family

import oracles

Z = GroupModel("Z")


def test_poisson_zero_intensity():
    assert len(sample_poisson(FiniteRegion.interval(Z, 0, 100), 0.0, 1)) == 0
    with pytest.raises(UsageError):
        sample_poisson(FiniteRegion.interval(Z, 0, 100), -1.0, 1)


def test_poisson_moments_10k_trials():
    region = FiniteRegion.interval(Z, 0, 1000)
    gen = np.random.default_rng(123)
    counts = np.array([len(sample_poisson(region, 0.01, gen)) for _ in range(10_000)], dtype=float)
    T = len(counts)
    se_mean = math.sqrt(10 / T)
    assert abs(counts.mean() - 10) < 3 * se_mean
    # Var of the sample variance for Poisson(λ): (λ + 2λ²)/T approximately (fourth central moment λ + 3λ²)
    se_var = math.sqrt((10 + 2 * 100) / T)
    assert abs(counts.var(ddof=1) - 10) < 3 * se_var


def test_poisson_disjoint_regions_uncorrelated():
    AB = FiniteRegion.interval(Z, 0, 700)
    gen = np.random.default_rng(7)
    a, b = [], []
    for _ in range(10_000):
        pts = sample_poisson(AB, 0.01, gen)[:, 0]
        a.append((pts < 300).sum())
        b.append((pts >= 300).sum())
    a, b = np.array(a, float), np.array(b, float)
    cov = np.mean((a - a.mean()) * (b - b.mean()))
    se = math.sqrt(3 * 4 / len(a))  # sd(a) sd(b) / sqrt(T)
    assert abs(cov) < 3 * se


def test_poisson_points_in_region_and_seeded():
    region = FiniteRegion.from_elements(Z, [2, 5, 11])
    pts = sample_poisson(region, 3.0, 4)
    assert region.isin(pts).all()
    assert np.array_equal(pts, sample_poisson(region, 3.0, 4))


def test_single_scale_is_plain_restriction():
    seq = pow2_family(Z, 1, 3)
    A = FiniteRegion.interval(Z, 0, 50)
    s = random_covering(seq, (3, 3), [A], PoissonParams(2.0, seed=5))
    assert np.array_equal(s.centers[3], s.raw[3])


@pytest.mark.parametrize("seed", range(12))
def test_two_step_hand_oracle(seed):
    seq = FolnerSeq(Z, [FiniteRegion.interval(Z, 0, 2), FiniteRegion.interval(Z, 0, 4)])
    gen = np.random.default_rng(seed)
    A1 = FiniteRegion(Z, np.flatnonzero(gen.random(20) < 0.6).reshape(-1, 1))
    A2 = FiniteRegion(Z, np.flatnonzero(gen.random(20) < 0.6).reshape(-1, 1))
    params = PoissonParams(2.0, seed=seed, delta=1.5)  # dense enough that removals happen
    s = random_covering(seq, (1, 2), [A1, A2], params, trial=seed)
    exp1, exp2 = oracles.two_step_covering(
        range(2), range(4), A1.coords[:, 0].tolist(), A2.coords[:, 0].tolist(),
        s.raw[1][:, 0].tolist(), s.raw[2][:, 0].tolist(),
    )
    assert sorted(s.centers[2][:, 0].tolist()) == exp2
    assert sorted(s.centers[1][:, 0].tolist()) == exp1
    s.check_invariants({1: A1, 2: A2})


@pytest.mark.parametrize("spec", ["Z", "heis"])
def test_invariants_every_realization(spec):
    model = parse_model(spec)
    if model.kind == "heis":
        seq = FolnerSeq(model, [FiniteRegion.box(model, [0, 0, 0], [n, n, n * n]) for n in (1, 2, 3)])
        gen = np.random.default_rng(0)
        targets = {N: FiniteRegion(model, gen.integers(0, 6, size=(40, 3))) for N in (1, 2, 3)}
        scales = (1, 3)
    else:
        seq = pow2_family(Z, 1, 5)
        targets = random_targets(Z, 0.3, 200, 3, (1, 5))
        scales = (1, 5)
    for t in range(15):
        s = random_covering(seq, scales, targets, PoissonParams(2.0, seed=9, delta=1.0), trial=t,
                            check_tempered=False)
        s.check_invariants(targets)


def test_covering_deterministic():
    seq = pow2_family(Z, 1, 4)
    targets = random_targets(Z, 0.3, 100, 1, (1, 4))
    a = random_covering(seq, (1, 4), targets, PoissonParams(2.0, seed=3), trial=2)
    b = random_covering(seq, (1, 4), targets, PoissonParams(2.0, seed=3), trial=2)
    for N in range(1, 5):
        assert np.array_equal(a.centers[N], b.centers[N])


def test_counting_function_examples():
    seq = pow2_family(Z, 1, 2)
    empty = FiniteRegion.empty(Z)
    s = random_covering(seq, (1, 2), [empty, empty], PoissonParams(2.0, seed=1))
    assert counting_function(s, Z.element(0)) == 0
    # hand-made samples
    s.centers[2] = np.array([[10]])
    assert [counting_function(s, Z.element(g)) for g in range(8, 16)] == [0, 0, 1, 1, 1, 1, 0, 0]
    s.centers[2] = np.array([[10], [10]])
    assert counting_function(s, Z.element(11)) == 2
    win = FiniteRegion.interval(Z, 0, 20)
    assert s.counting_array(win)[11] == 2
    assert s.total_mass() == 8


def test_temperedness_warning():
    seq = alternating_family(Z, 1, 6)
    targets = random_targets(Z, 0.3, 50, 1, (1, 6))
    with pytest.warns(TemperednessWarning):
        random_covering(seq, (1, 6), targets, PoissonParams(1.2, seed=1))


def test_single_scale_moments_match_oracle():
    seq = pow2_family(Z, 1, 4)
    A = random_targets(Z, 0.3, 200, 5, (4, 4))
    params = PoissonParams(2.0, seed=11)
    rep = covering_moments(seq, (4, 4), A, params, 3000)
    orc = single_scale_oracle(seq[4], A[4], params.intensity(seq[4]))
    assert abs(rep.cond_mean - orc["cond_mean"]) < 3 * rep.cond_mean_se
    assert abs(rep.cond_second - orc["cond_second"]) < 3 * rep.cond_second_se
    assert abs(rep.mass_mean - orc["mass"]) < 3 * rep.mass_se
    assert orc["cond_mean"] <= 1.5
    assert rep.passed


def test_single_scale_oracle_by_hand():
    # F = {0,1}, A = {0}: λ = α on {0, 1}
    F = FiniteRegion.interval(Z, 0, 2)
    A = FiniteRegion.from_elements(Z, [0])
    o = single_scale_oracle(F, A, 0.5)
    lam = 0.5
    assert o["cond_mean"] == pytest.approx(lam / (1 - math.exp(-lam)))
    assert o["cond_second"] == pytest.approx((lam + lam * lam) / (1 - math.exp(-lam)))
    assert o["mass"] == pytest.approx(1.0)


def test_zero_intensity_no_mass():
    seq = pow2_family(Z, 1, 3)
    targets = random_targets(Z, 0.3, 100, 1, (1, 3))
    rep = covering_moments(seq, (1, 3), targets, PoissonParams(2.0, seed=1, delta=0.0), 20)
    assert rep.no_mass and rep.mass_mean == 0
    assert rep.to_json()["no_mass"] is True


def test_covering_window_contains_pieces():
    seq = pow2_family(Z, 1, 3)
    targets = random_targets(Z, 0.5, 30, 2, (1, 3))
    win = covering_window(seq, (1, 3), targets)
    s = random_covering(seq, (1, 3), targets, PoissonParams(2.0, seed=4, delta=2.0))
    s.counting_array(win)  # raises if a piece leaves the window


def test_single_scale_standard_errors_calibrated():
    # across independent seeds, (estimate - oracle) / SE should look standard normal
    seq = pow2_family(Z, 1, 5)
    A = random_targets(Z, 0.3, 300, 11, (5, 5))
    zs = []
    for seed in range(40):
        params = PoissonParams(2.0, seed=1000 + seed)
        rep = covering_moments(seq, (5, 5), A, params, 300)
        orc = single_scale_oracle(seq[5], A[5], params.intensity(seq[5]))
        zs.append([(rep.cond_mean - orc["cond_mean"]) / rep.cond_mean_se,
                   (rep.mass_mean - orc["mass"]) / rep.mass_se])
    zs = np.array(zs)
    assert (np.abs(zs.mean(axis=0)) < 0.6).all()
    assert ((zs.std(axis=0) > 0.6) & (zs.std(axis=0) < 1.5)).all()
