import cmath
import json
import math

import numpy as np
import pytest

from folnerlab import experiments as E
from folnerlab.dynamics import BernoulliShift, Const, Coord, Rotation, SkewCos, SkewProduct, TorusCos
from folnerlab.folner import interval_boundary_size, interval_family
from folnerlab.groups import FiniteRegion, GroupModel
from folnerlab.weights import good_set

THETA0 = E.THETA0
Z = GroupModel("Z")


def small(exp, **kw):
    base = {
        "orthogonality": {"N": 20_000, "N_min": 1000, "samples": 3, "perp_n_max": 512},
        "return-times": {"N": 20_000, "N_min": 1000, "samples": 3},
        "wiener-wintner": {"N": 40_000, "N_min": 1000},
        "covering-verify": {"trials": 300, "min_trials": 100},
        "orth-lemma-bound": {"K": 2, "delta": 0.25},
    }[exp]
    return {"experiment": exp, "seed": 5, **base, **kw}


# config handling

def test_config_validation(tmp_path):
    with pytest.raises(E.ConfigError, match="seed"):
        E.load_config({"experiment": "orthogonality"})
    with pytest.raises(E.ConfigError, match="unknown experiment"):
        E.load_config({"experiment": "nope", "seed": 1})
    with pytest.raises(E.ConfigError, match="unknown config keys"):
        E.load_config({"experiment": "orthogonality", "seed": 1, "colour": "red"})
    with pytest.raises(E.ConfigError, match="schema_version"):
        E.load_config({"experiment": "orthogonality", "seed": 1, "schema_version": 9})
    with pytest.raises(E.ConfigError, match="tolerance"):
        E.load_config({"experiment": "orthogonality", "seed": 1, "tolerances": {"vibes": 1}})
    with pytest.raises(E.ConfigError, match="not found"):
        E.load_config(tmp_path / "missing.json")
    cfg = E.load_config({"experiment": "orthogonality", "seed": 1, "tolerances": {"orthogonality": 0.05}}, seed=4)
    assert cfg["seed"] == 4 and cfg["tolerances"]["orthogonality"] == 0.05
    assert cfg["tolerances"]["cauchy"] == E.TOLERANCES["cauchy"]
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"experiment": "wiener-wintner", "seed": 2}))
    assert E.load_config(p)["N"] == E.DEFAULTS["wiener-wintner"]["N"]


def test_report_embeds_config_and_tolerances():
    r = E.run(small("return-times"))
    rep = r.report
    assert rep["config"]["seed"] == 5 and rep["config"]["N"] == 20_000
    assert rep["tolerances"] == E.TOLERANCES
    assert rep["tool_version"] and rep["defaults_version"] == E.DEFAULTS_VERSION
    assert all({"name", "value", "tolerance", "pass"} <= set(v) for v in rep["verdicts"])


# closed forms

def test_cross_limit_rotation_pairs():
    R1, R2 = Rotation([THETA0]), Rotation([0.31830988618379067])
    f = TorusCos((1,))
    assert E.cross_limit((R1, f), np.array([0.0]), (R2, f), np.array([0.3])) == 0.0
    lim = E.cross_limit((R1, f), np.array([0.1]), (R1, f), np.array([0.3]))
    assert lim == pytest.approx(0.5 * math.cos(2 * math.pi * (0.1 - 0.3)))
    lim = E.cross_limit((R1, f), np.array([0.1]), (Rotation([1 - THETA0]), f), np.array([0.3]))
    assert lim == pytest.approx(0.5 * math.cos(2 * math.pi * 0.4))
    assert E.cross_limit((BernoulliShift(), Coord((0,))), 1, (R1, f), np.array([0.2])) == 0.0
    assert E.cross_limit((BernoulliShift(), Const(1.0)), 1, (R1, TorusCos((0,), 0.0)), np.array([0.2])) == 1.0


def test_character_limits():
    R = Rotation([THETA0])
    f = TorusCos((1,))
    assert E.character_limit(R, f, np.array([0.0]), THETA0) == pytest.approx(0.5)
    assert E.character_limit(R, f, np.array([0.2]), 1 - THETA0) == pytest.approx(0.5 * cmath.exp(2j * math.pi * 0.2))
    assert E.character_limit(R, f, np.array([0.0]), 0.1) == 0
    assert E.character_limit(SkewProduct(THETA0), SkewCos(0, 1), (0.1, 0.2), 0.3) == 0
    assert E.character_limit(BernoulliShift(), Const(0.5), 1, 0.0) == 0.5


# runners

def test_orthogonality_bernoulli_passes():
    r = E.run(small("orthogonality"))
    assert r.status == "pass" and r.exit_code == 0
    assert r.report["hypotheses"][0]["pass"]
    assert len(r.tables["ladder"]) == 3 * len(r.report["metrics"]["ladder"])


def test_orthogonality_zero_weight_trivial():
    r = E.run(small("orthogonality", weight="zero"))
    assert r.status == "pass"
    assert all(s["average_N"] == 0 for s in r.report["metrics"]["samples"])


def test_orthogonality_cos_weight_flags_hypothesis():
    r = E.run(small("orthogonality", weight=f"orbit:rotation:theta={THETA0},x=0.1", samples=2))
    assert r.status == "hypothesis-not-met" and r.exit_code == 3
    for s in r.report["metrics"]["samples"]:
        y = s["y"][0]
        expected = 0.5 * math.cos(2 * math.pi * (0.1 - y))
        assert s["expected_limit"] == pytest.approx(expected)
        assert abs(s["average_N"] - expected) < 1e-3


def test_return_times_variants():
    assert E.run(small("return-times")).status == "pass"
    r = E.run(small("return-times", source_system=f"rotation:theta={THETA0}", source_obs="cos",
                    target_system="rotation:theta=0.31830988618379067"))
    assert r.status == "pass"
    assert all(s["expected_limit"] == 0.0 for s in r.report["metrics"]["samples"])
    r = E.run(small("return-times", source_obs="const:1"))
    assert r.status == "pass"
    ctl = r.report["metrics"]["control"]
    assert abs(ctl["average_2N"] - ctl["integral"]) < 0.01
    r = E.run(small("return-times", source_system="product:theta=0.2", source_obs="tensor:cos*coord"))
    assert r.status == "pass"


def test_wiener_wintner_variants():
    r = E.run(small("wiener-wintner"))
    assert r.status == "pass"
    chars = {c["theta"]: c for c in r.report["metrics"]["characters"]}
    assert abs(chars[THETA0]["modulus_N"] - 0.5) < 1e-3
    r = E.run(small("wiener-wintner", system="bernoulli", obs="coord", x=None))
    assert r.status == "pass"
    assert all(c["modulus_N"] <= 0.02 for c in r.report["metrics"]["characters"])
    r = E.run(small("wiener-wintner", system=f"skew:theta={THETA0}", obs="skewcos:k=0,m=1", x=[0.1, 0.2]))
    assert all(c["expected_limit"] == {"re": 0.0, "im": 0.0} for c in r.report["metrics"]["characters"])


def test_covering_statuses():
    r = E.run(small("covering-verify"))
    assert r.status == "pass"
    r = E.run(small("covering-verify", trials=50))
    assert r.status == "inconclusive" and r.exit_code == 0
    r = E.run(small("covering-verify", seq="alt2:1..6", C=1.2, trials=100))
    assert r.status == "hypothesis-not-met" and r.exit_code == 3
    assert r.report["warnings"] and r.report["metrics"]["estimates"]["E[Lambda | Lambda>=1]"] is not None


# lemma

def test_lemma_demo_constructs_and_checks_hypotheses():
    r = E.run(small("orth-lemma-bound"))
    m = r.report["metrics"]
    (L1, R1), (L2, R2) = m["intervals"]
    assert R1 == 2 * L1 and R2 == 2 * L2 and L2 > R1
    delta = m["delta"]
    # hypothesis (i), exact
    for N in range(L2, R2 + 1):
        assert interval_boundary_size(0, R1, 0, N) < delta * N
    # hypothesis (ii), re-derived through good_set on a few scales
    src = E.weight_source("bernoulli:seed=7", None)
    c = src.values(3 * R2)
    seq = interval_family(Z, R2)
    S = good_set(c, delta, L1, R1, seq, FiniteRegion.interval(Z, 0, R2)).members
    for N in (L2, (L2 + R2) // 2, R2):
        assert len(S.intersection(seq[N])) >= (1 - delta) * N
    # I hypothesis
    assert min(R2 - 1, m["M"]) < delta * m["M"]
    assert m["observed"] < m["bound"] and m["vacuous"]
    assert any("vacuous" in w for w in r.report["warnings"])


def test_lemma_zero_weight_observes_nothing():
    r = E.run(small("orth-lemma-bound", weight="zero", f_family=["bernoulli:seed=1", "self"]))
    assert r.report["metrics"]["observed"] == 0.0
    assert r.status == "pass"


def test_lemma_unconstructible_reports_required_size():
    r = E.run({"experiment": "orth-lemma-bound", "seed": 1, "K": 25})
    assert r.status == "hypotheses-unconstructible" and r.exit_code == 3
    con = r.report["metrics"]["construction"]
    assert con["error"] == "hypotheses unconstructible at this horizon"
    assert con["R_past_horizon"] > con["horizon"] and con["first_interval_past_horizon"] <= 25
    assert con["required_R_K_log10"] > 100
    assert r.report["metrics"]["vacuous"] is True


def test_lemma_defaults():
    K, delta = E.lemma_defaults(2.0, 0.2, None, None)
    assert K == math.floor(25 * 4 / 0.2**4) + 1
    assert delta == pytest.approx(0.2**4 / (100 * K))
    short = E.greedy_size_floor(K, delta, 64, stop=2**24)
    assert len(short) < 5 and short[-1][1] > 2**24 and short[-2][1] <= 2**24
    chain = E.greedy_size_floor(4, 0.5, 8)
    for (La, Ra), (Lb, _) in zip(chain, chain[1:]):
        assert interval_boundary_size(0, Ra, 0, Lb) < 0.5 * Lb
        assert interval_boundary_size(0, Ra, 0, Lb - 1) >= 0.5 * (Lb - 1) or Lb - 1 == Ra


# reproducibility

@pytest.mark.parametrize("exp", list(E.EXPERIMENTS))
def test_reports_byte_identical(exp, monkeypatch):
    a = E.run(small(exp)).to_json()
    monkeypatch.setenv("FOLNERLAB_THREADS", "3")
    b = E.run(small(exp)).to_json()
    assert a == b


def test_write_outputs(tmp_path):
    r = E.run(small("wiener-wintner"))
    paths = r.write(tmp_path / "out")
    names = sorted(p.name for p in paths)
    assert names == ["ladder.csv", "report.json"]
    header = (tmp_path / "out" / "ladder.csv").read_text().splitlines()[0]
    assert header == "theta,N,re,im,modulus"
    assert json.loads((tmp_path / "out" / "report.json").read_text())["status"] == "pass"


def test_clean_handles_numpy_and_nonfinite():
    out = E.clean({"a": np.float64(1.5), "b": np.int64(2), "c": (1, 2), "d": float("inf"), "e": 1 + 2j, "f": np.bool_(True)})
    assert out == {"a": 1.5, "b": 2, "c": [1, 2], "d": None, "e": {"re": 1.0, "im": 2.0}, "f": True}
