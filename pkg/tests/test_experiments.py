import math

import numpy as np
import pytest
from scipy import stats

from misspec.errors import ConfigError, DegenerateRegressionError, NotApplicableError, UnknownNameError
from misspec.experiments import (
    PRESET_NAMES,
    Scenario,
    ks_one_sample,
    ks_two_sample,
    minorant_table,
    preset,
    presets,
    rate_regression,
    run_scenario,
)
from misspec.limit_laws import ks_critical
from misspec.observation import make_rng
from misspec.signals import ChangePoint, Cusp, LinearDrift, Sine


def test_ks_identical_and_disjoint():
    a = np.arange(10.0)
    assert ks_two_sample(a, a) == 0.0
    assert ks_two_sample(a, a + 100) == 1.0


def test_ks_matches_scipy():
    rng = make_rng(0, 0)
    a, b = rng.normal(size=700), rng.normal(0.1, 1.2, size=500)
    assert ks_two_sample(a, b) == pytest.approx(stats.ks_2samp(a, b).statistic, abs=1e-15)
    assert ks_one_sample(a, stats.norm.cdf) == pytest.approx(stats.kstest(a, "norm").statistic, abs=1e-15)


def test_ks_invariant_under_monotone_maps():
    rng = make_rng(1, 0)
    a, b = rng.normal(size=300), rng.normal(size=400)
    assert ks_two_sample(np.exp(a), np.exp(b)) == ks_two_sample(a, b)


def test_ks_false_alarm_rate():
    hits = 0
    for i in range(100):
        rng = make_rng(2, i)
        a, b = rng.normal(size=500), rng.normal(size=500)
        hits += ks_two_sample(a, b) <= ks_critical(500, 500, coeff=1.36)
    assert hits >= 90


def test_rate_regression_exact():
    eps = np.array([0.2, 0.1, 0.05, 0.025])
    fit = rate_regression(eps, 3.0 * eps ** (2 / 3))
    assert fit.slope == pytest.approx(2 / 3, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-12)


def test_rate_regression_noisy():
    eps = np.geomspace(0.2, 0.01, 6)
    noise = np.exp(make_rng(3, 0).normal(0, 0.05, size=6))
    assert 0.9 <= rate_regression(eps, eps * noise).slope <= 1.1


def test_rate_regression_degenerate():
    with pytest.raises(DegenerateRegressionError):
        rate_regression([0.1, 0.05], [1.0, 0.5])
    with pytest.raises(DegenerateRegressionError):
        rate_regression([0.1, 0.05, 0.02], [1.0, 0.0, 0.5])


def test_presets_are_consistent():
    ps = presets()
    assert set(PRESET_NAMES) == set(ps)
    assert ps["example1"].regime == "disc-vs-smooth"
    assert isinstance(ps["example1"].assumed, ChangePoint)
    assert isinstance(ps["example2"].assumed, LinearDrift)
    assert ps["example2"].regime == "regular"
    assert isinstance(ps["smooth-vs-disc-general"].assumed, Sine)
    assert isinstance(ps["cusp-kl-scan"].assumed, Cusp)
    t = ps["disc-vs-disc"].truth
    delta = ps["disc-vs-disc"].assumed.jump(0.5)
    assert float(t.q(0.3)) == pytest.approx(0.2 * delta)
    assert float(t.r(0.3)) == pytest.approx(-0.2 * delta)
    assert ps["remark1-kappa"].kappa == 1.5


def test_unknown_preset():
    with pytest.raises(UnknownNameError) as info:
        preset("nope")
    assert "example1" in str(info.value)


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_scenario_round_trip(name):
    s = preset(name)
    assert Scenario.from_dict(s.to_dict()) == s


def test_scenario_rejects_bad_fields():
    d = preset("example2").to_dict()
    with pytest.raises(ConfigError):
        Scenario.from_dict({**d, "colour": "red"})
    d.pop("truth")
    with pytest.raises(ConfigError):
        Scenario.from_dict(d)


def test_grid_rule():
    s1, s2 = preset("example1"), preset("example2")
    assert s1.grid_for(0.01).steps == 500_000
    assert s1.grid_for(0.2).steps == 2 ** 14
    assert s2.grid_for(0.01).steps == 2 ** 14
    assert s1.with_overrides(steps=1000).grid_for(0.01).steps == 1000


def small(name, **kw):
    base = dict(N=24, steps=2048)
    base.update(kw)
    return preset(name).with_overrides(**base)


def test_run_is_deterministic_and_thread_independent():
    s = small("example1", ladder=(0.2, 0.1, 0.05))
    a = run_scenario(s, threads=1)
    b = run_scenario(s, threads=3)
    assert a.to_dict() == b.to_dict()
    assert [r.row() for r in a.records] == [r.row() for r in b.records]
    assert "low-N: targets not evaluated" in a.notes


def test_low_n_targets_not_evaluated():
    rep = run_scenario(small("example2", ladder=(0.1, 0.05, 0.025)))
    assert rep.passed
    assert all(not t["evaluated"] and t["passed"] is None for t in rep.targets.values())
    assert "slope" in rep.slopes["mle"]


def test_pmle_errors_are_centered_at_kl_minimizer():
    # example2: theta0 = 1 but the estimator concentrates at 1.5
    rep = run_scenario(small("example2", ladder=(0.05, 0.02, 0.01), N=40))
    m = np.array([r.theta_mle for r in rep.records if r.eps == 0.01])
    assert abs(np.median(m) - 1.5) < 0.02
    assert rep.profile["theta_hat"] == pytest.approx(1.5, abs=1e-8)


def test_closed_form_target_gates():
    rep = run_scenario(small("example2", ladder=(0.1, 0.05, 0.025), N=100))
    cf = rep.targets["closed_form"]
    assert cf["evaluated"] and cf["passed"]


def test_cusp_refused():
    with pytest.raises(NotApplicableError, match="cusp: limit law out of scope"):
        run_scenario(preset("cusp-kl-scan"))


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_minorant_holds_pointwise(name):
    prof, slack = minorant_table(preset(name))
    assert prof.minorant_kappa > 0
    assert np.all(slack >= 0)
