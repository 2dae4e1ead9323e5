import math
from fractions import Fraction

import numpy as np
import pytest

from misspec.errors import InvalidSpecError, TruncationTooSmallError, UnknownNameError
from misspec.experiments import ks_two_sample
from misspec.limit_laws import (
    ArgmaxLawSpec,
    gaussian_limit,
    ks_critical,
    quadratic_scaling_check,
    rate_exponent,
    sample_argmax,
    sample_argmax_detail,
)
from misspec.signals import ChangePoint, LinearDrift, TimeGrid


@pytest.fixture(scope="module")
def unit_quadratic():
    return sample_argmax(ArgmaxLawSpec.quadratic(1.0, 1.0), 0, 10_000)


def test_quadratic_law_symmetric(unit_quadratic):
    u = unit_quadratic
    assert ks_two_sample(u, -u) <= ks_critical(len(u), len(u))
    assert abs(np.median(u)) < 0.05


def test_quadratic_law_spread(unit_quadratic):
    assert np.std(unit_quadratic) == pytest.approx(0.83, rel=0.05)


def test_sampler_deterministic():
    spec = ArgmaxLawSpec.quadratic(1.0, 2.0)
    a = sample_argmax(spec, 5, 1500)
    assert np.array_equal(a, sample_argmax(spec, 5, 1500))
    # the first block does not depend on the total count
    assert np.array_equal(a[:1000], sample_argmax(spec, 5, 1000))


@pytest.mark.parametrize("delta,gamma", [(2.0, 1.0), (1.0, 4.0)])
def test_quadratic_scaling(delta, gamma):
    assert quadratic_scaling_check(delta, gamma, 1, 10_000) <= 1.5 * ks_critical(10_000, 10_000)


def test_linear_cp_scaling():
    a = sample_argmax(ArgmaxLawSpec.linear_cp(1.0), 2, 20_000)
    b = 4.0 * sample_argmax(ArgmaxLawSpec.linear_cp(2.0), 2, 20_000, domain=1)
    assert ks_two_sample(a, b) <= 0.02


def test_lattice_refinement():
    coarse = ArgmaxLawSpec.quadratic(1.0, 1.0)
    fine = ArgmaxLawSpec.quadratic(1.0, 1.0, step=coarse.step / 2)
    a = sample_argmax(coarse, 3, 5000)
    b = sample_argmax(fine, 3, 5000, domain=1)
    assert ks_two_sample(a, b) <= ks_critical(5000, 5000)


def test_default_truncations():
    assert ArgmaxLawSpec.quadratic(1.0, 1.0).truncation == pytest.approx(math.sqrt(8 * math.log(1e6)))
    assert ArgmaxLawSpec.linear_cp(2.0).truncation == pytest.approx(2 * math.log(1e6))
    s = ArgmaxLawSpec.power(1.0)
    assert s.truncation == pytest.approx(10.5)
    assert s.step == pytest.approx(s.truncation / 1000)


def test_truncation_too_small():
    spec = ArgmaxLawSpec.quadratic(1.0, 1.0, truncation=0.5)
    with pytest.raises(TruncationTooSmallError):
        sample_argmax(spec, 0, 1000)
    assert sample_argmax_detail(spec, 0, 1000).hit_rate > 0.001


def test_power_law_needs_kappa_above_half():
    with pytest.raises(InvalidSpecError):
        ArgmaxLawSpec.power(0.4)
    with pytest.raises(InvalidSpecError):
        ArgmaxLawSpec.quadratic(1.0, 1.0, step=1.0)
    with pytest.raises(UnknownNameError):
        ArgmaxLawSpec("cubic")


def test_power_law_spreads_with_kappa():
    # inside |u| < 1 the drift |u|^(1+kappa) weakens as kappa grows
    iqr = []
    for k in (0.6, 1.0, 1.5):
        u = sample_argmax(ArgmaxLawSpec.power(k), 4, 2000)
        q1, q3 = np.percentile(u, [25, 75])
        iqr.append(q3 - q1)
    assert iqr[0] < iqr[1] < iqr[2]


def test_rate_exponents():
    assert rate_exponent("regular") == 1
    assert rate_exponent("change-point") == 2
    assert rate_exponent("disc-vs-disc") == 2
    assert rate_exponent("disc-vs-smooth") == Fraction(2, 3)
    assert rate_exponent("remark1", 1.5) == Fraction(1, 2)
    assert rate_exponent("remark1", 1.0) == Fraction(2, 3)
    assert rate_exponent("cusp-vs-smooth", 0.25) == Fraction(4, 5)
    with pytest.raises(UnknownNameError):
        rate_exponent("chaotic")


def test_gaussian_limit_linear_model():
    g = gaussian_limit(LinearDrift(), ChangePoint.sgn(), 1.0, TimeGrid(4.0, 2 ** 12), 1.5)
    assert g.variance == pytest.approx(0.25)
    assert g.fisher == pytest.approx(4.0)
    assert g.sd == pytest.approx(0.5)


def test_ks_critical_value():
    assert ks_critical(100, 100) == pytest.approx(1.628 * math.sqrt(0.02))
