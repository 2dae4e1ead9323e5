import math

import numpy as np
import pytest

from misspec.observation import (
    cumulative_integral,
    ito_integral,
    make_rng,
    riemann_integral,
    sample_wiener,
    synthesize,
    wiener_increments,
    write_path_csv,
)
from misspec.signals import ChangePoint, LinearDrift, Sine, TimeGrid

SGN = ChangePoint.sgn()


def test_same_seed_same_path():
    g = TimeGrid(1.0, 256)
    a = sample_wiener(g, 7, (1, 2, 0))
    b = sample_wiener(g, 7, (1, 2, 0))
    assert np.array_equal(a.increments, b.increments)
    assert not np.array_equal(a.increments, sample_wiener(g, 7, (1, 3, 0)).increments)
    assert not np.array_equal(a.increments, sample_wiener(g, 8, (1, 2, 0)).increments)


def test_stream_regenerates_independently_of_order():
    g = TimeGrid(1.0, 64)
    late = wiener_increments(g, 3, (0, 5, 0))
    for r in range(5):
        wiener_increments(g, 3, (0, r, 0))
    assert np.array_equal(late, wiener_increments(g, 3, (0, 5, 0)))


def test_wiener_start_and_terminal_variance():
    g = TimeGrid(2.0, 16)
    inc = make_rng(11, 0).standard_normal((100_000, g.steps)) * math.sqrt(g.step)
    wt = inc.sum(axis=1)
    assert sample_wiener(g, 1).values[0] == 0.0
    assert wt.var() == pytest.approx(2.0, rel=0.03)


def test_streams_uncorrelated():
    g = TimeGrid(1.0, 8)
    a = np.array([sample_wiener(g, 5, (0, r, 0)).values[-1] for r in range(4000)])
    b = np.array([sample_wiener(g, 5, (1, r, 0)).values[-1] for r in range(4000)])
    assert abs(np.corrcoef(a, b)[0, 1]) < 4 / math.sqrt(4000)


def test_noiseless_paths():
    g = TimeGrid(1.0, 1000)
    w = sample_wiener(g, 0)
    x = synthesize(LinearDrift(), 0.5, 0.0, w)
    assert x.values[-1] == pytest.approx(0.0, abs=1e-12)
    x = synthesize(SGN, 0.3, 0.0, w)
    assert x.values[-1] == pytest.approx(1.0 - 0.6, abs=1e-12)
    # the jump sits between nodes and is still integrated exactly
    x = synthesize(SGN, 0.31234, 0.0, w)
    assert x.values[-1] == pytest.approx(1.0 - 2 * 0.31234, abs=1e-12)


def test_noise_variance():
    g = TimeGrid(1.0, 32)
    eps = 0.1
    ends = np.array([synthesize(Sine(1.0, 2.0), 0.2, eps, sample_wiener(g, 9, r)).values[-1]
                     for r in range(20_000)])
    drift = synthesize(Sine(1.0, 2.0), 0.2, 0.0, sample_wiener(g, 9, 0)).values[-1]
    assert np.var(ends - drift) == pytest.approx(eps ** 2, rel=0.05)


def test_noise_scales_exactly():
    g = TimeGrid(1.0, 128)
    w = sample_wiener(g, 4, (0, 1, 0))
    a = synthesize(SGN, 0.4, 0.1, w)
    b = synthesize(SGN, 0.4, 0.05, w)
    assert np.allclose(b.values - b.drift, 0.5 * (a.values - a.drift), rtol=0, atol=1e-15)
    assert np.array_equal(a.drift, b.drift)


def test_ito_constant_and_indicator():
    g = TimeGrid(1.0, 100)
    w = sample_wiener(g, 2)
    assert ito_integral(1.0, w) == pytest.approx(w.values[-1], abs=1e-13)
    ind = lambda t: (t < 0.5).astype(float)
    assert ito_integral(ind, w) == pytest.approx(w.values[50], abs=1e-13)


def test_ito_isometry_and_mean():
    g = TimeGrid(1.0, 64)
    rng = make_rng(1, 0)
    inc = rng.standard_normal((50_000, g.steps)) * math.sqrt(g.step)
    f = np.sin(3 * g.nodes[:-1]) + 0.5
    vals = inc @ f
    exact = riemann_integral(lambda t: (np.sin(3 * t) + 0.5) ** 2, g)
    assert np.mean(vals ** 2) == pytest.approx(exact, rel=0.05)
    assert abs(vals.mean()) < 4 * math.sqrt(exact / len(vals))


def test_riemann_examples():
    g = TimeGrid(3.0, 10)
    assert riemann_integral(lambda t: 2.5 + 0 * t, g) == pytest.approx(7.5)
    g1 = TimeGrid(1.0, 10)
    f = lambda t, side: SGN.value(0.37, t, side)
    assert riemann_integral(f, g1, (0.37,)) == pytest.approx(1 - 2 * 0.37, abs=1e-14)
    assert riemann_integral(lambda t: t * t, TimeGrid(1.0, 4096)) == pytest.approx(1 / 3, abs=1e-7)
    cum = cumulative_integral(lambda t: 1 + 0 * t, g1)
    assert np.allclose(cum, g1.nodes)


def test_path_csv(tmp_path):
    g = TimeGrid(1.0, 4)
    p = synthesize(SGN, 0.5, 0.1, sample_wiener(g, 0))
    fn = tmp_path / "p.csv"
    write_path_csv(p, fn)
    lines = fn.read_text().splitlines()
    assert lines[0] == "t,X_t"
    assert len(lines) == 6
    assert float(lines[-1].split(",")[1]) == p.values[-1]
