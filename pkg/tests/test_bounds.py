import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from predlab.bounds import (
    NoiseKind,
    indicator_report,
    mae_lower_bound,
    mse_lower_bound,
    noise_entropy,
    noise_mae,
    noise_param_for_mse,
    noise_variance,
    r2_indicator,
)
from predlab.synth import sample_noise, noise_log_pdf

KINDS = list(NoiseKind)


def test_gaussian_entropy_against_quadrature():
    f = lambda v: -stats.norm.pdf(v) * stats.norm.logpdf(v)  # noqa: E731
    want = integrate.quad(f, -40, 40, epsabs=1e-13)[0]
    assert noise_entropy("gaussian", 1.0) == pytest.approx(want, abs=1e-10)
    assert want == pytest.approx(1.4189385332046727, abs=1e-10)


def test_entropy_examples():
    assert noise_entropy("uniform", 1.0) == 0.0
    assert noise_entropy("laplacian", 15.8114) == pytest.approx(4.45388, abs=1e-5)
    with pytest.raises(ValueError):
        noise_entropy("gaussian", 0.0)


@pytest.mark.parametrize("kind", KINDS)
def test_entropy_matches_monte_carlo(kind):
    param = noise_param_for_mse(kind, 500.0)
    e = sample_noise(kind, param, 10**6, np.random.default_rng(7))
    terms = -noise_log_pdf(kind, param, e)
    se = terms.std(ddof=1) / math.sqrt(terms.size)
    # uniform: -log p is constant on the support, so only rounding remains
    assert abs(terms.mean() - noise_entropy(kind, param)) < max(3 * se, 1e-12)


def test_param_examples():
    assert noise_param_for_mse("gaussian", 500) == pytest.approx(22.36068, abs=1e-5)
    assert noise_param_for_mse("uniform", 500) == pytest.approx(77.45967, abs=1e-5)
    assert noise_param_for_mse("laplacian", 2) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        noise_param_for_mse("uniform", -1)
    e = sample_noise("uniform", 77.45967, 10**6, np.random.default_rng(0))
    assert e.var() == pytest.approx(500, rel=0.01)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("m", [1, 10, 250, 500, 1000])
def test_mse_round_trip(kind, m):
    p = noise_param_for_mse(kind, m)
    assert noise_variance(kind, p) == pytest.approx(m, rel=1e-9)
    assert mse_lower_bound(noise_entropy(kind, p), kind) == pytest.approx(m, rel=1e-9)


@pytest.mark.parametrize("kind", KINDS)
def test_mae_bound_is_tight_at_the_family(kind):
    p = noise_param_for_mse(kind, 500.0)
    assert mae_lower_bound(noise_entropy(kind, p), kind) == pytest.approx(noise_mae(kind, p), rel=1e-12)
    e = sample_noise(kind, p, 10**6, np.random.default_rng(2))
    a = np.abs(e)
    assert abs(a.mean() - noise_mae(kind, p)) < 3 * a.std(ddof=1) / math.sqrt(a.size)


def test_bound_examples():
    assert mse_lower_bound(4.52624, "gaussian") == pytest.approx(500.0, abs=0.1)
    assert mse_lower_bound(0.0, "uniform") == pytest.approx(1 / 12, abs=1e-15)
    assert mse_lower_bound(math.log(2 * math.e), "laplacian") == pytest.approx(2.0, abs=1e-12)
    assert mae_lower_bound(4.52624, "gaussian") == pytest.approx(17.841, abs=1e-3)
    assert mae_lower_bound(0.0, "uniform") == 0.25
    assert mae_lower_bound(1 + math.log(2), "laplacian") == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        mse_lower_bound(math.inf, "gaussian")


def test_gaussian_bound_is_smallest():
    for h in (-1.0, 0.0, 3.0):
        assert mse_lower_bound(h, "gaussian") < mse_lower_bound(h, "laplacian") < mse_lower_bound(h, "uniform")


def test_r2_examples():
    v = 7.3
    assert r2_indicator(0.5 * math.log(12 * v), v) == pytest.approx(0.0, abs=1e-12)
    # 1 - e^{2h}/12000 at h = 4.52624, frozen from a 30-digit evaluation
    assert r2_indicator(4.52624, 1000.0, "paper") == pytest.approx(0.288359156958430, abs=1e-12)
    assert r2_indicator(4.52624, 1000.0, "gaussian") == pytest.approx(0.5, abs=1e-4)
    with pytest.raises(ValueError):
        r2_indicator(1.0, 0.0)
    with pytest.raises(ValueError):
        r2_indicator(1.0, 1.0, "other")


@given(h1=st.floats(-5, 5), dh=st.floats(1e-3, 2), v=st.floats(0.1, 1e4))
def test_r2_monotone(h1, dh, v):
    assert r2_indicator(h1 + dh, v) < r2_indicator(h1, v)
    assert r2_indicator(h1, v) < r2_indicator(h1, v * 1.5)
    assert r2_indicator(h1, v) <= 1


class _Rep:
    def __init__(self, cp, dp, lmc):
        self.h_knifecp, self.h_knifedp, self.h_lmcp = cp, dp, lmc


def test_indicator_report_ordering():
    equal = indicator_report(_Rep(1.0, 1.0, 1.0), 10.0)
    assert equal.r2_knifecp == equal.r2_knifedp == equal.r2_lmcp and equal.ordering_ok
    rep = indicator_report(_Rep(1.0, 1.5, 0.5), 10.0)
    assert rep.r2_knifedp < rep.r2_knifecp < rep.r2_lmcp and rep.ordering_ok
    assert not indicator_report(_Rep(1.5, 1.0, 0.5), 10.0).ordering_ok
    assert rep.mse_bound_gaussian == pytest.approx(mse_lower_bound(1.0, "gaussian"))
    assert rep.mae_bound_laplacian == pytest.approx(mae_lower_bound(1.0, "laplacian"))
    assert set(rep.to_dict()) == {"r2_knifecp", "r2_knifedp", "r2_lmcp", "mse_bound_gaussian",
                                  "mae_bound_laplacian", "ordering_ok", "mode"}
