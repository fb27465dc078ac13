import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, optimize, stats

import istrate.tweedie as tw
from istrate.data import FeatureMatrix
from istrate.errors import DomainError, NumericError, UnidentifiablePowerError
from istrate.tweedie import (
    POWER_GRID,
    TweedieParams,
    deviance_pseudo_residual,
    estimate_power_index,
    log_density,
    sample,
    unit_deviance,
    zero_mass,
)

powers = st.floats(1.01, 1.99)
means = st.floats(1e-3, 1e3)


def compound_density(y, mu, p, phi, n_max=50):
    """Poisson mixture of gamma densities, summed directly over the count."""
    lam = mu ** (2 - p) / (phi * (2 - p))
    shape = (2 - p) / (p - 1)
    scale = phi * (p - 1) * mu ** (p - 1)
    n = np.arange(1, n_max + 1)
    return float(np.sum(stats.poisson.pmf(n, lam) * stats.gamma.pdf(y, n * shape, scale=scale)))


def test_zero_mass_examples():
    assert zero_mass(1.0, TweedieParams(1.5, 1.0)) == pytest.approx(np.exp(-2.0), rel=1e-15)
    assert zero_mass(1.0, TweedieParams(1.5, 1.0)) == pytest.approx(0.135335, abs=5e-7)
    # exp(-sqrt(2) / 0.25); the quoted 0.003492 is a rounded figure
    assert zero_mass(2.0, TweedieParams(1.5, 0.5)) == pytest.approx(np.exp(-4 * np.sqrt(2)),
                                                                    rel=1e-14)
    assert zero_mass(2.0, TweedieParams(1.5, 0.5)) == pytest.approx(0.003492, rel=1e-3)
    assert zero_mass(1e-12, TweedieParams(1.5, 1.0)) == pytest.approx(1.0, abs=1e-5)
    with pytest.raises(DomainError):
        zero_mass(0.0, TweedieParams(1.5, 1.0))
    with pytest.raises(DomainError):
        TweedieParams(2.0, 1.0)
    with pytest.raises(DomainError):
        TweedieParams(1.5, 0.0)


def test_zero_mass_monte_carlo():
    params = TweedieParams(1.5, 0.5)
    draws = sample(np.full(1_000_000, 2.0), params, np.random.default_rng(1))
    p0 = zero_mass(2.0, params)
    se = np.sqrt(p0 * (1 - p0) / draws.size)
    assert abs(np.mean(draws == 0) - p0) < 3 * se
    assert draws.mean() == pytest.approx(2.0, rel=0.01)


@given(powers, st.floats(0.01, 100.0), st.floats(1e-3, 100.0), st.floats(1.001, 10.0))
def test_zero_mass_monotone(p, phi, mu, factor):
    params = TweedieParams(p, phi)
    lo, hi = zero_mass(mu, params), zero_mass(mu * factor, params)
    assert hi <= lo
    assert zero_mass(mu, TweedieParams(p, phi * factor)) >= lo
    assert 0 <= lo <= 1


def test_log_density_at_zero():
    assert log_density(0.0, 1.0, TweedieParams(1.5, 1.0)) == pytest.approx(-2.0, rel=1e-14)
    with pytest.raises(DomainError):
        log_density(-1.0, 1.0, TweedieParams(1.5, 1.0))


@pytest.mark.parametrize("y,mu,p,phi", [(1.0, 1.0, 1.5, 1.0), (0.3, 2.0, 1.3, 0.7),
                                         (4.0, 1.5, 1.7, 2.0), (0.05, 0.5, 1.6, 1.0)])
def test_log_density_matches_compound_sum(y, mu, p, phi):
    expected = np.log(compound_density(y, mu, p, phi))
    assert log_density(y, mu, TweedieParams(p, phi)) == pytest.approx(expected, rel=1e-9)


def test_log_density_frozen_value():
    # compound-sum oracle at (y=1, mu=1, p=1.5, phi=1), frozen
    assert log_density(1.0, 1.0, TweedieParams(1.5, 1.0)) == pytest.approx(
        -1.0286152203419827, rel=1e-10)


def total_mass(mu, p, phi):
    """P(Y=0) plus the positive part integrated on a log-y scale."""
    params = TweedieParams(p, phi)
    f = lambda u: float(np.exp(log_density(np.exp(u), mu, params) + u))
    scale = phi * (p - 1) * mu ** (p - 1)
    top = np.log(mu + 60 * np.sqrt(phi * mu ** p) + 60 * scale)
    # near zero the integrand decays like exp(alpha * u); go down until e^-40
    alpha = (2 - p) / (p - 1)
    bottom = min(-60.0, -40.0 / alpha)
    edges = np.linspace(bottom, top, 61)
    positive = sum(integrate.quad(f, a, b, limit=200, epsabs=1e-12)[0]
                   for a, b in zip(edges[:-1], edges[1:]))
    return zero_mass(mu, params) + positive


def test_density_normalizes_at_reference_point():
    assert total_mass(1.0, 1.5, 1.0) == pytest.approx(1.0, abs=1e-4)


@given(powers, means, st.floats(1e-3, 1e3))
def test_unit_deviance_nonnegative(p, y, mu):
    d = unit_deviance(y, mu, p)
    assert d >= 0
    assert unit_deviance(y, y, p) == pytest.approx(0.0, abs=1e-9 * max(1.0, y ** (2 - p)))
    if abs(y - mu) > 1e-3 * max(y, mu):
        assert d > 0


def test_unit_deviance_examples():
    assert unit_deviance(0.0, 1.0, 1.5) == pytest.approx(4.0, rel=1e-15)
    assert unit_deviance(2.0, 1.0, 1.5) == pytest.approx(0.686292, abs=5e-7)
    # the minimiser over mu sits at y
    res = optimize.minimize_scalar(lambda m: unit_deviance(2.0, m, 1.5),
                                   bounds=(0.1, 10), method="bounded",
                                   options={"xatol": 1e-10})
    assert res.x == pytest.approx(2.0, rel=1e-6)
    assert res.fun == pytest.approx(0.0, abs=1e-10)
    with pytest.raises(DomainError):
        unit_deviance(1.0, 1.0, 2.5)
    with pytest.raises(DomainError):
        unit_deviance(-1.0, 1.0, 1.5)


def test_pseudo_residual_examples():
    assert deviance_pseudo_residual(np.exp(0.3), 0.3, 1.4) == pytest.approx(0.0, abs=1e-15)
    assert deviance_pseudo_residual(0.0, 0.0, 1.5) == -1.0
    y, eta, p, h = 3.0, 0.4, 1.6, 1e-5
    fd = (unit_deviance(y, np.exp(eta + h), p) - unit_deviance(y, np.exp(eta - h), p)) / (4 * h)
    assert -deviance_pseudo_residual(y, eta, p) == pytest.approx(fd, rel=1e-6)
    # overflow guard keeps the value finite
    assert np.isfinite(deviance_pseudo_residual(1.0, 500.0, 1.5))


@given(powers, st.floats(0, 50), st.floats(-3, 3))
def test_pseudo_residual_sign(p, y, eta):
    r = deviance_pseudo_residual(y, eta, p)
    gap = y - np.exp(eta)
    if abs(gap) > 1e-9:
        assert np.sign(r) == np.sign(gap)


def test_series_iteration_cap(monkeypatch):
    monkeypatch.setattr(tw, "_MAX_SERIES_ITER", 1)
    with pytest.raises(NumericError) as err:
        log_density(np.array([5e3]), 1.0, TweedieParams(1.2, 0.05))
    assert err.value.diagnostics["iterations"] == 1


def _power_data(p, n, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 2))
    mu = np.exp(0.2 + 0.4 * X[:, 0] - 0.3 * X[:, 1])
    y = sample(mu, TweedieParams(p, 1.2), rng)
    return FeatureMatrix.from_arrays(X, y)


def test_power_recovery_at_one_and_a_half():
    design = _power_data(1.5, 10_000, 5)
    profile = estimate_power_index(design.y, design)
    assert 1.40 <= profile.params.p <= 1.60
    assert len(profile.grid) == len(profile.loglik) == len(profile.phi) == 17
    assert profile.grid == POWER_GRID
    assert profile.params.phi == pytest.approx(1.2, rel=0.15)


def test_power_profile_csv(tmp_path):
    design = _power_data(1.5, 500, 2)
    profile = estimate_power_index(design.y, design, grid=(1.3, 1.5))
    profile.to_csv(tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "p,loglik,phi"
    assert [line.split(",")[0] for line in lines[1:]] == ["1.30", "1.50"]


@pytest.mark.parametrize("y", [np.zeros(50), np.ones(50)])
def test_power_unidentifiable(y):
    design = FeatureMatrix.from_arrays(np.zeros((50, 0)), y)
    with pytest.raises(UnidentifiablePowerError):
        estimate_power_index(y, design)
