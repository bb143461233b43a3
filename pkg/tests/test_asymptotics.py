import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from decayloc.asymptotics import (
    ResonanceWarning,
    decomposition_trace,
    estimate_beta,
    fourth_moment_constant,
    fourth_moment_curve,
    free_phase_average,
    normalizer,
    normalizer_curve,
    oscillatory_sum_ratio,
    phase_averaged_fourth_moment,
    theoretical_beta,
)
from decayloc.model import ModelParams, derive_seed, energy_point, sample_disorder
from decayloc.prufer import prufer_trajectory


def test_theoretical_beta_examples():
    assert theoretical_beta(energy_point(0.0), 1.0) == pytest.approx(0.125, rel=1e-15)
    assert theoretical_beta(energy_point(math.sqrt(3)), 1.0) == pytest.approx(0.5, rel=1e-12)
    assert theoretical_beta(energy_point(0.7), 0.0) == 0.0


@given(E=st.floats(-1.98, 1.98), lam=st.floats(-5, 5))
def test_beta_forms_agree(E, lam):
    ep = energy_point(E)
    assert theoretical_beta(ep, lam) == pytest.approx(lam**2 / (8 * ep.sin_k**2), rel=1e-10, abs=1e-300)


def test_normalizer_oracles():
    assert normalizer(0.5, 1) == 1.0
    # frozen from mpmath: harmonic(10**6) and zeta(1/2) - zeta(1/2, 101)
    assert normalizer(0.5, 10**6) == pytest.approx(14.3927267228657, abs=1e-9)
    assert normalizer(0.25, 100) == pytest.approx(18.5896038247842, abs=1e-9)
    assert normalizer(0.7, 1000) == pytest.approx(float(mpmath.zeta(1.4) - mpmath.zeta(1.4, 1001)), rel=1e-12)
    with pytest.raises(ValueError):
        normalizer(0.5, 0)
    curve = normalizer_curve(0.3, 50)
    assert curve[0] == 1.0 and np.all(np.diff(curve) > 0)


def test_estimate_beta_validation_and_zero_coupling():
    ep = energy_point(0.5)
    with pytest.raises(ValueError):
        estimate_beta(ModelParams(0.3, 1.0), ep, 999, 5, 1)
    with pytest.raises(ValueError):
        estimate_beta(ModelParams(0.7, 1.0), ep, 1000, 5, 1)
    est = estimate_beta(ModelParams(0.3, 0.0), ep, 10**4, 5, 1)
    assert est.beta_hat == 0.0 and est.stderr == 0.0
    assert est.normalizer > 0


def test_estimate_beta_matches_per_seed_chain():
    params = ModelParams(0.3, 1.0)
    ep = energy_point(0.5)
    est = estimate_beta(params, ep, 2000, 3, 77)
    from decayloc.model import potential
    from decayloc.prufer import prufer_chain

    r = sample_disorder(params.disorder, derive_seed(77, 1), 2001)
    final, _, _ = prufer_chain(potential(r, params.envelope, 1.0), ep, 0.0, 2000)
    assert est.samples[1] == final.log_radius / normalizer(0.3, 2000)


def test_estimate_beta_deterministic_and_thread_invariant():
    params = ModelParams(0.3, 1.0)
    ep = energy_point(0.5)
    a = estimate_beta(params, ep, 5000, 12, 42, threads=1)
    b = estimate_beta(params, ep, 5000, 12, 42, threads=4)
    assert np.array_equal(a.samples, b.samples)
    assert a.beta_hat == b.beta_hat and a.stderr == b.stderr


@pytest.mark.parametrize("alpha,E", [(0.25, -1.0), (0.25, 0.9), (0.3, 1.3)])
def test_estimate_beta_converges(alpha, E):
    ep = energy_point(E)
    est = estimate_beta(ModelParams(alpha, 1.0), ep, 10**5, 60, 2024)
    beta = theoretical_beta(ep, 1.0)
    assert abs(est.beta_hat - beta) <= max(0.1 * beta, 3 * est.stderr)


def _combined(a, b):
    return 3 * math.hypot(a.stderr, b.stderr)


def test_beta_independent_of_initial_angle():
    params = ModelParams(0.3, 1.0)
    ep = energy_point(0.5)
    ref = estimate_beta(params, ep, 2 * 10**4, 80, 5)
    for th in (math.pi / 2, 2.0):
        other = estimate_beta(params, ep, 2 * 10**4, 80, 6, theta0=th)
        assert abs(other.beta_hat - ref.beta_hat) <= _combined(ref, other)


def test_beta_symmetric_in_energy():
    params = ModelParams(0.3, 1.0)
    plus = estimate_beta(params, energy_point(0.8), 2 * 10**4, 80, 8)
    minus = estimate_beta(params, energy_point(-0.8), 2 * 10**4, 80, 9)
    assert abs(plus.beta_hat - minus.beta_hat) <= _combined(plus, minus)


def test_fourth_moment_constant_expression():
    ep = energy_point(0.5)
    b = math.sqrt(3) / ep.sin_k
    assert fourth_moment_constant(ep, 1.0, math.sqrt(3)) == pytest.approx(3 * b**2 + 2 * b**3 + b**4)
    assert fourth_moment_constant(ep, 0.0, math.sqrt(3)) == 0.0


@pytest.mark.parametrize("u", [0.0, 0.1, 0.5, 1.3])
def test_phase_average_of_step_factor(u):
    t = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
    for sign in (1, -1):
        avg = np.mean((1 + sign * u * np.sin(2 * t) + u**2 * np.cos(t) ** 2) ** 2)
        assert avg == pytest.approx(1 + 1.5 * u**2 + 0.375 * u**4, rel=1e-12)


def test_fourth_moment_curve_properties():
    ep = energy_point(0.5)
    with pytest.raises(ValueError):
        fourth_moment_curve(ModelParams(0.5, 1.0), ep, 1000, 5, 1)
    flat = fourth_moment_curve(ModelParams(0.7, 0.0), ep, 1000, 3, 1)
    assert np.all(flat.mean == 1.0)
    curve = fourth_moment_curve(ModelParams(0.7, 1.0), ep, 10**4, 100, 3)
    assert curve.within_bound
    assert np.all(np.diff(curve.bound) >= 0)
    assert curve.mean.max() <= curve.bound_limit
    assert curve.bound[-1] <= curve.bound_limit
    pa = phase_averaged_fourth_moment(ModelParams(0.7, 1.0), ep, curve.steps)
    assert np.array_equal(pa, curve.phase_averaged)
    assert np.all(pa <= curve.bound)


@pytest.mark.parametrize("E,alpha", [(0.5, 0.5), (-1.2, 0.3), (1.0, 0.7)])
def test_decomposition_identity(E, alpha):
    params = ModelParams(alpha, 1.0)
    ep = energy_point(E)
    n = 10**5
    r = sample_disorder(params.disorder, 13, n + 1)
    tr = decomposition_trace(r, ep, params, n)
    assert abs(tr.total() - tr.two_log_radius) <= 1e-6 * n
    assert abs(tr.remainder) <= tr.remainder_bound
    # drift is deterministic: lam^2 S_n / (4 sin^2 k) since a_j^2 j^(2 alpha) = 1
    assert tr.drift == pytest.approx(params.lam**2 * tr.normalizer / (4 * ep.sin_k**2), rel=1e-10)


def test_martingale_groups_are_small_on_average():
    params = ModelParams(0.5, 1.0)
    ep = energy_point(0.5)
    n = 10**6
    groups = []
    for i in range(20):
        r = sample_disorder(params.disorder, derive_seed(99, i), n + 1)
        tr = decomposition_trace(r, ep, params, n)
        groups.append((tr.martingale_linear, tr.martingale_square, tr.martingale_oscillating))
    mean = np.abs(np.mean(groups, axis=0)) / normalizer(0.5, n)
    assert np.all(mean <= 0.1)


def test_oscillatory_ratio_resonant_flag():
    params = ModelParams(0.5, 1.0)
    ep = energy_point(2 * math.cos(math.pi / 4))
    assert ep.resonant
    r = sample_disorder(params.disorder, 1, 2001)
    with pytest.warns(ResonanceWarning):
        oscillatory_sum_ratio(r, ep, params, 2000)
    ok = energy_point(0.5)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        oscillatory_sum_ratio(r, ok, params, 2000)


def test_free_phase_average_matches_free_chain():
    ep = energy_point(0.5)
    n = 5000
    _, tb, _ = prufer_trajectory(np.zeros(n + 1), ep, 0.7, n)
    tb = tb[:n]
    w = np.arange(1, n + 1, dtype=np.float64) ** -1.0
    direct = np.sum(w * (0.5 * np.cos(2 * tb) + 0.25 * np.cos(4 * tb))) / np.sum(w)
    assert free_phase_average(ep, 0.5, n, 0.7) == pytest.approx(direct, abs=1e-10)
    assert abs(free_phase_average(ep, 0.5, 10**6)) < 0.05
    assert abs(free_phase_average(ep, 0.3, 10**6)) < 0.01
