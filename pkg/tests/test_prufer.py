import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from decayloc.model import DisorderSpec, ModelParams, energy_point, potential, sample_disorder
from decayloc.prufer import (
    PruferState,
    TransferMatrix,
    TransferProduct,
    accumulate,
    accumulate_potential,
    direct_trajectory,
    initial_solution,
    matrix_log_norms,
    norm_upper_from_angles,
    prufer_chain,
    prufer_init,
    prufer_step,
    prufer_trajectory,
    reconstruct_solution,
    single_transfer,
    spectral_norm,
    transfer_norm_bounds,
)


def _pot(alpha=0.3, lam=1.0, seed=1, n=1000):
    params = ModelParams(alpha, lam)
    r = sample_disorder(params.disorder, seed, n)
    return potential(r, params.envelope, lam)


def test_single_transfer_examples():
    assert single_transfer(energy_point(0.0), 0.0).as_array().tolist() == [[0.0, -1.0], [1.0, 0.0]]
    assert single_transfer(energy_point(1.0), 0.25).as_array().tolist() == [[0.75, -1.0], [1.0, 0.0]]


@given(E=st.floats(-1.99, 1.99), V=st.floats(-50, 50))
def test_single_transfer_unimodular(E, V):
    assert abs(single_transfer(energy_point(E), V).det - 1.0) <= 1e-12


def test_spectral_norm_matches_svd():
    rng = np.random.default_rng(0)
    for _ in range(200):
        m = rng.normal(size=(2, 2)) * rng.uniform(0.1, 100)
        assert spectral_norm(m) == pytest.approx(np.linalg.svd(m, compute_uv=False)[0], rel=1e-12)


def test_identity_accumulation_is_trivial():
    prod = TransferProduct.identity()
    eye = TransferMatrix(1.0, 0.0, 0.0, 1.0)
    for _ in range(100):
        prod = accumulate(prod, eye)
    assert prod.log_scale == 0.0
    assert np.array_equal(prod.matrix, np.eye(2))
    assert prod.steps == 100


def test_product_matches_extended_precision():
    ep = energy_point(0.5)
    pot = _pot(alpha=0.3, lam=1.0, seed=5, n=1001)
    prod = TransferProduct.identity()
    for n in range(1, 1001):
        prod = accumulate(prod, single_transfer(ep, pot[n]))
    with mpmath.workdps(60):
        ref = mpmath.eye(2)
        for n in range(1, 1001):
            t = mpmath.matrix([[mpmath.mpf(ep.E) - mpmath.mpf(float(pot[n])), -1], [1, 0]])
            ref = t * ref
        scale = mpmath.exp(prod.log_scale)
        for i in range(2):
            for j in range(2):
                got = scale * mpmath.mpf(float(prod.matrix[i, j]))
                assert abs(got - ref[i, j]) <= 1e-8 * mpmath.mnorm(ref, 'f')
    compiled = accumulate_potential(TransferProduct.identity(), pot, ep, 1, 1001)
    assert np.allclose(compiled.full(), prod.full(), rtol=1e-10)


def test_determinant_after_million_steps():
    # alpha = 1/2 keeps log_scale moderate so that det is representable
    ep = energy_point(0.5)
    pot = _pot(alpha=0.5, lam=1.0, seed=2, n=10**6 + 1)
    prod = accumulate_potential(TransferProduct.identity(), pot, ep, 1, 10**6 + 1)
    assert prod.steps == 10**6
    assert abs(prod.det - 1.0) <= 1e-6


@settings(max_examples=40, deadline=None)
@given(vs=st.lists(st.floats(-3, 3), min_size=1, max_size=200), E=st.floats(-1.9, 1.9))
def test_renormalized_norm_window(vs, E):
    ep = energy_point(E)
    prod = TransferProduct.identity()
    for v in vs:
        prod = accumulate(prod, single_transfer(ep, v))
        assert 1.0 - 1e-12 <= spectral_norm(prod.matrix) <= 2.0 + 1e-12
    assert abs(prod.det - 1.0) <= 1e-8 * max(1.0, math.exp(2 * prod.log_scale))


def test_prufer_init_examples():
    ep = energy_point(0.5)
    s = prufer_init(0.0, ep)
    assert s.log_radius == 0.0 and s.n == 1
    for th in (0.3, 2.0, -1.0, 5.5):
        x1, x0 = initial_solution(th, ep)
        # Y_1 = (cos th, sin th) is a unit vector in the free basis
        st_ = prufer_init(th, ep)
        assert st_.log_radius == 0.0
        assert math.cos(st_.theta(ep.k)) == pytest.approx(math.cos(th), abs=1e-14)
        assert math.sin(st_.theta(ep.k)) == pytest.approx(math.sin(th), abs=1e-14)
    assert prufer_init(0.3, ep).theta_bar != prufer_init(0.4, ep).theta_bar


def test_free_step_is_rotation():
    ep = energy_point(0.7)
    s = PruferState(0.25, 1.1, 4)
    t = prufer_step(s, 0.0, ep)
    assert t.log_radius == 0.25
    assert t.theta_bar == pytest.approx(1.1 + ep.k, abs=1e-15)
    assert t.n == 5


@settings(max_examples=200, deadline=None)
@given(
    E=st.floats(-1.9, 1.9),
    V=st.floats(-2.0, 2.0),
    tb=st.floats(-6.0, 6.0),
    lr=st.floats(-5.0, 5.0),
)
def test_step_matches_direct_recursion(E, V, tb, lr):
    ep = energy_point(E)
    s = PruferState(lr, tb, 3)
    x_n, x_prev = reconstruct_solution(s, ep)
    x_next = (E - V) * x_n - x_prev
    # invert x_{n+1} = R cos tb', x_n = R cos(tb' - k)
    rc = x_next
    rs = (x_n - x_next * math.cos(ep.k)) / ep.sin_k
    t = prufer_step(s, V, ep)
    assert t.log_radius == pytest.approx(math.log(math.hypot(rc, rs)), abs=1e-10)
    d = t.theta_bar - math.atan2(rs, rc)
    assert abs(math.remainder(d, 2 * math.pi)) < 1e-10


def test_free_solution_is_cosine():
    ep = energy_point(0.3)
    n = 1000
    pot = np.zeros(n + 1)
    lr, tb, _ = prufer_trajectory(pot, ep, 0.0, n)
    assert np.all(lr == 0.0)
    x = np.cos(tb)
    idx = np.arange(1, n + 2)
    # summing k a thousand times costs about n * eps * |theta_bar|
    assert np.max(np.abs(x - np.cos(ep.k * idx))) < 1e-9


def test_reconstruction_matches_direct_recursion():
    ep = energy_point(0.5)
    n = 1000
    pot = _pot(seed=11, n=n + 1)
    x1, x0 = initial_solution(0.4, ep)
    final, _, _ = prufer_chain(pot, ep, 0.4, n)
    xs = [x0, x1]
    for j in range(1, n + 1):
        xs.append((ep.E - pot[j]) * xs[-1] - xs[-2])
    got = reconstruct_solution(final, ep)
    ref = (xs[-1], xs[-2])
    scale = math.hypot(*ref)
    assert abs(got[0] - ref[0]) <= 1e-8 * scale
    assert abs(got[1] - ref[1]) <= 1e-8 * scale


@pytest.mark.parametrize("E", [-1.5, -0.4, 0.5, 1.2])
@pytest.mark.parametrize("seed", [1, 2])
def test_radius_norm_sandwich(E, seed):
    ep = energy_point(E)
    n = 5000
    pot = _pot(alpha=0.3, lam=1.5, seed=seed, n=n + 1)
    x1, x0 = initial_solution(1.3, ep)
    lr, _, _ = prufer_trajectory(pot, ep, 1.3, n)
    ln, _ = direct_trajectory(pot, ep, x1, x0, n)
    ratio = np.exp(2 * (ln - lr))
    assert np.all(ratio >= ep.sin_k**2 / 4 * (1 - 1e-12))
    assert np.all(ratio <= 4 * (1 + 1e-12))


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**32), theta0=st.floats(0, 2 * math.pi), E=st.floats(-1.8, 1.8))
def test_prufer_matches_matrix_form(seed, theta0, E):
    ep = energy_point(E)
    n = 10**4
    pot = _pot(alpha=0.3, lam=1.0, seed=seed, n=n + 1)
    lr, _, _ = prufer_trajectory(pot, ep, theta0, n)
    ml = matrix_log_norms(pot, ep, theta0, n)
    assert np.max(np.abs(lr - ml)) <= 1e-8 * n


def test_phase_increment_bound_short_run():
    from decayloc.asymptotics import phase_bound_onset, phase_increment_bound

    ep = energy_point(0.5)
    alpha, lam = 0.3, 1.0
    B = DisorderSpec().support_bound
    n = 1000
    pot = _pot(alpha=alpha, lam=lam, seed=3, n=n + 1)
    _, tb, _ = prufer_trajectory(pot, ep, 0.0, n)
    inc = np.abs(np.diff(tb) - ep.k)
    sites = np.arange(1, n + 1)
    n0 = phase_bound_onset(ep, lam, B, alpha)
    keep = sites >= n0
    c0 = np.max(inc[keep] * sites[keep] ** alpha)
    assert c0 <= (math.pi / 2) * lam * B / ep.sin_k


def test_norm_upper_bound_random_unimodular():
    rng = np.random.default_rng(123)
    e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    for _ in range(100):
        a = rng.normal(size=(2, 2)) * rng.uniform(0.1, 30)
        a /= math.sqrt(abs(np.linalg.det(a)))
        if np.linalg.det(a) < 0:
            a[:, 0] *= -1
        bound = norm_upper_from_angles(np.linalg.norm(a @ e1), np.linalg.norm(a @ e2), 0.0, math.pi / 2)
        assert np.linalg.svd(a, compute_uv=False)[0] <= bound * (1 + 1e-12)


def test_norm_upper_identity_and_monotone():
    assert norm_upper_from_angles(1.0, 1.0, 0.0, math.pi / 2) == pytest.approx(math.sqrt(2))
    seps = np.linspace(0.1, math.pi / 2, 20)
    vals = [norm_upper_from_angles(1.0, 1.0, 0.0, s) for s in seps]
    assert np.all(np.diff(vals) < 0)
    with pytest.raises(ValueError):
        norm_upper_from_angles(1.0, 1.0, 0.3, 0.3)
    with pytest.raises(ValueError):
        norm_upper_from_angles(1.0, 1.0, 0.0, 2.0)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_two_angle_sandwich_of_product_norm(seed):
    ep = energy_point(0.5)
    n = 3000
    pot = _pot(alpha=0.3, lam=1.0, seed=seed, n=n + 1)
    ck = [10, 100, 1000, n]
    _, lr1, _ = prufer_chain(pot, ep, 0.0, n - 1, checkpoints=ck)
    _, lr2, _ = prufer_chain(pot, ep, math.pi / 2, n - 1, checkpoints=ck)
    for i, m in enumerate(ck):
        prod = accumulate_potential(TransferProduct.identity(), pot, ep, 1, m)
        lo, hi = transfer_norm_bounds(lr1[i], lr2[i], ep, 0.0, math.pi / 2)
        assert lo <= prod.log_norm <= hi
