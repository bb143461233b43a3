"""Compiled inner loops.

Every kernel advances a state indexed by site ``n`` to ``n + 1`` using the
potential value ``pot[n]``; ``start``/``stop`` are state indices.
"""
import math

import numpy as np
from numba import njit

_TWO_PI = 2.0 * math.pi
_WRAP = 64.0 * _TWO_PI


@njit(cache=True, nogil=True)
def _reduce(x):
    return x - _TWO_PI * math.floor(x / _TWO_PI)


@njit(cache=True, nogil=True)
def prufer_step_raw(log_r, tb, v, k, sin_k):
    u = v / sin_k
    c = math.cos(tb)
    s = math.sin(tb)
    # rho_{n+1} / rho_n = 1 - i u cos(tb) e^{i tb}
    re = 1.0 + u * c * s
    im = -u * c * c
    mod2 = re * re + im * im
    dtheta = math.atan2(im, re)
    return log_r + 0.5 * math.log(mod2), tb + k - dtheta, dtheta, mod2


@njit(cache=True, nogil=True)
def prufer_run(pot, k, tb, start, stop, ckpt):
    """Advance from state ``start`` to ``stop``; record (log R, theta_bar) at ``ckpt``."""
    sin_k = math.sin(k)
    log_r = 0.0
    rec_lr = np.empty(ckpt.shape[0])
    rec_tb = np.empty(ckpt.shape[0])
    ci = 0
    while ci < ckpt.shape[0] and ckpt[ci] <= start:
        rec_lr[ci] = log_r
        rec_tb[ci] = tb
        ci += 1
    for n in range(start, stop):
        log_r, tb, _, mod2 = prufer_step_raw(log_r, tb, pot[n], k, sin_k)
        if mod2 <= 0.0:
            raise FloatingPointError("non-positive radius factor")
        if tb > _WRAP or tb < -_WRAP:
            tb = _reduce(tb)
        while ci < ckpt.shape[0] and ckpt[ci] == n + 1:
            rec_lr[ci] = log_r
            rec_tb[ci] = tb
            ci += 1
    return log_r, tb, rec_lr, rec_tb


@njit(cache=True, nogil=True)
def prufer_trace(pot, k, tb, start, stop):
    """Full trajectory: log R and unwrapped theta_bar for states start..stop."""
    sin_k = math.sin(k)
    m = stop - start
    log_r = np.zeros(m + 1)
    theta = np.empty(m + 1)
    dtheta = np.empty(m)
    theta[0] = tb
    lr = 0.0
    for i in range(m):
        lr, tb, dt, mod2 = prufer_step_raw(lr, tb, pot[start + i], k, sin_k)
        if mod2 <= 0.0:
            raise FloatingPointError("non-positive radius factor")
        log_r[i + 1] = lr
        theta[i + 1] = tb
        dtheta[i] = dt
    return log_r, theta, dtheta


@njit(cache=True, nogil=True)
def decompose(pot, var, k, tb, start, stop):
    """Second-order bookkeeping of 2 log R along a Prufer run.

    Returns the group sums (drift, linear martingale, centred square,
    oscillating martingale, oscillatory drift, remainder), 2 log R, the cubic
    bound accumulated over steps with |u| <= 1/4 and the absolute remainder
    of the remaining (non-perturbative) steps.
    """
    sin_k = math.sin(k)
    s2k = sin_k * sin_k
    drift = 0.0
    m_lin = 0.0
    m_sq = 0.0
    m_osc = 0.0
    osc = 0.0
    rem = 0.0
    two_log_r = 0.0
    cubic = 0.0
    early = 0.0
    for n in range(start, stop):
        v = pot[n]
        u = v / sin_k
        eu2 = var[n] / s2k
        c = math.cos(tb)
        s = math.sin(tb)
        s2 = 2.0 * s * c
        c2 = math.cos(2.0 * tb)
        c4 = math.cos(4.0 * tb)
        eps = u * s2 + u * u * c * c
        step = math.log1p(eps)
        two_log_r += step
        shape = 0.5 * c2 + 0.25 * c4
        drift += 0.25 * eu2
        m_lin += u * s2
        m_sq += 0.25 * (u * u - eu2)
        m_osc += (u * u - eu2) * shape
        osc += eu2 * shape
        r = step - u * s2 - u * u * (0.25 + shape)
        rem += r
        if abs(u) <= 0.25:
            cubic += 3.0 * abs(u) ** 3
        else:
            early += abs(r)
        re = 1.0 + u * c * s
        im = -u * c * c
        tb = tb + k - math.atan2(im, re)
        if tb > _WRAP or tb < -_WRAP:
            tb = _reduce(tb)
    return drift, m_lin, m_sq, m_osc, osc, rem, two_log_r, cubic, early


@njit(cache=True, nogil=True)
def oscillatory_phase_sum(pot, weight, k, tb, start, stop):
    """sum_n weight[n] (cos(2 tb_n)/2 + cos(4 tb_n)/4) along a Prufer run."""
    sin_k = math.sin(k)
    acc = 0.0
    lr = 0.0
    for n in range(start, stop):
        acc += weight[n] * (0.5 * math.cos(2.0 * tb) + 0.25 * math.cos(4.0 * tb))
        lr, tb, _, _ = prufer_step_raw(lr, tb, pot[n], k, sin_k)
        if tb > _WRAP or tb < -_WRAP:
            tb = _reduce(tb)
    return acc


@njit(cache=True, nogil=True)
def direct_trace(pot, E, x_cur, x_prev, start, stop):
    """x_{n+1} = (E - V_n) x_n - x_{n-1}, renormalised every step.

    Returns log ||X_n|| and the unit vectors X_n / ||X_n|| for states start..stop.
    """
    m = stop - start
    log_norm = np.empty(m + 1)
    unit = np.empty((m + 1, 2))
    nrm = math.hypot(x_cur, x_prev)
    acc = math.log(nrm)
    x_cur /= nrm
    x_prev /= nrm
    log_norm[0] = acc
    unit[0, 0] = x_cur
    unit[0, 1] = x_prev
    for i in range(m):
        x_next = (E - pot[start + i]) * x_cur - x_prev
        x_prev = x_cur
        x_cur = x_next
        nrm = math.hypot(x_cur, x_prev)
        acc += math.log(nrm)
        x_cur /= nrm
        x_prev /= nrm
        log_norm[i + 1] = acc
        unit[i + 1, 0] = x_cur
        unit[i + 1, 1] = x_prev
    return log_norm, unit


@njit(cache=True, nogil=True)
def direct_log_norms(pot, E, x_cur, x_prev, start, ckpt):
    """log ||X_n|| of the direct recursion at the (sorted) states in ``ckpt``."""
    out = np.empty(ckpt.shape[0])
    nrm = math.hypot(x_cur, x_prev)
    acc = math.log(nrm)
    x_cur /= nrm
    x_prev /= nrm
    ci = 0
    n = start
    while ci < ckpt.shape[0]:
        while n < ckpt[ci]:
            x_next = (E - pot[n]) * x_cur - x_prev
            x_prev = x_cur
            x_cur = x_next
            nrm = math.hypot(x_cur, x_prev)
            acc += math.log(nrm)
            x_cur /= nrm
            x_prev /= nrm
            n += 1
        out[ci] = acc
        ci += 1
    return out


@njit(cache=True, nogil=True)
def matrix_trace(pot, k, y0, y1, start, stop):
    """Y_{n+1} = (I + V_n / sin k * A_n) Y_n with A_n built from cos(nk), sin(nk)."""
    sin_k = math.sin(k)
    m = stop - start
    log_norm = np.empty(m + 1)
    nrm = math.hypot(y0, y1)
    acc = math.log(nrm)
    y0 /= nrm
    y1 /= nrm
    log_norm[0] = acc
    for i in range(m):
        n = start + i
        ang = _reduce(n * k)
        c = math.cos(ang)
        s = math.sin(ang)
        u = pot[n] / sin_k
        z0 = y0 + u * (c * s * y0 + s * s * y1)
        z1 = y1 + u * (-c * c * y0 - c * s * y1)
        nrm = math.hypot(z0, z1)
        acc += math.log(nrm)
        y0 = z0 / nrm
        y1 = z1 / nrm
        log_norm[i + 1] = acc
    return log_norm


@njit(cache=True, nogil=True)
def spectral_norm2(a, b, c, d):
    f = a * a + b * b + c * c + d * d
    det = abs(a * d - b * c)
    return 0.5 * (math.sqrt(max(f + 2.0 * det, 0.0)) + math.sqrt(max(f - 2.0 * det, 0.0)))


@njit(cache=True, nogil=True)
def product_run(pot, E, m, log_scale, start, stop):
    """Left-multiply the normalised 2x2 product ``m`` by T_n for n in [start, stop)."""
    a, b, c, d = m[0, 0], m[0, 1], m[1, 0], m[1, 1]
    for n in range(start, stop):
        t = E - pot[n]
        a, b, c, d = t * a - c, t * b - d, a, b
        nrm = spectral_norm2(a, b, c, d)
        if nrm > 2.0 or nrm < 1.0:
            a /= nrm
            b /= nrm
            c /= nrm
            d /= nrm
            log_scale += math.log(nrm)
    out = np.empty((2, 2))
    out[0, 0] = a
    out[0, 1] = b
    out[1, 0] = c
    out[1, 1] = d
    return out, log_scale
