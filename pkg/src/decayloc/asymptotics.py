"""Lyapunov asymptotics of the Prufer radius and the bookkeeping behind them.

The growth rate of ``log R_n`` is measured against ``S_n = sum_{j<=n} j**(-2 alpha)``
and compared with ``beta = lam**2 / (8 sin(k)**2)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .ensemble import map_realizations, mean_stderr
from .model import (
    DisorderRealization,
    EnergyPoint,
    ModelParams,
    potential,
    sample_disorder,
)
from .prufer import prufer_chain, prufer_init

__all__ = [
    "ResonanceWarning",
    "LyapunovEstimate",
    "FourthMomentCurve",
    "DecompositionTrace",
    "theoretical_beta",
    "normalizer",
    "normalizer_curve",
    "estimate_beta",
    "fourth_moment_constant",
    "fourth_moment_curve",
    "phase_averaged_fourth_moment",
    "decomposition_trace",
    "oscillatory_sum_ratio",
    "free_phase_average",
    "phase_increment_bound",
    "phase_bound_onset",
    "MIN_CHAIN_LENGTH",
]

MIN_CHAIN_LENGTH = 1000


class ResonanceWarning(UserWarning):
    """The energy sits at a resonant momentum where phase averaging can fail."""


def theoretical_beta(ep: EnergyPoint, lam: float) -> float:
    return lam * lam / (2.0 * (4.0 - ep.E * ep.E))


def normalizer(alpha: float, n: int) -> float:
    """S_n = sum_{j=1}^n j**(-2 alpha)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return float(normalizer_curve(alpha, n)[-1])


def normalizer_curve(alpha: float, n: int) -> np.ndarray:
    """Running S_j for j = 1..n."""
    j = np.arange(1, n + 1, dtype=np.float64)
    return np.cumsum(j ** (-2.0 * alpha))


def _chain_potential(params: ModelParams, seed: int, n: int) -> np.ndarray:
    r = sample_disorder(params.disorder, seed, n + 1)
    return potential(r, params.envelope, params.lam)


@dataclass(frozen=True, eq=False)
class LyapunovEstimate:
    energy: EnergyPoint
    params: ModelParams
    n: int
    beta_hat: float
    stderr: float
    realizations: int
    theta0: float
    samples: np.ndarray

    @property
    def resonant(self) -> bool:
        return self.energy.resonant

    @property
    def normalizer(self) -> float:
        return normalizer(self.params.alpha, self.n)

    @property
    def beta_theory(self) -> float:
        return theoretical_beta(self.energy, self.params.lam)


def estimate_beta(
    params: ModelParams,
    ep: EnergyPoint,
    n: int,
    reals: int,
    master_seed: int,
    theta0: float = 0.0,
    threads: int | None = None,
    strict: bool = True,
) -> LyapunovEstimate:
    """Mean of log R_{n+1} / S_n over ``reals`` independent chains of ``n`` steps.

    ``strict`` refuses alpha > 1/2, where the ratio still exists but no longer
    estimates the exponent.
    """
    if n < MIN_CHAIN_LENGTH:
        raise ValueError(f"chain length {n} too short; need n >= {MIN_CHAIN_LENGTH}")
    if reals < 1:
        raise ValueError(f"need at least one realization, got {reals}")
    if strict and params.alpha > 0.5:
        raise ValueError(f"alpha={params.alpha} > 1/2: the Lyapunov normalisation does not apply")
    s_n = normalizer(params.alpha, n)

    def one(_i, seed):
        if params.lam == 0.0:
            return 0.0
        final, _, _ = prufer_chain(_chain_potential(params, seed, n), ep, theta0, n)
        return final.log_radius / s_n

    samples = np.asarray(map_realizations(one, reals, master_seed, threads))
    mean, err = mean_stderr(samples)
    return LyapunovEstimate(ep, params, n, mean, err, reals, theta0, samples)


def fourth_moment_constant(ep: EnergyPoint, lam: float, support_bound: float) -> float:
    """c with E[R_{j+1}^4] <= (1 + c j^(-2 alpha)) E[R_j^4].

    With u = V_j / sin k and |u| <= b j^-alpha, b = |lam| B / sin k, expanding
    E[(1 + u sin 2t + u^2 cos^2 t)^2] bounds the increment by
    (3 b^2 + 2 b^3 + b^4) j^(-2 alpha).
    """
    b = abs(lam) * support_bound / ep.sin_k
    return 3 * b**2 + 2 * b**3 + b**4


@dataclass(frozen=True, eq=False)
class FourthMomentCurve:
    """Empirical E[R^4] at chain lengths ``steps`` (state index steps + 1)."""

    steps: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    bound: np.ndarray
    bound_limit: float
    c: float
    realizations: int
    phase_averaged: np.ndarray

    @property
    def within_bound(self) -> bool:
        return bool(np.all(self.mean <= self.bound))

    def last_decade_variation(self) -> float:
        """(max - min) / min of the mean over the final decade of the grid."""
        sel = self.steps >= self.steps[-1] / 10.0
        seg = self.mean[sel]
        return float((seg.max() - seg.min()) / seg.min())


def _log_bound_limit(c: float, alpha: float, n_exact: int = 10**6) -> float:
    j = np.arange(1, n_exact + 1, dtype=np.float64)
    head = float(np.sum(np.log1p(c * j ** (-2.0 * alpha))))
    # log(1 + x) <= x and the integral test for the tail
    tail = c * n_exact ** (1.0 - 2.0 * alpha) / (2.0 * alpha - 1.0)
    return head + tail


def fourth_moment_curve(
    params: ModelParams,
    ep: EnergyPoint,
    n: int,
    reals: int,
    master_seed: int,
    grid_points: int = 41,
    theta0: float = 0.0,
    threads: int | None = None,
) -> FourthMomentCurve:
    if params.alpha <= 0.5:
        raise ValueError(f"fourth-moment boundedness needs alpha > 1/2, got {params.alpha}")
    if n < 1 or reals < 1:
        raise ValueError("n and reals must be positive")
    steps = np.unique(np.round(np.logspace(0, math.log10(n), grid_points)).astype(np.int64))
    ckpt = steps + 1

    def one(_i, seed):
        if params.lam == 0.0:
            return np.ones(steps.shape[0])
        _, rec_lr, _ = prufer_chain(_chain_potential(params, seed, n), ep, theta0, n, ckpt)
        return np.exp(4.0 * rec_lr)

    vals = np.vstack(map_realizations(one, reals, master_seed, threads))
    mean = vals.mean(axis=0)
    err = vals.std(axis=0, ddof=1) / math.sqrt(reals) if reals > 1 else np.zeros_like(mean)
    c = fourth_moment_constant(ep, params.lam, params.disorder.support_bound)
    j = np.arange(1, n + 1, dtype=np.float64)
    log_cum = np.cumsum(np.log1p(c * j ** (-2.0 * params.alpha)))
    bound = np.exp(log_cum[steps - 1])
    limit = math.exp(_log_bound_limit(c, params.alpha))
    return FourthMomentCurve(steps, mean, err, bound, limit, c, reals, phase_averaged_fourth_moment(params, ep, steps))


def phase_averaged_fourth_moment(params: ModelParams, ep: EnergyPoint, steps: np.ndarray) -> np.ndarray:
    """E[R^4] predicted when the phase is treated as uniform and independent of R.

    One step multiplies R^4 by (1 + u sin 2t + u^2 cos^2 t)^2, whose disorder
    and phase average is 1 + (3/2) E[u^2] + (3/8) E[u^4].
    """
    n = int(np.max(steps))
    j = np.arange(1, n + 1, dtype=np.float64)
    eu2 = params.lam**2 * j ** (-2.0 * params.alpha) / ep.sin_k**2
    eu4 = params.disorder.fourth_moment * eu2**2
    log_cum = np.cumsum(np.log1p(1.5 * eu2 + 0.375 * eu4))
    return np.exp(log_cum[np.asarray(steps) - 1])


@dataclass(frozen=True)
class DecompositionTrace:
    """Second-order expansion of 2 log R_{n+1}, summed over the n steps.

    drift is sum E[u^2]/4; the three martingale groups are sum u sin 2t,
    sum (u^2 - E u^2)/4 and sum (u^2 - E u^2)(cos 2t / 2 + cos 4t / 4);
    oscillatory is sum E[u^2](cos 2t / 2 + cos 4t / 4); remainder is the
    exact Taylor remainder.  ``cubic_bound`` bounds |remainder| over steps
    with |u| <= 1/4 and ``early_remainder`` is the absolute remainder of the
    other steps.
    """

    n: int
    normalizer: float
    drift: float
    martingale_linear: float
    martingale_square: float
    martingale_oscillating: float
    oscillatory: float
    remainder: float
    two_log_radius: float
    cubic_bound: float
    early_remainder: float

    def total(self) -> float:
        return (
            self.drift
            + self.martingale_linear
            + self.martingale_square
            + self.martingale_oscillating
            + self.oscillatory
            + self.remainder
        )

    def martingale_ratios(self) -> tuple[float, float, float]:
        s = self.normalizer
        return (
            abs(self.martingale_linear) / s,
            abs(self.martingale_square) / s,
            abs(self.martingale_oscillating) / s,
        )

    @property
    def remainder_bound(self) -> float:
        return self.cubic_bound + self.early_remainder


def _variance_profile(params: ModelParams, length: int) -> np.ndarray:
    # omega has unit variance
    return params.lam**2 * params.envelope.values(length) ** 2


def _check_realization(r: DisorderRealization, n: int) -> None:
    if r.length < n + 1:
        raise ValueError(f"realization of length {r.length} too short for {n} steps")


def decomposition_trace(
    realization: DisorderRealization,
    ep: EnergyPoint,
    params: ModelParams,
    n: int,
    theta0: float = 0.0,
) -> DecompositionTrace:
    _check_realization(realization, n)
    pot = potential(realization, params.envelope, params.lam)
    var = _variance_profile(params, realization.length)
    tb = prufer_init(theta0, ep).theta_bar
    out = _kernels.decompose(pot, var, ep.k, tb, 1, n + 1)
    return DecompositionTrace(n, normalizer(params.alpha, n), *out)


def oscillatory_sum_ratio(
    realization: DisorderRealization,
    ep: EnergyPoint,
    params: ModelParams,
    n: int,
    theta0: float = 0.0,
) -> float:
    """sum_{j<=n} E[V_j^2](cos 2t_j / 2 + cos 4t_j / 4) / S_n along the Prufer run."""
    if ep.resonant:
        warnings.warn(f"E={ep.E} is resonant; the ratio need not vanish", ResonanceWarning, stacklevel=2)
    _check_realization(realization, n)
    pot = potential(realization, params.envelope, params.lam)
    var = _variance_profile(params, realization.length)
    tb = prufer_init(theta0, ep).theta_bar
    acc = _kernels.oscillatory_phase_sum(pot, var, ep.k, tb, 1, n + 1)
    return acc / normalizer(params.alpha, n)


def free_phase_average(ep: EnergyPoint, alpha: float, n: int, theta0: float = 0.0) -> float:
    """Weighted phase average with free rotation t_j = t_1 + (j - 1) k and weights j^(-2 alpha)."""
    j = np.arange(1, n + 1, dtype=np.float64)
    tb = prufer_init(theta0, ep).theta_bar + (j - 1.0) * ep.k
    w = j ** (-2.0 * alpha)
    return float(np.sum(w * (0.5 * np.cos(2 * tb) + 0.25 * np.cos(4 * tb))) / np.sum(w))


def phase_increment_bound(ep: EnergyPoint, lam: float, support_bound: float, alpha: float, n) -> np.ndarray:
    """(pi/2) (|lam| B / sin k) n^-alpha."""
    return 0.5 * math.pi * abs(lam) * support_bound / ep.sin_k * np.asarray(n, dtype=np.float64) ** -alpha


def phase_bound_onset(ep: EnergyPoint, lam: float, support_bound: float, alpha: float) -> int:
    """First n with |lam| B n^-alpha / sin k < 1, from where the step factor stays in the right half plane."""
    b = abs(lam) * support_bound / ep.sin_k
    if b < 1.0:
        return 1
    return int(math.floor(b ** (1.0 / alpha))) + 1
