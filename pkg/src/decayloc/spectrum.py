"""Finite boxes, eigenpairs and eigenfunction decay measurements."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .asymptotics import normalizer, theoretical_beta
from .model import DisorderRealization, EnergyPoint, ModelParams, potential
from .prufer import direct_trajectory, initial_solution, prufer_chain

__all__ = [
    "ConvergenceFailure",
    "BoxHamiltonian",
    "EigenPair",
    "Eigensystem",
    "DecayFit",
    "DirectionResult",
    "build_box",
    "diagonalize",
    "sturm_count",
    "amplitude",
    "decay_fit",
    "upper_envelope_slope",
    "decaying_direction",
    "wronskian_trace",
    "solution_floor",
    "default_kappa",
    "relaunch_growth",
    "direction_consistency",
    "MAX_BOX_SIZE",
    "DIRECTION_HORIZON_FACTOR",
]

MAX_BOX_SIZE = 5000
EIGENVALUE_TOL = 1e-10


class ConvergenceFailure(RuntimeError):
    def __init__(self, index: int, detail: str):
        super().__init__(f"eigenpair {index}: {detail}")
        self.index = index


@dataclass(frozen=True, eq=False)
class BoxHamiltonian:
    """Dirichlet restriction of the half-line operator to sites 0..L."""

    L: int
    diagonal: np.ndarray

    @property
    def size(self) -> int:
        return self.L + 1

    @property
    def off_diagonal(self) -> np.ndarray:
        return np.ones(self.L)

    @property
    def spectral_radius_bound(self) -> float:
        return 2.0 + float(np.max(np.abs(self.diagonal)))

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = self.diagonal * x
        y[:-1] += x[1:]
        y[1:] += x[:-1]
        return y

    def dense(self) -> np.ndarray:
        return np.diag(self.diagonal) + np.diag(self.off_diagonal, 1) + np.diag(self.off_diagonal, -1)


def build_box(realization: DisorderRealization, params: ModelParams, L: int) -> BoxHamiltonian:
    if L < 1:
        raise ValueError(f"box size L must be >= 1, got {L}")
    if realization.length < L + 1:
        raise ValueError(f"realization has {realization.length} sites, box needs {L + 1}")
    diag = potential(realization, params.envelope, params.lam)[: L + 1].copy()
    diag.setflags(write=False)
    return BoxHamiltonian(L, diag)


@dataclass(frozen=True, eq=False)
class EigenPair:
    eigenvalue: float
    vector: np.ndarray


@dataclass(frozen=True, eq=False)
class Eigensystem(Sequence):
    """Ascending eigenvalues and unit eigenvectors (as columns) of one box."""

    box: BoxHamiltonian
    values: np.ndarray
    vectors: np.ndarray

    def __len__(self) -> int:
        return int(self.values.shape[0])

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        return EigenPair(float(self.values[i]), self.vectors[:, i])

    def in_window(self, lo: float, hi: float) -> np.ndarray:
        return np.flatnonzero((self.values >= lo) & (self.values <= hi))


def diagonalize(
    box: BoxHamiltonian,
    window: tuple[float, float] | None = None,
    max_size: int = MAX_BOX_SIZE,
    check: bool = True,
) -> Eigensystem:
    """All eigenpairs (or those with eigenvalue in ``window``).

    Bisection on Sturm sequences plus inverse iteration (LAPACK stebz/stein).
    """
    if box.size > max_size + 1:
        raise ValueError(f"box with {box.size} sites exceeds the configured maximum L={max_size}")
    kw = {}
    if window is not None:
        kw = dict(select="v", select_range=(float(window[0]), float(window[1])))
    try:
        vals, vecs = eigh_tridiagonal(
            box.diagonal, box.off_diagonal, lapack_driver="stebz", tol=EIGENVALUE_TOL, **kw
        )
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK reports the failing index
        raise ConvergenceFailure(-1, str(exc)) from exc
    if check and vals.size:
        _check_pairs(box, vals, vecs)
    vals.setflags(write=False)
    vecs.setflags(write=False)
    return Eigensystem(box, vals, vecs)


def _check_pairs(box: BoxHamiltonian, vals: np.ndarray, vecs: np.ndarray) -> None:
    hv = box.diagonal[:, None] * vecs
    hv[:-1] += vecs[1:]
    hv[1:] += vecs[:-1]
    resid = np.linalg.norm(hv - vecs * vals[None, :], axis=0)
    bad = np.flatnonzero(resid > 1e-8 * box.spectral_radius_bound)
    if bad.size:
        j = int(bad[0])
        raise ConvergenceFailure(j, f"residual {resid[j]:.3e}")
    norms = np.linalg.norm(vecs, axis=0)
    bad = np.flatnonzero(np.abs(norms - 1.0) > 1e-12)
    if bad.size:
        j = int(bad[0])
        raise ConvergenceFailure(j, f"norm {norms[j]!r}")


def sturm_count(diagonal: np.ndarray, x: float) -> int:
    """Number of eigenvalues below ``x`` of the tridiagonal matrix with unit off-diagonal."""
    count = 0
    q = 1.0
    for i, d in enumerate(diagonal):
        q = d - x - (1.0 / q if i else 0.0)
        if q == 0.0:
            q = -1e-300
        if q < 0.0:
            count += 1
    return count


def amplitude(vector: np.ndarray) -> np.ndarray:
    """A_n = sqrt(x_n^2 + x_{n-1}^2) for n = 1..L."""
    v = np.asarray(vector, dtype=np.float64)
    return np.hypot(v[1:], v[:-1])


@dataclass(frozen=True)
class DecayFit:
    eigenvalue: float
    scaling: str
    slope: float
    intercept: float
    fit_quality: float
    window: tuple[int, int]


def _default_window(amp: np.ndarray, margin: float) -> tuple[int, int]:
    L = amp.shape[0]
    pad = int(margin * L)
    peak = int(np.flatnonzero(amp == amp.max())[-1]) + 1
    return peak + pad, L - pad


def decay_fit(
    pair: EigenPair,
    alpha: float,
    window: tuple[int, int] | None = None,
    margin: float = 0.05,
    min_samples: int = 20,
) -> DecayFit:
    """Least-squares slope of log A_n against n^(1 - 2 alpha), or log n at alpha = 1/2.

    The default window starts ``margin * L`` past the last maximum of A_n and
    stops ``margin * L`` before the box edge.
    """
    if not 0 < alpha <= 0.5:
        raise ValueError(f"decay fits need alpha in (0, 1/2], got {alpha}")
    amp = amplitude(pair.vector)
    lo, hi = _default_window(amp, margin) if window is None else window
    n = np.arange(1, amp.shape[0] + 1)
    sel = (n >= lo) & (n <= hi)
    if sel.sum() < min_samples:
        raise ValueError(f"fit window [{lo}, {hi}] has {int(sel.sum())} samples, need {min_samples}")
    if alpha == 0.5:
        x, scaling = np.log(n[sel]), "log"
    else:
        x, scaling = n[sel] ** (1.0 - 2.0 * alpha), "power"
    y = np.log(amp[sel])
    slope, intercept = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return DecayFit(pair.eigenvalue, scaling, float(slope), float(intercept), r2, (int(lo), int(hi)))


def upper_envelope_slope(pair: EigenPair, alpha: float, blocks: int = 20) -> float:
    """Slope of the blockwise maximum of log A_n against n^(1 - 2 alpha)."""
    amp = amplitude(pair.vector)
    n = np.arange(1, amp.shape[0] + 1)
    edges = np.linspace(0, amp.shape[0], blocks + 1).astype(int)
    xs, ys = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        i = a + int(np.argmax(amp[a:b]))
        xs.append(n[i] ** (1.0 - 2.0 * alpha))
        ys.append(math.log(amp[i]))
    return float(np.polyfit(xs, ys, 1)[0])


@dataclass(frozen=True, eq=False)
class DirectionResult:
    theta_inf: float
    steps: np.ndarray
    r_trace: np.ndarray
    phase_gap: np.ndarray
    diverging: bool
    experimental: bool

    @property
    def r_inf(self) -> float:
        return float(self.r_trace[-1])

    def cauchy_gaps(self) -> np.ndarray:
        """|r_{2n} - r_n| for the doubling pairs present on the grid."""
        idx = {int(s): i for i, s in enumerate(self.steps)}
        return np.array([abs(self.r_trace[idx[2 * s]] - self.r_trace[i]) for s, i in idx.items() if 2 * s in idx])


def decaying_direction(
    realization: DisorderRealization,
    ep: EnergyPoint,
    params: ModelParams,
    n_max: int,
    grid_points: int = 60,
    divergence_log_ratio: float = 30.0,
) -> DirectionResult:
    """Initial angle whose Prufer radius decays, from the chains started at (1,0) and (0,1).

    With r = R^(1) / R^(2), the combination cos t Y^(1) + sin t Y^(2) cancels for
    tan t = -r e^{i (theta^(1) - theta^(2))}; the phases align asymptotically, so
    t = -arctan r when cos(theta^(1) - theta^(2)) > 0 and +arctan r otherwise.
    """
    if realization.length < n_max + 1:
        raise ValueError(f"realization of length {realization.length} too short for {n_max} steps")
    pot = potential(realization, params.envelope, params.lam)
    # log-spaced powers of two so that doubling pairs exist for the Cauchy check
    exps = np.arange(0, int(math.floor(math.log2(n_max))) + 1)
    steps = np.unique(np.concatenate([2**exps, np.round(np.logspace(0, math.log10(n_max), grid_points)), [n_max]]))
    steps = steps.astype(np.int64)
    s1, lr1, tb1 = prufer_chain(pot, ep, 0.0, n_max, steps + 1)
    s2, lr2, tb2 = prufer_chain(pot, ep, 0.5 * math.pi, n_max, steps + 1)
    log_r = lr1 - lr2
    diverging = bool(abs(log_r[-1]) > divergence_log_ratio)
    r = np.exp(np.clip(log_r, -700, 700))
    gap = np.cos(tb2 - tb1)
    if diverging:
        theta = 0.5 * math.pi if log_r[-1] > 0 else 0.0
    else:
        theta = -math.atan(r[-1]) if gap[-1] > 0 else math.atan(r[-1])
    return DirectionResult(theta, steps, r, gap, diverging, params.alpha != 0.5)


def wronskian_trace(pot: np.ndarray, ep: EnergyPoint, n: int) -> np.ndarray:
    """x1_{j+1} x2_j - x1_j x2_{j+1} for the solutions with X_1 = (1,0) and (0,1), j = 1..n+1."""
    ln1, u1 = direct_trajectory(pot, ep, 1.0, 0.0, n)
    ln2, u2 = direct_trajectory(pot, ep, 0.0, 1.0, n)
    det = u1[:, 0] * u2[:, 1] - u1[:, 1] * u2[:, 0]
    return det * np.exp(ln1 + ln2)


def default_kappa(ep: EnergyPoint, lam: float) -> float:
    """kappa with b + 1.1 = 2 kappa, b = lam^2 / sin^2 k the growth rate constant of E[R^2]."""
    b = lam * lam / (ep.sin_k**2)
    return 0.5 * (b + 1.1)


def solution_floor(
    realization: DisorderRealization,
    ep: EnergyPoint,
    params: ModelParams,
    n_max: int,
    kappa: float | None = None,
    theta0: float = 0.0,
) -> float:
    """min_{1 <= n <= n_max + 1} A_n n^kappa for the solution started at theta0."""
    if realization.length < n_max + 1:
        raise ValueError(f"realization of length {realization.length} too short for {n_max} steps")
    kappa = default_kappa(ep, params.lam) if kappa is None else kappa
    pot = potential(realization, params.envelope, params.lam)
    x1, x0 = initial_solution(theta0, ep)
    ln, _ = direct_trajectory(pot, ep, x1, x0, n_max)
    n = np.arange(1, n_max + 2, dtype=np.float64)
    return float(np.exp(np.min(ln + kappa * np.log(n))))


def relaunch_growth(
    realization: DisorderRealization, ep: EnergyPoint, params: ModelParams, theta0: float, n: int
) -> float:
    """log R_{n+1} / S_n of a fresh chain from theta0."""
    pot = potential(realization, params.envelope, params.lam)
    final, _, _ = prufer_chain(pot, ep, theta0, n)
    return final.log_radius / normalizer(params.alpha, n)


DIRECTION_HORIZON_FACTOR = 4


def direction_consistency(
    realization: DisorderRealization,
    ep: EnergyPoint,
    params: ModelParams,
    n: int,
    horizon_factor: int = DIRECTION_HORIZON_FACTOR,
    theta_generic: float = 0.0,
) -> tuple[float, float, float]:
    """(decaying-angle rate, generic-angle rate, beta) at chain length ``n``.

    The angle is solved on the longer horizon ``horizon_factor * n``: solving
    and evaluating at the same n would pick the least-stretched direction of
    the n-step product (its smallest singular value) rather than the limit
    direction.
    """
    d = decaying_direction(realization, ep, params, horizon_factor * n)
    dec = relaunch_growth(realization, ep, params, d.theta_inf, n)
    gen = relaunch_growth(realization, ep, params, theta_generic, n)
    return dec, gen, theoretical_beta(ep, params.lam)
