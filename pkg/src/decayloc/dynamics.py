"""Time evolution on finite boxes: transport moments, correlators, Green's functions.

Everything is computed from the eigen-decomposition of a box; the Abel time
average has the closed form

    M(p, f, T) = sum_{j,k} w_j w_k B_jk / (1 + ((E_j - E_k) T / 2)^2),

with ``w_j = f(E_j) psi_j(0)`` and ``B_jk = sum_n n^p psi_j(n) psi_k(n)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special, stats
from scipy.linalg import solve_banded

from .ensemble import map_realizations
from .model import EnergyPoint, ModelParams, potential, sample_disorder
from .spectrum import BoxHamiltonian, Eigensystem, build_box, diagonalize, sturm_count

__all__ = [
    "EigenvalueCollision",
    "SpectralEvolution",
    "MomentCurve",
    "CorrelatorRecord",
    "StretchFit",
    "CorrelatorDecay",
    "GreensDecay",
    "InverseTransferDecay",
    "WitnessResult",
    "TransportSummary",
    "indicator_window",
    "smooth_window",
    "spectral_evolution",
    "abel_moment",
    "abel_moment_quadrature",
    "moment_curve",
    "transport_exponent",
    "transport_experiment",
    "transport_lower_bounds",
    "correlator",
    "correlator_row",
    "stretch_fit",
    "correlator_decay_experiment",
    "greens_function",
    "greens_column",
    "greens_fractional_moment",
    "greens_decay_experiment",
    "free_resolvent",
    "inverse_transfer_moment",
    "stretched_divergence_witness",
    "STRETCH_CANDIDATES",
]

STRETCH_CANDIDATES = tuple(round(0.2 + 0.1 * i, 1) for i in range(7))
COLLISION_TOL = 1e-12


class EigenvalueCollision(ArithmeticError):
    pass


# ---------------------------------------------------------------- windows

def indicator_window(J: tuple[float, float]) -> Callable[[np.ndarray], np.ndarray]:
    lo, hi = J

    def f(E):
        E = np.asarray(E, dtype=np.float64)
        return ((E >= lo) & (E <= hi)).astype(np.float64)

    f.support = (lo, hi)
    return f


def _smoothstep(x: np.ndarray) -> np.ndarray:
    # C-infinity transition from 0 (x <= 0) to 1 (x >= 1)
    x = np.clip(x, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


def smooth_window(J: tuple[float, float], margin: float = 0.25) -> Callable[[np.ndarray], np.ndarray]:
    """Smooth function equal to 1 on J and vanishing outside J widened by ``margin``."""
    if margin <= 0:
        raise ValueError(f"margin must be positive, got {margin}")
    lo, hi = J

    def f(E):
        E = np.asarray(E, dtype=np.float64)
        return _smoothstep((E - (lo - margin)) / margin) * _smoothstep(((hi + margin) - E) / margin)

    f.support = (lo - margin, hi + margin)
    return f


def _make_window(kind: str, J, margin: float):
    if kind == "indicator":
        return indicator_window(J)
    if kind == "smooth":
        return smooth_window(J, margin)
    raise ValueError(f"unknown window kind {kind!r}; expected 'indicator' or 'smooth'")


# ---------------------------------------------------------------- evolution

@dataclass(frozen=True, eq=False)
class SpectralEvolution:
    """e^{-itH} applied to delta_{m0}, through the eigenpairs of one box."""

    system: Eigensystem
    m0: int
    coefficients: np.ndarray

    @property
    def complete(self) -> bool:
        return len(self.system) == self.system.box.size

    def completeness_defect(self) -> float:
        return abs(float(np.sum(self.coefficients**2)) - 1.0)

    def state(self, t: float, weights: np.ndarray | None = None) -> np.ndarray:
        c = self.coefficients if weights is None else self.coefficients * weights
        return self.system.vectors @ (np.exp(-1j * t * self.system.values) * c)


def spectral_evolution(system: Eigensystem, m0: int = 0) -> SpectralEvolution:
    if not 0 <= m0 <= system.box.L:
        raise IndexError(f"site {m0} outside box 0..{system.box.L}")
    return SpectralEvolution(system, m0, np.array(system.vectors[m0, :]))


def _moment_kernel(ev: SpectralEvolution, p: float, f) -> tuple[np.ndarray, np.ndarray]:
    vals = ev.system.values
    w = f(vals) * ev.coefficients
    keep = np.flatnonzero(w != 0.0)
    psi = ev.system.vectors[:, keep]
    n = np.arange(psi.shape[0], dtype=np.float64)
    B = psi.T @ ((n**p)[:, None] * psi) if p else psi.T @ psi
    W = np.outer(w[keep], w[keep]) * B
    dE = vals[keep][:, None] - vals[keep][None, :]
    return W, dE


def abel_moment(
    ev: SpectralEvolution,
    p: float,
    J: tuple[float, float],
    T: float,
    window: str = "smooth",
    margin: float = 0.25,
) -> float:
    """(2/T) int_0^inf e^{-2t/T} sum_n n^p |<delta_n, e^{-itH} f(H) delta_0>|^2 dt, closed form."""
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    if p < 0:
        raise ValueError(f"moment order must be >= 0, got {p}")
    W, dE = _moment_kernel(ev, p, _make_window(window, J, margin))
    return float(np.sum(W / (1.0 + (0.5 * T * dE) ** 2)))


def abel_moment_quadrature(
    ev: SpectralEvolution,
    p: float,
    J: tuple[float, float],
    T: float,
    window: str = "smooth",
    margin: float = 0.25,
    horizon: float = 20.0,
) -> float:
    """Same quantity by adaptive quadrature of the time integral on [0, horizon * T]."""
    f = _make_window(window, J, margin)
    wts = f(ev.system.values)
    n = np.arange(ev.system.box.size, dtype=np.float64)
    npow = n**p

    def integrand(t):
        phi = ev.state(t, wts)
        return (2.0 / T) * math.exp(-2.0 * t / T) * float(np.sum(npow * (phi.real**2 + phi.imag**2)))

    val, _ = integrate.quad(integrand, 0.0, horizon * T, limit=5000, epsabs=0.0, epsrel=1e-10)
    return float(val)


@dataclass(frozen=True, eq=False)
class MomentCurve:
    p: float
    window: tuple[float, float]
    T_grid: np.ndarray
    values: np.ndarray
    norm: float  # ||f(H) delta_0||^2
    L: int

    @property
    def normalized(self) -> np.ndarray:
        return self.values / self.norm

    def saturated(self) -> np.ndarray:
        """Times whose normalised moment exceeds (L/4)^p."""
        return self.normalized > (self.L / 4.0) ** self.p


def moment_curve(
    system: Eigensystem,
    p: float,
    J: tuple[float, float],
    T_grid: Sequence[float],
    window: str = "smooth",
    margin: float = 0.25,
) -> MomentCurve:
    ev = spectral_evolution(system, 0)
    f = _make_window(window, J, margin)
    W, dE = _moment_kernel(ev, p, f)
    T_grid = np.asarray(T_grid, dtype=np.float64)
    if np.any(T_grid <= 0):
        raise ValueError("times must be positive")
    vals = np.array([np.sum(W / (1.0 + (0.5 * T * dE) ** 2)) for T in T_grid])
    norm = float(np.sum((f(system.values) * ev.coefficients) ** 2))
    return MomentCurve(p, tuple(J), T_grid, vals, norm, system.box.L)


def _unsaturated_prefix(curve: MomentCurve) -> int:
    sat = np.flatnonzero(curve.saturated())
    return int(sat[0]) if sat.size else curve.T_grid.shape[0]


def transport_exponent(
    curve: MomentCurve,
    fit_range: tuple[float, float] | None = None,
    min_points: int = 5,
) -> float:
    """Log-log slope of M against T; default range is the last unsaturated decade."""
    T = curve.T_grid
    if fit_range is None:
        stop = _unsaturated_prefix(curve)
        if stop == 0:
            raise ValueError("moment curve is saturated from the first time on")
        t_hi = T[stop - 1]
        fit_range = (t_hi / 10.0, t_hi)
    sel = (T >= fit_range[0] * (1 - 1e-12)) & (T <= fit_range[1] * (1 + 1e-12))
    if sel.sum() < min_points:
        raise ValueError(f"fit range {fit_range} holds {int(sel.sum())} grid points, need {min_points}")
    if np.any(curve.saturated()[sel]):
        raise ValueError(f"fit range {fit_range} includes saturated times (moment > (L/4)^p)")
    return float(np.polyfit(np.log(T[sel]), np.log(curve.values[sel]), 1)[0])


def transport_lower_bounds(lam: float, J: tuple[float, float], p: float) -> tuple[float, float]:
    """Predicted exponent floors p - 2 gamma_J with gamma_J = inf_J c / (8 - 2 E^2).

    Returned for both readings of the coupling factor: c = |lam| and c = lam^2.
    """
    lo, hi = J
    e2 = 0.0 if lo <= 0.0 <= hi else min(lo * lo, hi * hi)
    d = 8.0 - 2.0 * e2
    return p - 2.0 * abs(lam) / d, p - 2.0 * lam * lam / d


@dataclass(frozen=True, eq=False)
class TransportSummary:
    T_grid: np.ndarray
    mean_normalized: np.ndarray
    exponent_of_mean: float
    exponents: np.ndarray
    L: int
    p: float

    @property
    def mean_exponent(self) -> float:
        return float(np.mean(self.exponents))


def _box_for(params: ModelParams, seed: int, L: int) -> BoxHamiltonian:
    return build_box(sample_disorder(params.disorder, seed, L + 1), params, L)


def transport_experiment(
    params: ModelParams,
    J: tuple[float, float],
    L: int,
    p: float,
    reals: int,
    master_seed: int,
    T_grid: Sequence[float] | None = None,
    window: str = "smooth",
    margin: float = 0.25,
    threads: int | None = None,
) -> TransportSummary:
    """Moment curves over realizations; exponent of the averaged normalised curve and per-realization exponents."""
    T_grid = np.logspace(0, 6, 31) if T_grid is None else np.asarray(T_grid, dtype=np.float64)
    support = _make_window(window, J, margin).support

    def one(_i, seed):
        system = diagonalize(_box_for(params, seed, L), window=support)
        c = moment_curve(system, p, J, T_grid, window, margin)
        return c.normalized, transport_exponent(c)

    out = map_realizations(one, reals, master_seed, threads)
    mean = np.mean([o[0] for o in out], axis=0)
    avg = MomentCurve(p, tuple(J), T_grid, mean, 1.0, L)
    return TransportSummary(T_grid, mean, transport_exponent(avg), np.array([o[1] for o in out]), L, p)


# ---------------------------------------------------------------- correlators

@dataclass(frozen=True)
class CorrelatorRecord:
    m: int
    n: int
    interval: tuple[float, float] | None
    Q: float
    realization: int | None = None


def _select(system: Eigensystem, I) -> np.ndarray:
    if I is None:
        return np.arange(len(system))
    return system.in_window(*I)


def correlator(system: Eigensystem, m: int, n: int, I, realization: int | None = None) -> CorrelatorRecord:
    """sum over E_j in I of |psi_j(m)| |psi_j(n)|; ``I=None`` means the whole real line, ``I=()`` the empty set."""
    L = system.box.L
    if not (0 <= m <= L and 0 <= n <= L):
        raise IndexError(f"sites ({m}, {n}) outside box 0..{L}")
    if I is not None and len(I) == 0:
        return CorrelatorRecord(m, n, (), 0.0, realization)
    idx = _select(system, I)
    v = system.vectors
    q = float(np.sum(np.abs(v[m, idx]) * np.abs(v[n, idx])))
    return CorrelatorRecord(m, n, None if I is None else tuple(I), q, realization)


def correlator_row(system: Eigensystem, m: int, I) -> np.ndarray:
    """Q(m, n; I) for every n = 0..L."""
    idx = _select(system, I)
    v = np.abs(system.vectors[:, idx])
    return v @ v[m, :]


@dataclass(frozen=True, eq=False)
class StretchFit:
    """Fits of log y = a - c n^gamma over candidate gammas."""

    gammas: tuple[float, ...]
    rss: np.ndarray
    slopes: np.ndarray

    @property
    def best_gamma(self) -> float:
        return float(self.gammas[int(np.argmin(self.rss))])

    def slope_at(self, gamma: float) -> float:
        return float(self.slopes[int(np.argmin(np.abs(np.asarray(self.gammas) - gamma)))])


def stretch_fit(n: np.ndarray, log_y: np.ndarray, gammas: Sequence[float] = STRETCH_CANDIDATES) -> StretchFit:
    n = np.asarray(n, dtype=np.float64)
    rss, slopes = [], []
    for g in gammas:
        x = n**g
        coef = np.polyfit(x, log_y, 1)
        rss.append(float(np.sum((log_y - np.polyval(coef, x)) ** 2)))
        slopes.append(float(coef[0]))
    return StretchFit(tuple(gammas), np.array(rss), np.array(slopes))


@dataclass(frozen=True, eq=False)
class CorrelatorDecay:
    n_grid: np.ndarray
    mean_q2: np.ndarray
    fit: StretchFit
    slope: float  # of log E[Q^2] against n^(1 - 2 alpha)
    spearman: float
    realizations: int
    mean_count: float  # mean number of eigenvalues in I


def correlator_decay_experiment(
    params: ModelParams,
    I: tuple[float, float],
    m: int,
    n_grid: Sequence[int] | None,
    L: int,
    reals: int,
    master_seed: int,
    threads: int | None = None,
) -> CorrelatorDecay:
    if reals < 30:
        raise ValueError(f"need at least 30 realizations for the correlator fit, got {reals}")
    n_grid = np.arange(1, L // 2 + 1) if n_grid is None else np.asarray(n_grid, dtype=np.int64)

    def one(_i, seed):
        system = diagonalize(_box_for(params, seed, L), window=I)
        return correlator_row(system, m, I)[n_grid] ** 2, len(system)

    out = map_realizations(one, reals, master_seed, threads)
    mean = np.mean([o[0] for o in out], axis=0)
    count = float(np.mean([o[1] for o in out]))
    log_q = np.log(mean)
    fit = stretch_fit(n_grid, log_q)
    x = n_grid.astype(np.float64) ** (1.0 - 2.0 * params.alpha)
    slope = float(np.polyfit(x, log_q, 1)[0])
    rho = float(stats.spearmanr(n_grid, mean).statistic)
    return CorrelatorDecay(n_grid, mean, fit, slope, rho, reals, count)


# ---------------------------------------------------------------- Green's functions

def _check_collision(box: BoxHamiltonian, E: float) -> None:
    lo = sturm_count(box.diagonal, E - COLLISION_TOL)
    hi = sturm_count(box.diagonal, E + COLLISION_TOL)
    if hi != lo:
        raise EigenvalueCollision(f"E={E!r} lies within {COLLISION_TOL} of an eigenvalue")


def greens_column(box: BoxHamiltonian, E: float, n: int, guard: bool = True) -> np.ndarray:
    """G(m, n) = <delta_m, (H - E)^{-1} delta_n> for all m, by a banded solve."""
    if not 0 <= n <= box.L:
        raise IndexError(f"site {n} outside box 0..{box.L}")
    if guard:
        _check_collision(box, E)
    ab = np.empty((3, box.size))
    ab[0, :] = 1.0
    ab[1, :] = box.diagonal - E
    ab[2, :] = 1.0
    rhs = np.zeros(box.size)
    rhs[n] = 1.0
    return solve_banded((1, 1), ab, rhs)


def greens_function(box: BoxHamiltonian, E: float, m: int, n: int) -> float:
    if not 0 <= m <= box.L:
        raise IndexError(f"site {m} outside box 0..{box.L}")
    return float(greens_column(box, E, n)[m])


def greens_fractional_moment(box: BoxHamiltonian, E: float, s: float, m: int, n: int) -> float:
    if not 0 < s < 1:
        raise ValueError(f"s must lie in (0, 1), got {s}")
    return abs(greens_function(box, E, m, n)) ** s


def free_resolvent(L: int, E: float, m: int, n: int) -> float:
    """(J - E)^{-1}_{mn} for the free box 0..L, from Chebyshev polynomials of the second kind."""
    m, n = min(m, n), max(m, n)
    N = L + 1
    x = E / 2.0
    return float(-special.eval_chebyu(m, x) * special.eval_chebyu(N - 1 - n, x) / special.eval_chebyu(N, x))


@dataclass(frozen=True, eq=False)
class GreensDecay:
    n_grid: np.ndarray
    mean_moment: np.ndarray
    fit: StretchFit
    realizations: int
    skipped: int


def greens_decay_experiment(
    params: ModelParams,
    E: float,
    s: float,
    m: int,
    n_grid: Sequence[int] | None,
    L: int,
    reals: int,
    master_seed: int,
    threads: int | None = None,
) -> GreensDecay:
    """Mean of |G(m, n)|^s over realizations; boxes with an eigenvalue at E are skipped and counted."""
    if not 0 < s < 1:
        raise ValueError(f"s must lie in (0, 1), got {s}")
    n_grid = np.arange(1, L // 2 + 1) if n_grid is None else np.asarray(n_grid, dtype=np.int64)

    def one(_i, seed):
        try:
            col = greens_column(_box_for(params, seed, L), E, m)
        except EigenvalueCollision:
            return None
        return np.abs(col[n_grid]) ** s

    out = [o for o in map_realizations(one, reals, master_seed, threads) if o is not None]
    if not out:
        raise EigenvalueCollision("every realization collided with E")
    mean = np.mean(out, axis=0)
    return GreensDecay(n_grid, mean, stretch_fit(n_grid, np.log(mean)), len(out), reals - len(out))


# ---------------------------------------------------------------- transfer-matrix moments

@dataclass(frozen=True, eq=False)
class InverseTransferDecay:
    n_grid: np.ndarray
    mean: np.ndarray
    slope: float  # of log mean against n^(1 - 2 alpha)
    realizations: int


def inverse_transfer_moment(
    params: ModelParams,
    ep: EnergyPoint,
    s: float,
    m: int,
    n_grid: Sequence[int],
    reals: int,
    master_seed: int,
    threads: int | None = None,
) -> InverseTransferDecay:
    """Mean of ||T_n ... T_m X_m / ||X_m|| ||^{-s} for the solution with x_{-1} = 0, x_0 = 1."""
    from . import _kernels

    if not 0 < s < 1:
        raise ValueError(f"s must lie in (0, 1), got {s}")
    n_grid = np.asarray(n_grid, dtype=np.int64)
    if np.any(n_grid < m):
        raise ValueError("every n must be >= m")
    ckpt = np.concatenate([[m], n_grid + 1]).astype(np.int64)
    order = np.argsort(ckpt, kind="stable")
    top = int(n_grid.max()) + 1

    def one(_i, seed):
        pot = potential(sample_disorder(params.disorder, seed, top), params.envelope, params.lam)
        ln = np.empty(ckpt.shape[0])
        ln[order] = _kernels.direct_log_norms(pot, ep.E, 1.0, 0.0, 0, ckpt[order])
        return np.exp(-s * (ln[1:] - ln[0]))

    mean = np.mean(map_realizations(one, reals, master_seed, threads), axis=0)
    x = n_grid.astype(np.float64) ** (1.0 - 2.0 * params.alpha)
    slope = float(np.polyfit(x, np.log(mean), 1)[0]) if n_grid.size > 1 else float("nan")
    return InverseTransferDecay(n_grid, mean, slope, reals)


# ---------------------------------------------------------------- delocalization witness

@dataclass(frozen=True, eq=False)
class WitnessResult:
    """log of the weighted norm at each time and its running maximum."""

    t_grid: np.ndarray
    log_weighted: np.ndarray
    log_running_max: np.ndarray
    unitarity_defect: float

    def growth(self, t_early: float, t_late: float) -> float:
        """Ratio of running maxima at t <= t_late and t <= t_early, as a log."""
        i = np.flatnonzero(self.t_grid <= t_early)[-1]
        j = np.flatnonzero(self.t_grid <= t_late)[-1]
        return float(self.log_running_max[j] - self.log_running_max[i])


def stretched_divergence_witness(
    system: Eigensystem, I: tuple[float, float], p: float, t_grid: Sequence[float]
) -> WitnessResult:
    """sum_n exp(2 n^p) |(e^{-itH} psi)(n)|^2 for psi the normalised projection of delta_0 onto I.

    Handled in log space since the weight overflows for modest n.
    """
    if p <= 0:
        raise ValueError(f"p must be positive, got {p}")
    idx = system.in_window(*I)
    c = np.array(system.vectors[0, idx])
    nrm = float(np.linalg.norm(c))
    if idx.size == 0 or nrm == 0.0:
        raise ValueError(f"projection of delta_0 onto {I} is empty")
    c /= nrm
    psi = system.vectors[:, idx]
    E = system.values[idx]
    n = np.arange(system.box.size, dtype=np.float64)
    log_w = 2.0 * n**p
    t_grid = np.asarray(t_grid, dtype=np.float64)
    out = np.empty(t_grid.shape[0])
    defect = 0.0
    for i, t in enumerate(t_grid):
        phi = psi @ (np.exp(-1j * t * E) * c)
        amp2 = phi.real**2 + phi.imag**2
        defect = max(defect, abs(math.sqrt(float(np.sum(amp2))) - 1.0))
        with np.errstate(divide="ignore"):
            out[i] = special.logsumexp(log_w + np.log(amp2))
    return WitnessResult(t_grid, out, np.maximum.accumulate(out), defect)
