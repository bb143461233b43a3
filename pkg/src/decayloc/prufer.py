"""Transfer matrices, overflow-safe products and Prufer variables.

State conventions: a chain state is indexed by the site ``n`` it sits at; one
step consumes the potential ``V_n`` and moves to ``n + 1``.  With
``X_n = (x_n, x_{n-1})`` the eigenvalue equation reads ``X_{n+1} = T_n X_n``.
In the free-solution basis ``Y_n`` the same step is
``Y_{n+1} = (I + V_n / sin k * A_n) Y_n`` and the polar form
``Y_n[0] + i Y_n[1] = R_n exp(i theta_n)`` with ``theta_bar_n = n k - theta_n``
gives ``(x_n, x_{n-1}) = R_n (cos theta_bar_n, cos(theta_bar_n - k))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import EnergyPoint

__all__ = [
    "TransferMatrix",
    "TransferProduct",
    "PruferState",
    "single_transfer",
    "accumulate",
    "accumulate_potential",
    "spectral_norm",
    "prufer_init",
    "prufer_step",
    "reconstruct_solution",
    "norm_upper_from_angles",
    "transfer_norm_bounds",
    "initial_solution",
    "prufer_chain",
    "prufer_trajectory",
    "direct_trajectory",
    "matrix_log_norms",
]


def spectral_norm(m) -> float:
    """Largest singular value of a 2x2 matrix, closed form."""
    a, b = float(m[0][0]), float(m[0][1])
    c, d = float(m[1][0]), float(m[1][1])
    return _kernels.spectral_norm2(a, b, c, d)


@dataclass(frozen=True)
class TransferMatrix:
    a: float
    b: float
    c: float
    d: float

    @property
    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    def as_array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])

    @property
    def norm(self) -> float:
        return _kernels.spectral_norm2(self.a, self.b, self.c, self.d)


def single_transfer(ep: EnergyPoint, V: float) -> TransferMatrix:
    return TransferMatrix(ep.E - V, -1.0, 1.0, 0.0)


@dataclass(frozen=True, eq=False)
class TransferProduct:
    """Product ``exp(log_scale) * matrix`` of ``steps`` transfer matrices.

    The stored matrix is kept with spectral norm in [1, 2].
    """

    matrix: np.ndarray
    log_scale: float = 0.0
    steps: int = 0

    @classmethod
    def identity(cls) -> "TransferProduct":
        return cls(np.eye(2), 0.0, 0)

    @property
    def log_norm(self) -> float:
        return self.log_scale + math.log(spectral_norm(self.matrix))

    @property
    def det(self) -> float:
        """Determinant of the full product; only representable while log_scale is moderate."""
        m = self.matrix
        return float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]) * math.exp(2.0 * self.log_scale)

    def full(self) -> np.ndarray:
        return math.exp(self.log_scale) * self.matrix


def _renormalize(m: np.ndarray, log_scale: float) -> tuple[np.ndarray, float]:
    nrm = spectral_norm(m)
    if nrm > 2.0 or nrm < 1.0:
        return m / nrm, log_scale + math.log(nrm)
    return m, log_scale


def accumulate(prod: TransferProduct, t: TransferMatrix) -> TransferProduct:
    """Return ``t @ prod``, renormalised when the stored norm leaves [1, 2]."""
    m, scale = _renormalize(t.as_array() @ prod.matrix, prod.log_scale)
    return TransferProduct(m, scale, prod.steps + 1)


def accumulate_potential(
    prod: TransferProduct, pot: np.ndarray, ep: EnergyPoint, start: int, stop: int
) -> TransferProduct:
    """Apply T_n for n = start..stop-1 (compiled path of ``accumulate``)."""
    pot = np.ascontiguousarray(pot, dtype=np.float64)
    if not 0 <= start <= stop <= pot.shape[0]:
        raise IndexError(f"range [{start}, {stop}) outside potential of length {pot.shape[0]}")
    m, scale = _kernels.product_run(pot, ep.E, prod.matrix.astype(np.float64), prod.log_scale, start, stop)
    return TransferProduct(m, scale, prod.steps + (stop - start))


@dataclass(frozen=True)
class PruferState:
    log_radius: float
    theta_bar: float
    n: int

    def theta(self, k: float) -> float:
        """theta_n = n k - theta_bar_n."""
        return self.n * k - self.theta_bar


def prufer_init(theta0: float, ep: EnergyPoint) -> PruferState:
    """State at n = 1 with Y_1 = (cos theta0, sin theta0) and R_1 = 1."""
    theta1 = math.atan2(math.sin(theta0), math.cos(theta0)) % (2.0 * math.pi)
    return PruferState(0.0, ep.k - theta1, 1)


def prufer_step(s: PruferState, V: float, ep: EnergyPoint) -> PruferState:
    log_r, tb, _, mod2 = _kernels.prufer_step_raw(s.log_radius, s.theta_bar, float(V), ep.k, ep.sin_k)
    if not mod2 > 0.0:
        raise FloatingPointError(f"non-positive radius factor {mod2!r} at n={s.n}")
    return PruferState(log_r, tb, s.n + 1)


def reconstruct_solution(s: PruferState, ep: EnergyPoint) -> tuple[float, float]:
    """(x_n, x_{n-1}); overflows for huge log_radius, use the unit form then."""
    r = math.exp(s.log_radius)
    return r * math.cos(s.theta_bar), r * math.cos(s.theta_bar - ep.k)


def initial_solution(theta0: float, ep: EnergyPoint) -> tuple[float, float]:
    """(x_1, x_0) of the solution whose Prufer chain starts at theta0."""
    return reconstruct_solution(prufer_init(theta0, ep), ep)


def norm_upper_from_angles(rn_theta1: float, rn_theta2: float, theta1: float, theta2: float) -> float:
    """max of the two propagated norms divided by sin(|theta1 - theta2| / 2).

    Bounds ``||A||`` for any 2x2 ``A`` given ``||A e(theta_i)||``.
    """
    sep = abs(theta1 - theta2)
    if sep == 0.0 or sep > math.pi / 2 + 1e-15:
        raise ValueError(f"angle separation must lie in (0, pi/2], got {sep!r}")
    return max(rn_theta1, rn_theta2) / math.sin(sep / 2.0)


def transfer_norm_bounds(
    log_r1: float, log_r2: float, ep: EnergyPoint, theta1: float, theta2: float
) -> tuple[float, float]:
    """Lower/upper bounds on log ||T_{n-1} ... T_1|| from two Prufer radii.

    lower: log(sin k / 4) + max log R, upper: log(4 / (sin k sin(sep/2))) + max log R.
    """
    sep = abs(theta1 - theta2)
    if sep == 0.0 or sep > math.pi / 2 + 1e-15:
        raise ValueError(f"angle separation must lie in (0, pi/2], got {sep!r}")
    top = max(log_r1, log_r2)
    lo = math.log(ep.sin_k / 4.0) + top
    hi = math.log(4.0 / (ep.sin_k * math.sin(sep / 2.0))) + top
    return lo, hi


def _check_length(pot: np.ndarray, n: int) -> np.ndarray:
    pot = np.ascontiguousarray(pot, dtype=np.float64)
    if n < 0 or pot.shape[0] < n + 1:
        raise IndexError(f"a chain of {n} steps needs {n + 1} potential values, got {pot.shape[0]}")
    return pot


def prufer_chain(
    pot: np.ndarray,
    ep: EnergyPoint,
    theta0: float,
    n: int,
    checkpoints=None,
    start: PruferState | None = None,
) -> tuple[PruferState, np.ndarray, np.ndarray]:
    """Run ``n`` steps from ``start`` (default: ``prufer_init(theta0)``).

    Returns the final state and (log R, theta_bar) recorded at the requested
    state indices.
    """
    s0 = prufer_init(theta0, ep) if start is None else start
    pot = _check_length(pot, s0.n + n - 1)
    ck = np.asarray([] if checkpoints is None else checkpoints, dtype=np.int64)
    log_r, tb, rec_lr, rec_tb = _kernels.prufer_run(pot, ep.k, s0.theta_bar, s0.n, s0.n + n, ck)
    return PruferState(s0.log_radius + log_r, tb, s0.n + n), s0.log_radius + rec_lr, rec_tb


def prufer_trajectory(pot: np.ndarray, ep: EnergyPoint, theta0: float, n: int):
    """(log R, theta_bar, arg of the step factor) for states 1..n+1."""
    pot = _check_length(pot, n)
    s0 = prufer_init(theta0, ep)
    return _kernels.prufer_trace(pot, ep.k, s0.theta_bar, 1, 1 + n)


def direct_trajectory(pot: np.ndarray, ep: EnergyPoint, x1: float, x0: float, n: int):
    """log ||X_j|| and unit X_j for j = 1..n+1 from x_{j+1} = (E - V_j) x_j - x_{j-1}."""
    pot = _check_length(pot, n)
    return _kernels.direct_trace(pot, ep.E, float(x1), float(x0), 1, 1 + n)


def matrix_log_norms(pot: np.ndarray, ep: EnergyPoint, theta0: float, n: int) -> np.ndarray:
    """log ||Y_j|| for j = 1..n+1 from the 2x2 matrix form of the Prufer recursion."""
    pot = _check_length(pot, n)
    return _kernels.matrix_trace(pot, ep.k, math.cos(theta0), math.sin(theta0), 1, 1 + n)
