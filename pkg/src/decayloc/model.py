"""Model parameters, the decaying envelope and reproducible disorder sampling.

The operator is ``H = Delta + lam * V`` on the half line, with
``V delta_n = a_n omega_n delta_n``, ``a_0 = 1`` and ``a_n = n**-alpha``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "UnsupportedDistribution",
    "BandEdgeError",
    "DisorderSpec",
    "ModelParams",
    "DecayEnvelope",
    "DisorderRealization",
    "EnergyPoint",
    "derive_seed",
    "sample_disorder",
    "potential",
    "potential_value",
    "energy_point",
    "DEFAULT_BAND_GUARD",
    "DEFAULT_RESONANCE_TOL",
]

DEFAULT_BAND_GUARD = 1e-2
DEFAULT_RESONANCE_TOL = 1e-6
RESONANT_MOMENTA = (math.pi / 4, math.pi / 2, 3 * math.pi / 4)

_SQRT3 = math.sqrt(3.0)


class UnsupportedDistribution(ValueError):
    pass


class BandEdgeError(ValueError):
    pass


# kind -> (support bound B, density bound, E[omega^4]); every law is centered with unit variance
_LAWS = {
    "uniform": (_SQRT3, 1.0 / (2.0 * _SQRT3), 9.0 / 5.0),
    # no density: density-dependent bounds (Green's function moments) may degrade
    "bernoulli": (1.0, math.inf, 1.0),
}


@dataclass(frozen=True)
class DisorderSpec:
    """Law of the i.i.d. variables omega_n (centered, unit variance, bounded)."""

    kind: str = "uniform"

    def __post_init__(self):
        if self.kind not in _LAWS:
            raise UnsupportedDistribution(
                f"unsupported disorder kind {self.kind!r}; expected one of {sorted(_LAWS)}"
            )

    @property
    def support_bound(self) -> float:
        return _LAWS[self.kind][0]

    @property
    def density_bound(self) -> float:
        return _LAWS[self.kind][1]

    @property
    def fourth_moment(self) -> float:
        return _LAWS[self.kind][2]

    @property
    def has_density(self) -> bool:
        return math.isfinite(self.density_bound)

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "uniform":
            return rng.uniform(-_SQRT3, _SQRT3, n)
        return 2.0 * rng.integers(0, 2, n).astype(np.float64) - 1.0


@dataclass(frozen=True)
class ModelParams:
    alpha: float
    lam: float
    disorder: DisorderSpec = field(default_factory=DisorderSpec)

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be a positive real, got {self.alpha!r}")
        if not math.isfinite(self.lam):
            raise ValueError(f"lambda must be finite, got {self.lam!r}")

    @property
    def envelope(self) -> "DecayEnvelope":
        return DecayEnvelope(self.alpha)

    @property
    def regime(self) -> str:
        if self.alpha > 0.5:
            return "super-critical"
        if self.alpha == 0.5:
            return "critical"
        return "sub-critical"


@dataclass(frozen=True)
class DecayEnvelope:
    """a_0 = 1 and a_n = n**-alpha for n >= 1."""

    alpha: float

    def __call__(self, n: int) -> float:
        if n < 0:
            raise IndexError(f"site index must be >= 0, got {n}")
        return 1.0 if n == 0 else float(n) ** -self.alpha

    def values(self, length: int) -> np.ndarray:
        sites = np.arange(length, dtype=np.float64)
        if length:
            sites[0] = 1.0
        return sites**-self.alpha


@dataclass(frozen=True, eq=False)
class DisorderRealization:
    seed: int
    spec: DisorderSpec
    values: np.ndarray

    @property
    def length(self) -> int:
        return int(self.values.shape[0])

    def __len__(self) -> int:
        return self.length


def derive_seed(master_seed: int, index: int) -> int:
    """64-bit seed of realization ``index``, independent of evaluation order."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def sample_disorder(spec: DisorderSpec, seed: int, n: int) -> DisorderRealization:
    if n < 1:
        raise ValueError(f"need at least one site, got n={n}")
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    values = spec.draw(rng, int(n))
    values.setflags(write=False)
    return DisorderRealization(seed=int(seed), spec=spec, values=values)


def potential(r: DisorderRealization, env: DecayEnvelope, lam: float) -> np.ndarray:
    """Full potential array lam * a_n * omega_n, n = 0..length-1."""
    return lam * env.values(r.length) * r.values


def potential_value(r: DisorderRealization, env: DecayEnvelope, lam: float, n: int) -> float:
    if not 0 <= n < r.length:
        raise IndexError(f"site {n} outside realization of length {r.length}")
    return lam * env(n) * float(r.values[n])


@dataclass(frozen=True)
class EnergyPoint:
    E: float
    k: float
    resonant: bool

    @property
    def sin_k(self) -> float:
        return math.sin(self.k)


def energy_point(
    E: float,
    tol: float = DEFAULT_RESONANCE_TOL,
    guard: float = DEFAULT_BAND_GUARD,
) -> EnergyPoint:
    """Quasi-momentum k in (0, pi) with E = 2 cos k.

    Energies with |E| > 2 - guard are refused: the 1/sin k factors blow up at
    the band edges.
    """
    if not math.isfinite(E) or abs(E) > 2.0 - guard or abs(E) >= 2.0:
        raise BandEdgeError(f"E={E!r} outside the guarded band |E| <= {2.0 - guard}")
    k = math.acos(E / 2.0)
    resonant = min(abs(k - q) for q in RESONANT_MOMENTA) < tol
    return EnergyPoint(E=float(E), k=k, resonant=resonant)
