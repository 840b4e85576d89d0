"""Synthetic calibration data.

A scenario fixes the curvature law K(d) (pure Coulomb from the cylinder
geometry, or Coulomb plus a steeper extra power), the distance dependence of
the minimizing potential V0(d) and a noise model. Two acquisition protocols
are generated: per-distance bias sweeps (curvature technique) and constant
bias approaches (fast approach).

Random numbers come from numpy's PCG64 bit generator, seeded per run, with
all draws made in a fixed order so datasets are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import ContactError, DomainError
from .models import Geometry, Resonator, curvature_coefficient

MICRON = 1e-6


@dataclass(frozen=True)
class PiezoMap:
    """Linear actuator model: gap ``d = beta (V0_PZT - V_PZT)``, beta in m/V."""

    beta: float
    V0_PZT: float

    def __post_init__(self):
        if not self.beta > 0:
            raise DomainError(f"actuation coefficient must be > 0, got {self.beta}")


def piezo_to_gap(piezo: PiezoMap, V_PZT):
    V = np.asarray(V_PZT, dtype=float)
    if np.any(V >= piezo.V0_PZT):
        raise ContactError(f"V_PZT must stay below contact voltage {piezo.V0_PZT} V")
    d = piezo.beta * (piezo.V0_PZT - V)
    return float(d) if d.ndim == 0 else d


def gap_to_piezo(piezo: PiezoMap, d):
    d = np.asarray(d, dtype=float)
    if np.any(~(d > 0)):
        raise ContactError("gap must be > 0")
    V = piezo.V0_PZT - d / piezo.beta
    return float(V) if V.ndim == 0 else V


def hypothetical_shift(alpha1, alpha2, p, d, dV):
    """Squared-frequency shift with an extra power law ``alpha2 / d^p``, p > 2.5."""
    d = np.asarray(d, dtype=float)
    if np.any(~(d > 0)):
        raise DomainError("gap must be > 0")
    if not p > 2.5:
        raise DomainError(f"extra power must exceed 2.5, got {p}")
    if alpha1 < 0 or alpha2 < 0:
        raise DomainError("power-law coefficients must be nonnegative")
    out = -(alpha1 / d**2.5 + alpha2 / d**p) * np.square(dV)
    return float(out) if np.ndim(out) == 0 else out


# -- scenario pieces ---------------------------------------------------------

@dataclass(frozen=True)
class PureCoulomb:
    pass


@dataclass(frozen=True)
class ExtraPower:
    """``K(d) = alpha1/d^2.5 + alpha2/d^p`` in SI units (Hz^2 m^x / V^2)."""

    alpha1: float
    alpha2: float
    p: float

    def __post_init__(self):
        if not self.p > 2.5:
            raise DomainError(f"extra power must exceed 2.5, got {self.p}")
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise DomainError("power-law coefficients must be nonnegative")

    @classmethod
    def from_micron_units(cls, alpha1, ratio, p):
        """Coefficients quoted with d in micrometres, e.g. ``alpha1 = 1e4``."""
        return cls(alpha1 * MICRON**2.5, ratio * alpha1 * MICRON**p, p)


@dataclass(frozen=True)
class ConstantV0:
    v0: float

    def __call__(self, d):
        return np.full_like(np.asarray(d, dtype=float), self.v0)


@dataclass(frozen=True)
class LinearV0:
    """``V0(d) = v0_far + slope (d - d_ref)``; slope in V/m."""

    v0_far: float
    slope: float
    d_ref: float = 0.0

    def __call__(self, d):
        return self.v0_far + self.slope * (np.asarray(d, dtype=float) - self.d_ref)


@dataclass(frozen=True)
class SaturatingV0:
    """Flat at ``v0_near`` close to contact, relaxing to ``v0_far`` beyond ``d_knee``."""

    v0_far: float
    v0_near: float
    d_knee: float

    def __post_init__(self):
        if not self.d_knee > 0:
            raise DomainError("d_knee must be > 0")

    def __call__(self, d):
        d = np.asarray(d, dtype=float)
        return self.v0_near + (self.v0_far - self.v0_near) * -np.expm1(-d / self.d_knee)


@dataclass(frozen=True)
class NoiseModel:
    """Per-run noise and drift.

    ``sigma_nu`` is both the reported per-point frequency uncertainty and the
    amplitude of the injected Gaussian noise; ``inject=False`` keeps the
    reported uncertainty but draws no noise. ``kel_drift_frac`` is the
    fractional amplitude of a one-cycle sinusoidal drift of the electrostatic
    shift over the run, ``nu0_drift`` (Hz) a linear ramp of the free
    frequency over the run, ``v0_sigma`` (V) a Gaussian jitter of V0 per
    distance.
    """

    sigma_nu: float = 0.0
    kel_drift_frac: float = 0.0
    v0_sigma: float = 0.0
    nu0_drift: float = 0.0
    seed: int = 0
    inject: bool = True

    def __post_init__(self):
        for name in ("sigma_nu", "kel_drift_frac", "v0_sigma"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be nonnegative")


ForceModel = Union[PureCoulomb, ExtraPower]
V0Profile = Union[ConstantV0, LinearV0, SaturatingV0]


@dataclass(frozen=True)
class Scenario:
    resonator: Resonator
    force_model: ForceModel = field(default_factory=PureCoulomb)
    v0_profile: V0Profile = field(default_factory=lambda: ConstantV0(0.0))
    noise: NoiseModel = field(default_factory=NoiseModel)
    geometry: Geometry | None = None

    def __post_init__(self):
        if isinstance(self.force_model, PureCoulomb) and self.geometry is None:
            raise DomainError("a pure Coulomb scenario needs a cylinder geometry")

    def curvature(self, d):
        """Curvature coefficient K(d) in Hz^2/V^2."""
        if isinstance(self.force_model, PureCoulomb):
            return np.asarray(curvature_coefficient(self.geometry, self.resonator, d))
        m = self.force_model
        return -np.asarray(hypothetical_shift(m.alpha1, m.alpha2, m.p, d, 1.0))

    def shift(self, d, dV):
        return -self.curvature(d) * np.square(dV)


@dataclass(frozen=True)
class CalibrationPoint:
    V_PZT: float
    V_bias: float
    nu: float
    sigma_nu: float
    timestamp: int
    run_id: int = 0

    def __post_init__(self):
        if not self.nu > 0:
            raise DomainError(f"resonance frequency must be > 0, got {self.nu}")
        if self.sigma_nu < 0:
            raise DomainError("sigma_nu must be nonnegative")


def _emit(scenario, piezo, positions, biases_per_position, run_id):
    noise = scenario.noise
    rng = np.random.Generator(np.random.PCG64(noise.seed))
    positions = np.asarray(positions, dtype=float)
    gaps = piezo_to_gap(piezo, positions)
    gaps = np.atleast_1d(gaps)
    n_total = sum(len(b) for b in biases_per_position)
    # fixed draw order: V0 jitter per position, then one normal per point
    v0_jitter = rng.standard_normal(len(positions))
    nu_noise = rng.standard_normal(n_total)
    scale = 1.0 if noise.inject else 0.0
    v0 = scenario.v0_profile(gaps) + scale * noise.v0_sigma * v0_jitter
    K = scenario.curvature(gaps)
    nu0 = scenario.resonator.nu0

    points = []
    t = 0
    for i, V_PZT in enumerate(positions):
        for V_bias in biases_per_position[i]:
            phase = t / n_total
            drift = 1.0 + noise.kel_drift_frac * np.sin(2.0 * np.pi * phase)
            nu0_t = nu0 + noise.nu0_drift * phase
            nu_sq = nu0_t**2 - drift * K[i] * (V_bias - v0[i]) ** 2
            if not nu_sq > 0:
                raise DomainError(f"electrostatic shift exceeds nu0^2 at V_PZT={V_PZT}, V_bias={V_bias}")
            nu = np.sqrt(nu_sq) + scale * noise.sigma_nu * nu_noise[t]
            points.append(CalibrationPoint(float(V_PZT), float(V_bias), float(nu), noise.sigma_nu, t, run_id))
            t += 1
    return points


def generate_calibration_run(scenario: Scenario, piezo: PiezoMap, V_PZT: Sequence[float],
                             V_bias: Sequence[float], run_id: int = 0):
    """Curvature-technique run: a full bias sweep at each piezo voltage, in the given order."""
    V_bias = [float(v) for v in V_bias]
    return _emit(scenario, piezo, V_PZT, [V_bias] * len(V_PZT), run_id)


def generate_fast_approach_run(scenario: Scenario, piezo: PiezoMap, V_PZT: Sequence[float],
                               V_bias, run_id: int = 0):
    """Fast-approach run at constant bias.

    ``V_bias`` may be a sequence, in which case every bias is applied in turn
    at each position (interleaved acquisition).
    """
    biases = [float(V_bias)] if np.ndim(V_bias) == 0 else [float(v) for v in V_bias]
    return _emit(scenario, piezo, V_PZT, [biases] * len(V_PZT), run_id)
