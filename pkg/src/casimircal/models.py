"""Closed-form electrostatic and ideal Casimir models.

Sphere-plane, cylinder-plane and parallel-plane geometries. Forces are
returned as positive magnitudes of an attraction; squared-frequency shifts
are signed and negative for an attractive force gradient.

Which cylinder length is used where:

* the exact and PFA cylinder Coulomb forces use the geometric length ``L``;
* frequency shifts, the capacitance and the three-geometry force table
  (:func:`coulomb_force_pfa`, :func:`casimir_force_ideal`) use the effective
  exposure length ``L_eff``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .constants import EPSILON_0, HBAR_C
from .errors import DomainError


class GeometryKind(str, enum.Enum):
    SPHERE_PLANE = "sphere-plane"
    CYLINDER_PLANE = "cylinder-plane"
    PARALLEL_PLANES = "parallel-planes"


# pi^2 / xi gives the squared equivalent Casimir voltage in units of hbar c / eps0 / d^2
_XI = {
    GeometryKind.SPHERE_PLANE: 360.0,
    GeometryKind.CYLINDER_PLANE: 192.0,
    GeometryKind.PARALLEL_PLANES: 120.0,
}


@dataclass(frozen=True)
class Geometry:
    """Configuration of the two interacting bodies.

    Only the fields relevant to ``kind`` are required: ``a``, ``L`` (and
    optionally ``L_eff``, defaulting to ``L``) for a cylinder, ``R`` for a
    sphere and ``S`` for parallel plates. Lengths in m, area in m^2.
    """

    kind: GeometryKind
    a: Optional[float] = None
    L: Optional[float] = None
    L_eff: Optional[float] = None
    R: Optional[float] = None
    S: Optional[float] = None

    def __post_init__(self):
        kind = GeometryKind(self.kind)
        object.__setattr__(self, "kind", kind)
        required = {
            GeometryKind.CYLINDER_PLANE: ("a", "L"),
            GeometryKind.SPHERE_PLANE: ("R",),
            GeometryKind.PARALLEL_PLANES: ("S",),
        }[kind]
        for name in required:
            value = getattr(self, name)
            if value is None or not value > 0:
                raise DomainError(f"{kind.value} geometry needs {name} > 0, got {value!r}")
        if kind is GeometryKind.CYLINDER_PLANE:
            if self.L_eff is None:
                object.__setattr__(self, "L_eff", self.L)
            if not 0 < self.L_eff <= self.L:
                raise DomainError(f"need 0 < L_eff <= L, got L_eff={self.L_eff}, L={self.L}")

    @classmethod
    def cylinder(cls, a, L, L_eff=None):
        return cls(GeometryKind.CYLINDER_PLANE, a=a, L=L, L_eff=L_eff)

    @classmethod
    def sphere(cls, R):
        return cls(GeometryKind.SPHERE_PLANE, R=R)

    @classmethod
    def planes(cls, S):
        return cls(GeometryKind.PARALLEL_PLANES, S=S)


@dataclass(frozen=True)
class Resonator:
    m_eff: float  # kg
    nu0: float  # Hz

    def __post_init__(self):
        if not (self.m_eff > 0 and self.nu0 > 0):
            raise DomainError(f"resonator needs m_eff > 0 and nu0 > 0, got {self}")


@dataclass(frozen=True)
class TiltState:
    """Tilt of the cylinder axis; ``alpha = L sin(theta) / (2 d)``."""

    theta: float
    alpha: float

    @classmethod
    def from_angle(cls, theta, L, d):
        return cls(theta=theta, alpha=L * np.sin(theta) / (2.0 * d))


def _check_gap(d):
    d = np.asarray(d, dtype=float)
    if np.any(~(d > 0)):
        raise DomainError(f"gap must be > 0, got {d}")
    return d


def _check_alpha(alpha):
    alpha = np.asarray(alpha, dtype=float)
    if np.any(~(np.abs(alpha) < 1)):
        raise DomainError(f"tilt parameter must satisfy |alpha| < 1, got {alpha}")
    return alpha


def _require_cylinder(geom):
    if geom.kind is not GeometryKind.CYLINDER_PLANE:
        raise DomainError(f"cylinder-plane geometry required, got {geom.kind.value}")


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def coulomb_force_cylinder_exact(geom: Geometry, d, V):
    """Exact force between an infinitely long cylinder and a plane.

    Idealized: only meaningful for ``L >> a``. Used to check convergence of
    the PFA expression as ``d/a -> 0``.
    """
    _require_cylinder(geom)
    d = _check_gap(d)
    x = d / geom.a
    root = np.sqrt(x * (2.0 + x))  # Delta / a
    acosh = np.log1p(x + root)  # arccosh(h / a), stable for small x
    # ln((h - Delta)/(h + Delta)) = -2 arccosh(h/a)
    force = 4.0 * np.pi * EPSILON_0 * geom.L * np.square(V) / (geom.a * root * 4.0 * acosh**2)
    return _out(force)


def coulomb_force_cylinder_pfa(geom: Geometry, d, V):
    _require_cylinder(geom)
    d = _check_gap(d)
    return _out(np.pi * EPSILON_0 * np.sqrt(geom.a) * geom.L * np.square(V) / (2.0 * np.sqrt(2.0) * d**1.5))


def nonparallel_force_factor(alpha):
    """Force correction for a tilted cylinder, ``1 + 5 alpha^2 / 8 + O(alpha^4)``.

    Evaluated in a rationalized form that has no cancellation at small
    ``alpha``, so no series branch is needed.
    """
    alpha = np.abs(_check_alpha(alpha))
    sp, sm = np.sqrt(1.0 + alpha), np.sqrt(1.0 - alpha)
    return _out(2.0 / ((sp + sm) * sp * sm))


def frequency_tilt_factor(alpha):
    """Tilt correction of the squared-frequency shift, ``1 + 35 alpha^2 / 24 + ...``."""
    alpha = np.abs(_check_alpha(alpha))
    p15, m15 = (1.0 + alpha) ** 1.5, (1.0 - alpha) ** 1.5
    return _out(2.0 * (3.0 + alpha**2) / (3.0 * (p15 + m15) * (p15 * m15)))


def capacitance_tilt_factor(alpha):
    alpha = np.abs(_check_alpha(alpha))
    return _out(2.0 / (np.sqrt(1.0 + alpha) + np.sqrt(1.0 - alpha)))


def curvature_coefficient(geom: Geometry, res: Resonator, d):
    """K_el in Hz^2/V^2 such that the shift is ``-K_el (V - V0)^2``."""
    _require_cylinder(geom)
    d = _check_gap(d)
    pref = 3.0 * EPSILON_0 * np.sqrt(geom.a) * geom.L_eff / (16.0 * np.sqrt(2.0) * np.pi * res.m_eff)
    return _out(pref / d**2.5)


def electrostatic_freq_shift(geom: Geometry, res: Resonator, d, V, V0=0.0, alpha=0.0):
    """Squared-frequency shift ``nu^2 - nu0^2`` of a (possibly tilted) cylinder."""
    shift = -np.asarray(curvature_coefficient(geom, res, d)) * frequency_tilt_factor(alpha)
    return _out(shift * np.square(np.asarray(V, dtype=float) - V0))


def capacitance_cylinder_pfa(geom: Geometry, d, alpha=0.0):
    _require_cylinder(geom)
    d = _check_gap(d)
    base = 2.0 * np.pi * EPSILON_0 * geom.L_eff * np.sqrt(geom.a) / np.sqrt(2.0 * d)
    return _out(base * capacitance_tilt_factor(alpha))


def casimir_force_ideal(geom: Geometry, d):
    """Ideal (perfect reflector, zero temperature) Casimir force magnitude."""
    d = _check_gap(d)
    if geom.kind is GeometryKind.SPHERE_PLANE:
        f = np.pi**3 / 360.0 * HBAR_C * geom.R / d**3
    elif geom.kind is GeometryKind.CYLINDER_PLANE:
        f = np.pi**3 / (384.0 * np.sqrt(2.0)) * HBAR_C * geom.L_eff * np.sqrt(geom.a) / d**3.5
    else:
        f = np.pi**2 / 240.0 * HBAR_C * geom.S / d**4
    return _out(f)


def coulomb_force_pfa(geom: Geometry, d, V):
    """PFA Coulomb force magnitude for any of the three geometries."""
    d = _check_gap(d)
    V2 = np.square(np.asarray(V, dtype=float))
    if geom.kind is GeometryKind.SPHERE_PLANE:
        f = np.pi * EPSILON_0 * geom.R * V2 / d
    elif geom.kind is GeometryKind.CYLINDER_PLANE:
        f = np.pi * EPSILON_0 / (2.0 * np.sqrt(2.0)) * geom.L_eff * np.sqrt(geom.a) * V2 / d**1.5
    else:
        f = 0.5 * EPSILON_0 * geom.S * V2 / d**2
    return _out(f)


def equivalent_casimir_voltage(kind, d):
    """Bias whose PFA Coulomb force equals the ideal Casimir force at gap ``d``."""
    kind = GeometryKind(kind)
    d = _check_gap(d)
    return _out(np.sqrt(np.pi**2 / _XI[kind]) * np.sqrt(HBAR_C / EPSILON_0) / d)
