"""PFA frequency shifts of a locally deformed cylinder.

Two deformation shapes running along the whole cylinder length: a flat
facet of half-width ``b`` and a triangular tip of half-width ``b`` and
height ``b_prime``. The squared-frequency shift is

    -eps0 L_eff (V - V0)^2 / (4 pi^2 m_eff) * d^2/dd^2 [profile(d)]

where the profile is the PFA "inverse gap" integral across the cylinder
cross-section.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .constants import EPSILON_0
from .errors import DomainError, FitError
from .models import Geometry, Resonator, _check_gap, _require_cylinder


class DeformationKind(str, enum.Enum):
    FLAT_FACET = "flat-facet"
    TRIANGULAR_TIP = "triangular-tip"


@dataclass(frozen=True)
class Deformation:
    kind: DeformationKind
    b: float
    b_prime: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", DeformationKind(self.kind))
        if not self.b > 0:
            raise DomainError(f"deformation half-width must be > 0, got {self.b}")
        if self.kind is DeformationKind.TRIANGULAR_TIP and not (self.b_prime is not None and self.b_prime > 0):
            raise DomainError(f"tip height must be > 0, got {self.b_prime}")


def _arctan_ratio(z):
    """arctan(sqrt(z))/sqrt(z), continued to z < 0 as artanh(sqrt(-z))/sqrt(-z)."""
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    pos, neg = z > 1e-12, z < -1e-12
    s = np.sqrt(z[pos])
    out[pos] = np.arctan(s) / s
    s = np.sqrt(-z[neg])
    out[neg] = np.arctanh(s) / s
    small = ~(pos | neg)
    out[small] = 1.0 - z[small] / 3.0
    return out


def profile_f_inc(d, a, b):
    """Incomplete-cylinder profile ``sqrt(2a/d) arctan(sqrt(2ad/b^2))``.

    The flat facet shifts the argument to ``d - b^2/(2a)``, which is negative
    for wide facets; the PFA integral stays finite there and is evaluated via
    the analytic continuation, valid for ``d > -b^2/(2a)``.
    """
    d = np.asarray(d, dtype=float)
    if np.any(~(d > -b * b / (2.0 * a))):
        raise DomainError(f"incomplete-cylinder argument must exceed -b^2/(2a), got {d}")
    out = 2.0 * a / b * _arctan_ratio(2.0 * a * d / (b * b))
    return float(out) if out.ndim == 0 else out


def profile_f_flat(d, b):
    d = _check_gap(d)
    out = b / d
    return float(out) if out.ndim == 0 else out


def profile_f_tip(d, b, b_prime):
    d = _check_gap(d)
    out = b / b_prime * np.log1p(b_prime / d)
    return float(out) if out.ndim == 0 else out


def second_derivative_richardson(f, x, h):
    """Central second difference with one Richardson step, error O(h^4)."""
    def central(step):
        return (f(x + step) - 2.0 * f(x) + f(x - step)) / step**2
    return (4.0 * central(h / 2.0) - central(h)) / 3.0


def profile_second_derivative(deformation: Deformation, a, d, rel_step=1e-4):
    """Second derivative in ``d`` of the full deformed-cylinder profile.

    Facet and tip terms are differentiated analytically; the incomplete
    cylinder term numerically, with a step of ``rel_step`` times the distance
    of its argument from the branch point at ``-b^2/(2a)`` (equal to ``d``
    for a facet).
    """
    d = _check_gap(d)
    b = deformation.b
    if deformation.kind is DeformationKind.FLAT_FACET:
        shift = -b * b / (2.0 * a)
        extra = 2.0 * b / d**3
    else:
        bp = deformation.b_prime
        shift = bp
        extra = b / bp * (1.0 / d**2 - 1.0 / (d + bp) ** 2)
    h = rel_step * (d + shift + b * b / (2.0 * a))
    inc = second_derivative_richardson(lambda x: profile_f_inc(x, a, b), d + shift, h)
    return inc + extra


def deformed_freq_shift(deformation: Deformation, geom: Geometry, res: Resonator, d, dV):
    """Squared-frequency shift of the deformed cylinder; ``dV = V - V0``."""
    _require_cylinder(geom)
    d = _check_gap(d)
    pref = EPSILON_0 * geom.L_eff / (4.0 * np.pi**2 * res.m_eff)
    out = -pref * np.square(dV) * profile_second_derivative(deformation, geom.a, d)
    return float(out) if np.ndim(out) == 0 else out


def deformation_exponent(deformation, geom, res, d_range, n_points=50):
    """Effective exponent B of ``|shift| = A / d^B`` over a log-spaced gap grid.

    Unweighted linear regression of ``log|shift|`` on ``log d``.
    """
    if n_points < 3:
        raise DomainError("need at least 3 points for the exponent fit")
    d = np.geomspace(d_range[0], d_range[1], n_points)
    shift = np.abs(deformed_freq_shift(deformation, geom, res, d, 1.0))
    if not np.all(shift > 0):
        raise FitError("frequency shift vanishes; exponent undefined")
    slope, _ = np.polyfit(np.log(d), np.log(shift), 1)
    return float(-slope)
