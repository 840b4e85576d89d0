"""Electrostatic patch-potential interaction.

Patches are described by an isotropic power spectral density S(k) (V^2 m)
normalized so that ``V_rms^2 = int_0^inf k S(k) dk``. The plane-plane
interaction energy per unit area and the PFA cylinder-plane force are
wavenumber integrals of S against exponentially decaying kernels; both are
independent of any applied bias, which only adds the ordinary Coulomb term.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, special

from .constants import EPSILON_0
from .errors import DomainError, QuadratureError
from .models import Geometry, _check_gap, _require_cylinder, coulomb_force_cylinder_pfa

DEFAULT_RTOL = 1e-8
# below k d = _SMALL_KD the kernels are replaced by their k -> 0 limits
_SMALL_KD = 1e-8


class SpectrumKind(str, enum.Enum):
    FLAT_BAND = "flat-band"
    GAUSSIAN_BAND = "gaussian-band"
    TABULATED = "tabulated"


@dataclass(frozen=True)
class PatchSpectrum:
    """Patch power spectral density.

    FlatBand is ``amplitude`` on ``[k_min, k_max]``. GaussianBand is a
    Gaussian of peak ``amplitude`` centred on the band middle with standard
    deviation a quarter of the band width, truncated at k = 0. Tabulated is
    piecewise linear between ``table`` knots and zero outside them.
    """

    kind: SpectrumKind
    k_min: float = 0.0
    k_max: float = 0.0
    amplitude: float = 0.0
    table: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "kind", SpectrumKind(self.kind))
        if self.kind is SpectrumKind.TABULATED:
            tab = np.asarray(self.table, dtype=float)
            if tab.ndim != 2 or tab.shape[1] != 2 or len(tab) < 2:
                raise DomainError("tabulated spectrum needs at least two (k, S) rows")
            if np.any(np.diff(tab[:, 0]) <= 0) or tab[0, 0] < 0:
                raise DomainError("tabulated wavenumbers must be nonnegative and increasing")
            if np.any(tab[:, 1] < 0):
                raise DomainError("spectral density must be nonnegative")
            object.__setattr__(self, "table", tuple(map(tuple, tab)))
        else:
            if not 0 <= self.k_min < self.k_max:
                raise DomainError(f"need 0 <= k_min < k_max, got {self.k_min}, {self.k_max}")
            if self.amplitude < 0:
                raise DomainError("spectral amplitude must be nonnegative")

    @classmethod
    def flat_band(cls, k_min, k_max, amplitude):
        return cls(SpectrumKind.FLAT_BAND, k_min=k_min, k_max=k_max, amplitude=amplitude)

    @classmethod
    def gaussian_band(cls, k_min, k_max, amplitude):
        return cls(SpectrumKind.GAUSSIAN_BAND, k_min=k_min, k_max=k_max, amplitude=amplitude)

    @classmethod
    def tabulated(cls, rows):
        return cls(SpectrumKind.TABULATED, table=rows)

    @classmethod
    def from_file(cls, path):
        """Two-column text file: k (1/m), S (V^2 m); '#' starts a comment."""
        rows = np.loadtxt(Path(path), comments="#", ndmin=2)
        return cls.tabulated(rows)

    def density(self, k):
        k = np.asarray(k, dtype=float)
        if self.kind is SpectrumKind.FLAT_BAND:
            return np.where((k >= self.k_min) & (k <= self.k_max), self.amplitude, 0.0)
        if self.kind is SpectrumKind.GAUSSIAN_BAND:
            centre, sigma = self._gauss()
            return self.amplitude * np.exp(-0.5 * ((k - centre) / sigma) ** 2)
        tab = np.asarray(self.table)
        return np.interp(k, tab[:, 0], tab[:, 1], left=0.0, right=0.0)

    def _gauss(self):
        return 0.5 * (self.k_min + self.k_max), 0.25 * (self.k_max - self.k_min)

    def is_zero(self):
        if self.kind is SpectrumKind.TABULATED:
            return not np.any(np.asarray(self.table)[:, 1] > 0)
        return self.amplitude == 0

    def upper_edge(self):
        """Largest wavenumber carrying appreciable weight."""
        if self.kind is SpectrumKind.TABULATED:
            return self.table[-1][0]
        return self.k_max

    def segments(self, k_cut):
        """Integration intervals on [0, k_cut] with breakpoints where S has kinks."""
        if self.kind is SpectrumKind.FLAT_BAND:
            edges = [self.k_min, min(self.k_max, k_cut)]
        elif self.kind is SpectrumKind.GAUSSIAN_BAND:
            centre, sigma = self._gauss()
            pts = [0.0] + [centre + n * sigma for n in range(-12, 13) if 0 < centre + n * sigma < k_cut] + [k_cut]
            edges = sorted(set(pts))
        else:
            knots = [k for k, _ in self.table if k <= k_cut]
            if self.table[-1][0] > k_cut:
                knots.append(k_cut)
            edges = knots
        return [(lo, hi) for lo, hi in zip(edges[:-1], edges[1:]) if hi > lo]

    def sup_beyond(self, k_cut):
        """Upper bound of S(k) for k >= k_cut."""
        if self.kind is SpectrumKind.FLAT_BAND:
            return self.amplitude if k_cut <= self.k_max else 0.0
        if self.kind is SpectrumKind.GAUSSIAN_BAND:
            centre, _ = self._gauss()
            return float(self.density(max(k_cut, centre)))
        tab = np.asarray(self.table)
        beyond = tab[tab[:, 0] >= k_cut, 1]
        return float(max(beyond.max(initial=0.0), self.density(k_cut)))


def _integrate(spec, kernel, k_cut, rtol):
    total, err = 0.0, 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        for lo, hi in spec.segments(k_cut):
            try:
                val, e = integrate.quad(lambda k: kernel(k) * spec.density(k), lo, hi,
                                        epsabs=0.0, epsrel=rtol, limit=200)
            except integrate.IntegrationWarning as exc:
                raise QuadratureError(f"quadrature on [{lo:g}, {hi:g}] did not converge: {exc}") from exc
            total += val
            err += e
    return total, err


def v_rms(spec: PatchSpectrum, rtol=DEFAULT_RTOL, return_error=False):
    """RMS patch voltage ``sqrt(int k S(k) dk)``."""
    if spec.is_zero():
        value, err = 0.0, 0.0
    elif spec.kind is SpectrumKind.FLAT_BAND:
        value, err = np.sqrt(spec.amplitude * (spec.k_max**2 - spec.k_min**2) / 2.0), 0.0
    else:
        if spec.kind is SpectrumKind.GAUSSIAN_BAND:
            centre, sigma = spec._gauss()
            k_cut = centre + 40.0 * sigma
        else:
            k_cut = spec.upper_edge()
        sq, sq_err = _integrate(spec, lambda k: k, k_cut, rtol)
        value = np.sqrt(sq)
        err = 0.5 * sq_err / value if value > 0 else np.sqrt(sq_err)
    return (float(value), float(err)) if return_error else float(value)


def _k_cut(spec, d):
    return max(50.0 / d, 10.0 * spec.upper_edge())


def _upper_gamma(s, x):
    return special.gammaincc(s, x) * special.gamma(s)


def _energy_kernel(d):
    def kernel(k):
        kd = k * d
        if kd < _SMALL_KD:
            return k / d
        # e^{-kd}/sinh(kd) = 2/(e^{2kd} - 1)
        return 2.0 * k * k / np.expm1(2.0 * kd)
    return kernel


def _force_kernel(d):
    def kernel(k):
        kd = k * d
        if kd < _SMALL_KD:
            return k / (d * d)
        # e^{-2kd}/sinh^2(kd) = 4 e^{-4kd}/(1 - e^{-2kd})^2, finite for all kd
        return 4.0 * k**3 * np.exp(-4.0 * kd) / np.expm1(-2.0 * kd) ** 2
    return kernel


def patch_energy_pp(spec: PatchSpectrum, d, rtol=DEFAULT_RTOL, return_error=False):
    """Plane-plane patch interaction energy per unit area (J/m^2)."""
    d = float(_check_gap(d))
    if spec.is_zero():
        return (0.0, 0.0) if return_error else 0.0
    k_cut = _k_cut(spec, d)
    val, err = _integrate(spec, _energy_kernel(d), k_cut, rtol)
    x = 2.0 * k_cut * d
    tail = spec.sup_beyond(k_cut) * 2.0 / (-np.expm1(-x)) * _upper_gamma(3, x) / (2.0 * d) ** 3
    pref = 0.5 * EPSILON_0
    out = (pref * val, pref * (err + tail))
    return out if return_error else out[0]


def patch_force_cp(spec: PatchSpectrum, geom: Geometry, d, rtol=DEFAULT_RTOL, return_error=False):
    """PFA cylinder-plane patch force magnitude (N), for any patch size."""
    _require_cylinder(geom)
    d = float(_check_gap(d))
    if spec.is_zero():
        return (0.0, 0.0) if return_error else 0.0
    k_cut = _k_cut(spec, d)
    val, err = _integrate(spec, _force_kernel(d), k_cut, rtol)
    x = 4.0 * k_cut * d
    tail = spec.sup_beyond(k_cut) * 4.0 / np.expm1(-x / 2.0) ** 2 * _upper_gamma(4, x) / (4.0 * d) ** 4
    pref = np.pi * EPSILON_0 * geom.L / (2.0 * np.sqrt(2.0)) * geom.a * np.sqrt(d / geom.a)
    out = (pref * val, pref * (err + tail))
    return out if return_error else out[0]


def patch_force_cp_large_limit(geom: Geometry, d, v_rms):
    """Large-patch limit: the PFA Coulomb force with ``V -> V_rms``."""
    return coulomb_force_cylinder_pfa(geom, d, v_rms)
