"""Scenario configuration files (TOML).

A config is validated completely before anything runs: unknown keys, wrong
types and missing required keys raise :class:`ConfigError` naming the dotted
path of the offending key. See ``configs/`` for one file per acceptance
scenario and README.md for the full key reference.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .deformations import Deformation
from .errors import CasimirCalError, ConfigError
from .io import config_hash
from .models import Geometry, Resonator
from .patches import PatchSpectrum
from .synth import (
    ConstantV0,
    ExtraPower,
    LinearV0,
    NoiseModel,
    PiezoMap,
    PureCoulomb,
    SaturatingV0,
    Scenario,
    gap_to_piezo,
)

REQUIRED = object()
NUM = (int, float)

# section -> key -> (types, default); a nested dict is a subsection
SCHEMA = {
    "name": (str, ""),
    "geometry": {
        "kind": (str, "cylinder-plane"),
        "a": (NUM, None),
        "L": (NUM, None),
        "L_eff": (NUM, None),
        "R": (NUM, None),
        "S": (NUM, None),
    },
    "resonator": {"m_eff": (NUM, REQUIRED), "nu0": (NUM, REQUIRED)},
    "piezo": {"beta": (NUM, REQUIRED), "V0_PZT": (NUM, REQUIRED)},
    "scenario": {
        "force_model": {
            "kind": (str, "pure-coulomb"),
            "units": (str, "si"),
            "alpha1": (NUM, None),
            "alpha2": (NUM, None),
            "ratio": (NUM, None),
            "p": (NUM, None),
        },
        "v0_profile": {
            "kind": (str, "constant"),
            "v0": (NUM, 0.0),
            "v0_far": (NUM, None),
            "v0_near": (NUM, None),
            "slope": (NUM, None),
            "d_ref": (NUM, 0.0),
            "d_knee": (NUM, None),
        },
        "noise": {
            "sigma_nu": (NUM, REQUIRED),
            "kel_drift_frac": (NUM, 0.0),
            "v0_sigma": (NUM, 0.0),
            "nu0_drift": (NUM, 0.0),
            "seed": (int, 0),
            "inject": (bool, True),
        },
    },
    "grid": {
        "protocol": (str, "curvature"),
        "V_PZT": (list, None),
        "gap_min": (NUM, None),
        "gap_max": (NUM, None),
        "n_gaps": (int, None),
        "V_bias": (list, None),
        "V_bias_min": (NUM, None),
        "V_bias_max": (NUM, None),
        "n_bias": (int, None),
    },
    "analysis": {
        "fit_q": (list, ["free", 2.5]),
        "offset": (bool, False),
        "q_grid": (str, "0.5:4.0:0.01"),
        "min_samples": (int, 6),
        "stride": (int, 1),
        "fixed_q": (NUM, 2.5),
        "fit_window": (list, None),
        "eval_window": (list, None),
        "v0": (NUM, 0.0),
    },
    "deformation": {
        "kind": (str, REQUIRED),
        "b": (NUM, REQUIRED),
        "b_prime": (NUM, None),
        "d_min": (NUM, 0.5e-6),
        "d_max": (NUM, 2e-6),
        "n_points": (int, 50),
    },
    "patches": {
        "kind": (str, "flat-band"),
        "k_min": (NUM, None),
        "k_max": (NUM, None),
        "amplitude": (NUM, None),
        "file": (str, None),
        "d_min": (NUM, REQUIRED),
        "d_max": (NUM, REQUIRED),
        "n_points": (int, 20),
    },
    "output": {"dir": (str, "out"), "prefix": (str, "run")},
}

_OPTIONAL_SECTIONS = {"deformation", "patches", "piezo", "resonator", "scenario", "grid", "geometry"}


def _validate(data, schema, prefix=""):
    out = {}
    for key in data:
        if key not in schema:
            raise ConfigError(f"{prefix}{key}", "unknown key")
    for key, spec in schema.items():
        path = f"{prefix}{key}"
        if isinstance(spec, dict):
            sub = data.get(key)
            if sub is None:
                if prefix == "" and key in _OPTIONAL_SECTIONS:
                    out[key] = None
                    continue
                sub = {}
            if not isinstance(sub, dict):
                raise ConfigError(path, "expected a section")
            out[key] = _validate(sub, spec, path + ".")
            continue
        types, default = spec
        if key not in data:
            if default is REQUIRED:
                raise ConfigError(path, "required key missing")
            out[key] = default
            continue
        value = data[key]
        ok = isinstance(value, types) and not (types in (NUM, int) and isinstance(value, bool))
        if types is list and isinstance(value, (str, int, float)) and key == "fit_q":
            value, ok = [value], True
        if not ok:
            raise ConfigError(path, f"expected {_type_name(types)}, got {type(value).__name__}")
        out[key] = value
    return out


def _type_name(types):
    if types is NUM:
        return "number"
    return types.__name__


def parse_q_grid(text):
    """``"MIN:MAX:STEP"`` to an inclusive numpy grid."""
    try:
        lo, hi, step = (float(x) for x in text.split(":"))
    except ValueError as exc:
        raise ConfigError("analysis.q_grid", f"expected MIN:MAX:STEP, got {text!r}") from exc
    if not (0 < lo <= hi <= 6 and step > 0):
        raise ConfigError("analysis.q_grid", "need 0 < MIN <= MAX <= 6 and STEP > 0")
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(lo + step * np.arange(n), 12)


@dataclass
class ScenarioConfig:
    data: dict
    sha256: str = "none"
    source: Path | None = None
    seed_override: int | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def section(self, name):
        sec = self.data.get(name)
        if sec is None:
            raise ConfigError(name, "section required for this command")
        return sec

    @property
    def seed(self):
        if self.seed_override is not None:
            return self.seed_override
        return self.section("scenario")["noise"]["seed"]

    def geometry(self):
        g = self.section("geometry")
        return _build(lambda: Geometry(g["kind"], a=g["a"], L=g["L"], L_eff=g["L_eff"], R=g["R"], S=g["S"]),
                      "geometry")

    def resonator(self):
        r = self.section("resonator")
        return _build(lambda: Resonator(r["m_eff"], r["nu0"]), "resonator")

    def piezo(self):
        p = self.section("piezo")
        return _build(lambda: PiezoMap(p["beta"], p["V0_PZT"]), "piezo")

    def force_model(self):
        f = self.section("scenario")["force_model"]
        path = "scenario.force_model"
        if f["kind"] == "pure-coulomb":
            return PureCoulomb()
        if f["kind"] != "extra-power":
            raise ConfigError(path + ".kind", f"unknown force model {f['kind']!r}")
        if f["p"] is None or f["alpha1"] is None:
            raise ConfigError(path, "extra-power needs alpha1 and p")
        if f["units"] == "micron":
            if f["ratio"] is None:
                raise ConfigError(path + ".ratio", "micron units need ratio = alpha2/alpha1")
            return _build(lambda: ExtraPower.from_micron_units(f["alpha1"], f["ratio"], f["p"]), path)
        if f["units"] != "si":
            raise ConfigError(path + ".units", "expected 'si' or 'micron'")
        if f["alpha2"] is None:
            raise ConfigError(path + ".alpha2", "required for SI units")
        return _build(lambda: ExtraPower(f["alpha1"], f["alpha2"], f["p"]), path)

    def v0_profile(self):
        v = self.section("scenario")["v0_profile"]
        path = "scenario.v0_profile"

        def need(*keys):
            for k in keys:
                if v[k] is None:
                    raise ConfigError(f"{path}.{k}", f"required for kind {v['kind']!r}")

        if v["kind"] == "constant":
            return ConstantV0(v["v0"])
        if v["kind"] == "linear":
            need("v0_far", "slope")
            return LinearV0(v["v0_far"], v["slope"], v["d_ref"])
        if v["kind"] == "saturating":
            need("v0_far", "v0_near", "d_knee")
            return _build(lambda: SaturatingV0(v["v0_far"], v["v0_near"], v["d_knee"]), path)
        raise ConfigError(path + ".kind", f"unknown V0 profile {v['kind']!r}")

    def noise(self):
        n = dict(self.section("scenario")["noise"])
        n["seed"] = self.seed
        return _build(lambda: NoiseModel(**n), "scenario.noise")

    def scenario(self):
        fm = self.force_model()
        geom = self.geometry() if self.data.get("geometry") is not None else None
        return _build(lambda: Scenario(self.resonator(), fm, self.v0_profile(), self.noise(), geom), "scenario")

    def protocol(self):
        proto = self.section("grid")["protocol"]
        if proto not in ("curvature", "fast-approach"):
            raise ConfigError("grid.protocol", "expected 'curvature' or 'fast-approach'")
        return proto

    def V_PZT(self):
        g = self.section("grid")
        if g["V_PZT"] is not None:
            return np.asarray(g["V_PZT"], dtype=float)
        if None in (g["gap_min"], g["gap_max"], g["n_gaps"]):
            raise ConfigError("grid", "give V_PZT or all of gap_min, gap_max, n_gaps")
        if not 0 < g["gap_min"] < g["gap_max"] or g["n_gaps"] < 2:
            raise ConfigError("grid.gap_min", "need 0 < gap_min < gap_max and n_gaps >= 2")
        gaps = np.geomspace(g["gap_min"], g["gap_max"], g["n_gaps"])
        return np.sort(gap_to_piezo(self.piezo(), gaps))

    def V_bias(self):
        g = self.section("grid")
        if g["V_bias"] is not None:
            return np.asarray(g["V_bias"], dtype=float)
        if None in (g["V_bias_min"], g["V_bias_max"], g["n_bias"]):
            raise ConfigError("grid", "give V_bias or all of V_bias_min, V_bias_max, n_bias")
        return np.linspace(g["V_bias_min"], g["V_bias_max"], g["n_bias"])

    def q_grid(self):
        return parse_q_grid(self.section("analysis")["q_grid"])

    def fit_variants(self):
        out = []
        for q in self.section("analysis")["fit_q"]:
            if q == "free":
                out.append("free")
            elif isinstance(q, NUM) and not isinstance(q, bool) and 0 < q <= 6:
                out.append(float(q))
            else:
                raise ConfigError("analysis.fit_q", f"entries must be 'free' or a number in (0, 6], got {q!r}")
        return out

    def window(self, key):
        w = self.section("analysis")[key]
        if w is None or len(w) != 2 or not all(isinstance(x, NUM) for x in w) or w[0] >= w[1]:
            raise ConfigError(f"analysis.{key}", "expected [V_PZT_min, V_PZT_max] with min < max")
        return (float(w[0]), float(w[1]))

    def deformation(self):
        d = self.section("deformation")
        return _build(lambda: Deformation(d["kind"], d["b"], d["b_prime"]), "deformation")

    def patch_spectrum(self):
        p = self.section("patches")
        if p["file"] is not None:
            path = Path(p["file"])
            if not path.is_absolute() and self.source is not None:
                path = self.source.parent / path
            return _build(lambda: PatchSpectrum.from_file(path), "patches.file")
        return _build(lambda: PatchSpectrum(p["kind"], p["k_min"] or 0.0, p["k_max"] or 0.0, p["amplitude"] or 0.0),
                      "patches")

    def output(self):
        return self.data["output"]


def _build(factory, path):
    try:
        return factory()
    except ConfigError:
        raise
    except (CasimirCalError, ValueError, TypeError, OSError) as exc:
        raise ConfigError(path, str(exc)) from exc


def loads(text, source=None, seed=None) -> ScenarioConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("", f"invalid TOML: {exc}") from exc
    return ScenarioConfig(_validate(raw, SCHEMA), config_hash(text), source, seed)


def load(path, seed=None) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc}") from exc
    return loads(text, path, seed)
