"""Command-line front end.

Each subcommand reads a TOML scenario config, delegates to the library and
writes plot-ready comma-separated tables (plus a JSON report for ``fit``)
under ``--out``. On failure a one-line JSON error object goes to stderr and
the exit status identifies the error class:

    2 usage or config error, 3 fit/quadrature failure,
    4 physical-domain error, 5 unreadable input.
"""

from __future__ import annotations

import json
import re
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from . import config as cfgmod
from .deformations import deformation_exponent, deformed_freq_shift
from .errors import CasimirCalError, ConfigError, FitError
from .fitting import (
    curvature_samples,
    distance_parameters,
    effective_mass_from_gamma,
    exponent_chi2_scan,
    fit_curvature_powerlaw,
    fit_fast_approach,
    residual_analysis,
    split_by_bias,
    truncation_scan,
)
from .io import read_dataset, write_dataset, write_report, write_table
from .models import (
    Geometry,
    GeometryKind,
    casimir_force_ideal,
    coulomb_force_pfa,
    equivalent_casimir_voltage,
)
from .patches import patch_force_cp, patch_force_cp_large_limit, v_rms
from .synth import generate_calibration_run, generate_fast_approach_run

_UNITS = {"m": 1.0, "mm": 1e-3, "um": 1e-6, "µm": 1e-6, "micron": 1e-6, "nm": 1e-9}
_DISTANCE = re.compile(r"^\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*([a-zµ]*)\s*$")


def parse_distance(text: str) -> float:
    """``"1um"``, ``"500 nm"``, ``"2e-6m"`` or a bare number of metres."""
    m = _DISTANCE.match(text)
    if not m or (m.group(2) and m.group(2) not in _UNITS):
        raise click.BadParameter(f"expected VALUE[UNIT] with unit in {sorted(_UNITS)}, got {text!r}")
    value = float(m.group(1)) * _UNITS[m.group(2) or "m"]
    if not value > 0:
        raise click.BadParameter(f"distance must be > 0, got {text!r}")
    return value


def _distance(ctx, param, value):
    return None if value is None else parse_distance(value)


def _q_grid(ctx, param, value):
    if value is None:
        return None
    try:
        return cfgmod.parse_q_grid(value)
    except ConfigError as exc:
        raise click.BadParameter(str(exc).split(": ", 1)[-1]) from exc


def _fail(exc: CasimirCalError):
    err = {"error": type(exc).__name__, "code": exc.code, "message": str(exc)}
    if isinstance(exc, FitError) and exc.trace:
        err["trace_tail"] = [list(t) for t in exc.trace[-5:]]
    click.echo(json.dumps(err, default=str), err=True)
    sys.exit(exc.exit_status)


class _Group(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except CasimirCalError as exc:
            _fail(exc)


config_option = click.option("--config", "config_path", required=True,
                             type=click.Path(exists=True, dir_okay=False), help="TOML scenario config.")
seed_option = click.option("--seed", type=int, default=None, help="Override scenario.noise.seed.")
out_option = click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
                          help="Output directory (default: output.dir from the config).")


def _load(config_path, seed=None):
    return cfgmod.load(config_path, seed)


def _out(cfg, out_dir):
    return Path(out_dir if out_dir is not None else cfg.output()["dir"])


def _meta(cfg, **extra):
    meta = {"seed": cfg.seed} if cfg.data.get("scenario") is not None else {}
    if cfg.data.get("name"):
        meta["scenario"] = cfg.data["name"]
    meta.update(extra)
    return meta


def _path(cfg, out_dir, suffix):
    return _out(cfg, out_dir) / f"{cfg.output()['prefix']}_{suffix}"


@click.group(cls=_Group)
@click.version_option(__version__, prog_name="casimircal")
def main():
    """Electrostatic calibration analysis for cylinder-plane Casimir setups."""


@main.command()
@click.option("--distance", default="1um", callback=_distance, help="Gap, e.g. 1um or 500nm.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Also write table4.csv into this directory.")
def table4(distance, out_dir):
    """Equivalent Casimir voltage for the three geometries."""
    # unit-size bodies: force columns are per unit R, L_eff sqrt(a) or S
    bodies = {
        GeometryKind.SPHERE_PLANE: Geometry.sphere(1.0),
        GeometryKind.CYLINDER_PLANE: Geometry.cylinder(1.0, 1.0),
        GeometryKind.PARALLEL_PLANES: Geometry.planes(1.0),
    }
    rows = []
    for kind, geom in bodies.items():
        v_eq = equivalent_casimir_voltage(kind, distance)
        rows.append((kind.value, distance, casimir_force_ideal(geom, distance),
                     coulomb_force_pfa(geom, distance, 1.0), v_eq))
    click.echo(f"{'geometry':<16} {'d[m]':>10} {'F_casimir/size[N]':>18} {'F_coulomb/(size V^2)':>21} {'V_eq[mV]':>9}")
    for kind, d, fc, fe, v in rows:
        click.echo(f"{kind:<16} {d:>10.4g} {fc:>18.6g} {fe:>21.6g} {v * 1e3:>9.4g}")
    if out_dir is not None:
        write_table(Path(out_dir) / "table4.csv",
                    ("geometry", "d[m]", "F_casimir_per_size[N]", "F_coulomb_per_size_per_V2[N/V^2]", "V_eq[V]"), rows)


@main.command()
@config_option
@seed_option
@out_option
def generate(config_path, seed, out_dir):
    """Generate a synthetic calibration dataset."""
    cfg = _load(config_path, seed)
    scenario, piezo = cfg.scenario(), cfg.piezo()
    V_PZT, V_bias = cfg.V_PZT(), cfg.V_bias()
    if cfg.protocol() == "curvature":
        points = generate_calibration_run(scenario, piezo, V_PZT, V_bias)
    else:
        points = generate_fast_approach_run(scenario, piezo, V_PZT, V_bias)
    path = write_dataset(_path(cfg, out_dir, "data.csv"), points, cfg.sha256,
                         _meta(cfg, protocol=cfg.protocol()))
    click.echo(str(path))


def _samples(cfg, dataset):
    _, points = read_dataset(dataset)
    return points, curvature_samples(points)


def _fit_summary(result, beta, V0_true):
    out = result.as_dict()
    if "gamma" in result.params:
        alpha, s_alpha, d0, s_d0 = distance_parameters(result, beta, V0_true)
        out["distance_form"] = {"alpha": alpha, "sigma_alpha": s_alpha, "d0": d0, "sigma_d0": s_d0}
    return out


@main.command()
@config_option
@out_option
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
def fit(config_path, out_dir, dataset):
    """Parabola and power-law fits of a dataset."""
    cfg = _load(config_path)
    an = cfg.section("analysis")
    piezo = cfg.piezo()
    geom = cfg.geometry() if cfg.data.get("geometry") is not None else None
    report = {"dataset": Path(dataset).name, "protocol": cfg.protocol(), "fits": []}
    failed = []
    if cfg.protocol() == "curvature":
        points, samples = _samples(cfg, dataset)
        write_table(_path(cfg, out_dir, "samples.csv"),
                    ("V_PZT[V]", "K_el[Hz^2/V^2]", "sigma_K[Hz^2/V^2]", "V0[V]", "sigma_V0[V]", "nu0_sq[Hz^2]", "flags"),
                    [(s.V_PZT, s.K_el, s.sigma_K, s.V0, s.sigma_V0, s.nu0_sq, ";".join(s.flags)) for s in samples],
                    cfg.sha256, _meta(cfg))
        for q in cfg.fit_variants():
            try:
                res = fit_curvature_powerlaw(samples, q=q, offset=an["offset"])
            except FitError as exc:
                failed.append({"q": q, "error": str(exc)})
                continue
            entry = {"q_mode": q, **_fit_summary(res, piezo.beta, piezo.V0_PZT)}
            if geom is not None and q == 2.5 and res.params["gamma"] > 0:
                entry["m_eff"] = effective_mass_from_gamma(res.params["gamma"], geom, piezo.beta)
            report["fits"].append(entry)
    else:
        _, points = read_dataset(dataset)
        for bias, group in split_by_bias(points).items():
            for q in cfg.fit_variants():
                try:
                    res = fit_fast_approach(group, q=q)
                except FitError as exc:
                    failed.append({"V_bias": bias, "q": q, "error": str(exc)})
                    continue
                report["fits"].append({"V_bias": bias, "q_mode": q, **res.as_dict()})
    report["failed"] = failed
    path = write_report(_path(cfg, out_dir, "fit.json"), report, cfg.sha256, _meta(cfg))
    click.echo(str(path))
    if failed:
        raise FitError(f"{len(failed)} fit(s) failed; see {path}")


@main.command()
@config_option
@out_option
@click.option("--q-grid", "q_grid", callback=_q_grid, default=None, help="Exponent grid MIN:MAX:STEP.")
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
def scan(config_path, out_dir, q_grid, dataset):
    """Reduced-chi^2 exponent scan and truncation scan of a curvature dataset."""
    cfg = _load(config_path)
    an = cfg.section("analysis")
    piezo = cfg.piezo()
    if cfg.protocol() != "curvature":
        raise ConfigError("grid.protocol", "scan needs a curvature-protocol dataset")
    grid = q_grid if q_grid is not None else cfg.q_grid()
    _, samples = _samples(cfg, dataset)

    prof = exponent_chi2_scan(samples, grid, offset=an["offset"])
    write_table(_path(cfg, out_dir, "qscan.csv"), ("q", "reduced_chi2"), prof.rows(), cfg.sha256,
                _meta(cfg, q_best=prof.q_best, plateau=prof.plateau))

    rows = truncation_scan(samples, beta=piezo.beta, offset=an["offset"], min_samples=an["min_samples"],
                           stride=an["stride"], fixed_q=an["fixed_q"])
    table = []
    for r in rows:
        nan = float("nan")
        q, sq = (r.free.params["q"], r.free.sigmas["q"]) if r.free else (nan, nan)
        if r.fixed:
            alpha, s_alpha, d0, s_d0 = distance_parameters(r.fixed, piezo.beta, piezo.V0_PZT)
            red = r.fixed.reduced_chi2
        else:
            alpha = s_alpha = d0 = s_d0 = red = nan
        table.append((r.n_removed, r.V_PZT_min, r.d_min_nominal, q, sq, alpha, s_alpha, d0, s_d0, red, r.error or ""))
    write_table(_path(cfg, out_dir, "truncation.csv"),
                ("n_removed", "V_PZT_min[V]", "d_min_nominal[m]", "q_opt", "sigma_q", "alpha_fixed[Hz^2 m^q/V^2]",
                 "sigma_alpha[Hz^2 m^q/V^2]", "d0_fit[m]", "sigma_d0[m]", "reduced_chi2_fixed", "error"),
                table, cfg.sha256, _meta(cfg, fixed_q=an["fixed_q"], distances="nominal"))
    click.echo(f"q_best={prof.q_best:.4g} plateau={prof.plateau}")
    n_err = sum(1 for r in rows if r.error)
    if n_err or prof.failed:
        raise FitError(f"{n_err + len(prof.failed)} scan fit(s) failed")


@main.command()
@config_option
@out_option
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
def residuals(config_path, out_dir, dataset):
    """Residuals of a far-window Coulomb fit, per bias of a fast-approach dataset."""
    cfg = _load(config_path)
    an = cfg.section("analysis")
    piezo = cfg.piezo()
    geom = cfg.geometry() if cfg.data.get("geometry") is not None else None
    fit_w, eval_w = cfg.window("fit_window"), cfg.window("eval_window")
    _, points = read_dataset(dataset)
    table, summary = [], []
    for bias, group in split_by_bias(points).items():
        ra = residual_analysis(group, fit_w, eval_w, beta=piezo.beta, geom=geom, v0=an["v0"], q=an["fixed_q"])
        for r in ra.rows:
            table.append((bias, r.V_PZT, r.d, r.nu_sq_residual, r.sigma_nu_sq, r.force_residual))
        summary.append(f"V_bias={bias:g} peak={ra.peak():.6g} m_eff={ra.m_eff:.6g}")
    write_table(_path(cfg, out_dir, "residuals.csv"),
                ("V_bias[V]", "V_PZT[V]", "d[m]", "nu_sq_residual[Hz^2]", "sigma_nu_sq[Hz^2]", "force_residual[N]"),
                table, cfg.sha256, _meta(cfg, fit_window=list(fit_w), eval_window=list(eval_w)))
    click.echo("\n".join(summary))


@main.command()
@config_option
@out_option
def deformation(config_path, out_dir):
    """Frequency shift and effective exponent of a deformed cylinder."""
    cfg = _load(config_path)
    sec = cfg.section("deformation")
    deform, geom, res = cfg.deformation(), cfg.geometry(), cfg.resonator()
    B = deformation_exponent(deform, geom, res, (sec["d_min"], sec["d_max"]), sec["n_points"])
    d = np.geomspace(sec["d_min"], sec["d_max"], sec["n_points"])
    shift = deformed_freq_shift(deform, geom, res, d, 1.0)
    meta = _meta(cfg, kind=deform.kind.value, b=deform.b, b_prime=deform.b_prime, exponent_B=B)
    write_table(_path(cfg, out_dir, "deformation.csv"), ("d[m]", "shift_per_V2[Hz^2/V^2]"),
                zip(d, shift), cfg.sha256, meta)
    click.echo(f"{deform.kind.value} b={deform.b:g} B={B:.4f}")


@main.command()
@config_option
@out_option
def patches(config_path, out_dir):
    """Patch force versus distance with its large-patch reference."""
    cfg = _load(config_path)
    sec = cfg.section("patches")
    spec, geom = cfg.patch_spectrum(), cfg.geometry()
    vr = v_rms(spec)
    rows = []
    for d in np.geomspace(sec["d_min"], sec["d_max"], sec["n_points"]):
        f, err = patch_force_cp(spec, geom, d, return_error=True)
        ref = patch_force_cp_large_limit(geom, d, vr)
        rows.append((d, f, err, ref, f / ref if ref > 0 else float("nan")))
    write_table(_path(cfg, out_dir, "patches.csv"),
                ("d[m]", "force[N]", "force_error[N]", "large_patch_force[N]", "ratio"),
                rows, cfg.sha256, _meta(cfg, v_rms=vr, spectrum=spec.kind.value))
    click.echo(f"v_rms={vr:.6g} V, {len(rows)} distances")


if __name__ == "__main__":
    main()
