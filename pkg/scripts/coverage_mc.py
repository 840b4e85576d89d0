"""Monte Carlo check of the free-exponent fit on noisy pure-Coulomb data."""

from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from casimircal import config
from casimircal.fitting import curvature_samples, fit_curvature_powerlaw
from casimircal.io import write_table
from casimircal.synth import generate_calibration_run

ROOT = Path(__file__).resolve().parents[1]


@click.command()
@click.option("--config", "config_path", default=str(ROOT / "configs/coulomb_curvature.toml"))
@click.option("--seeds", default=100, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=str(ROOT / "out/coulomb/coverage.csv"))
def main(config_path, seeds, out_path):
    cfg = config.load(config_path)
    piezo = cfg.piezo()
    rows = []
    for seed in range(seeds):
        sc = replace(cfg.scenario(), noise=replace(cfg.noise(), seed=seed))
        fit = fit_curvature_powerlaw(curvature_samples(generate_calibration_run(sc, piezo, cfg.V_PZT(), cfg.V_bias())))
        rows.append((seed, fit.params["q"], fit.sigmas["q"], fit.params["V0_PZT"], fit.reduced_chi2))
    q = np.array([r[1] for r in rows])
    pull = (q - 2.5) / np.array([r[2] for r in rows])
    se = q.std(ddof=1) / np.sqrt(len(q))
    write_table(out_path, ("seed", "q", "sigma_q", "V0_PZT[V]", "reduced_chi2"), rows)
    click.echo(f"mean q = {q.mean():.4f} +- {se:.4f} (z = {(q.mean() - 2.5) / se:+.2f}); "
               f"pull std = {pull.std(ddof=1):.3f}")


if __name__ == "__main__":
    main()
