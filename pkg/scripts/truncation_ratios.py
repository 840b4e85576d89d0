"""Truncation scans of the extra-power pseudo-data for every force ratio.

Writes one combined table with the free exponent and the fixed-2.5
distance parameters per cutoff, and prints the shape summary.
"""

from pathlib import Path

import click
import numpy as np

from casimircal import config
from casimircal.fitting import curvature_samples, distance_parameters, truncation_scan
from casimircal.io import write_table
from casimircal.synth import generate_calibration_run

ROOT = Path(__file__).resolve().parents[1]


@click.command()
@click.option("--ratios", default="5,10,50,100", help="Comma-separated alpha2/alpha1 values with a config.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=str(ROOT / "out/extra_power/truncation_all.csv"))
def main(ratios, out_path):
    rows = []
    for r in ratios.split(","):
        cfg = config.load(ROOT / f"configs/extra_power_ratio{r.strip()}.toml")
        an, piezo, fm = cfg.section("analysis"), cfg.piezo(), cfg.force_model()
        pts = generate_calibration_run(cfg.scenario(), piezo, cfg.V_PZT(), cfg.V_bias())
        scan = truncation_scan(curvature_samples(pts), beta=piezo.beta, min_samples=an["min_samples"],
                               stride=an["stride"], fixed_q=an["fixed_q"])
        q = []
        for row in scan:
            alpha, s_alpha, d0, s_d0 = distance_parameters(row.fixed, piezo.beta, piezo.V0_PZT)
            q.append(row.free.params["q"])
            rows.append((float(r), row.d_min_nominal, row.free.params["q"], row.free.sigmas["q"],
                         alpha / fm.alpha1, s_alpha / fm.alpha1, d0, s_d0))
        i = int(np.argmin(q))
        click.echo(f"ratio {r}: q {q[0]:.3f} -> min {q[i]:.3f} at {scan[i].d_min_nominal * 1e6:.2f} um -> {q[-1]:.3f}")
    write_table(out_path, ("ratio", "d_min_nominal[m]", "q_opt", "sigma_q", "alpha_over_alpha1",
                           "sigma_alpha_over_alpha1", "d0_fit[m]", "sigma_d0[m]"), rows)
    click.echo(out_path)


if __name__ == "__main__":
    main()
