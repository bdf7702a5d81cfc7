"""The minimum-wage application, end to end through the command line.

The restaurant survey behind the published comparison table is not
distributed with this package. Point TRIDIFF_REPLICATION_CSV at your
copy of it to run the real comparison; without it this script
fabricates a stand-in file with the same columns so the workflow is
visible (the numbers then have nothing to do with the published
ones, and the comparison table says so).

Expected columns: SHEET, STATE (1 = eligible state), WAGE_ST (wage at
or below 4.50 forms group A), EMPFT/EMPPT/NMGRS and the "2"-suffixed
second-period versions (combined 1 / 0.5 / 1 into the outcome), plus
PSODA, NMGRS, HRSOPEN as covariates.
"""

import csv
import os
import tempfile
from pathlib import Path

import numpy as np

from tridiff.cli import main

workdir = Path(tempfile.mkdtemp(prefix="tridiff-demo-"))
data = os.environ.get("TRIDIFF_REPLICATION_CSV")

if data is None:
    data = workdir / "stand_in.csv"
    rng = np.random.default_rng(12)
    with open(data, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["SHEET", "STATE", "WAGE_ST", "EMPFT", "EMPPT",
                         "NMGRS", "EMPFT2", "EMPPT2", "NMGRS2", "PSODA",
                         "HRSOPEN"])
        for i in range(300):
            base = rng.uniform(5, 30)
            nm = int(rng.integers(2, 6))
            writer.writerow([
                i + 1, int(rng.integers(0, 2)),
                round(float(rng.uniform(4.25, 5.5)), 2),
                round(base, 1), round(base / 2, 1), nm,
                round(base + rng.normal(0, 2), 1),
                round(base / 2 + rng.normal(0, 1), 1), nm,
                round(float(rng.uniform(0.8, 1.2)), 2),
                round(float(rng.uniform(8, 24)), 1),
            ])
    print(f"no TRIDIFF_REPLICATION_CSV set; fabricated {data}\n")

code = main(["replicate", "--input", str(data), "--bootstrap-reps", "199",
             "--seed", "0", "--out", str(workdir / "replication")])
print(f"\nexit code {code}; full table and JSON under "
      f"{workdir / 'replication'}")
