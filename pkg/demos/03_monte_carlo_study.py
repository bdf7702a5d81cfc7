"""Repeated sampling: where the two estimators actually center.

Draws 300 samples of 2000 units, estimates both contrasts on each,
and compares the Monte Carlo means and spreads with the closed forms
(-1 for the naive contrast, 3 for the reweighted one). Also writes
the per-replication histogram to CSV for plotting elsewhere. Bump
replications to 2000 to reproduce the tighter headline numbers;
runtime scales linearly.
"""

import tempfile
from pathlib import Path

from tridiff import (DgpSpec, closed_form_oracle, export_histogram,
                     run_monte_carlo)

spec = DgpSpec(n=2000, seed=7)
oracle = closed_form_oracle(spec)

result = run_monte_carlo(spec, replications=300)
summary = result.summary()

print(f"{result.replications} replications, {result.n_failed} failed")
for label, block, truth in [
        ("naive", summary["naive"], oracle.naive_diff),
        ("reweighted", summary["reweighted"], oracle.reweighted_diff)]:
    print(f"  {label:11s} mean {block['mean']:7.3f}  (truth {truth:.0f})  "
          f"sd {block['sd']:.3f}  mean analytic se "
          f"{block['mean_analytic_se']:.3f}")

out = Path(tempfile.mkdtemp(prefix="tridiff-demo-")) / "histogram.csv"
export_histogram(result, out, bins=40)
print(f"\nhistogram written to {out}")

# the same study with equal covariate means: the gap disappears and
# both estimators center on the same number
balanced = run_monte_carlo(DgpSpec(n=2000, seed=7, mu_b=1.0),
                           replications=300).summary()
print(f"\nwith equal group covariate means: naive "
      f"{balanced['naive']['mean']:.3f}, reweighted "
      f"{balanced['reweighted']['mean']:.3f}")
