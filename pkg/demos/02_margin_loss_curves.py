#!/usr/bin/env python3
"""The symmetric margin logistic losses as a function of dissimilarity.

Writes curves.csv next to this script and, when matplotlib is
available, a PNG of the same-class / different-class loss curves for
several margins.  Larger margins lift both curves, pushing same-class
pairs below and different-class pairs above the crossover.
"""

from pathlib import Path

import numpy as np

from fisherhash import loss_dissimilar, loss_similar
from fisherhash.training import write_loss_curves

out_dir = Path(__file__).parent / "output"
out_dir.mkdir(exist_ok=True)
margins = [0.0, 1.0, 2.0]

csv_path = out_dir / "curves.csv"
write_loss_curves(csv_path, margins)
print(f"wrote {csv_path}")

d = np.linspace(-6, 6, 241)
print("\nloss at a few dissimilarity values (columns: m=0, m=1, m=2):")
for probe in (-6.0, -3.0, 0.0, 3.0, 6.0):
    same = [loss_similar(probe, m) for m in margins]
    diff = [loss_dissimilar(probe, m) for m in margins]
    print(f"D={probe:+5.1f}  L_same={['%.3f' % v for v in same]}"
          f"  L_diff={['%.3f' % v for v in diff]}")

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    print("\nmatplotlib not installed; skipping the PNG")
else:
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.4), sharey=True)
    for m in margins:
        axes[0].plot(d, loss_similar(d, m), label=f"m={m:g}")
        axes[1].plot(d, loss_dissimilar(d, m), label=f"m={m:g}")
    axes[0].set_title("same-class pairs")
    axes[1].set_title("different-class pairs")
    for ax in axes:
        ax.set_xlabel("dissimilarity D")
        ax.legend()
    axes[0].set_ylabel("loss")
    fig.tight_layout()
    png_path = out_dir / "curves.png"
    fig.savefig(png_path, dpi=120)
    print(f"wrote {png_path}")
