"""Private transfer between two rotated blob domains, private against non-private."""

import math

import numpy as np

from dptransfer.benchmarks import synthetic_suite

for labelled in (10, 50):
    for epsilon in (0.1, math.inf):
        mean, runs = synthetic_suite(epsilon, labelled)
        spread = np.std([r.accuracy for r in runs])
        print(f"labelled/class={labelled:3d}  epsilon={epsilon:>4}  accuracy={mean:.4f}  std={spread:.4f}")
