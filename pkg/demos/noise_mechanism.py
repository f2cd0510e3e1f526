"""Sample the privacy noise and compare its statistics with the closed forms."""

import numpy as np

from dptransfer.privacy import DpParams, atom_mass, inverse_cdf, sample_noise

for epsilon in (0.1, 1.0, 10.0):
    dp = DpParams(epsilon=epsilon, delta=1e-5, d=1.0)
    v = sample_noise(1_000_000, dp, seed=0)
    print(f"epsilon={epsilon:5.1f}  mean|v|={np.mean(np.abs(v)):9.4f}  "
          f"expected={dp.expected_magnitude:9.4f}  zeros={np.mean(v == 0):.2e}  atom={atom_mass(dp):.2e}")

dp = DpParams()
for t in (0.01, 0.25, 0.5, 0.75, 0.99):
    print(f"inverse_cdf({t:4.2f}) = {inverse_cdf(t, dp):+9.4f}")
