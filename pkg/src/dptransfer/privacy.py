"""Optimal (epsilon, delta)-differentially private additive noise.

The noise law places an atom of mass ``delta`` at zero and spreads the
remaining ``1 - delta`` as a two-sided exponential with scale ``d/epsilon``.
Samples come from inverse transform sampling of uniforms on the open
interval (0, 1).
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidArgumentError
from .numkit import as_data_matrix

_TWO53 = float(2**53)


@dataclass(frozen=True)
class DpParams:
    """Privacy parameters.

    ``epsilon = inf`` (no noise) and ``delta = 1`` (all mass on the atom)
    are accepted as the non-private limits.
    """

    epsilon: float = 0.1
    delta: float = 1e-5
    d: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidArgumentError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 < self.delta <= 1:
            raise InvalidArgumentError(f"delta must lie in (0, 1], got {self.delta}")
        if not (self.d > 0 and np.isfinite(self.d)):
            raise InvalidArgumentError(f"d must be positive and finite, got {self.d}")

    @property
    def scale(self):
        """Exponential scale ``d / epsilon`` (zero when epsilon is infinite)."""
        return self.d / self.epsilon

    @property
    def expected_magnitude(self):
        return (1.0 - self.delta) * self.scale


def make_rng(seed):
    """Counter-based (Philox) generator; accepts an int, a sequence or a SeedSequence."""
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def atom_mass(dp):
    return dp.delta


def density(v, dp):
    """Continuous part ``(1-delta) eps/(2d) exp(-eps|v|/d)``; the atom is ``atom_mass``."""
    v = np.asarray(v, dtype=np.float64)
    if np.isinf(dp.epsilon):
        out = np.zeros_like(v)
    else:
        rate = dp.epsilon / dp.d
        out = (1.0 - dp.delta) * 0.5 * rate * np.exp(-rate * np.abs(v))
    return out if out.ndim else float(out)


def cdf(v, dp):
    """Distribution function, including the atom at zero."""
    v = np.asarray(v, dtype=np.float64)
    half = 0.5 * (1.0 - dp.delta)
    rate = dp.epsilon / dp.d
    with np.errstate(over="ignore", invalid="ignore"):
        neg = half * np.exp(rate * np.minimum(v, 0.0))
        pos = 1.0 - half * np.exp(-rate * np.maximum(v, 0.0))
    out = np.where(v < 0, neg, np.where(v > 0, pos, 0.5 * (1.0 + dp.delta)))
    return out if out.ndim else float(out)


def inverse_cdf(t, dp):
    """Inverse distribution function on (0, 1).

    Values in the closed interval ``[(1-delta)/2, (1+delta)/2]`` map to 0.
    """
    t = np.asarray(t, dtype=np.float64)
    if np.any(~(t > 0)) or np.any(~(t < 1)):
        raise InvalidArgumentError("inverse_cdf arguments must lie in the open interval (0, 1)")
    lo = 0.5 * (1.0 - dp.delta)
    hi = 0.5 * (1.0 + dp.delta)
    out = np.zeros_like(t)
    left = t < lo
    right = t > hi
    if np.any(left):
        out[left] = dp.scale * np.log(2.0 * t[left] / (1.0 - dp.delta))
    if np.any(right):
        out[right] = -dp.scale * np.log(2.0 * (1.0 - t[right]) / (1.0 - dp.delta))
    return out if out.ndim else float(out)


def open_uniform(rng, size):
    """Uniforms on the open interval (0, 1) with 53-bit resolution."""
    k = rng.integers(0, 2**53, size=size, dtype=np.int64)
    return (k.astype(np.float64) + 0.5) / _TWO53


def sample_noise(count, dp, seed):
    """Draw ``count`` independent noise values."""
    if count < 1:
        raise InvalidArgumentError(f"count must be at least 1, got {count}")
    return inverse_cdf(open_uniform(make_rng(seed), int(count)), dp)


def perturb(Y, dp, seed):
    """Return ``Y + V`` with i.i.d. noise entries; the input is not modified."""
    Y = as_data_matrix(Y, "Y")
    V = inverse_cdf(open_uniform(make_rng(seed), Y.size), dp).reshape(Y.shape)
    return Y + V


def perturb_groups(groups, dp, seed):
    """Perturb each class matrix with its own child stream of ``seed``."""
    children = np.random.SeedSequence(seed).spawn(len(groups))
    return [perturb(Y, dp, child) for Y, child in zip(groups, children)]
