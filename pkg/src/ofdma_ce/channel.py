"""Seeded Rayleigh block-fading gains.

Generator (fixed, so matrices can be reproduced bit-for-bit elsewhere):

* Philox4x64-10 keyed with ``key = [seed, 0]`` and a zero counter, read via
  ``random_raw`` as a stream of 64-bit words in row-major (k, n) order.
* Each word ``w`` becomes ``u = ((w >> 11) + 0.5) * 2**-53`` in (0, 1).
* Power gain ``h = mean_gain * -ln(u)``: a unit-mean exponential draw,
  i.e. the squared magnitude of a Rayleigh amplitude.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Scenario, SystemParams, UserParams, ZeroDimension

__all__ = ["ChannelConfig", "sample_gains", "make_scenario"]

_TWO_M53 = 2.0 ** -53


@dataclass(frozen=True)
class ChannelConfig:
    mean_gain: float = 1e-4
    rng_seed: int = 0

    def __post_init__(self):
        if not self.mean_gain > 0:
            raise ValueError(f"mean_gain must be > 0, got {self.mean_gain!r}")


def _uniform_open(seed: int, count: int) -> np.ndarray:
    bitgen = np.random.Philox(key=np.array([seed % 2**64, 0], dtype=np.uint64))
    raw = bitgen.random_raw(count) if count else np.zeros(0, dtype=np.uint64)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53


def sample_gains(cfg: ChannelConfig, num_users: int, num_subchannels: int) -> np.ndarray:
    """Draw a K x N matrix of i.i.d. exponential power gains with mean ``cfg.mean_gain``."""
    if num_users < 1 or num_subchannels < 1:
        raise ZeroDimension(f"need K >= 1 and N >= 1, got K={num_users}, N={num_subchannels}")
    u = _uniform_open(int(cfg.rng_seed), num_users * num_subchannels)
    return cfg.mean_gain * -np.log(u).reshape(num_users, num_subchannels)


def make_scenario(seed: int = 0, num_users: int = 2, system: SystemParams | None = None,
                  user: UserParams | None = None, mean_gain: float = 1e-4) -> Scenario:
    """Homogeneous-user scenario with freshly sampled gains (defaults follow the reference setup)."""
    system = system or SystemParams()
    user = user or UserParams()
    gains = sample_gains(ChannelConfig(mean_gain, seed), num_users, system.num_subchannels)
    return Scenario(system, (user,) * num_users, gains, rng_seed=seed)
