"""Euler-Maruyama simulation of the local-time diffusion, dZ = 2 sqrt(Z) dW.

Used as the independent oracle for the reflected-path local-time profile:
the profile of a reflected walk stopped at unit boundary local time is the
zero-dimensional squared-Bessel diffusion in the level variable, started
at 1 and absorbed at 0.  (The quadratic variation is 4Z dt, fixed by the
excursion rate 1/(2a) above height a together with the Exp(2u) law of the
local time an excursion carries 2u below its starting level.)
"""

from __future__ import annotations

import math

import numpy as np


def feller_marginals(z0: float, levels, dt: float, n_paths: int, rng) -> np.ndarray:
    """Sample n_paths trajectories and return Z at the requested levels.

    Plain Euler-Maruyama with absorption at 0; returns an array of shape
    (n_paths, len(levels)).
    """
    levels = np.asarray(levels, dtype=float)
    if np.any(np.diff(levels) <= 0) or levels[0] <= 0:
        raise ValueError("levels must be positive and increasing")
    n_steps = int(math.ceil(levels[-1] / dt))
    grab = np.minimum(np.round(levels / dt).astype(np.int64), n_steps) - 1
    z = np.full(n_paths, float(z0))
    out = np.empty((n_paths, levels.size))
    take = {int(step): i for i, step in enumerate(grab)}
    sqdt = math.sqrt(dt)
    for step in range(n_steps):
        noise = rng.standard_normal(n_paths)
        z = z + 2.0 * np.sqrt(z) * sqdt * noise
        np.maximum(z, 0.0, out=z)
        i = take.get(step)
        if i is not None:
            out[:, i] = z
    return out
