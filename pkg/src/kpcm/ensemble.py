"""Seeded random phase states for the invariant suites.

States are drawn in the rescaled variable u = gamma x, which makes one
generator serve both the hyperbolic and the trigonometric coupling: Re u is
uniform in [-box, box], Im u uniform in [0, pi) (one period), and a draw is
resampled while some pair has |sinh(u_i - u_j)| < sep.  Momenta are uniform
in the complex square of half width ``p_scale * |gamma|``; with
``p_floor > 0`` components smaller than ``p_floor * |gamma|`` are redrawn.
"""

import hashlib

import numpy as np

from .cm_core import PhaseState

MAX_RESAMPLE = 100_000


def rng_for(seed: int, label: str) -> np.random.Generator:
    """Independent generator for one named consumer of a run seed."""
    digest = hashlib.sha256(f"{int(seed)}:{label}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def random_state(rng: np.random.Generator, n: int, gamma, box: float = 1.0,
                 sep: float = 0.6, p_scale: float = 0.3, p_floor: float = 0.0) -> PhaseState:
    gamma = complex(gamma)
    if n < 1:
        raise ValueError("n must be >= 1")
    for _ in range(MAX_RESAMPLE):
        u = rng.uniform(-box, box, n) + 1j * rng.uniform(0.0, np.pi, n)
        if n == 1:
            break
        d = np.abs(np.sinh(u[:, None] - u[None, :]))
        d[np.diag_indices(n)] = np.inf
        if d.min() >= sep:
            break
    else:
        raise RuntimeError(f"could not place {n} particles with separation {sep}")
    if p_floor >= p_scale:
        raise ValueError("p_floor must be below p_scale")
    p = np.empty(n, dtype=complex)
    for i in range(n):
        while True:
            q = complex(rng.uniform(-1, 1), rng.uniform(-1, 1)) * p_scale
            if abs(q) >= p_floor:
                break
        p[i] = q * abs(gamma)
    return PhaseState(gamma, u / gamma, p)


def random_points(rng: np.random.Generator, k: int, radius: float, spread: float = 0.5):
    """k complex points with modulus in radius * [1, 1 + spread] and uniform phase."""
    r = radius * (1 + spread * rng.uniform(0, 1, k))
    return r * np.exp(2j * np.pi * rng.uniform(0, 1, k))
