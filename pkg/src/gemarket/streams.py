"""Counter-based random streams for reproducible, policy-independent draws.

Every stochastic draw in the simulator is addressed by an explicit key
(seed, user, period, purpose), so two runs that differ only in the display
policy consume identical random numbers (common random numbers). Streams are
built on numpy's Philox counter-based generator keyed by (seed, user); the
position inside a user's stream is a fixed function of (period, purpose).
"""
from __future__ import annotations

import numpy as np

# Per-period purposes, in stream order.
QUERY_R = 0
QUERY_PSI = 1
ENGAGE = 2
RETAIN = 3

N_PURPOSES = 4
_N_TYPE_DRAWS = 2  # gamma, theta uniforms precede the per-period block

# Salts keep unrelated stream families (cohort users, DP query panel,
# log records) disjoint even under identical integer seeds.
PANEL_SALT = 0x9E3779B97F4A7C15
LOG_SALT = 0xC2B2AE3D27D4EB4F


def user_uniforms(seed: int, user: int, horizon: int) -> np.ndarray:
    """All uniforms one cohort user ever consumes.

    Layout: [gamma, theta] + horizon blocks of (query_r, query_psi,
    engage, retain). Fixed given (seed, user), regardless of policy.
    """
    bitgen = np.random.Philox(key=np.array([seed, user], dtype=np.uint64))
    return np.random.Generator(bitgen).random(_N_TYPE_DRAWS + N_PURPOSES * horizon)


def cohort_uniforms(seed: int, n_users: int, horizon: int) -> np.ndarray:
    """Uniforms for a whole cohort, shape (n_users, 2 + 4 * horizon)."""
    return np.stack([user_uniforms(seed, u, horizon) for u in range(n_users)])


def type_uniform(uniforms: np.ndarray, which: int) -> np.ndarray:
    """Column of per-user type uniforms; which=0 is gamma, 1 is theta."""
    return uniforms[..., which]


def period_uniform(uniforms: np.ndarray, period: int, purpose: int) -> np.ndarray:
    """Column of per-user uniforms for one (period, purpose)."""
    return uniforms[..., _N_TYPE_DRAWS + N_PURPOSES * period + purpose]


def uniform_at(seed: int, user: int, period: int, purpose: int, horizon: int) -> float:
    """Scalar accessor with the same values as the vectorized layout."""
    return float(period_uniform(user_uniforms(seed, user, horizon), period, purpose))


def salted_uniforms(salt: int, seed: int, shape: tuple[int, ...]) -> np.ndarray:
    """Uniform block from an independent stream family identified by salt."""
    bitgen = np.random.Philox(key=np.array([salt, seed], dtype=np.uint64))
    return np.random.Generator(bitgen).random(shape)
