"""Value iteration on the integer (s, c) grid for a fixed user type.

The pre-subscription value function is the fixed point of a discounted
Bellman operator: at every grid state the engine averages over a frozen
query panel, maximizing over the two display actions, with an exact two-point
expectation over the user's engage/outside choice. Post-decision states run
through the transition and conversion rules; subscribed post-states collapse
to the closed-form subscribed value.

The query panel is frozen once per solve (same draws in every sweep), so the
operator is deterministic and a strict beta-contraction in the sup norm.
Sweeps are Jacobi-style: each new table is computed from the previous one,
never in place.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import streams
from .model import (
    Action,
    MarketParams,
    ModelError,
    PayoffConvention,
    QueryDraw,
    UserState,
    UserType,
    conversion_threshold,
    subscribed_margin,
)
from .population import PopulationSpec, sample_query


class SolverError(RuntimeError):
    """Value iteration failed to converge within the iteration budget."""

    def __init__(self, message: str, iterations: int, residual: float):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


def subscribed_value(params: MarketParams) -> float:
    """Closed-form value of a subscribed user: (price - kappa_paid) / (1 - beta)."""
    if not 0.0 < params.beta < 1.0:
        raise ModelError(f"beta must lie in (0, 1), got {params.beta}")
    return subscribed_margin(params) / (1.0 - params.beta)


@dataclass(frozen=True)
class QueryPanel:
    """Frozen set of weighted query draws used for every Bellman expectation."""

    r: np.ndarray
    psi: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        if not (len(self.r) == len(self.psi) == len(self.weights)):
            raise ValueError("panel arrays must have equal length")
        if abs(float(np.sum(self.weights)) - 1.0) > 1e-9:
            raise ValueError("panel weights must sum to 1")

    def __len__(self) -> int:
        return len(self.r)

    @classmethod
    def monte_carlo(cls, population: PopulationSpec, n_q: int, seed: int = 0) -> "QueryPanel":
        """n_q i.i.d. query draws with uniform weights, from a dedicated frozen stream."""
        u = streams.salted_uniforms(streams.PANEL_SALT, seed, (n_q, 2))
        r, psi = sample_query(population, u[:, 0], u[:, 1])
        return cls(np.asarray(r, float), np.asarray(psi, float), np.full(n_q, 1.0 / n_q))

    @classmethod
    def from_support(cls, points: list[tuple[float, float]], weights: list[float]) -> "QueryPanel":
        """Explicit discrete query support with exact probabilities."""
        r = np.array([p[0] for p in points], float)
        psi = np.array([p[1] for p in points], float)
        return cls(r, psi, np.asarray(weights, float))


@dataclass(frozen=True)
class ValueTable:
    """Converged (or truncated) pre-subscription values over the (s, c) grid."""

    values: np.ndarray
    v_sub: float
    user: UserType
    iterations: int
    final_residual: float
    r_max: float

    def value_at(self, s: int, c: int) -> float:
        return float(self.values[s, c])


@dataclass(frozen=True)
class EdgeReport:
    """Action values at one decision point and the with-ad edge decomposition."""

    q_ad: float
    q_free: float
    delta: float
    short_term: float
    long_term: float


class BellmanKernel:
    """Precomputed arrays for fast synchronous Bellman sweeps.

    Built either from the true model (``from_model``) or from externally
    supplied engagement/flow primitives (plug-in learning). Transition,
    conversion, and retention structure always follow the model grid.
    """

    def __init__(
        self,
        params: MarketParams,
        user: UserType,
        panel: QueryPanel,
        p_ad: np.ndarray,
        p_free: np.ndarray,
        f_ad: np.ndarray,
        f_free: np.ndarray,
        rho0: np.ndarray,
        v_sub: float,
    ):
        s_max, c_max = params.grid.s_max, params.grid.c_max
        n_s, n_c = s_max + 1, c_max + 1
        self.params = params
        self.user = user
        self.panel = panel
        self.beta = params.beta
        self.v_sub = v_sub
        self.shape = (n_s, n_c)

        s_idx = np.arange(n_s)
        c_idx = np.arange(n_c)
        tau = conversion_threshold(params, user, c_idx.astype(float))
        self.tau_ceil = np.ceil(tau).astype(int)

        self.c_plus = np.minimum(c_idx + 1, c_max)
        self.s_plus = [np.minimum(s_idx + b, s_max) for b in (1, 2)]

        self.z_stay = s_idx[:, None] >= self.tau_ceil[None, :]
        self.z_ad = s_idx[:, None] >= self.tau_ceil[self.c_plus][None, :]
        self.z_free = [sp[:, None] >= self.tau_ceil[None, :] for sp in self.s_plus]
        self.inc2 = panel.psi >= params.psi_cut

        self.p_ad = np.broadcast_to(p_ad, (n_c, len(panel)))
        self.p_free = np.broadcast_to(p_free, (len(panel),))
        self.f_ad = np.broadcast_to(f_ad, (n_s, n_c, len(panel)))
        self.f_free = np.broadcast_to(f_free, (len(panel),))
        self.rho0 = rho0
        self.weights = panel.weights

        self.r_max = max(
            float(np.max(np.abs(self.f_ad))),
            float(np.max(np.abs(self.f_free))),
            abs(subscribed_margin(params)),
        )

    @classmethod
    def from_model(cls, params: MarketParams, user: UserType, panel: QueryPanel) -> "BellmanKernel":
        s_max, c_max = params.grid.s_max, params.grid.c_max
        s_idx = np.arange(s_max + 1, dtype=float)
        c_idx = np.arange(c_max + 1, dtype=float)

        u = params.utility
        v_free = u.w_psi * panel.psi + u.w_r_free * panel.r
        v_ad = (
            u.u0_ad
            + u.ur_ad * panel.r[None, :]
            - u.w_gamma * user.gamma
            - u.uc_ad * c_idx[:, None]
        )
        p_free = expit(v_free - params.omega)
        p_ad = expit(v_ad - params.omega)

        b = params.revenue
        rev = np.maximum(
            b.b0
            + b.b_r * panel.r[None, None, :]
            - b.b_c * c_idx[None, :, None]
            - b.b_s * s_idx[:, None, None],
            0.0,
        )
        if params.payoff_convention is PayoffConvention.MAIN_TEXT:
            f_ad = -params.kappa_free + rev * p_ad[None, :, :]
            f_free = np.full(len(panel), -params.kappa_free)
        else:
            f_ad = rev * p_ad[None, :, :]
            f_free = -params.kappa_free * p_free

        rc = params.retention
        rho0 = rc.rho_min + (1.0 - rc.rho_min) * expit(
            rc.alpha_s * s_idx[:, None] - rc.alpha_c * c_idx[None, :]
        )
        return cls(params, user, panel, p_ad, p_free, f_ad, f_free, rho0, subscribed_value(params))

    def zero(self) -> np.ndarray:
        return np.zeros(self.shape)

    def action_values(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Q-arrays of shape (s, c, query) for both actions against a table."""
        w_stay = np.where(self.z_stay, self.v_sub, self.rho0 * values)
        w_ad = np.where(
            self.z_ad, self.v_sub, self.rho0[:, self.c_plus] * values[:, self.c_plus]
        )
        w_free_b = [
            np.where(zf, self.v_sub, self.rho0[sp, :] * values[sp, :])
            for sp, zf in zip(self.s_plus, self.z_free)
        ]
        w_free = np.where(self.inc2[None, None, :], w_free_b[1][:, :, None], w_free_b[0][:, :, None])

        q_ad = self.f_ad + self.beta * (
            self.p_ad[None, :, :] * w_ad[:, :, None]
            + (1.0 - self.p_ad)[None, :, :] * w_stay[:, :, None]
        )
        q_free = self.f_free[None, None, :] + self.beta * (
            self.p_free[None, None, :] * w_free
            + (1.0 - self.p_free)[None, None, :] * w_stay[:, :, None]
        )
        return q_ad, q_free

    def apply(self, values: np.ndarray) -> np.ndarray:
        """One synchronous Bellman sweep: panel-weighted max over actions."""
        q_ad, q_free = self.action_values(values)
        return np.maximum(q_ad, q_free) @ self.weights

    def apply_n(self, n: int) -> np.ndarray:
        """n sweeps starting from the all-zero table (finite-horizon value)."""
        values = self.zero()
        for _ in range(n):
            values = self.apply(values)
        return values

    def apply_policy(self, values: np.ndarray, take_ad: np.ndarray) -> np.ndarray:
        """One evaluation sweep for a fixed decision rule over (s, c, query)."""
        q_ad, q_free = self.action_values(values)
        return np.where(take_ad, q_ad, q_free) @ self.weights

    def solve(self, tol: float = 1e-8, max_iter: int = 10_000) -> ValueTable:
        if tol <= 0:
            raise ValueError(f"tol must be positive, got {tol}")
        values = self.zero()
        residual = math.inf
        for iteration in range(1, max_iter + 1):
            new_values = self.apply(values)
            residual = float(np.max(np.abs(new_values - values)))
            values = new_values
            if residual <= tol:
                return ValueTable(values, self.v_sub, self.user, iteration, residual, self.r_max)
        raise SolverError(
            f"value iteration did not reach tol={tol} within {max_iter} iterations "
            f"(final residual {residual:.3e})",
            max_iter,
            residual,
        )

    def policy_value(
        self, take_ad: np.ndarray, tol: float = 1e-9, max_iter: int = 20_000
    ) -> np.ndarray:
        """Fixed point of the evaluation operator for a decision rule over (s, c, query)."""
        values = self.zero()
        for _ in range(max_iter):
            new_values = self.apply_policy(values, take_ad)
            residual = float(np.max(np.abs(new_values - values)))
            values = new_values
            if residual <= tol:
                return values
        raise SolverError("policy evaluation did not converge", max_iter, residual)


def value_iterate(
    params: MarketParams,
    user: UserType,
    panel: QueryPanel,
    tol: float = 1e-8,
    max_iter: int = 10_000,
) -> ValueTable:
    """Solve the pre-subscription DP from the all-zero table.

    On return the table satisfies ``|V - V_inf| <= tol * beta / (1 - beta)``
    in the sup norm for the panel-discretized operator.
    """
    return BellmanKernel.from_model(params, user, panel).solve(tol=tol, max_iter=max_iter)


def edge_batch(
    params: MarketParams,
    user: UserType,
    table: ValueTable,
    s,
    c,
    r,
    psi,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(q_ad, q_free, short_term, long_term) at decision points, vectorized.

    Inputs broadcast against each other; states must be pre-subscription.
    """
    s = np.asarray(s, dtype=int)
    c = np.asarray(c, dtype=int)
    r = np.asarray(r, dtype=float)
    psi = np.asarray(psi, dtype=float)
    s, c, r, psi = np.broadcast_arrays(s, c, r, psi)

    u = params.utility
    p_free = expit(u.w_psi * psi + u.w_r_free * r - params.omega)
    p_ad = expit(u.u0_ad + u.ur_ad * r - u.w_gamma * user.gamma - u.uc_ad * c - params.omega)

    b = params.revenue
    rev = np.maximum(b.b0 + b.b_r * r - b.b_c * c - b.b_s * s, 0.0)
    if params.payoff_convention is PayoffConvention.MAIN_TEXT:
        f_ad = -params.kappa_free + rev * p_ad
        f_free = np.broadcast_to(np.asarray(-params.kappa_free), s.shape)
    else:
        f_ad = rev * p_ad
        f_free = -params.kappa_free * p_free

    grid = params.grid
    tau_now = np.ceil(conversion_threshold(params, user, c.astype(float))).astype(int)
    c_plus = np.minimum(c + 1, grid.c_max)
    tau_ad = np.ceil(conversion_threshold(params, user, c_plus.astype(float))).astype(int)
    inc = 1 + (psi >= params.psi_cut).astype(int)
    s_plus = np.minimum(s + inc, grid.s_max)

    rc = params.retention
    values = table.values

    def rho0(s_arr, c_arr):
        return rc.rho_min + (1.0 - rc.rho_min) * expit(rc.alpha_s * s_arr - rc.alpha_c * c_arr)

    w_stay = np.where(s >= tau_now, table.v_sub, rho0(s, c) * values[s, c])
    w_ad = np.where(s >= tau_ad, table.v_sub, rho0(s, c_plus) * values[s, c_plus])
    w_free = np.where(s_plus >= tau_now, table.v_sub, rho0(s_plus, c) * values[s_plus, c])

    cont_ad = p_ad * w_ad + (1.0 - p_ad) * w_stay
    cont_free = p_free * w_free + (1.0 - p_free) * w_stay
    q_ad = f_ad + params.beta * cont_ad
    q_free = f_free + params.beta * cont_free
    short = f_ad - f_free
    long = params.beta * (cont_ad - cont_free)
    return q_ad, q_free, short, long


def q_edge(
    params: MarketParams,
    user: UserType,
    table: ValueTable,
    state: UserState,
    query: QueryDraw,
) -> EdgeReport:
    """Action values and the short/long decomposition at one decision point.

    Under the main-text convention the short-term component is exactly the
    engagement-weighted ad revenue (the common cost cancels); under the
    simulation convention it is the expected flow difference. In both cases
    delta = q_ad - q_free = short_term + long_term.
    """
    if state.z:
        raise ModelError("no display decision exists for subscribed users")
    q_ad, q_free, short, long = edge_batch(
        params, user, table, state.s, state.c, query.r, query.psi
    )
    return EdgeReport(
        q_ad=float(q_ad),
        q_free=float(q_free),
        delta=float(q_ad) - float(q_free),
        short_term=float(short),
        long_term=float(long),
    )


def optimal_action(edge: EdgeReport) -> Action:
    """Comparison rule with ties broken toward the with-ad response."""
    return Action.AD if edge.delta >= 0.0 else Action.FREE


@dataclass(frozen=True)
class HorizonEntry:
    """Finite-horizon diagnostics for one truncation length."""

    horizon: int
    bound: float
    max_edge_gap: float
    n_points: int
    n_margin: int
    n_margin_agree: int
    vacuous: bool
    gap_violations: list
    agreement_violations: list


@dataclass(frozen=True)
class HorizonReport:
    r_max: float
    entries: list

    @property
    def ok(self) -> bool:
        return all(
            not e.gap_violations and not e.agreement_violations for e in self.entries
        )


def horizon_bound_check(
    params: MarketParams,
    user: UserType,
    panel: QueryPanel,
    horizons: list[int],
    reference_tol: float = 1e-10,
) -> HorizonReport:
    """Verify the geometric finite-horizon advantage bound and action agreement.

    For each horizon T the T-step edge (computed against the T-1 step table)
    must stay within 2*beta*R_max*beta^(T-1)/(1-beta) of the converged edge,
    and actions must agree wherever the converged edge clears that band. The
    band is reported as vacuous when no sampled point clears it.
    """
    kernel = BellmanKernel.from_model(params, user, panel)
    ref = kernel.solve(tol=reference_tol, max_iter=200_000)

    n_s, n_c = kernel.shape
    s_grid, c_grid, q_grid = np.meshgrid(
        np.arange(n_s), np.arange(n_c), np.arange(len(panel)), indexing="ij"
    )
    s_f, c_f, q_f = s_grid.ravel(), c_grid.ravel(), q_grid.ravel()
    r_f, psi_f = panel.r[q_f], panel.psi[q_f]

    qa_inf, qf_inf, _, _ = edge_batch(params, user, ref, s_f, c_f, r_f, psi_f)
    delta_inf = qa_inf - qf_inf

    entries = []
    for horizon in horizons:
        if horizon < 1:
            raise ValueError("horizons must be >= 1")
        truncated = ValueTable(
            kernel.apply_n(horizon - 1), kernel.v_sub, user, horizon - 1, math.inf, kernel.r_max
        )
        qa_t, qf_t, _, _ = edge_batch(params, user, truncated, s_f, c_f, r_f, psi_f)
        delta_t = qa_t - qf_t

        bound = 2.0 * params.beta * kernel.r_max * params.beta ** (horizon - 1) / (1.0 - params.beta)
        gaps = np.abs(delta_inf - delta_t)
        slack = 1e-9
        gap_bad = np.nonzero(gaps > bound + slack)[0]

        margin = np.abs(delta_inf) > bound
        agree = (delta_inf >= 0.0) == (delta_t >= 0.0)
        agree_bad = np.nonzero(margin & ~agree)[0]

        def witnesses(idx):
            return [
                (int(s_f[i]), int(c_f[i]), float(r_f[i]), float(psi_f[i]))
                for i in idx[:10]
            ]

        entries.append(
            HorizonEntry(
                horizon=horizon,
                bound=bound,
                max_edge_gap=float(np.max(gaps)),
                n_points=len(gaps),
                n_margin=int(np.sum(margin)),
                n_margin_agree=int(np.sum(margin & agree)),
                vacuous=not bool(np.any(margin)),
                gap_violations=witnesses(gap_bad),
                agreement_violations=witnesses(agree_bad),
            )
        )
    return HorizonReport(r_max=kernel.r_max, entries=entries)
