"""Exact enumeration oracle for tiny finite-horizon instances.

Computes the expected discounted payoff of the best deterministic decision
tree by recursing over periods and taking exact expectations over the
discrete query support, the engage/outside choice, and retention. It shares
only the scalar model primitives with the grid solver; the solution method
is entirely separate, which is what makes it a useful cross-check.
"""
from __future__ import annotations

from functools import lru_cache

from .model import (
    Action,
    MarketParams,
    QueryDraw,
    UserState,
    UserType,
    conversion_update,
    engage_prob,
    flow_payoff,
    retention_prob,
    subscribed_margin,
    transition,
)
from .solver import QueryPanel

MAX_GRID_CELLS = 16
MAX_SUPPORT = 3
MAX_HORIZON = 4


def _check_instance(params: MarketParams, panel: QueryPanel, horizon: int) -> None:
    cells = (params.grid.s_max + 1) * (params.grid.c_max + 1)
    if cells > MAX_GRID_CELLS:
        raise ValueError(f"oracle refuses grids with more than {MAX_GRID_CELLS} cells (got {cells})")
    if len(panel) > MAX_SUPPORT:
        raise ValueError(f"oracle refuses query supports larger than {MAX_SUPPORT} (got {len(panel)})")
    if horizon > MAX_HORIZON:
        raise ValueError(f"oracle refuses horizons above {MAX_HORIZON} (got {horizon})")


def brute_force_oracle(
    params: MarketParams,
    user: UserType,
    panel: QueryPanel,
    horizon: int,
    state: UserState,
    policy=None,
) -> float:
    """Exact T-horizon value at ``state`` by full enumeration.

    With ``policy=None`` the best action is enumerated at every reachable
    decision point; otherwise ``policy(s, c, query) -> Action`` is followed,
    which turns the oracle into an exact policy evaluator.
    """
    _check_instance(params, panel, horizon)
    beta = params.beta
    margin = subscribed_margin(params)
    queries = [
        (QueryDraw(float(r), float(psi)), float(w))
        for r, psi, w in zip(panel.r, panel.psi, panel.weights)
    ]

    @lru_cache(maxsize=None)
    def value(s: int, c: int, z: bool, t: int) -> float:
        if t == horizon:
            return 0.0
        if z:
            # Remaining subscribed payoffs: margin * (1 + beta + ... + beta^(T-t-1)).
            return margin * (1.0 - beta ** (horizon - t)) / (1.0 - beta)
        here = UserState(s=s, c=c, z=False)
        total = 0.0
        for query, weight in queries:
            candidates = (
                (Action.AD, Action.FREE) if policy is None else (policy(s, c, query),)
            )
            best = None
            for action in candidates:
                p_engage = engage_prob(params, user, query, here, action)
                expected = 0.0
                for engaged, prob in ((True, p_engage), (False, 1.0 - p_engage)):
                    if prob == 0.0:
                        continue
                    flow = flow_payoff(params, user, query, here, action, engaged)
                    nxt = conversion_update(params, user, transition(params, query, here, action, engaged))
                    rho = retention_prob(params, nxt)
                    expected += prob * (flow + beta * rho * value(nxt.s, nxt.c, nxt.z, t + 1))
                if best is None or expected > best:
                    best = expected
            total += weight * best
        return total

    return value(state.s, state.c, state.z, 0)
