"""Core market model: types, engagement, payoffs, state dynamics.

The market consists of a generative engine serving free-tier users one query
per period. For each query the engine displays either a with-ad or an ad-free
response; the user engages or takes the outside option under a binary logit.
Engaged ad-free responses build AI experience s, engaged with-ad responses
build ad exposure c. Experience drives retention and, past a type-dependent
cutoff, conversion to an absorbing paid subscription.

Two flow-payoff conventions are supported:

* ``MAIN_TEXT``: both actions charge the inference cost kappa_free every
  period; ad revenue is added on engaged with-ad displays. Under this
  convention the cost term cancels between actions, which the comparative
  statics rely on.
* ``APPENDIX_SIM``: payoffs accrue only on engagement; an engaged ad-free
  display costs kappa_free and an engaged with-ad display earns revenue with
  no explicit serving charge.

All types are immutable and all operations are pure functions.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

from scipy.special import expit


class ModelError(ValueError):
    """Invalid parameter or operation on an invalid state."""


class Action(enum.Enum):
    AD = "ad"
    FREE = "free"


class PayoffConvention(enum.Enum):
    MAIN_TEXT = "main_text"
    APPENDIX_SIM = "appendix_sim"


@dataclass(frozen=True)
class UtilityCoeffs:
    """Logit utility coefficients (dimensionless).

    v_free = w_psi * psi + w_r_free * r
    v_ad   = u0_ad + ur_ad * r - w_gamma * gamma - uc_ad * c
    """

    w_psi: float = 2.0
    w_r_free: float = -0.8
    u0_ad: float = 0.8
    ur_ad: float = 1.2
    w_gamma: float = 1.5
    uc_ad: float = 0.25


@dataclass(frozen=True)
class RevenueCoeffs:
    """Conditional ad revenue: max(b0 + b_r * r - b_c * c - b_s * s, 0)."""

    b0: float = 0.6
    b_r: float = 1.6
    b_c: float = 0.12
    b_s: float = 0.0


@dataclass(frozen=True)
class RetentionCoeffs:
    """Floored logistic retention: rho_min + (1 - rho_min) * sigmoid(alpha_s*s - alpha_c*c)."""

    rho_min: float = 0.15
    alpha_s: float = 0.45
    alpha_c: float = 0.35


@dataclass(frozen=True)
class ConversionCoeffs:
    """Subscription cutoff in experience units: tau0 + tau_p*p - tau_theta*theta - tau_c*c."""

    tau0: float = 6.0
    tau_p: float = 0.5
    tau_theta: float = 2.0
    tau_c: float = 0.25


@dataclass(frozen=True)
class GridSpec:
    """Caps for the integer (s, c) state grid."""

    s_max: int = 20
    c_max: int = 20


@dataclass(frozen=True)
class MarketParams:
    """All scalar primitives of the market model.

    Defaults are the package's documented baseline calibration; they are
    defined once here and echoed by ``configs/baseline.yaml``.
    """

    beta: float = 0.95
    price: float = 4.0
    kappa_free: float = 0.9
    kappa_paid: float = 1.2
    omega: float = 0.0
    utility: UtilityCoeffs = field(default_factory=UtilityCoeffs)
    revenue: RevenueCoeffs = field(default_factory=RevenueCoeffs)
    retention: RetentionCoeffs = field(default_factory=RetentionCoeffs)
    conversion: ConversionCoeffs = field(default_factory=ConversionCoeffs)
    grid: GridSpec = field(default_factory=GridSpec)
    psi_cut: float = 0.5
    n_q: int = 60
    payoff_convention: PayoffConvention = PayoffConvention.APPENDIX_SIM
    r_max_bound: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.beta < 1.0:
            raise ModelError(f"beta must lie in (0, 1), got {self.beta}")
        if self.kappa_free < 0.0 or self.kappa_paid < self.kappa_free:
            raise ModelError(
                "inference costs must satisfy kappa_paid >= kappa_free >= 0, "
                f"got kappa_free={self.kappa_free}, kappa_paid={self.kappa_paid}"
            )
        if self.omega < 0.0:
            raise ModelError(f"omega must be nonnegative, got {self.omega}")
        if not 0.0 <= self.retention.rho_min <= 1.0:
            raise ModelError(f"rho_min must lie in [0, 1], got {self.retention.rho_min}")
        if self.retention.alpha_s < 0.0 or self.retention.alpha_c < 0.0:
            raise ModelError("retention slopes alpha_s, alpha_c must be nonnegative")
        if self.grid.s_max < 1 or self.grid.c_max < 1:
            raise ModelError("grid caps s_max, c_max must be >= 1")
        if self.n_q < 1:
            raise ModelError(f"n_q must be >= 1, got {self.n_q}")
        if not 0.0 <= self.psi_cut <= 1.0:
            raise ModelError(f"psi_cut must lie in [0, 1], got {self.psi_cut}")
        for group in (self.utility, self.revenue, self.retention, self.conversion):
            for name, value in vars(group).items():
                if not math.isfinite(value):
                    raise ModelError(f"coefficient {name} must be finite, got {value}")
        if self.r_max_bound is not None:
            if abs(self.price - self.kappa_paid) > self.r_max_bound:
                raise ModelError(
                    f"|price - kappa_paid| = {abs(self.price - self.kappa_paid)} exceeds "
                    f"the configured payoff bound r_max_bound = {self.r_max_bound}"
                )

    def with_(self, **changes) -> "MarketParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class UserType:
    """Persistent user type: gamma is ad sensitivity, theta is reliance."""

    gamma: float
    theta: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma <= 1.0 or not 0.0 <= self.theta <= 1.0:
            raise ModelError(
                f"user type must lie in the unit square, got ({self.gamma}, {self.theta})"
            )


@dataclass(frozen=True)
class QueryDraw:
    """Per-query signals: r is ad profitability, psi is AI quality."""

    r: float
    psi: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.r <= 1.0 or not 0.0 <= self.psi <= 1.0:
            raise ModelError(f"query signals must lie in [0, 1], got ({self.r}, {self.psi})")


@dataclass(frozen=True)
class UserState:
    """Integer experience states plus subscription and activity flags."""

    s: int
    c: int
    z: bool = False
    active: bool = True

    def __post_init__(self) -> None:
        if self.s < 0 or self.c < 0:
            raise ModelError(f"state counters must be nonnegative, got ({self.s}, {self.c})")
        if self.z and not self.active:
            raise ModelError("subscribed users remain active; z=True requires active=True")


def utilities(
    params: MarketParams, user: UserType, query: QueryDraw, state: UserState
) -> tuple[float, float, float]:
    """Logit utility indices (v_free, v_ad, v_out).

    The outside option is normalized to zero and shifted by the competition
    intensity omega.
    """
    u = params.utility
    v_free = u.w_psi * query.psi + u.w_r_free * query.r
    v_ad = u.u0_ad + u.ur_ad * query.r - u.w_gamma * user.gamma - u.uc_ad * state.c
    return v_free, v_ad, params.omega


def engage_prob(
    params: MarketParams, user: UserType, query: QueryDraw, state: UserState, action: Action
) -> float:
    """Probability the user engages with the displayed response.

    Binary logit between the displayed response and the outside option,
    computed in shifted form so it is stable for arbitrarily large indices.
    """
    v_free, v_ad, v_out = utilities(params, user, query, state)
    v_a = v_ad if action is Action.AD else v_free
    return float(expit(v_a - v_out))


def conditional_ad_revenue(params: MarketParams, query: QueryDraw, state: UserState) -> float:
    """Expected ad revenue conditional on engagement, clipped at zero."""
    b = params.revenue
    return max(b.b0 + b.b_r * query.r - b.b_c * state.c - b.b_s * state.s, 0.0)


def flow_payoff(
    params: MarketParams,
    user: UserType,
    query: QueryDraw,
    state: UserState,
    action: Action,
    engaged: bool,
) -> float:
    """Realized one-period payoff to the engine from a display decision."""
    if state.z:
        raise ModelError("no display decision exists for subscribed users")
    if params.payoff_convention is PayoffConvention.MAIN_TEXT:
        payoff = -params.kappa_free
        if action is Action.AD and engaged:
            payoff += conditional_ad_revenue(params, query, state)
        return payoff
    # APPENDIX_SIM: payoffs accrue only upon engagement.
    if not engaged:
        return 0.0
    if action is Action.AD:
        return conditional_ad_revenue(params, query, state)
    return -params.kappa_free


def experience_increment(params: MarketParams, query: QueryDraw) -> int:
    """AI-experience gain from an engaged ad-free display: 1, or 2 on high-quality queries."""
    return 1 + (1 if query.psi >= params.psi_cut else 0)


def transition(
    params: MarketParams, query: QueryDraw, state: UserState, action: Action, engaged: bool
) -> UserState:
    """Apply the post-engagement state update; the subscription flag is untouched."""
    if state.z:
        raise ModelError("no display decision exists for subscribed users")
    if not engaged:
        return state
    if action is Action.FREE:
        s_next = min(state.s + experience_increment(params, query), params.grid.s_max)
        return replace(state, s=s_next)
    c_next = min(state.c + 1, params.grid.c_max)
    return replace(state, c=c_next)


def conversion_threshold(params: MarketParams, user: UserType, c: int | float) -> float:
    """Experience level at which the user subscribes; lower for reliant or ad-fatigued users."""
    t = params.conversion
    return t.tau0 + t.tau_p * params.price - t.tau_theta * user.theta - t.tau_c * c


def conversion_update(params: MarketParams, user: UserType, state: UserState) -> UserState:
    """Recompute the subscription flag; conversion triggers at s >= ceil(threshold) and is absorbing."""
    if state.z:
        return state
    trigger = math.ceil(conversion_threshold(params, user, state.c))
    if state.s >= trigger:
        return replace(state, z=True, active=True)
    return state


def retention_prob(params: MarketParams, state: UserState) -> float:
    """Probability the user remains active next period; subscribers always stay."""
    if state.z:
        return 1.0
    rc = params.retention
    rho = rc.rho_min + (1.0 - rc.rho_min) * float(expit(rc.alpha_s * state.s - rc.alpha_c * state.c))
    return rho


def subscribed_margin(params: MarketParams) -> float:
    """Per-period net payoff from a subscribed user: price - kappa_paid."""
    return params.price - params.kappa_paid
