"""One-step transition kernels for underdamped Langevin dynamics.

The SDE on (x, v) in R^{2d} is

    dx = v dt
    dv = -gamma v dt - u grad f(x) dt + sigma dW,    sigma = sqrt(2 gamma u)

and every function here maps (state, noise, parameters) to the next state as
a pure function: identical inputs give bit-identical outputs.

Methods driven by the damped-integral pair (I1, I2): left-point, Strang
splitting, OBABO, randomized midpoint.  Methods driven by the increment
triple (W, H, K): the shifted-ODE family (reference map, log-ODE, and the
SORT/SOFA discretizations, i.e. the shifted ODE solved with a third-order
Runge-Kutta step or with the Forest-Ruth fourth-order splitting).

Gradient caching: steps accept an optional precomputed grad f at the current
position and report the gradient at the new position when the update already
evaluated it, so a chain pays only the method's incremental gradient cost
(1 per step for left-point/Strang/OBABO, 2 for midpoint and SORT, 3 for
SOFA).
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .brownian import BrownianTriple, ExpIntegralPair, MidpointNoise
from .coeffs import phi1, phi2, sofa_phi
from .targets import Potential

__all__ = [
    "PhaseState",
    "DynamicsParams",
    "StepResult",
    "left_point_step",
    "strang_step",
    "obabo_step",
    "randomized_midpoint_step",
    "sort_step",
    "sofa_step",
    "shifted_ode_reference_step",
    "log_ode_step",
    "contraction_rate",
]

# Test hook: selftest mutation checks flip this to -1.0 to verify the
# deterministic-order suite catches a wrong SORT coefficient.
_SORT_FAULT_SIGN = 1.0

_H_MATCH_RTOL = 1e-9
_GAMMA_MATCH_RTOL = 1e-12


@dataclass(frozen=True)
class PhaseState:
    """Position-velocity pair (x, v), both in R^d (or a batch of pairs)."""

    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if x.shape != v.shape or x.ndim not in (1, 2):
            raise ValueError("x and v must be vectors (or batches of vectors) of equal shape")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)

    @property
    def dim(self) -> int:
        return self.x.shape[-1]


@dataclass(frozen=True)
class DynamicsParams:
    """Friction gamma and inverse mass u > 0; sigma is derived.

    gamma = 0 is admitted (no friction, no noise) so the deterministic limits
    of the integrators can be exercised directly.
    """

    gamma: float
    u: float

    def __post_init__(self):
        if not (self.gamma >= 0.0) or not (self.u > 0.0):
            raise ValueError("gamma must be >= 0 and u positive")

    @property
    def sigma(self) -> float:
        """Noise amplitude sqrt(2 gamma u) of the velocity equation."""
        return math.sqrt(2.0 * self.gamma * self.u)


@dataclass
class StepResult:
    """New state, plus grad f at the new position when the step computed it.

    ``midpoint_x`` is only set by the OBABO step (its half-step position
    estimate, used when sampling at doubled output rate).
    """

    state: PhaseState
    grad_new: np.ndarray | None = None
    midpoint_x: np.ndarray | None = None


def _check_pair(pair: ExpIntegralPair, params: DynamicsParams, h: float, d: int) -> None:
    if abs(pair.gamma - params.gamma) > _GAMMA_MATCH_RTOL * max(1.0, params.gamma):
        raise ValueError(f"noise generated at gamma={pair.gamma!r}, step uses gamma={params.gamma!r}")
    if abs(pair.h - h) > _H_MATCH_RTOL * max(1.0, h):
        raise ValueError(f"noise generated for h={pair.h!r}, step uses h={h!r}")
    if pair.dim != d:
        raise ValueError(f"noise dimension {pair.dim} != state dimension {d}")


def _check_triple(triple: BrownianTriple, h: float, d: int) -> None:
    if abs(triple.h - h) > _H_MATCH_RTOL * max(1.0, h):
        raise ValueError(f"noise generated for h={triple.h!r}, step uses h={h!r}")
    if triple.dim != d:
        raise ValueError(f"noise dimension {triple.dim} != state dimension {d}")


def _grad_at(pot: Potential, x: np.ndarray, cached) -> np.ndarray:
    return pot.grad(x) if cached is None else cached


# Scalar coefficient bundles are memoized per (gamma, h); a chain re-uses one
# entry for its whole run.

@lru_cache(maxsize=1024)
def _ou_coeffs(gamma: float, h: float) -> tuple[float, float, float, float]:
    """(e^{-a}, h phi1(a), h^2 phi2(a), h phi2(a)) at a = gamma h."""
    a = gamma * h
    p2 = phi2(a)
    return math.exp(-a), h * phi1(a), h * h * p2, h * p2


@lru_cache(maxsize=1024)
def _sort_coeffs(gamma: float, h: float):
    a = gamma * h
    ah = 0.5 * a
    half = 0.5 * h
    p1, p2 = phi1(a), phi2(a)
    p1h, p2h = phi1(ah), phi2(ah)
    return (
        half * p1h,          # x_mid: velocity
        half * half * p2h,   # x_mid: gradient (times u)
        0.25 * h * p2h,      # x_mid: noise shift
        h * p1,              # x_new: velocity
        h * h * p2,          # x_new: gradient blend
        h * p2,              # x_new: noise shift
        math.exp(-a),
        math.exp(-ah),
        p1,                  # v: noise shift
    )


@lru_cache(maxsize=1024)
def _sofa_coeffs(gamma: float, h: float):
    def stage(theta: float) -> tuple[float, float]:
        # decay and forcing coefficient (1 - e^{-gamma theta h})/(gamma h) of
        # a velocity flow of signed length theta h
        return math.exp(-gamma * theta * h), theta * phi1(gamma * theta * h)

    return stage(_FR_OUTER), stage(_FR_INNER)


def left_point_step(
    state: PhaseState,
    params: DynamicsParams,
    pot: Potential,
    h: float,
    pair: ExpIntegralPair,
    grad=None,
) -> StepResult:
    """Solve the SDE exactly with grad f frozen at the step's left point.

    One gradient evaluation; exact when grad f is constant.
    """
    _check_pair(pair, params, h, state.dim)
    u, sigma = params.u, params.sigma
    decay, c_xv, c_xg, _ = _ou_coeffs(params.gamma, h)
    gx = _grad_at(pot, state.x, grad)
    x_new = state.x + c_xv * state.v - c_xg * (u * gx) + sigma * pair.i2
    v_new = decay * state.v - c_xv * (u * gx) + sigma * pair.i1
    return StepResult(PhaseState(x_new, v_new))


def strang_step(
    state: PhaseState,
    params: DynamicsParams,
    pot: Potential,
    h: float,
    pair: ExpIntegralPair,
    grad=None,
) -> StepResult:
    """Half kick, exactly sampled Ornstein-Uhlenbeck flow, half kick.

    One new gradient per step (the opening kick reuses the previous step's
    closing gradient).
    """
    _check_pair(pair, params, h, state.dim)
    u, sigma = params.u, params.sigma
    decay, c_xv, _, _ = _ou_coeffs(params.gamma, h)
    gx = _grad_at(pot, state.x, grad)
    v1 = state.v - 0.5 * u * gx * h
    x_new = state.x + c_xv * v1 + sigma * pair.i2
    v2 = decay * v1 + sigma * pair.i1
    g_new = pot.grad(x_new)
    v_new = v2 - 0.5 * u * g_new * h
    return StepResult(PhaseState(x_new, v_new), grad_new=g_new)


def obabo_step(
    state: PhaseState,
    params: DynamicsParams,
    pot: Potential,
    h: float,
    pair_left: ExpIntegralPair,
    pair_right: ExpIntegralPair,
    grad=None,
) -> StepResult:
    """OBABO scheme: OU half-flows around a velocity-Verlet core.

    The two noise pairs cover the step's two half intervals (only their I1
    components enter).  One new gradient per step.  Also reports the
    half-step position estimate x + (v0 + v1) h / 4.
    """
    half = 0.5 * h
    _check_pair(pair_left, params, half, state.dim)
    _check_pair(pair_right, params, half, state.dim)
    u, sigma = params.u, params.sigma
    decay_half = _ou_coeffs(params.gamma, half)[0]
    v0 = decay_half * state.v + sigma * pair_left.i1
    gx = _grad_at(pot, state.x, grad)
    v1 = v0 - 0.5 * u * gx * h
    x_new = state.x + v1 * h
    g_new = pot.grad(x_new)
    v2 = v1 - 0.5 * u * g_new * h
    v_new = decay_half * v2 + sigma * pair_right.i1
    x_mid = state.x + 0.25 * (v0 + v1) * h
    return StepResult(PhaseState(x_new, v_new), grad_new=g_new, midpoint_x=x_mid)


def randomized_midpoint_step(
    state: PhaseState,
    params: DynamicsParams,
    pot: Potential,
    h: float,
    noise: MidpointNoise,
    grad=None,
) -> StepResult:
    """Evaluate grad f at a uniformly random time alpha h within the step.

    ``noise`` supplies alpha together with the damped pairs over [0, alpha h]
    and [0, h] from one path.  Two gradient evaluations per step.
    """
    alpha = noise.alpha
    _check_pair(noise.to_mid, params, alpha * h, state.dim)
    _check_pair(noise.full, params, h, state.dim)
    gamma, u, sigma = params.gamma, params.u, params.sigma
    gx = _grad_at(pot, state.x, grad)

    ha = alpha * h
    aa = gamma * ha
    x1 = state.x + ha * phi1(aa) * state.v - u * ha * ha * phi2(aa) * gx + sigma * noise.to_mid.i2
    g1 = pot.grad(x1)

    decay, c_xv, _, _ = _ou_coeffs(gamma, h)
    hb = (1.0 - alpha) * h
    b = gamma * hb
    x_new = state.x + c_xv * state.v - u * h * hb * phi1(b) * g1 + sigma * noise.full.i2
    v_new = decay * state.v - u * math.exp(-b) * h * g1 + sigma * noise.full.i1
    return StepResult(PhaseState(x_new, v_new))


def sort_step(
    state: PhaseState,
    params: DynamicsParams,
    pot: Potential,
    h: float,
    triple: BrownianTriple,
    grad=None,
) -> StepResult:
    """Shifted-ODE step solved with the simplified third-order Runge-Kutta.

    The bridge noise enters through the velocity shifts sigma (H +- 6K) at
    entry/exit and the drift forcing sigma (W - 12K); two new gradient
    evaluations per step.
    """
    _check_triple(triple, h, state.dim)
    u, sigma = params.u, params.sigma
    (c_mid_v, c_mid_g, c_mid_s, c_xv, c_xg, c_xs,
     decay, decay_half, c_vs) = _sort_coeffs(params.gamma, h)

    gx = _grad_at(pot, state.x, grad)
    v1 = state.v + sigma * (triple.hh + 6.0 * triple.kk)
    shift = sigma * (triple.w - 12.0 * triple.kk)

    x_mid = state.x + c_mid_v * v1 - c_mid_g * (u * gx) + c_mid_s * shift
    g_mid = pot.grad(x_mid)

    g_blend = (u / 3.0) * (gx + _SORT_FAULT_SIGN * 2.0 * g_mid)
    x_new = state.x + c_xv * v1 - c_xg * g_blend + c_xs * shift
    g_new = pot.grad(x_new)

    v2 = (
        decay * v1
        - (h / 6.0) * decay * (u * gx)
        - (2.0 * h / 3.0) * decay_half * (u * g_mid)
        - (h / 6.0) * (u * g_new)
        + c_vs * shift
    )
    v_new = v2 - sigma * (triple.hh - 6.0 * triple.kk)
    return StepResult(PhaseState(x_new, v_new), grad_new=g_new)


# Forest-Ruth composition: outer/inner flow lengths (in units of h) and drift
# lengths.  The backward inner stages make the composition fourth order.
_PHI_FR = sofa_phi()
_FR_OUTER = 0.5 + _PHI_FR
_FR_INNER = -_PHI_FR
_FR_DRIFT_OUT = 1.0 + 2.0 * _PHI_FR
_FR_DRIFT_IN = -(1.0 + 4.0 * _PHI_FR)


def sofa_step(
    state: PhaseState,
    params: DynamicsParams,
    pot: Potential,
    h: float,
    triple: BrownianTriple,
    grad=None,
) -> StepResult:
    """Shifted-ODE step solved with the Forest-Ruth fourth-order splitting.

    Seven stages (four forced OU velocity flows around three drifts, the
    middle ones running backward in time); three new gradient evaluations
    per step.  The one-step phase-volume factor is exp(-gamma h),
    independent of the state.
    """
    _check_triple(triple, h, state.dim)
    u, sigma = params.u, params.sigma
    (decay_out, coeff_out), (decay_in, coeff_in) = _sofa_coeffs(params.gamma, h)

    v = state.v + sigma * (triple.hh + 6.0 * triple.kk)
    shift = sigma * (triple.w - 12.0 * triple.kk)

    def flow(v, decay, coeff, g):
        # velocity OU flow with constant forcing; coeff = (1 - decay)/(gamma h)
        return decay * v + (-u * g * h + shift) * coeff

    gx = _grad_at(pot, state.x, grad)
    v = flow(v, decay_out, coeff_out, gx)
    x = state.x + v * (_FR_DRIFT_OUT * h)
    v = flow(v, decay_in, coeff_in, pot.grad(x))
    x = x + v * (_FR_DRIFT_IN * h)
    v = flow(v, decay_in, coeff_in, pot.grad(x))
    x_new = x + v * (_FR_DRIFT_OUT * h)
    g_new = pot.grad(x_new)
    v = flow(v, decay_out, coeff_out, g_new)
    v_new = v - sigma * (triple.hh - 6.0 * triple.kk)
    return StepResult(PhaseState(x_new, v_new), grad_new=g_new)


def shifted_ode_reference_step(
    state: PhaseState,
    params: DynamicsParams,
    pot: Potential,
    h: float,
    triple: BrownianTriple,
    inner_steps: int = 16,
) -> StepResult:
    """Reference map: integrate the shifted ODE with classical RK4 sub-steps.

    The step applies the entry velocity shift +sigma (H + 6K), integrates

        x' = w,   w' = -gamma w - u grad f(x) + sigma (W - 12K)/h

    over [0, h] with ``inner_steps`` uniform RK4 sub-steps, then applies the
    exit shift -sigma (H + 6K) and the terminal correction +12 sigma K
    (folded into a single -sigma (H - 6K)).  As inner_steps grows this
    converges to the exact shifted-ODE map; SORT and SOFA are regression
    tested against it.
    """
    _check_triple(triple, h, state.dim)
    if inner_steps < 1:
        raise ValueError(f"inner_steps must be >= 1, got {inner_steps}")
    gamma, u, sigma = params.gamma, params.u, params.sigma
    forcing = sigma * (triple.w - 12.0 * triple.kk) / h

    x = state.x
    w = state.v + sigma * (triple.hh + 6.0 * triple.kk)
    dt = h / inner_steps

    def accel(x, w):
        return -gamma * w - u * pot.grad(x) + forcing

    for _ in range(inner_steps):
        k1x = w
        k1v = accel(x, w)
        k2x = w + 0.5 * dt * k1v
        k2v = accel(x + 0.5 * dt * k1x, k2x)
        k3x = w + 0.5 * dt * k2v
        k3v = accel(x + 0.5 * dt * k2x, k3x)
        k4x = w + dt * k3v
        k4v = accel(x + dt * k3x, k4x)
        x = x + (dt / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        w = w + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)

    v_new = w - sigma * (triple.hh - 6.0 * triple.kk)
    return StepResult(PhaseState(x, v_new))


def log_ode_step(
    state: PhaseState,
    params: DynamicsParams,
    pot: Potential,
    h: float,
    triple: BrownianTriple,
    inner_steps: int = 16,
) -> StepResult:
    """Shifted-ODE reference map with the second bridge moment K forced to zero."""
    _check_triple(triple, h, state.dim)
    zeroed = BrownianTriple(triple.h, triple.w, triple.hh, np.zeros_like(triple.kk))
    return shifted_ode_reference_step(state, params, pot, h, zeroed, inner_steps=inner_steps)


def contraction_rate(gamma: float, u: float, m: float, M: float, lam: float) -> float:
    """Wasserstein contraction rate of the twisted coordinates (lam x + v, (gamma-lam) x + v).

        alpha = max((gamma - lam)^2 - u M, u m - lam^2) / (gamma - 2 lam)

    valid for 0 <= lam < gamma / 2.
    """
    if not (gamma > 0.0):
        raise ValueError("gamma must be positive")
    if not (0.0 <= lam < 0.5 * gamma):
        raise ValueError(f"lambda must satisfy 0 <= lambda < gamma/2, got {lam!r}")
    return max((gamma - lam) ** 2 - u * M, u * m - lam * lam) / (gamma - 2.0 * lam)
