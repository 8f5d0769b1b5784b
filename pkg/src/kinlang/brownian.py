"""Stochastic integrals of Brownian motion used by the Langevin integrators.

Two noise families are produced here:

* the increment triple (W, H, K) over a step: the raw increment, the scaled
  time integral of the bridge, and the second bridge moment.  Per coordinate
  these are independent centered Gaussians with variances h, h/12 and h/720.
* the damped-integral pair (I1, I2) = (int e^{-gamma(t-tau)} dW,
  iint e^{-gamma(tau-r)} dW dtau) driving the exactly sampled
  Ornstein-Uhlenbeck flows.

Both families support exact pathwise combination of adjacent intervals, which
is how coarse and fine chains are driven by the same underlying path.  The
triple is carried internally through the raw moments

    M = int (W_r - W_s) dr           = h W / 2 + h H
    N = int (r - s)(W_r - W_s) dr    = h^2 W / 3 + h^2 H / 2 - h^2 K

because (W, M, N) chain additively across intervals.

``FinePathOracle`` provides the independent test oracle: a path sampled on a
fine uniform grid, treated as exactly piecewise linear, with closed-form
quadratures of every integral above on any sub-interval.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .coeffs import exp_pair_kernel, phi1, phi2

__all__ = [
    "BrownianTriple",
    "SpaceTimeMoments",
    "ExpIntegralPair",
    "MidpointNoise",
    "MidpointSplit",
    "sample_triple",
    "triple_to_moments",
    "moments_to_triple",
    "combine_triples",
    "exp_pair_covariance",
    "sample_exp_pair",
    "combine_exp_pairs",
    "sample_midpoint_noise",
    "split_midpoint_structure",
    "fine_path_oracle",
    "FinePathOracle",
]

_GAMMA_MATCH_TOL = 1e-12


class ResidualVarianceError(ArithmeticError):
    """Conditional variance went negative beyond round-off; kernels are broken."""


def _check_interval(h: float) -> None:
    if not (h > 0.0) or not math.isfinite(h):
        raise ValueError(f"interval length must be positive and finite, got {h!r}")


def _as_vector(x, name: str) -> np.ndarray:
    # a single R^d vector, or a batch of them stacked along the first axis
    arr = np.asarray(x, dtype=float)
    if arr.ndim not in (1, 2) or arr.shape[-1] < 1:
        raise ValueError(f"{name} must be a vector (or batch of vectors) with at least one entry")
    return arr


@dataclass(frozen=True)
class BrownianTriple:
    """Increment W, bridge area H and second bridge moment K over one interval."""

    h: float
    w: np.ndarray
    hh: np.ndarray
    kk: np.ndarray

    def __post_init__(self):
        _check_interval(self.h)
        w = _as_vector(self.w, "w")
        hh = _as_vector(self.hh, "hh")
        kk = _as_vector(self.kk, "kk")
        if not (w.shape == hh.shape == kk.shape):
            raise ValueError("w, hh, kk must share one dimension")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "hh", hh)
        object.__setattr__(self, "kk", kk)

    @property
    def dim(self) -> int:
        return self.w.shape[-1]


@dataclass(frozen=True)
class SpaceTimeMoments:
    """Raw moments (W, M, N) of the increment path over one interval."""

    h: float
    w: np.ndarray
    m: np.ndarray
    n: np.ndarray

    def __post_init__(self):
        _check_interval(self.h)
        w = _as_vector(self.w, "w")
        m = _as_vector(self.m, "m")
        n = _as_vector(self.n, "n")
        if not (w.shape == m.shape == n.shape):
            raise ValueError("w, m, n must share one dimension")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "n", n)

    @property
    def dim(self) -> int:
        return self.w.shape[-1]


@dataclass(frozen=True)
class ExpIntegralPair:
    """Damped stochastic integrals (I1, I2) over one interval at friction gamma."""

    h: float
    gamma: float
    i1: np.ndarray
    i2: np.ndarray

    def __post_init__(self):
        _check_interval(self.h)
        if not (self.gamma >= 0.0) or not math.isfinite(self.gamma):
            raise ValueError(f"gamma must be >= 0 and finite, got {self.gamma!r}")
        i1 = _as_vector(self.i1, "i1")
        i2 = _as_vector(self.i2, "i2")
        if i1.shape != i2.shape:
            raise ValueError("i1 and i2 must share one dimension")
        object.__setattr__(self, "i1", i1)
        object.__setattr__(self, "i2", i2)

    @property
    def dim(self) -> int:
        return self.i1.shape[-1]


def sample_triple(h: float, d: int, rng) -> BrownianTriple:
    """Draw an exact-in-distribution (W, H, K) triple for a step of length h.

    Draw order from ``rng`` is fixed: W, then H, then K.
    """
    _check_interval(h)
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    w = math.sqrt(h) * rng.standard_normal(d)
    hh = math.sqrt(h / 12.0) * rng.standard_normal(d)
    kk = math.sqrt(h / 720.0) * rng.standard_normal(d)
    return BrownianTriple(h, w, hh, kk)


def triple_to_moments(t: BrownianTriple) -> SpaceTimeMoments:
    """Linear map (W, H, K) -> (W, M, N)."""
    h = t.h
    m = 0.5 * h * t.w + h * t.hh
    n = (h * h / 3.0) * t.w + 0.5 * h * h * t.hh - h * h * t.kk
    return SpaceTimeMoments(h, t.w, m, n)


def moments_to_triple(s: SpaceTimeMoments) -> BrownianTriple:
    """Inverse of ``triple_to_moments``: H = M/h - W/2, K = (hM/2 - N + h^2 W/12)/h^2."""
    h = s.h
    hh = s.m / h - 0.5 * s.w
    kk = (0.5 * h * s.m - s.n + (h * h / 12.0) * s.w) / (h * h)
    return BrownianTriple(h, s.w, hh, kk)


def combine_triples(left: BrownianTriple, right: BrownianTriple) -> BrownianTriple:
    """Triple over the concatenation of two adjacent intervals.

    Pathwise identity: holds exactly for any integrable path, not just
    Brownian motion, so coarse noise built this way is driven by the same
    path as its two fine halves.  (Same algebra as mapping both sides to
    moments, chaining additively, and mapping back, with the intermediates
    fused away.)
    """
    if left.dim != right.dim:
        raise ValueError(f"dimension mismatch: {left.dim} vs {right.dim}")
    hl, hr = left.h, right.h
    h = hl + hr
    ml = 0.5 * hl * left.w + hl * left.hh
    nl = (hl * hl / 3.0) * left.w + 0.5 * hl * hl * left.hh - hl * hl * left.kk
    mr = 0.5 * hr * right.w + hr * right.hh
    nr = (hr * hr / 3.0) * right.w + 0.5 * hr * hr * right.hh - hr * hr * right.kk
    w = left.w + right.w
    m = ml + mr + hr * left.w
    n = nl + nr + hl * mr + (0.5 * hr * hr + hr * hl) * left.w
    hh = m / h - 0.5 * w
    kk = (0.5 * h * m - n + (h * h / 12.0) * w) / (h * h)
    return BrownianTriple(h, w, hh, kk)


def exp_pair_covariance(gamma: float, h: float) -> tuple[float, float, float]:
    """Per-coordinate covariance (Var I1, Cov(I1,I2), Var I2) of the damped pair."""
    _check_interval(h)
    if not (gamma >= 0.0):
        raise ValueError(f"gamma must be >= 0, got {gamma!r}")
    k11, k12, k22 = exp_pair_kernel(gamma * h)
    return h * k11, h * h * k12, h * h * h * k22


@lru_cache(maxsize=4096)
def _pair_sampling_consts(gamma: float, h: float) -> tuple[float, float, float]:
    """(std of I1, regression coefficient of I2 on I1, residual std of I2)."""
    a = gamma * h
    k11, k12, k22 = exp_pair_kernel(a)
    kres = k22 - k12 * k12 / k11
    if kres < -1e-13 * k22:
        raise ResidualVarianceError(
            f"residual variance kernel {kres!r} < 0 at gamma*h = {a!r}"
        )
    kres = max(kres, 0.0)
    c = h * k12 / k11  # = (1 - e^-a) / (gamma (1 + e^-a))
    return math.sqrt(h * k11), c, math.sqrt(h**3 * kres)


def sample_exp_pair(gamma: float, h: float, d: int, rng) -> ExpIntegralPair:
    """Draw (I1, I2) from the exact joint normal law over a step of length h.

    I1 is drawn first, then I2 = c I1 + X with X independent,
    c = (1 - e^{-gamma h}) / (gamma (1 + e^{-gamma h})), and the residual
    variance of X evaluated through cancellation-safe kernels.
    """
    _check_interval(h)
    if not (gamma >= 0.0) or not math.isfinite(gamma):
        raise ValueError(f"gamma must be >= 0 and finite, got {gamma!r}")
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    std1, c, std_res = _pair_sampling_consts(gamma, h)
    i1 = std1 * rng.standard_normal(d)
    i2 = c * i1 + std_res * rng.standard_normal(d)
    return ExpIntegralPair(h, gamma, i1, i2)


def _check_gamma_match(gamma: float, *pairs: ExpIntegralPair) -> None:
    tol = _GAMMA_MATCH_TOL * max(1.0, abs(gamma))
    for p in pairs:
        if abs(p.gamma - gamma) > tol:
            raise ValueError(f"gamma mismatch: {p.gamma!r} vs {gamma!r}")


def combine_exp_pairs(gamma: float, left: ExpIntegralPair, right: ExpIntegralPair) -> ExpIntegralPair:
    """Damped pair over the concatenation of two adjacent intervals.

    I1 chains with an extra decay e^{-gamma h_right} on the left part; the
    accumulated I2 picks up the left I1 integrated over the right interval.
    Exact pathwise, like ``combine_triples``.
    """
    _check_gamma_match(gamma, left, right)
    if left.dim != right.dim:
        raise ValueError(f"dimension mismatch: {left.dim} vs {right.dim}")
    hr = right.h
    decay = math.exp(-gamma * hr)
    i1 = decay * left.i1 + right.i1
    i2 = left.i2 + right.i2 + hr * phi1(gamma * hr) * left.i1
    return ExpIntegralPair(left.h + hr, gamma, i1, i2)


@dataclass(frozen=True)
class MidpointNoise:
    """Noise consumed by one randomized-midpoint step.

    ``alpha`` is the uniform fraction of the step at which the gradient is
    evaluated, ``to_mid`` the damped pair over [0, alpha h] and ``full`` the
    pair over [0, h], all from the same path.
    """

    alpha: float
    to_mid: ExpIntegralPair
    full: ExpIntegralPair


def _positive_unit(rng) -> float:
    # rng.random() can return exactly 0.0; the open interval is required.
    u = rng.random()
    while u == 0.0:
        u = rng.random()
    return u


def sample_midpoint_noise(gamma: float, h: float, d: int, rng) -> MidpointNoise:
    """Standalone per-step noise for the randomized midpoint method."""
    _check_interval(h)
    alpha = _positive_unit(rng)
    to_mid = sample_exp_pair(gamma, alpha * h, d, rng)
    rest = sample_exp_pair(gamma, (1.0 - alpha) * h, d, rng)
    return MidpointNoise(alpha, to_mid, combine_exp_pairs(gamma, to_mid, rest))


@dataclass(frozen=True)
class MidpointSplit:
    """Coupled randomized-midpoint noise for one coarse step and its two halves.

    With s < u < t the coarse interval and its midpoint, the structure holds
    the fine midpoints x in (s,u) and y in (u,t), the coarse midpoint z
    (chosen between x and y by a Rademacher sign, so z ~ U(s,t)), and the
    damped pairs over all nine sub-intervals, generated from a single path by
    sampling the finest partition and combining upward.
    """

    h: float
    gamma: float
    x_frac: float  # (x - s) / (u - s)
    y_frac: float  # (y - u) / (t - u)
    rademacher_side: str  # "left": z = x, "right": z = y
    alpha: float  # (z - s) / (t - s)
    s_x: ExpIntegralPair
    x_u: ExpIntegralPair
    s_u: ExpIntegralPair
    u_y: ExpIntegralPair
    y_t: ExpIntegralPair
    u_t: ExpIntegralPair
    s_z: ExpIntegralPair
    z_t: ExpIntegralPair
    s_t: ExpIntegralPair

    def coarse_noise(self) -> MidpointNoise:
        return MidpointNoise(self.alpha, self.s_z, self.s_t)

    def fine_noise(self, half: int) -> MidpointNoise:
        if half == 0:
            return MidpointNoise(self.x_frac, self.s_x, self.s_u)
        if half == 1:
            return MidpointNoise(self.y_frac, self.u_y, self.u_t)
        raise ValueError(f"half must be 0 or 1, got {half}")


def split_midpoint_structure(gamma: float, h: float, d: int, rng) -> MidpointSplit:
    """Build the coupled midpoint structure over a coarse step of length h.

    Draw order from ``rng`` is fixed: x fraction, y fraction, Rademacher sign,
    then the damped pairs over the four atomic intervals in time order.
    """
    _check_interval(h)
    half = 0.5 * h
    x_frac = _positive_unit(rng)
    y_frac = _positive_unit(rng)
    side = "left" if rng.random() < 0.5 else "right"

    s_x = sample_exp_pair(gamma, x_frac * half, d, rng)
    x_u = sample_exp_pair(gamma, (1.0 - x_frac) * half, d, rng)
    u_y = sample_exp_pair(gamma, y_frac * half, d, rng)
    y_t = sample_exp_pair(gamma, (1.0 - y_frac) * half, d, rng)

    s_u = combine_exp_pairs(gamma, s_x, x_u)
    u_t = combine_exp_pairs(gamma, u_y, y_t)
    s_t = combine_exp_pairs(gamma, s_u, u_t)
    if side == "left":
        alpha = 0.5 * x_frac
        s_z = s_x
        z_t = combine_exp_pairs(gamma, x_u, u_t)
    else:
        alpha = 0.5 + 0.5 * y_frac
        s_z = combine_exp_pairs(gamma, s_u, u_y)
        z_t = y_t
    return MidpointSplit(
        h, gamma, x_frac, y_frac, side, alpha,
        s_x, x_u, s_u, u_y, y_t, u_t, s_z, z_t, s_t,
    )


class FinePathOracle:
    """A path on a fine uniform grid, treated as exactly piecewise linear.

    All integrals are computed in closed form per segment, so the pathwise
    combination identities hold to round-off rather than quadrature error.
    Sub-intervals are addressed by grid indices (i0, i1); with a power-of-two
    number of substeps every dyadic sub-interval lands on the grid.
    """

    def __init__(self, h: float, values: np.ndarray):
        _check_interval(h)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] < 3:
            raise ValueError("need at least 2 substeps (3 grid values)")
        self.h = float(h)
        self.values = values
        self.substeps = values.shape[0] - 1
        self.d = values.shape[1]
        self.dt = self.h / self.substeps
        self.times = np.linspace(0.0, self.h, self.substeps + 1)

    @classmethod
    def sample(cls, h: float, substeps: int, d: int, rng) -> "FinePathOracle":
        """Simulate a Brownian path: W_0 = 0 and exact N(0, dt) increments."""
        _check_interval(h)
        if substeps < 2:
            raise ValueError(f"substeps must be >= 2, got {substeps}")
        if d < 1:
            raise ValueError(f"dimension must be >= 1, got {d}")
        dt = h / substeps
        incs = math.sqrt(dt) * rng.standard_normal((substeps, d))
        values = np.vstack([np.zeros((1, d)), np.cumsum(incs, axis=0)])
        return cls(h, values)

    @classmethod
    def from_function(cls, h: float, substeps: int, fn) -> "FinePathOracle":
        """Deterministic path from values fn(t) on the grid (for exact tests)."""
        times = np.linspace(0.0, h, substeps + 1)
        values = np.asarray([np.atleast_1d(fn(t)) for t in times], dtype=float)
        return cls(h, values)

    def _span(self, i0: int, i1: int):
        if not (0 <= i0 < i1 <= self.substeps):
            raise ValueError(f"invalid grid span ({i0}, {i1}) for {self.substeps} substeps")
        return self.times[i0], self.times[i1]

    def increment(self, i0: int, i1: int) -> np.ndarray:
        self._span(i0, i1)
        return self.values[i1] - self.values[i0]

    def moments(self, i0: int, i1: int) -> SpaceTimeMoments:
        """Exact (W, M, N) of the piecewise-linear path over [t_{i0}, t_{i1}]."""
        s, t = self._span(i0, i1)
        x = self.values[i0:i1 + 1]
        xs = x[0]
        g = self.times[i0:i1 + 1] - s  # segment endpoints relative to s
        lo, hi = g[:-1, None], g[1:, None]
        a = x[:-1] - xs  # value at segment start, relative to path start
        dx = np.diff(x, axis=0)
        slope = dx / self.dt
        w = x[-1] - xs
        # m: trapezoid is exact for linear segments
        m = np.sum(0.5 * self.dt * (x[:-1] + x[1:]), axis=0) - (t - s) * xs
        # n = int (r - s) (X_r - X_s) dr, per segment X_r - X_s = a + slope (r - lo)
        n = np.sum(a * 0.5 * (hi**2 - lo**2) + slope * (lo * self.dt**2 / 2.0 + self.dt**3 / 3.0), axis=0)
        return SpaceTimeMoments(t - s, w, m, n)

    def triple(self, i0: int, i1: int) -> BrownianTriple:
        """Exact (W, H, K) of the piecewise-linear path over [t_{i0}, t_{i1}]."""
        return moments_to_triple(self.moments(i0, i1))

    def double_time_integral(self, i0: int, i1: int) -> np.ndarray:
        """iint (X_r - X_s) dr2 dr1 = int (t - r)(X_r - X_s) dr, exact per segment."""
        s, t = self._span(i0, i1)
        x = self.values[i0:i1 + 1]
        xs = x[0]
        g = self.times[i0:i1 + 1]
        lo, hi = g[:-1, None], g[1:, None]
        a = x[:-1] - xs
        slope = np.diff(x, axis=0) / self.dt
        term_a = a * 0.5 * ((t - lo) ** 2 - (t - hi) ** 2)
        term_s = slope * ((t - lo) * self.dt**2 / 2.0 - self.dt**3 / 3.0)
        return np.sum(term_a + term_s, axis=0)

    def exp_pair(self, gamma: float, i0: int, i1: int, rule: str = "linear") -> ExpIntegralPair:
        """Damped pair (I1, I2) over [t_{i0}, t_{i1}] by quadrature.

        rule="linear": exact Riemann-Stieltjes integrals of the piecewise-
        linear path (kernel integrated analytically against each segment's
        slope); reduces to (W, M) as gamma -> 0.
        rule="left": left-point discretization of the Ito integral with the
        outer time integral done exactly.
        Both rules satisfy the combination identities exactly on grid points.
        """
        if not (gamma > 0.0):
            raise ValueError(f"gamma must be positive, got {gamma!r}")
        s, t = self._span(i0, i1)
        g = self.times[i0:i1 + 1]
        dx = np.diff(self.values[i0:i1 + 1], axis=0)
        if rule == "linear":
            tau = (t - g[1:])[:, None]  # time from segment END to t
            decay = np.exp(-gamma * tau)
            p1 = phi1(gamma * self.dt)
            p2 = phi2(gamma * self.dt)
            i1v = p1 * np.sum(decay * dx, axis=0)
            weight = -np.expm1(-gamma * tau) / gamma + decay * (self.dt * p2)
            i2v = np.sum(weight * dx, axis=0)
        elif rule == "left":
            tau = (t - g[:-1])[:, None]  # time from segment START to t
            i1v = np.sum(np.exp(-gamma * tau) * dx, axis=0)
            i2v = np.sum(-np.expm1(-gamma * tau) / gamma * dx, axis=0)
        else:
            raise ValueError(f"unknown quadrature rule {rule!r}")
        return ExpIntegralPair(t - s, gamma, i1v, i2v)


def fine_path_oracle(h: float, substeps: int, d: int, rng) -> FinePathOracle:
    """Sample a fine-grid Brownian path oracle (see ``FinePathOracle``)."""
    return FinePathOracle.sample(h, substeps, d, rng)
