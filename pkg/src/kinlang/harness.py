"""Convergence experiments: strong-error estimation and order fitting.

The strong-error estimator runs each method at step h and at h/2 on the same
Brownian path and reports

    S = sqrt( (1/n) sum_i || x^h_i(T) - x^{h/2}_i(T) ||^2 )

over n independent paths.  Synchronization is by construction: noise is
sampled at the finest resolution a method consumes and combined upward, so a
coarse step's noise is exactly the pathwise combination of its two fine
halves.  All draws are addressed by (seed, chain, step, tag) counter-based
streams, making every number independent of execution order and thread
count; per-path results are reduced with exactly rounded sums so any thread
count produces identical output.
"""

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import brownian, coeffs, rng, samplers
from .brownian import combine_exp_pairs, combine_triples
from .rng import Tag
from .samplers import DynamicsParams, PhaseState
from .targets import Potential

__all__ = [
    "DivergenceError",
    "ErrorRow",
    "OrderFit",
    "StudyConfig",
    "StudyResult",
    "MomentReport",
    "METHOD_NAMES",
    "canonical_method",
    "strong_error",
    "fit_order",
    "stationary_moments",
    "run_study",
    "write_csv",
    "CSV_HEADER",
]

DIVERGENCE_LIMIT = 1e8

# noise families
_TRIPLE = "triple"
_PAIR = "pair"
_OBABO = "obabo"
_MIDPOINT = "midpoint"

_METHODS = {
    "left-point": _PAIR,
    "strang": _PAIR,
    "obabo": _OBABO,
    "midpoint": _MIDPOINT,
    "sort": _TRIPLE,
    "sofa": _TRIPLE,
    "log-ode": _TRIPLE,
    "shifted-ode": _TRIPLE,
}
_ALIASES = {
    "left_point": "left-point",
    "leftpoint": "left-point",
    "randomized-midpoint": "midpoint",
    "randomized_midpoint": "midpoint",
    "log_ode": "log-ode",
    "logode": "log-ode",
    "shifted_ode": "shifted-ode",
    "shiftedode": "shifted-ode",
}

METHOD_NAMES = tuple(_METHODS)

# methods whose step cost includes an inner ODE solve
_INNER_METHODS = frozenset({"log-ode", "shifted-ode"})


class DivergenceError(RuntimeError):
    """A trajectory left the |x| <= 1e8 guard; the message names the step."""


def canonical_method(name: str) -> str:
    key = name.strip().lower()
    key = _ALIASES.get(key, key)
    if key not in _METHODS:
        raise ValueError(f"unknown method {name!r}; known: {', '.join(METHOD_NAMES)}")
    return key


@dataclass(frozen=True)
class ErrorRow:
    """One strong-error measurement."""

    method: str
    h: float
    N: int
    samples: int
    s_value: float
    std_err: float
    wall_time: float


@dataclass(frozen=True)
class OrderFit:
    """Least-squares fit of log S against log h."""

    slope: float
    intercept: float
    r_squared: float


@dataclass
class StudyConfig:
    """Sweep configuration: methods x step sizes at fixed horizon and target."""

    target: Potential
    gamma: float
    u: float
    T: float
    h_grid: list[float]
    n: int
    seed: int
    methods: list[str]
    x0_std: float = math.sqrt(10.0)
    inner_steps: int = 16
    threads: int = 1
    phase_norm: bool = False

    def __post_init__(self):
        self.methods = [canonical_method(m) for m in self.methods]
        if not self.methods:
            raise ValueError("need at least one method")
        if self.n < 2:
            raise ValueError("need at least two sample paths")
        if not self.h_grid:
            raise ValueError("need at least one step size")
        if any(h2 >= h1 for h1, h2 in zip(self.h_grid, self.h_grid[1:])):
            raise ValueError("h grid must be strictly decreasing")
        for h in self.h_grid:
            _steps_for(self.T, h)


@dataclass
class StudyResult:
    rows: list[ErrorRow]
    orders: dict[str, OrderFit]


def _steps_for(T: float, h: float) -> int:
    if not (h > 0.0) or not (T > 0.0):
        raise ValueError("T and h must be positive")
    N = round(T / h)
    if N < 1 or abs(N * h - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"step size {h!r} does not divide horizon {T!r}")
    return N


def _apply_step(method, state, params, pot, h, noise, grad, inner_steps):
    if method == "left-point":
        return samplers.left_point_step(state, params, pot, h, noise, grad)
    if method == "strang":
        return samplers.strang_step(state, params, pot, h, noise, grad)
    if method == "obabo":
        return samplers.obabo_step(state, params, pot, h, noise[0], noise[1], grad)
    if method == "midpoint":
        return samplers.randomized_midpoint_step(state, params, pot, h, noise, grad)
    if method == "sort":
        return samplers.sort_step(state, params, pot, h, noise, grad)
    if method == "sofa":
        return samplers.sofa_step(state, params, pot, h, noise, grad)
    if method == "log-ode":
        return samplers.log_ode_step(state, params, pot, h, noise, inner_steps=inner_steps)
    if method == "shifted-ode":
        return samplers.shifted_ode_reference_step(state, params, pot, h, noise, inner_steps=inner_steps)
    raise ValueError(f"unknown method {method!r}")


def step_noise(method: str, params: DynamicsParams, h: float, d: int, seed: int, chain: int, k: int):
    """Per-step noise for a standalone chain of ``method`` at resolution h."""
    family = _METHODS[method]
    if family == _TRIPLE:
        return brownian.sample_triple(h, d, rng.scratch_stream(seed, chain, k, Tag.TRIPLE))
    if family == _PAIR:
        return brownian.sample_exp_pair(params.gamma, h, d, rng.scratch_stream(seed, chain, k, Tag.PAIR))
    if family == _OBABO:
        left = brownian.sample_exp_pair(params.gamma, 0.5 * h, d, rng.scratch_stream(seed, chain, k, Tag.PAIR_LEFT))
        right = brownian.sample_exp_pair(params.gamma, 0.5 * h, d, rng.scratch_stream(seed, chain, k, Tag.PAIR_RIGHT))
        return (left, right)
    if family == _MIDPOINT:
        return brownian.sample_midpoint_noise(params.gamma, h, d, rng.scratch_stream(seed, chain, k, Tag.MIDPOINT))
    raise AssertionError(family)


def _assert_sync(ok: bool, what: str, k: int) -> None:
    if not ok:
        raise AssertionError(f"coarse/fine noise desynchronized ({what}) at coarse step {k}")


def coarse_fine_noise(method: str, params: DynamicsParams, h: float, d: int, seed: int, chain: int, k: int):
    """Noise for coarse step k of size h plus its two fine half-steps.

    Fine noise is sampled first (keyed by fine step index) and the coarse
    noise is its exact pathwise combination; the consistency of the
    combination is asserted on every step.
    """
    family = _METHODS[method]
    gamma = params.gamma
    half = 0.5 * h
    if family == _TRIPLE:
        a = brownian.sample_triple(half, d, rng.scratch_stream(seed, chain, 2 * k, Tag.TRIPLE))
        b = brownian.sample_triple(half, d, rng.scratch_stream(seed, chain, 2 * k + 1, Tag.TRIPLE))
        coarse = combine_triples(a, b)
        _assert_sync(bool(np.all(coarse.w == a.w + b.w)) and coarse.h == h, "triple", k)
        return coarse, a, b
    if family == _PAIR:
        a = brownian.sample_exp_pair(gamma, half, d, rng.scratch_stream(seed, chain, 2 * k, Tag.PAIR))
        b = brownian.sample_exp_pair(gamma, half, d, rng.scratch_stream(seed, chain, 2 * k + 1, Tag.PAIR))
        coarse = combine_exp_pairs(gamma, a, b)
        _assert_sync(coarse.h == h, "pair", k)
        return coarse, a, b
    if family == _OBABO:
        quarter = 0.5 * half
        quads = []
        for j, tags in ((2 * k, (Tag.PAIR_LEFT, Tag.PAIR_RIGHT)), (2 * k + 1, (Tag.PAIR_LEFT, Tag.PAIR_RIGHT))):
            quads.append(tuple(
                brownian.sample_exp_pair(gamma, quarter, d, rng.scratch_stream(seed, chain, j, tag))
                for tag in tags
            ))
        coarse = (
            combine_exp_pairs(gamma, quads[0][0], quads[0][1]),
            combine_exp_pairs(gamma, quads[1][0], quads[1][1]),
        )
        _assert_sync(coarse[0].h == half and coarse[1].h == half, "obabo", k)
        return coarse, quads[0], quads[1]
    if family == _MIDPOINT:
        split = brownian.split_midpoint_structure(gamma, h, d, rng.scratch_stream(seed, chain, k, Tag.MIDPOINT))
        recombined = combine_exp_pairs(gamma, split.s_z, split.z_t)
        scale = max(1.0, float(np.max(np.abs(split.s_t.i2))))
        _assert_sync(
            float(np.max(np.abs(recombined.i1 - split.s_t.i1))) <= 1e-12 * scale
            and float(np.max(np.abs(recombined.i2 - split.s_t.i2))) <= 1e-12 * scale,
            "midpoint", k,
        )
        return split.coarse_noise(), split.fine_noise(0), split.fine_noise(1)
    raise AssertionError(family)


def _check_divergence(state: PhaseState, method: str, k: int, which: str) -> None:
    if not np.all(np.abs(state.x) <= DIVERGENCE_LIMIT):
        raise DivergenceError(f"{method}: {which} trajectory exceeded |x| = {DIVERGENCE_LIMIT:g} at step {k}")


# ----------------------------------------------------------------------
# Batched execution.  Chains are advanced in fixed blocks of _BLOCK rows:
# every step map is elementwise in the chain axis, so stacking chains changes
# nothing numerically, while the per-step numpy overhead is paid once per
# block instead of once per chain.  Noise is still drawn from each chain's
# own (seed, chain, step, tag) stream.  Block boundaries depend only on n,
# never on the thread count, so threading cannot change any result.

_BLOCK = 32

_PHI2_POLY = np.array(coeffs._PHI2_COEFFS)


def _phi1_vec(a: np.ndarray) -> np.ndarray:
    # (1 - e^{-a})/a for strictly positive a; expm1 keeps full precision
    return -np.expm1(-a) / a


def _phi2_vec(a: np.ndarray) -> np.ndarray:
    # (e^{-a} + a - 1)/a^2 with the same series branch as the scalar kernel
    out = np.empty_like(a)
    small = a < coeffs._PHI2_CUTOFF
    if np.any(small):
        out[small] = np.polyval(_PHI2_POLY, -a[small])
    big = ~small
    if np.any(big):
        ab = a[big]
        out[big] = (np.expm1(-ab) + ab) / (ab * ab)
    return out


def _block_init_states(params, d, seed, chains, x0_std):
    b = len(chains)
    x0 = np.empty((b, d))
    v0 = np.empty((b, d))
    v_std = math.sqrt(params.u)
    for i, c in enumerate(chains):
        x0[i] = x0_std * rng.scratch_stream(seed, c, 0, Tag.INIT_X).standard_normal(d)
        v0[i] = v_std * rng.scratch_stream(seed, c, 0, Tag.INIT_V).standard_normal(d)
    return PhaseState(x0, v0), PhaseState(x0.copy(), v0.copy())


def _block_triples(h, d, seed, chains, step):
    """Rows of independent (W, H, K) draws, one keyed stream per chain."""
    b = len(chains)
    w = np.empty((b, d))
    hh = np.empty((b, d))
    kk = np.empty((b, d))
    sw, sh, sk = math.sqrt(h), math.sqrt(h / 12.0), math.sqrt(h / 720.0)
    for i, c in enumerate(chains):
        g = rng.scratch_stream(seed, c, step, Tag.TRIPLE)
        # draw order matches sample_triple: W, H, K
        w[i] = sw * g.standard_normal(d)
        hh[i] = sh * g.standard_normal(d)
        kk[i] = sk * g.standard_normal(d)
    return brownian.BrownianTriple(h, w, hh, kk)


def _block_pairs(gamma, h, d, seed, chains, step, tag):
    """Rows of independent (I1, I2) draws, one keyed stream per chain."""
    b = len(chains)
    i1 = np.empty((b, d))
    i2 = np.empty((b, d))
    std1, creg, std_res = brownian._pair_sampling_consts(gamma, h)
    for i, c in enumerate(chains):
        g = rng.scratch_stream(seed, c, step, tag)
        # draw order matches sample_exp_pair: I1, then the I2 residual
        i1[i] = std1 * g.standard_normal(d)
        i2[i] = creg * i1[i] + std_res * g.standard_normal(d)
    return brownian.ExpIntegralPair(h, gamma, i1, i2)


def _block_midpoint_splits(gamma, h, d, seed, chains, step):
    """Per-chain coupled midpoint structures, flattened to batched arrays.

    Sub-interval lengths differ per chain, so the structures are built one
    chain at a time; the step math consumes the stacked rows.  The stored
    whole-interval pair is checked against combine([s,z], [z,t]) per chain.
    """
    b = len(chains)
    out = {
        "alpha": np.empty((b, 1)), "x_frac": np.empty((b, 1)), "y_frac": np.empty((b, 1)),
        "mid_i2_c": np.empty((b, d)), "full_i1_c": np.empty((b, d)), "full_i2_c": np.empty((b, d)),
        "mid_i2_0": np.empty((b, d)), "full_i1_0": np.empty((b, d)), "full_i2_0": np.empty((b, d)),
        "mid_i2_1": np.empty((b, d)), "full_i1_1": np.empty((b, d)), "full_i2_1": np.empty((b, d)),
    }
    for i, c in enumerate(chains):
        split = brownian.split_midpoint_structure(gamma, h, d, rng.scratch_stream(seed, c, step, Tag.MIDPOINT))
        re = combine_exp_pairs(gamma, split.s_z, split.z_t)
        scale = max(1.0, float(np.max(np.abs(split.s_t.i2))))
        _assert_sync(
            float(np.max(np.abs(re.i1 - split.s_t.i1))) <= 1e-12 * scale
            and float(np.max(np.abs(re.i2 - split.s_t.i2))) <= 1e-12 * scale,
            "midpoint", step,
        )
        out["alpha"][i] = split.alpha
        out["x_frac"][i] = split.x_frac
        out["y_frac"][i] = split.y_frac
        out["mid_i2_c"][i] = split.s_z.i2
        out["full_i1_c"][i] = split.s_t.i1
        out["full_i2_c"][i] = split.s_t.i2
        out["mid_i2_0"][i] = split.s_x.i2
        out["full_i1_0"][i] = split.s_u.i1
        out["full_i2_0"][i] = split.s_u.i2
        out["mid_i2_1"][i] = split.u_y.i2
        out["full_i1_1"][i] = split.u_t.i1
        out["full_i2_1"][i] = split.u_t.i2
    return out


def _batched_midpoint_step(state, params, pot, h, alpha, mid_i2, full_i1, full_i2, grad):
    """Randomized-midpoint update with per-row alpha (vectorized kernels)."""
    gamma, u, sigma = params.gamma, params.u, params.sigma
    gx = pot.grad(state.x) if grad is None else grad
    ha = alpha * h
    aa = gamma * ha
    if gamma > 0.0:
        c1a = ha * _phi1_vec(aa)
        c2a = ha * ha * _phi2_vec(aa)
    else:
        c1a = ha
        c2a = 0.5 * ha * ha
    x1 = state.x + c1a * state.v - u * c2a * gx + sigma * mid_i2
    g1 = pot.grad(x1)
    decay, c_xv, _, _ = samplers._ou_coeffs(gamma, h)
    hb = (1.0 - alpha) * h
    bb = gamma * hb
    if gamma > 0.0:
        c1b = hb * _phi1_vec(bb)
    else:
        c1b = hb
    x_new = state.x + c_xv * state.v - u * h * c1b * g1 + sigma * full_i2
    v_new = decay * state.v - u * np.exp(-bb) * h * g1 + sigma * full_i1
    return PhaseState(x_new, v_new)


def _block_error(method, pot, params, h, N, seed, chains, x0_std, inner_steps, phase_norm):
    """Squared coarse-vs-fine endpoint distances for a block of chains."""
    d = pot.dim
    family = _METHODS[method]
    gamma = params.gamma
    half = 0.5 * h
    quarter = 0.5 * half
    coarse, fine = _block_init_states(params, d, seed, chains, x0_std)
    grad_c = grad_f = None

    for k in range(N):
        if family == _TRIPLE:
            a = _block_triples(half, d, seed, chains, 2 * k)
            b = _block_triples(half, d, seed, chains, 2 * k + 1)
            cn = combine_triples(a, b)
            _assert_sync(cn.h == h and bool(np.all(cn.w == a.w + b.w)), "triple", k)
            noise_c, noise_a, noise_b = cn, a, b
        elif family == _PAIR:
            a = _block_pairs(gamma, half, d, seed, chains, 2 * k, Tag.PAIR)
            b = _block_pairs(gamma, half, d, seed, chains, 2 * k + 1, Tag.PAIR)
            cn = combine_exp_pairs(gamma, a, b)
            _assert_sync(cn.h == h, "pair", k)
            noise_c, noise_a, noise_b = cn, a, b
        elif family == _OBABO:
            q00 = _block_pairs(gamma, quarter, d, seed, chains, 2 * k, Tag.PAIR_LEFT)
            q01 = _block_pairs(gamma, quarter, d, seed, chains, 2 * k, Tag.PAIR_RIGHT)
            q10 = _block_pairs(gamma, quarter, d, seed, chains, 2 * k + 1, Tag.PAIR_LEFT)
            q11 = _block_pairs(gamma, quarter, d, seed, chains, 2 * k + 1, Tag.PAIR_RIGHT)
            cl = combine_exp_pairs(gamma, q00, q01)
            cr = combine_exp_pairs(gamma, q10, q11)
            _assert_sync(cl.h == half and cr.h == half, "obabo", k)
            noise_c, noise_a, noise_b = (cl, cr), (q00, q01), (q10, q11)
        else:  # midpoint
            noise_c = _block_midpoint_splits(gamma, h, d, seed, chains, k)
            noise_a = noise_b = noise_c

        if family == _MIDPOINT:
            m = noise_c
            fine = _batched_midpoint_step(
                fine, params, pot, half, m["x_frac"], m["mid_i2_0"], m["full_i1_0"], m["full_i2_0"], grad_f)
            fine = _batched_midpoint_step(
                fine, params, pot, half, m["y_frac"], m["mid_i2_1"], m["full_i1_1"], m["full_i2_1"], None)
            coarse = _batched_midpoint_step(
                coarse, params, pot, h, m["alpha"], m["mid_i2_c"], m["full_i1_c"], m["full_i2_c"], grad_c)
            grad_c = grad_f = None
        else:
            res = _apply_step(method, fine, params, pot, half, noise_a, grad_f, inner_steps)
            res = _apply_step(method, res.state, params, pot, half, noise_b, res.grad_new, inner_steps)
            fine, grad_f = res.state, res.grad_new
            res = _apply_step(method, coarse, params, pot, h, noise_c, grad_c, inner_steps)
            coarse, grad_c = res.state, res.grad_new
        _check_divergence(coarse, method, k, "coarse")
        _check_divergence(fine, method, 2 * k + 1, "fine")

    dx = coarse.x - fine.x
    err2 = np.sum(dx * dx, axis=-1)
    if phase_norm:
        dv = coarse.v - fine.v
        err2 += np.sum(dv * dv, axis=-1)
    return err2


def strong_error(
    method: str,
    target: Potential,
    params: DynamicsParams,
    T: float,
    h: float,
    n: int,
    seed: int,
    *,
    x0_std: float = math.sqrt(10.0),
    inner_steps: int = 16,
    phase_norm: bool = False,
    threads: int = 1,
) -> ErrorRow:
    """Estimate the coarse-vs-fine strong error of ``method`` at step h.

    Runs n coupled (h, h/2) path pairs to time T.  The reported standard
    error is computed on S^2 by sample variance and mapped to S by the delta
    method.
    """
    method = canonical_method(method)
    N = _steps_for(T, h)
    if n < 2:
        raise ValueError("need at least two sample paths")
    start = time.perf_counter()
    err2 = np.empty(n)
    blocks = [list(range(j, min(j + _BLOCK, n))) for j in range(0, n, _BLOCK)]

    def one(chains: list[int]) -> None:
        err2[chains[0]:chains[-1] + 1] = _block_error(
            method, target, params, h, N, seed, chains, x0_std, inner_steps, phase_norm
        )

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(one, blocks))
    else:
        for chains in blocks:
            one(chains)

    # math.fsum is exactly rounded, hence independent of accumulation order
    mean_sq = math.fsum(err2) / n
    s_value = math.sqrt(mean_sq)
    centered = err2 - mean_sq
    var_sq = math.fsum(centered * centered) / (n - 1)
    se_sq = math.sqrt(var_sq / n)
    std_err = se_sq / (2.0 * s_value) if s_value > 0.0 else 0.0
    wall = time.perf_counter() - start
    return ErrorRow(method, h, N, n, s_value, std_err, wall)


def fit_order(rows: list[ErrorRow]) -> OrderFit:
    """Least-squares slope of log S against log h (the empirical strong order)."""
    usable = []
    for row in rows:
        if row.s_value > 0.0:
            usable.append(row)
        else:
            warnings.warn(f"excluding S = 0 row (method={row.method}, h={row.h})")
    if len(usable) < 3:
        raise ValueError("need at least three rows with positive S to fit an order")
    logh = np.log([r.h for r in usable])
    logs = np.log([r.s_value for r in usable])
    slope, intercept = np.polyfit(logh, logs, 1)
    pred = slope * logh + intercept
    ss_res = float(np.sum((logs - pred) ** 2))
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 1.0
    return OrderFit(float(slope), float(intercept), r2)


@dataclass
class MomentReport:
    """Time-averaged stationary second moments with batch-means error bars."""

    var_x: np.ndarray
    var_v: np.ndarray
    se_var_x: np.ndarray
    se_var_v: np.ndarray
    n_steps: int
    batches: int


def stationary_moments(
    method: str,
    target: Potential,
    params: DynamicsParams,
    h: float,
    burn_in: int,
    n_steps: int,
    seed: int,
    *,
    chain: int = 0,
    inner_steps: int = 16,
    batches: int = 32,
) -> MomentReport:
    """Run one chain and time-average per-coordinate Var(x_i) and Var(v_i)."""
    method = canonical_method(method)
    if n_steps < batches:
        raise ValueError("n_steps must be at least the number of batches")
    d = target.dim
    x0 = np.zeros(d)
    v0 = math.sqrt(params.u) * rng.scratch_stream(seed, chain, 0, Tag.INIT_V).standard_normal(d)
    state = PhaseState(x0, v0)
    grad = None
    for k in range(burn_in):
        noise = step_noise(method, params, h, d, seed, chain, k)
        res = _apply_step(method, state, params, target, h, noise, grad, inner_steps)
        state, grad = res.state, res.grad_new
        _check_divergence(state, method, k, "burn-in")

    edges = np.linspace(0, n_steps, batches + 1).astype(int)
    bx = np.zeros((batches, d))
    bx2 = np.zeros((batches, d))
    bv = np.zeros((batches, d))
    bv2 = np.zeros((batches, d))
    counts = np.diff(edges)
    b = 0
    for j in range(n_steps):
        k = burn_in + j
        noise = step_noise(method, params, h, d, seed, chain, k)
        res = _apply_step(method, state, params, target, h, noise, grad, inner_steps)
        state, grad = res.state, res.grad_new
        _check_divergence(state, method, k, "sampling")
        while j >= edges[b + 1]:
            b += 1
        bx[b] += state.x
        bx2[b] += state.x**2
        bv[b] += state.v
        bv2[b] += state.v**2

    w = counts[:, None].astype(float)
    mean_x = bx.sum(0) / n_steps
    mean_v = bv.sum(0) / n_steps
    var_x = bx2.sum(0) / n_steps - mean_x**2
    var_v = bv2.sum(0) / n_steps - mean_v**2
    batch_var_x = bx2 / w - (bx / w) ** 2
    batch_var_v = bv2 / w - (bv / w) ** 2
    se_var_x = batch_var_x.std(axis=0, ddof=1) / math.sqrt(batches)
    se_var_v = batch_var_v.std(axis=0, ddof=1) / math.sqrt(batches)
    return MomentReport(var_x, var_v, se_var_x, se_var_v, n_steps, batches)


CSV_HEADER = "method,h,N,samples,s_value,std_err,wall_time_s"


def format_row(row: ErrorRow) -> str:
    return (
        f"{row.method},{float(row.h)!r},{row.N},{row.samples},"
        f"{float(row.s_value)!r},{float(row.std_err)!r},{row.wall_time:.3f}"
    )


def write_csv(rows: list[ErrorRow], fh) -> None:
    fh.write(CSV_HEADER + "\n")
    for row in rows:
        fh.write(format_row(row) + "\n")


def run_study(cfg: StudyConfig, sink=None) -> StudyResult:
    """Full methods x h_grid sweep; rows stream to ``sink`` as completed.

    Row order is deterministic (method-major, h descending) and, with a fixed
    seed, the numbers are identical for any thread count.
    """
    params = DynamicsParams(cfg.gamma, cfg.u)
    rows: list[ErrorRow] = []
    for method in cfg.methods:
        for h in cfg.h_grid:
            row = strong_error(
                method, cfg.target, params, cfg.T, h, cfg.n, cfg.seed,
                x0_std=cfg.x0_std, inner_steps=cfg.inner_steps,
                phase_norm=cfg.phase_norm, threads=cfg.threads,
            )
            rows.append(row)
            if sink is not None:
                sink(row)
    orders = {}
    for method in cfg.methods:
        method_rows = [r for r in rows if r.method == method]
        if len(method_rows) >= 3:
            try:
                orders[method] = fit_order(method_rows)
            except ValueError:
                pass
    return StudyResult(rows, orders)
