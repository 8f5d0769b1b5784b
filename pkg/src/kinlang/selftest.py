"""Built-in verification suites behind the ``selftest`` CLI command.

Three suites:

* brownian-identities: pathwise combination/round-trip identities on
  piecewise-linear oracle paths (deterministic, exact up to round-off).
* brownian-distribution: empirical variances/covariances of the sampled noise
  against their closed forms, within four standard errors.
* deterministic-order: zero-noise one-step errors against the matrix
  exponential of the linear dynamics, checked to scale like h^p under step
  halving for each method's deterministic order p.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from . import brownian, samplers
from .brownian import (
    BrownianTriple,
    ExpIntegralPair,
    FinePathOracle,
    combine_exp_pairs,
    combine_triples,
    exp_pair_covariance,
    moments_to_triple,
    sample_exp_pair,
    sample_triple,
    split_midpoint_structure,
    triple_to_moments,
)
from .rng import stream
from .samplers import DynamicsParams, PhaseState
from .targets import make_quadratic

__all__ = ["CheckResult", "run_selftest", "SUITE_NAMES"]

SUITE_NAMES = ("identities", "distribution", "order")


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        suffix = f" ({self.detail})" if (self.detail and not self.passed) else ""
        return f"{self.name}: {status}{suffix}"


def _rel_err(got: np.ndarray, want: np.ndarray, scale: float) -> float:
    return float(np.max(np.abs(np.asarray(got) - np.asarray(want)))) / scale


# ----------------------------------------------------------------------
# identities


def _random_oracle(rng_, h: float, substeps: int, d: int, brownian_like: bool) -> FinePathOracle:
    if brownian_like:
        return FinePathOracle.sample(h, substeps, d, rng_)
    # arbitrary rough piecewise-linear path, zero at the left endpoint
    values = np.vstack([np.zeros((1, d)), rng_.uniform(-1.0, 1.0, (substeps, d))])
    return FinePathOracle(h, values)


def identity_checks(budget: str = "full") -> list[CheckResult]:
    n_paths = 1000 if budget == "full" else 200
    results = []
    rng_ = stream(20240501)

    # round trip triple -> moments -> triple
    worst = 0.0
    for _ in range(100):
        t = sample_triple(rng_.uniform(0.1, 3.0), 4, rng_)
        back = moments_to_triple(triple_to_moments(t))
        scale = max(1.0, float(np.max(np.abs(t.w))), float(np.max(np.abs(t.hh))))
        worst = max(worst, _rel_err(back.w, t.w, scale), _rel_err(back.hh, t.hh, scale),
                    _rel_err(back.kk, t.kk, scale))
    results.append(CheckResult("round-trip moments<->triple", worst <= 1e-12, f"max rel err {worst:.2e}"))

    # combination identities on random piecewise-linear paths
    gamma = 2.0
    worst_t = worst_p = 0.0
    for i in range(n_paths):
        path = _random_oracle(rng_, 1.0, 64, 1, brownian_like=(i % 2 == 0))
        scale = max(1.0, float(np.max(np.abs(path.values))))
        mid, end = path.substeps // 2, path.substeps
        whole = path.triple(0, end)
        comb = combine_triples(path.triple(0, mid), path.triple(mid, end))
        for a, b in ((whole.w, comb.w), (whole.hh, comb.hh), (whole.kk, comb.kk)):
            worst_t = max(worst_t, _rel_err(b, a, scale))
        whole_p = path.exp_pair(gamma, 0, end)
        comb_p = combine_exp_pairs(gamma, path.exp_pair(gamma, 0, mid), path.exp_pair(gamma, mid, end))
        for a, b in ((whole_p.i1, comb_p.i1), (whole_p.i2, comb_p.i2)):
            worst_p = max(worst_p, _rel_err(b, a, scale))
    results.append(CheckResult("triple combination vs oracle", worst_t <= 1e-10, f"max rel err {worst_t:.2e}"))
    results.append(CheckResult("damped-pair combination vs oracle", worst_p <= 1e-10, f"max rel err {worst_p:.2e}"))

    # second iterated time integral identity: iint X = h^2 (W/6 + H/2 + K)
    worst = 0.0
    for _ in range(50):
        path = FinePathOracle.sample(1.0, 1024, 2, rng_)
        scale = max(1.0, float(np.max(np.abs(path.values))))
        t = path.triple(0, path.substeps)
        ident = t.h**2 * (t.w / 6.0 + t.hh / 2.0 + t.kk)
        worst = max(worst, _rel_err(path.double_time_integral(0, path.substeps), ident, scale))
    results.append(CheckResult("iterated-integral identity", worst <= 1e-10, f"max rel err {worst:.2e}"))

    # midpoint split: stored [s,t] pair matches combine([s,z],[z,t])
    worst = 0.0
    for _ in range(n_paths):
        split = split_midpoint_structure(gamma, 0.7, 3, rng_)
        re = combine_exp_pairs(gamma, split.s_z, split.z_t)
        scale = max(1.0, float(np.max(np.abs(split.s_t.i1))), float(np.max(np.abs(split.s_t.i2))))
        worst = max(worst, _rel_err(re.i1, split.s_t.i1, scale), _rel_err(re.i2, split.s_t.i2, scale))
    results.append(CheckResult("midpoint split consistency", worst <= 1e-12, f"max rel err {worst:.2e}"))

    # gamma -> 0: damped pair reduces to (W, M); combinations cross-agree.
    # The kernel gap is O(gamma), so gamma = 1e-9 puts it well under 1e-8.
    worst = 0.0
    tiny = 1e-9
    for _ in range(20):
        path = FinePathOracle.sample(1.0, 256, 2, rng_)
        scale = max(1.0, float(np.max(np.abs(path.values))))
        mid, end = path.substeps // 2, path.substeps
        pair = combine_exp_pairs(tiny, path.exp_pair(tiny, 0, mid), path.exp_pair(tiny, mid, end))
        mom = triple_to_moments(combine_triples(path.triple(0, mid), path.triple(mid, end)))
        worst = max(worst, _rel_err(pair.i1, mom.w, scale), _rel_err(pair.i2, mom.m, scale))
    results.append(CheckResult("gamma->0 pair/triple cross-check", worst <= 1e-8, f"max rel err {worst:.2e}"))
    return results


# ----------------------------------------------------------------------
# distribution


def _var_within(sample: np.ndarray, true_var: float, n: int, sigmas: float = 4.0) -> tuple[bool, str]:
    est = float(np.var(sample, ddof=1))
    bound = sigmas * true_var * math.sqrt(2.0 / (n - 1))
    return abs(est - true_var) <= bound, f"var {est:.5g} vs {true_var:.5g} +- {bound:.2g}"


def _cov_within(a: np.ndarray, b: np.ndarray, true_cov: float, va: float, vb: float,
                n: int, sigmas: float = 4.0) -> tuple[bool, str]:
    est = float(np.cov(a, b, ddof=1)[0, 1])
    bound = sigmas * math.sqrt((va * vb + true_cov**2) / (n - 1))
    return abs(est - true_cov) <= bound, f"cov {est:.5g} vs {true_cov:.5g} +- {bound:.2g}"


def distribution_checks(budget: str = "full") -> list[CheckResult]:
    n = 100_000 if budget == "full" else 20_000
    results = []

    # triple variances and cross-correlations; coordinates of one wide draw
    # are iid samples
    for h in (0.1, 1.0):
        t = sample_triple(h, n, stream(77, step=int(h * 10)))
        checks = [
            _var_within(t.w, h, n),
            _var_within(t.hh, h / 12.0, n),
            _var_within(t.kk, h / 720.0, n),
            _cov_within(t.w, t.hh, 0.0, h, h / 12.0, n),
            _cov_within(t.w, t.kk, 0.0, h, h / 720.0, n),
            _cov_within(t.hh, t.kk, 0.0, h / 12.0, h / 720.0, n),
        ]
        ok = all(c[0] for c in checks)
        detail = "; ".join(c[1] for c in checks if not c[0])
        results.append(CheckResult(f"triple law (h={h})", ok, detail))

    # damped-pair covariance at three (gamma, h) points, the last exercising
    # the small-gamma*h kernels
    for gamma, h in ((2.0, 1.0), (0.5, 1.0), (2.0, 0.01)):
        v11, v12, v22 = exp_pair_covariance(gamma, h)
        pair = sample_exp_pair(gamma, h, n, stream(78, step=int(gamma * 100), tag=int(h * 100)))
        checks = [
            _var_within(pair.i1, v11, n),
            _var_within(pair.i2, v22, n),
            _cov_within(pair.i1, pair.i2, v12, v11, v22, n),
        ]
        ok = all(c[0] for c in checks)
        detail = "; ".join(c[1] for c in checks if not c[0])
        results.append(CheckResult(f"damped-pair law (gamma={gamma}, h={h})", ok, detail))

    # oracle-path H, K empirically uncorrelated with W
    n_paths = 1000 if budget == "full" else 300
    rng_ = stream(79)
    ws = np.empty(n_paths)
    hs = np.empty(n_paths)
    ks = np.empty(n_paths)
    for i in range(n_paths):
        t = FinePathOracle.sample(1.0, 128, 1, rng_).triple(0, 128)
        ws[i], hs[i], ks[i] = t.w[0], t.hh[0], t.kk[0]
    bound = 4.0 / math.sqrt(n_paths)
    corrs = {
        "W-H": float(np.corrcoef(ws, hs)[0, 1]),
        "W-K": float(np.corrcoef(ws, ks)[0, 1]),
        "H-K": float(np.corrcoef(hs, ks)[0, 1]),
    }
    bad = {k: v for k, v in corrs.items() if abs(v) >= bound}
    results.append(CheckResult(
        "oracle W/H/K decorrelation", not bad,
        "; ".join(f"corr({k}) = {v:.3f}" for k, v in (bad or corrs).items()),
    ))
    return results


# ----------------------------------------------------------------------
# deterministic order


def _linear_flow(gamma: float, u: float, diag: np.ndarray, h: float) -> np.ndarray:
    """exp(h [[0, I], [-u A, -gamma I]]) for the quadratic target A = diag."""
    d = diag.size
    gen = np.zeros((2 * d, 2 * d))
    gen[:d, d:] = np.eye(d)
    gen[d:, :d] = -u * np.diag(diag)
    gen[d:, d:] = -gamma * np.eye(d)
    return expm(h * gen)


def _zero_noise(method: str, params: DynamicsParams, h: float, d: int):
    zeros = np.zeros(d)
    if method in ("sort", "sofa", "log-ode", "shifted-ode"):
        return BrownianTriple(h, zeros, zeros, zeros)
    if method == "obabo":
        half = ExpIntegralPair(0.5 * h, params.gamma, zeros, zeros)
        return (half, half)
    return ExpIntegralPair(h, params.gamma, zeros, zeros)


def _deterministic_step(method: str, state: PhaseState, params: DynamicsParams, pot, h: float) -> PhaseState:
    noise = _zero_noise(method, params, h, state.dim)
    if method == "obabo":
        return samplers.obabo_step(state, params, pot, h, noise[0], noise[1]).state
    step = {
        "left-point": samplers.left_point_step,
        "strang": samplers.strang_step,
        "sort": samplers.sort_step,
        "sofa": samplers.sofa_step,
    }[method]
    return step(state, params, pot, h, noise).state


# (method, deterministic local order p, gamma used for the check)
ORDER_CASES = (
    ("left-point", 2, 2.0),
    ("strang", 3, 2.0),
    ("obabo", 3, 2.0),
    ("sort", 4, 2.0),
    ("sofa", 5, 0.0),
)


def order_checks(budget: str = "full", grid=(0.2, 0.1, 0.05, 0.025)) -> list[CheckResult]:
    diag = np.array([1.0, 4.0])
    pot = make_quadratic(diag)
    state0 = PhaseState(np.array([1.0, -0.5]), np.array([0.3, 0.8]))
    results = []
    for method, p, gamma in ORDER_CASES:
        params = DynamicsParams(gamma, 1.0)
        errs = []
        for h in grid:
            flow = _linear_flow(gamma, 1.0, diag, h)
            exact = flow @ np.concatenate([state0.x, state0.v])
            got = _deterministic_step(method, state0, params, pot, h)
            errs.append(float(np.linalg.norm(np.concatenate([got.x, got.v]) - exact)))
        ratios = [errs[i] / errs[i + 1] for i in range(len(errs) - 1)]
        target = 2.0**p
        ok = all(abs(r - target) <= 0.25 * target for r in ratios)
        detail = f"ratios {', '.join(f'{r:.2f}' for r in ratios)} vs 2^{p} = {target:g} +- 25%"
        results.append(CheckResult(f"deterministic-order[{method}]", ok, detail))
    return results


def run_selftest(suite: str = "all", budget: str = "full") -> list[CheckResult]:
    """Run the selected suites; returns one result per check."""
    if budget not in ("fast", "full"):
        raise ValueError(f"budget must be 'fast' or 'full', got {budget!r}")
    if suite not in ("all",) + SUITE_NAMES:
        raise ValueError(f"unknown suite {suite!r}; choose from all, {', '.join(SUITE_NAMES)}")
    results = []
    if suite in ("all", "identities"):
        checks = identity_checks(budget)
        ok = all(c.passed for c in checks)
        failed = "; ".join(c.name for c in checks if not c.passed)
        results.append(CheckResult("brownian-identities", ok, failed))
        results.extend(c for c in checks if not c.passed)
    if suite in ("all", "distribution"):
        checks = distribution_checks(budget)
        ok = all(c.passed for c in checks)
        failed = "; ".join(c.name for c in checks if not c.passed)
        results.append(CheckResult("brownian-distribution", ok, failed))
        results.extend(c for c in checks if not c.passed)
    if suite in ("all", "order"):
        results.extend(order_checks(budget))
    return results
