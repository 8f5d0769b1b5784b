"""Cancellation-safe scalar kernels for exponential integrator coefficients.

Every coefficient appearing in the Langevin one-step maps is a product of a
power of the step size with one of three dimensionless kernels of a = gamma*h:

    phi0(a) = exp(-a)
    phi1(a) = (1 - exp(-a)) / a
    phi2(a) = (exp(-a) + a - 1) / a**2

Evaluating the raw expressions loses roughly half the mantissa once a drops
below ~1e-8, so phi1/phi2 switch to truncated Taylor series (Horner form) for
small |a|.  Negative arguments are supported (needed for backward flows in
splitting compositions).
"""

import math

__all__ = ["phi0", "phi1", "phi2", "sofa_phi", "exp_pair_kernel"]

# Largest |a| before exp(|a|) overflows comfortably in double precision.
_A_MAX = 700.0

# Series cutoffs per kernel, sized so the closed form keeps <= 1e-14 relative
# error beyond them.  phi1's expm1 form has no cancellation, so its branch only
# guards the removable singularity at 0.  phi2's numerator cancels to O(a^2)
# (error ~ 2*eps/a), and psi's to O(a^3) (error ~ 12*eps/a^2).
_PHI1_CUTOFF = 1e-3
_PHI2_CUTOFF = 0.1
_PSI_CUTOFF = 0.5

# phi1: sum (-a)^k / (k+1)!, truncation < 1e-26 at the cutoff
_PHI1_COEFFS = tuple(1.0 / math.factorial(k + 1) for k in range(7, -1, -1))
# phi2: sum (-a)^k / (k+2)!, truncation < 1e-19 relative at the cutoff
_PHI2_COEFFS = tuple(1.0 / math.factorial(k + 2) for k in range(13, -1, -1))
# psi: numerator sum_{k>=3} (4(-1)^k - (-2)^k) a^k / k!, divided by 2 a^3;
# truncation < 1e-27 at the cutoff
_PSI_COEFFS = tuple(
    (4.0 * (-1.0) ** k - (-2.0) ** k) / (2.0 * math.factorial(k))
    for k in range(27, 2, -1)
)


def _check_range(a: float) -> None:
    if not (-_A_MAX <= a <= _A_MAX):
        raise ValueError(f"kernel argument out of range: {a!r} (|a| must be <= {_A_MAX:g})")


def _horner(coeffs, x: float) -> float:
    acc = 0.0
    for c in coeffs:
        acc = acc * x + c
    return acc


def phi0(a: float) -> float:
    """exp(-a)."""
    _check_range(a)
    return math.exp(-a)


def phi1(a: float) -> float:
    """(1 - exp(-a))/a, continuous through a = 0 with phi1(0) = 1."""
    _check_range(a)
    if -_PHI1_CUTOFF < a < _PHI1_CUTOFF:
        return _horner(_PHI1_COEFFS, -a)
    return -math.expm1(-a) / a


def phi2(a: float) -> float:
    """(exp(-a) + a - 1)/a**2, continuous through a = 0 with phi2(0) = 1/2."""
    _check_range(a)
    if -_PHI2_CUTOFF < a < _PHI2_CUTOFF:
        return _horner(_PHI2_COEFFS, -a)
    return (math.expm1(-a) + a) / (a * a)


def _psi(a: float) -> float:
    """(4*exp(-a) - exp(-2a) + 2a - 3) / (2*a**3), with psi(0) = 1/3.

    Scaled variance of the time integral of an exponentially damped Wiener
    integral; the numerator cancels through O(a^2), hence the wide series
    branch.
    """
    _check_range(a)
    if -_PSI_CUTOFF < a < _PSI_CUTOFF:
        return _horner(_PSI_COEFFS, a)
    return (4.0 * math.exp(-a) - math.exp(-2.0 * a) + 2.0 * a - 3.0) / (2.0 * a**3)


def exp_pair_kernel(a: float) -> tuple[float, float, float]:
    """Dimensionless covariance kernels (k11, k12, k22) of the damped integrals.

    For the pair (I1, I2) = (int e^{-gamma(t-tau)} dW, iint e^{-gamma(tau-r)} dW dtau)
    over a step of length h with a = gamma*h:

        Var(I1)     = h   * k11 = h   * phi1(2a)
        Cov(I1, I2) = h^2 * k12 = h^2 * phi1(a)^2 / 2
        Var(I2)     = h^3 * k22 = h^3 * psi(a)

    All three are finite and correct through the a -> 0 limit
    (k11 -> 1, k12 -> 1/2, k22 -> 1/3).
    """
    return phi1(2.0 * a), 0.5 * phi1(a) ** 2, _psi(a)


def sofa_phi() -> float:
    """Forest-Ruth composition constant (-1 + 2^(1/3)) / (2 (2 - 2^(1/3)))."""
    c = 2.0 ** (1.0 / 3.0)
    return (c - 1.0) / (2.0 * (2.0 - c))
