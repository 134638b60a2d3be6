"""Gaussian heat kernel, the semigroup acting on ball indicators, and the
certified lower-bound constants c_d, alpha_d, beta_d.

All d >= 2 evaluations reduce to one-dimensional radial quadrature with an
explicit absolute error budget; certification margins subtract that budget.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.special import erf, gamma, i0e

QUAD_ABS_TOL = 1e-8


class QuadratureError(Exception):
    """Adaptive quadrature failed to meet the certification error budget."""


@dataclass(frozen=True)
class BallIndicator:
    """amplitude * (characteristic function of the ball B_radius(center))."""

    radius: float
    center: tuple = ()
    amplitude: float = 1.0

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")


@dataclass(frozen=True)
class KernelConstants:
    d: int
    variant: str  # "dirichlet" | "whole_space"
    c_prime: float
    c_doubleprime: float
    c_d: float
    alpha_d: float
    beta_d: float
    omega_d: float

    def to_dict(self) -> dict:
        return {
            "d": self.d, "variant": self.variant,
            "c_prime": self.c_prime, "c_doubleprime": self.c_doubleprime,
            "c_d": self.c_d, "alpha_d": self.alpha_d,
            "beta_d": self.beta_d, "omega_d": self.omega_d,
        }


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2.0) / gamma(d / 2.0 + 1.0)


def gaussian_kernel(x, y, t: float, d: int) -> float:
    """Whole-space heat kernel (4 pi t)^(-d/2) exp(-|x-y|^2 / 4t)."""
    if t <= 0:
        raise ValueError("t must be positive")
    dx = np.atleast_1d(np.asarray(x, dtype=float) -
                       np.asarray(y, dtype=float))
    r2 = float(np.dot(dx, dx))
    return (4.0 * math.pi * t) ** (-d / 2.0) * math.exp(-r2 / (4.0 * t))


def _distance_to_center(x, center) -> float:
    xv = np.atleast_1d(np.asarray(x, dtype=float))
    if center:
        cv = np.asarray(center, dtype=float)
        if cv.shape != xv.shape:
            raise ValueError("x and center dimensions differ")
        xv = xv - cv
    return float(np.sqrt(np.dot(xv, xv)))


def heat_on_ball(chi: BallIndicator, x, t: float, d: int,
                 quad_tol: float = QUAD_ABS_TOL) -> float:
    """[S(t) chi](x) on R^d, by radial symmetry a function of rho = |x - c|.

    d = 1 is the erf closed form; d in {2, 3} integrate the angular average
    of the kernel in the source radius with adaptive quadrature. Raises
    QuadratureError when the estimated absolute error exceeds quad_tol.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    rho = _distance_to_center(x, chi.center)
    r, amp = chi.radius, chi.amplitude
    if amp == 0.0:
        return 0.0

    if d == 1:
        st = 2.0 * math.sqrt(t)
        val = 0.5 * (erf((rho + r) / st) - erf((rho - r) / st))
        return amp * float(val)

    if d == 2:
        # angular average of the kernel over the circle of source radius R:
        # (1/2t) R exp(-(rho-R)^2/4t) * i0e(rho R / 2t)
        def integrand(R):
            return (R / (2.0 * t)) * math.exp(-(rho - R) ** 2 / (4.0 * t)) \
                * i0e(rho * R / (2.0 * t))
    elif d == 3:
        c0 = (4.0 * math.pi * t) ** -1.5 * 4.0 * math.pi * t
        if rho == 0.0:
            def integrand(R):
                return c0 * (R * R / t) * math.exp(-R * R / (4.0 * t))
        else:
            def integrand(R):
                return c0 * (R / rho) * math.exp(-(rho - R) ** 2 / (4.0 * t)) \
                    * (-math.expm1(-rho * R / t))
    else:
        raise ValueError("d must be 1, 2 or 3")

    val, err = quad(integrand, 0.0, r, epsabs=0.1 * quad_tol,
                    epsrel=1e-12, limit=200)
    if err > quad_tol:
        raise QuadratureError(
            f"quadrature error {err:.2e} exceeds budget {quad_tol:.1e} "
            f"(d={d}, r={r}, t={t}, rho={rho})")
    return amp * float(val)


def kernel_constants(d: int, variant: str = "whole_space") -> KernelConstants:
    """Constants of the ball lower bound S(t)chi_r >= c_d (r/(r+sqrt t))^d.

    c'_d = pi^(-d/2) * integral of exp(-|w|^2) over the ball of radius 1/2
    centred at a unit vector, which equals [S(1/4) chi_(1/2)] evaluated at
    distance 1; c''_d = pi^(-d/2) 2^(-d) e^(-9/4). The Dirichlet variant
    multiplies both by the boundary factor e^(-d^2 pi^2 / 4).
    """
    if variant not in ("dirichlet", "whole_space"):
        raise ValueError("variant must be 'dirichlet' or 'whole_space'")
    if d < 1:
        raise ValueError("d must be a positive dimension")
    c_prime = heat_on_ball(BallIndicator(radius=0.5), [1.0] + [0.0] * (d - 1),
                           t=0.25, d=d)
    c_dp = math.pi ** (-d / 2.0) * 2.0 ** (-d) * math.exp(-9.0 / 4.0)
    if variant == "dirichlet":
        factor = math.exp(-d * d * math.pi ** 2 / 4.0)
        c_prime *= factor
        c_dp *= factor
    c_d = min(c_prime, c_dp)
    omega = unit_ball_volume(d)
    return KernelConstants(d=d, variant=variant, c_prime=c_prime,
                           c_doubleprime=c_dp, c_d=c_d,
                           alpha_d=c_d * omega, beta_d=c_d * 2.0 ** (-d),
                           omega_d=omega)


# --- certification -----------------------------------------------------------

@dataclass(frozen=True)
class BoundCheck:
    bound: str  # "lemma" | "mass" | "beta"
    min_margin: float
    witness: tuple  # (r, t, rho) achieving the min margin
    n_checked: int

    @property
    def passed(self) -> bool:
        return self.min_margin >= 0.0


@dataclass(frozen=True)
class CertificationReport:
    d: int
    variant: str
    r_grid: tuple
    t_grid: tuple
    tolerance: float
    checks: tuple = field(default_factory=tuple)
    constants: KernelConstants = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def min_margin(self) -> float:
        return min(c.min_margin for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "variant": self.variant,
            "grid": {"r": list(self.r_grid), "t": list(self.t_grid)},
            "tolerance": self.tolerance,
            "constants": self.constants.to_dict(),
            "passed": self.passed,
            "bounds": [
                {"bound": c.bound, "min_margin": c.min_margin,
                 "witnesses": [list(c.witness)], "n_checked": c.n_checked}
                for c in self.checks
            ],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)


def _ball_mass(chi: BallIndicator, t: float, d: int,
               quad_tol: float = QUAD_ABS_TOL) -> float:
    """Total integral of S(t) chi over R^d by radial quadrature."""
    sigma = d * unit_ball_volume(d)
    upper = chi.radius + 12.0 * math.sqrt(t)

    def integrand(rho):
        return sigma * rho ** (d - 1) * heat_on_ball(chi, [rho] +
                                                     [0.0] * (d - 1), t, d)

    val, err = quad(integrand, 0.0, upper, epsabs=0.1 * quad_tol,
                    epsrel=1e-10, limit=200)
    if err > 100 * quad_tol:
        raise QuadratureError(f"mass quadrature error {err:.2e}")
    return float(val)


def verify_lower_bounds(d: int, r_grid, t_grid, variant: str = "whole_space",
                        n_points: int = 17, delta: float = None,
                        quad_tol: float = QUAD_ABS_TOL,
                        constants: KernelConstants = None) -> CertificationReport:
    """Numerically certify the three ball lower bounds on a grid.

    lemma: [S(t)chi_r](x) >= c_d (r/(r+sqrt t))^d for |x| <= r + sqrt t
    mass:  integral of S(t)chi_r              >= alpha_d r^d
    beta:  [S(t)chi_r](x) >= beta_d for |x| <= r + sqrt t, when t <= r^2
           (Dirichlet variant additionally requires t <= delta^2)

    Margins have the quadrature budget already subtracted, so a non-negative
    min_margin certifies the inequality up to floating-point rounding.
    """
    consts = constants if constants is not None \
        else kernel_constants(d, variant)
    r_grid = tuple(float(r) for r in r_grid)
    t_grid = tuple(float(t) for t in t_grid)
    if any(r <= 0 for r in r_grid) or any(t <= 0 for t in t_grid):
        raise ValueError("grids must be positive")
    if variant == "dirichlet" and delta is not None:
        t_beta_cap = min(delta ** 2, math.inf)
    else:
        t_beta_cap = math.inf

    worst = {"lemma": (math.inf, None, 0), "mass": (math.inf, None, 0),
             "beta": (math.inf, None, 0)}

    def record(name, margin, witness):
        m, w, n = worst[name]
        if margin < m:
            worst[name] = (margin, witness, n + 1)
        else:
            worst[name] = (m, w, n + 1)

    for r in r_grid:
        chi = BallIndicator(radius=r)
        for t in t_grid:
            reach = r + math.sqrt(t)
            lemma_level = consts.c_d * (r / reach) ** d
            check_beta = t <= r ** 2 and t <= t_beta_cap
            for rho in np.linspace(0.0, reach, n_points):
                val = heat_on_ball(chi, [float(rho)] + [0.0] * (d - 1), t, d,
                                   quad_tol=quad_tol)
                record("lemma", val - lemma_level - quad_tol, (r, t, float(rho)))
                if check_beta:
                    record("beta", val - consts.beta_d - quad_tol,
                           (r, t, float(rho)))
            mass = _ball_mass(chi, t, d, quad_tol)
            record("mass", mass - consts.alpha_d * r ** d - 100 * quad_tol,
                   (r, t, math.nan))

    checks = tuple(BoundCheck(bound=k, min_margin=m, witness=w, n_checked=n)
                   for k, (m, w, n) in worst.items() if n > 0)
    return CertificationReport(d=d, variant=variant, r_grid=r_grid,
                               t_grid=t_grid, tolerance=quad_tol,
                               checks=checks, constants=consts)
