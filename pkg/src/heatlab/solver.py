"""Radial heat semigroup on a ball, Duhamel machinery and forward simulation.

The domain is the ball B_R with homogeneous Dirichlet data at r = R and the
symmetry (zero-flux) condition at r = 0. Fields are radial; the discrete
Laplacian is a finite-volume operator that is self-adjoint under the cell
volumes, so the semigroup is evaluated exactly in its eigenbasis.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import eigh

from .heatkernel import BallIndicator, kernel_constants, unit_ball_volume
from .nonlinearity import NonlinearityExpr, sup_ratio_envelope

CLAMP_TOL = 1e-9
OVERFLOW_GUARD = 1e12


class SolverError(Exception):
    pass


# --- grids and fields --------------------------------------------------------

@dataclass(frozen=True)
class RadialGrid:
    """Radial mesh on [0, R]: nodes[0] = 0, nodes[-1] = R (Dirichlet).

    Each node owns the cell between the midpoints to its neighbours
    (clipped to [0, R]); quad_weights are the cell volumes, summing to
    omega_d R^d exactly.
    """

    d: int
    R: float
    nodes: np.ndarray
    faces: np.ndarray = field(init=False, repr=False)
    quad_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes[0] != 0.0 or not math.isclose(nodes[-1], self.R):
            raise ValueError("nodes must start at 0 and end at R")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        faces = np.concatenate([[0.0], 0.5 * (nodes[:-1] + nodes[1:]),
                                [self.R]])
        omega = unit_ball_volume(self.d)
        vols = omega * (faces[1:] ** self.d - faces[:-1] ** self.d)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "faces", faces)
        object.__setattr__(self, "quad_weights", vols)

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def n_interior(self) -> int:
        return len(self.nodes) - 1

    @classmethod
    def uniform(cls, d: int, R: float, n: int) -> "RadialGrid":
        return cls(d=d, R=R, nodes=np.linspace(0.0, R, n))

    @classmethod
    def graded(cls, d: int, R: float, n: int, r_inner: float) -> "RadialGrid":
        """Geometric spacing from r_inner out to R, plus the origin node.

        Resolves fields whose features live on radii spanning many decades
        (the truncated blow-up data have ball radii down to ~1e-6 R).
        """
        if not 0.0 < r_inner < R:
            raise ValueError("need 0 < r_inner < R")
        nodes = np.concatenate([[0.0], np.geomspace(r_inner, R, n - 1)])
        return cls(d=d, R=R, nodes=nodes)


@dataclass
class RadialField:
    grid: RadialGrid
    values: np.ndarray
    clamp_count: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n,):
            raise ValueError("values must have one entry per node")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    def copy(self) -> "RadialField":
        return RadialField(self.grid, self.values.copy(), self.clamp_count)


def indicator(grid: RadialGrid, chi: BallIndicator) -> RadialField:
    """Sample a ball indicator by exact cell-volume averaging, so discrete
    volume integrals of the field reproduce amplitude * omega_d r^d exactly."""
    if chi.center and any(c != 0.0 for c in chi.center):
        raise ValueError("radial sampling requires a ball centred at 0")
    a, b = grid.faces[:-1], grid.faces[1:]
    covered = np.clip(np.minimum(b, chi.radius), 0.0, None) ** grid.d \
        - np.minimum(a, chi.radius) ** grid.d
    frac = covered / (b ** grid.d - a ** grid.d)
    vals = chi.amplitude * np.clip(frac, 0.0, 1.0)
    vals[-1] = 0.0  # Dirichlet boundary node
    return RadialField(grid, vals)


def lq_norm(u: RadialField, q: float) -> float:
    if q == math.inf:
        return float(np.max(np.abs(u.values)))
    if q < 1:
        raise ValueError("q must be >= 1 (or inf)")
    w = u.grid.quad_weights
    return float(np.sum(w * np.abs(u.values) ** q) ** (1.0 / q))


# --- propagator --------------------------------------------------------------

@dataclass(frozen=True)
class HeatPropagator:
    grid: RadialGrid
    eigenvalues: np.ndarray
    modes: np.ndarray       # orthonormal columns of the symmetrized operator
    sqrt_w: np.ndarray      # sqrt cell volumes on the interior nodes

    def to_modal(self, interior_values: np.ndarray) -> np.ndarray:
        return self.modes.T @ (self.sqrt_w * interior_values)

    def from_modal(self, coeffs: np.ndarray) -> np.ndarray:
        return (self.modes @ coeffs) / self.sqrt_w


def build_propagator(grid: RadialGrid) -> HeatPropagator:
    """Eigendecomposition of the finite-volume radial Dirichlet Laplacian."""
    m = grid.n_interior
    if m < 32:
        raise ValueError("need at least 32 interior nodes")
    nodes, faces, vols = grid.nodes, grid.faces, grid.quad_weights
    sigma = grid.d * unit_ball_volume(grid.d)
    V = vols[:m]
    A = np.zeros((m, m))
    # internal faces i = 1..n-1 separate node i-1 from node i (node n-1 is
    # the Dirichlet boundary, entering only through the diagonal)
    for i in range(1, grid.n):
        area = sigma * faces[i] ** (grid.d - 1)
        h = nodes[i] - nodes[i - 1]
        k = area / h
        A[i - 1, i - 1] += k / V[i - 1]
        if i < grid.n - 1:
            A[i, i] += k / V[i]
            A[i - 1, i] -= k / V[i - 1]
            A[i, i - 1] -= k / V[i]
    sqrt_w = np.sqrt(V)
    B = A * (sqrt_w[:, None] / sqrt_w[None, :])
    B = 0.5 * (B + B.T)  # symmetrize round-off
    lam, Q = eigh(B)
    if lam[0] <= 0:
        raise SolverError(f"non-positive eigenvalue {lam[0]:.3e}: "
                          "bad discretization")
    return HeatPropagator(grid=grid, eigenvalues=lam, modes=Q, sqrt_w=sqrt_w)


def semigroup_apply(P: HeatPropagator, t: float, u: RadialField) -> RadialField:
    """e^(-tA) u. Negative round-off values are clamped to zero; only those
    below the relative tolerance floor count as clamp violations."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if u.grid is not P.grid and not np.array_equal(u.grid.nodes, P.grid.nodes):
        raise ValueError("field grid does not match the propagator grid")
    m = P.grid.n_interior
    coeffs = P.to_modal(u.values[:m])
    out = P.from_modal(np.exp(-P.eigenvalues * t) * coeffs)
    tol = CLAMP_TOL * max(1.0, float(np.max(np.abs(u.values))))
    n_clamped = int(np.sum(out < -tol))
    out = np.maximum(out, 0.0) if np.min(u.values) >= 0.0 else out
    vals = np.concatenate([out, [0.0]])
    return RadialField(P.grid, vals, clamp_count=n_clamped)


# --- Duhamel machinery -------------------------------------------------------

def _as_time_indexed(P: HeatPropagator, v, n_time: int) -> np.ndarray:
    """Coerce a time-indexed field (array, list of RadialField, or a single
    field replicated in time) to shape (n_time, n_interior)."""
    m = P.grid.n_interior
    if isinstance(v, RadialField):
        return np.tile(v.values[:m], (n_time, 1))
    if isinstance(v, (list, tuple)):
        arr = np.array([fld.values[:m] for fld in v], dtype=float)
    else:
        arr = np.asarray(v, dtype=float)
        if arr.shape[1] == P.grid.n:
            arr = arr[:, :m]
    if arr.shape != (n_time, m):
        raise ValueError("time-indexed field has wrong shape")
    return arr


def _eval_f(f: NonlinearityExpr, arr: np.ndarray) -> np.ndarray:
    vals = np.asarray(f.eval_raw(np.maximum(arr, 0.0)), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise SolverError("nonlinearity overflow during Duhamel evaluation")
    return vals


def duhamel_map(P: HeatPropagator, u0: RadialField, f: NonlinearityExpr,
                v: np.ndarray, times: np.ndarray) -> np.ndarray:
    """F(v)(t_j) = S(t_j)u0 + int_0^{t_j} S(t_j - s) f(v(s)) ds, composite
    trapezoid on the uniform time grid, semigroup factors exact in modal
    space."""
    n_time = len(times)
    m = P.grid.n_interior
    dt = times[1] - times[0] if n_time > 1 else 0.0
    u0_hat = P.to_modal(u0.values[:m])
    decay = np.exp(-np.outer(times, P.eigenvalues))  # decay[j] = e^(-lam t_j)
    fv = _eval_f(f, v)
    fv_hat = (fv * P.sqrt_w) @ P.modes  # modal transform per time slice
    out = np.empty_like(v)
    for j in range(n_time):
        acc = decay[j] * u0_hat
        if j > 0:
            c = np.ones(j + 1)
            c[0] = c[j] = 0.5
            # S(t_j - t_m) = decay[j - m] on the uniform grid
            acc = acc + dt * np.einsum("m,mk,mk->k", c, decay[j::-1],
                                       fv_hat[:j + 1])
        out[j] = P.from_modal(acc)
    return out


@dataclass
class IterationTrace:
    times: np.ndarray
    v: np.ndarray                  # final iterate, (n_time, n_interior)
    baseline: np.ndarray           # S(t)u0 on the same grid
    sup_deltas: list
    max_increase: float            # max over iterations of max(v_new - v_old)
    min_above_baseline: float
    converged: bool
    residual: float
    n_iter: int

    def final_field(self, j: int) -> np.ndarray:
        return self.v[j]


def duhamel_iterate(P: HeatPropagator, u0: RadialField, f: NonlinearityExpr,
                    v_init, T: float, n_time: int = 64, n_iter: int = 50,
                    tol: float = 1e-8) -> IterationTrace:
    """Monotone supersolution iteration v_(n+1) = F(v_n)."""
    times = np.linspace(0.0, T, n_time)
    v = _as_time_indexed(P, v_init, n_time)
    baseline = duhamel_map(P, u0, _ZERO, v * 0.0, times)
    sup_deltas = []
    max_increase = -math.inf
    min_above = math.inf
    converged = False
    it = 0
    for it in range(1, n_iter + 1):
        v_new = duhamel_map(P, u0, f, v, times)
        if np.max(np.abs(v_new)) > OVERFLOW_GUARD:
            raise SolverError("iteration diverged: v_init was likely not a "
                              "supersolution")
        sup_deltas.append(float(np.max(np.abs(v_new - v))))
        max_increase = max(max_increase, float(np.max(v_new - v)))
        min_above = min(min_above, float(np.min(v_new - baseline)))
        v = v_new
        if sup_deltas[-1] < tol:
            converged = True
            break
    residual = float(np.max(np.abs(duhamel_map(P, u0, f, v, times) - v)))
    return IterationTrace(times=times, v=v, baseline=baseline,
                          sup_deltas=sup_deltas, max_increase=max_increase,
                          min_above_baseline=min_above, converged=converged,
                          residual=residual, n_iter=it)


@dataclass(frozen=True)
class MarginReport:
    margin: float
    witness: tuple  # (t, r) of the minimizing node

    @property
    def certified(self) -> bool:
        return self.margin >= 0.0


def supersolution_check(P: HeatPropagator, u0: RadialField,
                        f: NonlinearityExpr, v, T: float,
                        n_time: int = 64) -> MarginReport:
    """min over (node, time) of v(t) - F(v)(t); non-negative certifies a
    discrete supersolution."""
    times = np.linspace(0.0, T, n_time)
    varr = _as_time_indexed(P, v, n_time)
    diff = varr - duhamel_map(P, u0, f, varr, times)
    j, i = np.unravel_index(np.argmin(diff), diff.shape)
    return MarginReport(margin=float(diff[j, i]),
                        witness=(float(times[j]), float(P.grid.nodes[i])))


class _Zero:
    source_text = "0"

    def eval_raw(self, s):
        return np.zeros_like(np.asarray(s, dtype=float))


_ZERO = _Zero()


# --- existence horizon (supersolution construction) --------------------------

@dataclass(frozen=True)
class HorizonReport:
    T: float
    integral_value: float
    condition_bound: float
    A: float
    u0_l1: float
    d: int
    capped_at_max: bool
    smoothing_capped: bool


def _tilde_tail_integral(envelope, d: int, s0: float) -> float:
    """(2/d) * integral over [max(s0, 1), infinity) of s^-(1+2/d) F(s) ds.

    This equals the tau-substituted integral of tau^(d/2) ftilde(tau^(-d/2))
    over the region where the argument exceeds 1. The part beyond the
    envelope grid is estimated with F frozen at its last value.
    """
    grid, vals = envelope.grid, envelope.values
    s_end, f_end = float(grid[-1]), float(vals[-1])
    s0 = max(s0, 1.0)
    p = 1.0 + 2.0 / d
    tail = f_end * s_end ** (-2.0 / d) * (2.0 / d) * (d / 2.0)  # = F/s^{2/d}
    if s0 >= s_end:
        return f_end * s0 ** (-2.0 / d)
    sel = grid > s0
    xs = np.concatenate([[s0], grid[sel]])
    fs = np.concatenate([[envelope.at(s0)], vals[sel]])
    body = (2.0 / d) * np.trapezoid(xs ** (-p) * fs, xs)
    return float(body + tail)


def find_existence_horizon(u0_l1_norm: float, f: NonlinearityExpr, d: int,
                           A: float = 2.0, T_max: float = 100.0) -> HorizonReport:
    """Largest T (up to T_max) for which v(t) = A S(t)u0 + chi_Omega is a
    certified supersolution on [0, T].

    Two conditions are enforced: the integral condition
    C^(2/d) * int_0^(T C^(-2/d)) tau^(d/2) ftilde(tau^(-d/2)) dtau <= (A-1)/A
    with C = 2 A c ||u0||_1 and c = (4 pi)^(-d/2), and the smoothing-estimate
    validity cap T <= (A c ||u0||_1)^(2/d) (needed so that
    A c s^(-d/2) ||u0||_1 >= 1 throughout [0, T]).
    """
    if A <= 1:
        raise ValueError("A must exceed 1")
    if u0_l1_norm < 0:
        raise ValueError("||u0||_1 must be non-negative")
    bound = (A - 1.0) / A
    csm = (4.0 * math.pi) ** (-d / 2.0)

    if u0_l1_norm == 0.0:
        # v = chi_Omega is a supersolution while t f(1) <= 1
        f1 = float(np.asarray(f.eval_raw(np.array([1.0])))[0])
        T = T_max if f1 == 0.0 else min(T_max, 1.0 / f1)
        return HorizonReport(T=T, integral_value=0.0, condition_bound=bound,
                             A=A, u0_l1=0.0, d=d, capped_at_max=(T == T_max),
                             smoothing_capped=False)

    env = sup_ratio_envelope(f, float(2 ** 48))
    C = 2.0 * A * csm * u0_l1_norm
    scale = C ** (2.0 / d)

    from scipy.integrate import quad

    def integral(T_prime: float) -> float:
        if T_prime <= 0:
            return 0.0
        total = _tilde_tail_integral(env, d, min(T_prime, 1.0) ** (-d / 2.0))
        if T_prime > 1.0:
            # tau > 1 region: argument tau^(-d/2) < 1, so ftilde = f there
            part, _ = quad(
                lambda tau: tau ** (d / 2.0) *
                float(np.asarray(f.eval_raw(
                    np.array([tau ** (-d / 2.0)])))[0]),
                1.0, T_prime, limit=200)
            total += part
        return total

    def condition(T: float) -> float:
        return scale * integral(T / scale)

    if condition(T_max) <= bound:
        T, capped = T_max, True
    else:
        lo, hi = 0.0, T_max
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if condition(mid) <= bound:
                lo = mid
            else:
                hi = mid
        T, capped = lo, False
        if T == 0.0:
            raise SolverError("integral condition unsatisfiable: the "
                              "ftilde integral appears divergent")
    smoothing_cap = (A * csm * u0_l1_norm) ** (2.0 / d)
    smoothing_capped = T > smoothing_cap
    T = min(T, smoothing_cap)
    return HorizonReport(T=T, integral_value=condition(T),
                         condition_bound=bound, A=A, u0_l1=u0_l1_norm, d=d,
                         capped_at_max=capped and not smoothing_capped,
                         smoothing_capped=smoothing_capped)


# --- certified Duhamel lower bound -------------------------------------------

@dataclass(frozen=True)
class LowerBoundResult:
    radii: np.ndarray
    values: np.ndarray
    lq: float
    q: float
    t: float
    constants: object

    def min_on_ball(self, radius: float) -> float:
        sel = self.radii <= radius + 1e-15
        return float(np.min(self.values[sel]))


def duhamel_lower_bound(chi: BallIndicator, f: NonlinearityExpr, t: float,
                        d: int, variant: str = "whole_space", q: float = 1.0,
                        n_time: int = 513,
                        radii: Optional[np.ndarray] = None) -> LowerBoundResult:
    """Certified pointwise lower bound on any local integral solution with
    u0 >= chi, via u(t) >= S(t)chi + int_0^t S(t-s) f(S(s)chi) ds and the
    ball bounds S(s)chi_r >= c_d (r/(r+sqrt s))^d chi_(r+sqrt s)."""
    if t <= 0:
        raise ValueError("t must be positive")
    consts = kernel_constants(d, variant)
    r, amp = chi.radius, chi.amplitude
    if radii is None:
        radii = np.linspace(0.0, r + math.sqrt(t), 129)
    radii = np.asarray(radii, dtype=float)

    s_grid = np.linspace(0.0, t, n_time)
    inner_amp = amp * consts.c_d * (r / (r + np.sqrt(s_grid))) ** d
    f_inner = np.asarray(f.eval_raw(inner_amp), dtype=float)
    if not np.all(np.isfinite(f_inner)):
        raise SolverError("nonlinearity overflow in the lower-bound integrand")
    inner_reach = r + np.sqrt(s_grid)
    outer_reach = inner_reach + np.sqrt(t - s_grid)
    outer_factor = consts.c_d * (inner_reach / outer_reach) ** d

    values = np.empty_like(radii)
    linear_reach = r + math.sqrt(t)
    linear_level = amp * consts.c_d * (r / linear_reach) ** d
    for i, rho in enumerate(radii):
        mask = outer_reach >= rho
        integrand = np.where(mask, f_inner * outer_factor, 0.0)
        val = float(np.trapezoid(integrand, s_grid))
        if rho <= linear_reach:
            val += linear_level
        values[i] = val

    if q == math.inf:
        lq = float(np.max(values))
    else:
        sigma = d * unit_ball_volume(d)
        lq = float(np.trapezoid(sigma * radii ** (d - 1) * values ** q,
                                radii) ** (1.0 / q))
    return LowerBoundResult(radii=radii, values=values, lq=lq, q=q, t=t,
                            constants=consts)


# --- point-mass warm-up shells -----------------------------------------------

@dataclass(frozen=True)
class WarmupReport:
    theta: float
    amplitudes: np.ndarray
    times: np.ndarray
    increments: np.ndarray
    partial_sums: np.ndarray
    asymptotic_constant: float


def warmup_shell_sums(f: NonlinearityExpr, d: int, n_shells: int = 12,
                      theta: float = 2.0) -> WarmupReport:
    """Dyadic-shell increments of int_(R^d) int_0^t S(t-s) f(S(s)delta_0) ds.

    With phi_k = theta^k and t_k = c phi_k^(-2/d), c = e^(-1/2d)/(4 pi),
    the Gaussian core satisfies S(s)delta_0 >= phi_k on a ball for
    s in [t_(k+1), t_k], giving the increment
    omega_d f(phi_k) int_(t_(k+1))^(t_k) s^(d/2) ds per shell. For the
    critical power f = s^(1+2/d) every increment equals the asymptotic
    constant exactly, so the partial sums grow linearly (divergence)."""
    c = math.exp(-1.0 / (2.0 * d)) / (4.0 * math.pi)
    omega = unit_ball_volume(d)
    p = 1.0 + 2.0 / d
    ks = np.arange(1, n_shells + 2)
    phi = theta ** ks
    t_k = c * phi ** (-2.0 / d)
    f_phi = np.asarray(f.eval_raw(phi[:-1]), dtype=float)
    expo = (2.0 + d) / 2.0
    increments = omega * f_phi * (t_k[:-1] ** expo - t_k[1:] ** expo) / expo
    const = omega * (2.0 / (2.0 + d)) * c ** expo * (1.0 - theta ** (-p))
    return WarmupReport(theta=theta, amplitudes=phi[:-1], times=t_k[:-1],
                        increments=increments,
                        partial_sums=np.cumsum(increments),
                        asymptotic_constant=const)


# --- forward simulation ------------------------------------------------------

@dataclass
class SimulationControls:
    dt_init: float = 1e-3
    adaptive: bool = True
    rel_change_target: float = 0.05
    dt_growth: float = 1.4
    dt_min: float = 1e-14
    blowup_sup: float = OVERFLOW_GUARD
    q: float = 2.0
    max_steps: int = 200000


@dataclass
class Trajectory:
    times: list
    l1: list
    lq: list
    linf: list
    dts: list
    clamp_counts: list
    q: float
    blowup: bool
    blowup_time: Optional[float]
    final: RadialField

    @property
    def peak_l1(self) -> float:
        return max(self.l1)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "l1", f"l{self.q:g}", "linf", "dt",
                        "clamp_count"])
            for row in zip(self.times, self.l1, self.lq, self.linf,
                           self.dts, self.clamp_counts):
                w.writerow(row)


def simulate_forward(P: HeatPropagator, u0: RadialField, f: NonlinearityExpr,
                     T: float,
                     controls: SimulationControls = None) -> Trajectory:
    """Exponential-integrator stepping u_(m+1) = S(dt)(u_m + dt f(u_m)) with
    adaptive step halving; declares numeric blow-up (not a proof) when the
    sup norm exceeds the guard or dt underflows."""
    ct = controls or SimulationControls()
    u = u0.copy()
    t, dt = 0.0, min(ct.dt_init, T)
    traj = Trajectory(times=[0.0], l1=[lq_norm(u, 1.0)], lq=[lq_norm(u, ct.q)],
                      linf=[lq_norm(u, math.inf)], dts=[dt], clamp_counts=[0],
                      q=ct.q, blowup=False, blowup_time=None, final=u)
    steps = 0
    while t < T and steps < ct.max_steps:
        steps += 1
        dt = min(dt, T - t)
        try:
            fu = _eval_f(f, u.values)
        except SolverError:
            traj.blowup, traj.blowup_time = True, t
            break
        cand = RadialField(u.grid,
                           np.concatenate([u.values[:-1] + dt * fu[:-1],
                                           [0.0]]))
        u_new = semigroup_apply(P, dt, cand)
        sup = lq_norm(u_new, math.inf)
        base = max(lq_norm(u, math.inf), 1e-300)
        rel = float(np.max(np.abs(u_new.values - u.values))) / base
        if ct.adaptive and rel > ct.rel_change_target and dt > ct.dt_min:
            dt *= 0.5
            if dt < ct.dt_min:
                traj.blowup, traj.blowup_time = True, t
                break
            continue
        t += dt
        u = u_new
        traj.times.append(t)
        traj.l1.append(lq_norm(u, 1.0))
        traj.lq.append(lq_norm(u, ct.q))
        traj.linf.append(sup)
        traj.dts.append(dt)
        traj.clamp_counts.append(u.clamp_count)
        if sup > ct.blowup_sup:
            traj.blowup, traj.blowup_time = True, t
            break
        if ct.adaptive and rel < 0.5 * ct.rel_change_target:
            dt *= ct.dt_growth
    traj.final = u
    return traj
