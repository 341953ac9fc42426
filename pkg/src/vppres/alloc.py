"""Reserve allocation across heterogeneous inverter-based resources.

The VPP-level injection decomposes per IBR into a fixed linear combination
of that IBR's inertia and damping: dP_i(t) = alpha(t) H_i + (k_d + beta(t))
D_i, with coefficients set by system-level constants only.  Allocation is an
exact linear program; even/proportional splits and the worst-case (robust)
variant serve as baselines, and an economic punishment prices unsatisfied
support.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import GridMismatchError, InfeasibleError, SolverError
from .freqcore import (Disturbance, GridParams, VppGain, pu_seconds_to_mwh,
                       second_order_char)

# deterministic tie-break between IBRs with equal margins: prefer the unit
# with more rated headroom, then the lower index; both preferences sit far
# below any economic difference
_TIE_EPS = 1e-9
_TIE_EPS_IDX = 1e-12


@dataclass(frozen=True)
class IbrParams:
    """Per-IBR costs, power caps, gain boxes and capacity fluctuation."""

    c_r: tuple
    p_rated: tuple
    h_bounds: tuple   # (lo, hi) per IBR
    d_bounds: tuple
    fluctuation: tuple | None = None

    def __post_init__(self):
        n = len(self.c_r)
        if not (len(self.p_rated) == len(self.h_bounds) == len(self.d_bounds) == n):
            raise ValueError("per-IBR parameter lists must share one length")
        if any(c < 0 for c in self.c_r):
            raise ValueError("costs must be non-negative")
        for lo, hi in (*self.h_bounds, *self.d_bounds):
            if lo > hi:
                raise ValueError("box bounds must be ordered")
        if self.fluctuation is not None:
            if len(self.fluctuation) != n:
                raise ValueError("fluctuation list length mismatch")
            if any(not 0 <= f < 1 for f in self.fluctuation):
                raise ValueError("fluctuation fractions must lie in [0, 1)")

    @property
    def n_ibr(self):
        return len(self.c_r)


@dataclass(frozen=True)
class MarketParams:
    c_f: float
    c_p: float
    horizon: float
    base_mva: float

    def __post_init__(self):
        if not self.c_p >= self.c_f >= 0:
            raise ValueError("expected c_p >= c_f >= 0")


@dataclass(frozen=True)
class InjectionBasis:
    """Sampled decomposition coefficients on a time grid.

    dP_i(t) = alpha(t) * H_i + (k_d + beta(t)) * D_i.
    """

    times: np.ndarray
    k_d: float
    alpha: np.ndarray
    beta: np.ndarray

    @property
    def damping_coeff(self):
        return self.k_d + self.beta

    def injection(self, h_i, d_i):
        """Per-IBR injection profile(s); h_i/d_i may be scalars or vectors."""
        h_i = np.atleast_1d(np.asarray(h_i, dtype=float))
        d_i = np.atleast_1d(np.asarray(d_i, dtype=float))
        out = np.outer(self.alpha, h_i) + np.outer(self.damping_coeff, d_i)
        return out[:, 0] if out.shape[1] == 1 else out

    def energy_coefficients(self):
        """Per-unit-gain energy weights: uniform sample weight times step.

        Matches the discrete sum convention of the allocation objective
        (every sample, both endpoints included, weighted by the grid step).
        """
        dt = float(self.times[1] - self.times[0])
        return float(self.alpha.sum() * dt), float(self.damping_coeff.sum() * dt)


def injection_basis(grid: GridParams, gain_vpp: VppGain, dist: Disturbance,
                    times) -> InjectionBasis:
    """Decomposition coefficients, exact in the system-level constants.

    k_d, alpha and beta depend only on the aggregated characteristic (via
    H = H0 + H_VPP, the damping-augmented step and the swing pair), so they
    are constants with respect to the per-IBR variables.
    """
    times = np.asarray(times, dtype=float)
    if times.size < 2 or np.any(np.diff(times) <= 0):
        raise ValueError("need a strictly increasing grid of at least 2 samples")
    c = second_order_char(grid, gain_vpp)
    tsg = grid.t_sg
    dp1 = dist.delta_p + gain_vpp.d_vpp * grid.f_db1
    dp2 = grid.r_droop * grid.f_db2
    h = c.h_total
    wn2 = c.omega_n**2
    zw = c.zeta * c.omega_n
    k_d = ((dp1 + dp2) / wn2 - 2.0 * h * tsg * grid.f_db1) / (2.0 * h * tsg)
    e = np.exp(-zw * times)
    s = np.sin(c.omega_d * times)
    co = np.cos(c.omega_d * times)
    alpha = e * s / (h * c.omega_d) * ((dp1 + dp2) / tsg - zw * dp1) \
        + e * co / h * dp1
    # the cosine term carries a minus sign: the decomposition must agree with
    # the static/dynamic split of the aggregate injection for any gain pair
    beta = -e * co * (dp1 + dp2) / (2.0 * h * tsg * wn2) \
        + e * s / (2.0 * h * c.omega_d) * (dp1 - c.zeta * (dp1 + dp2) / (tsg * c.omega_n))
    return InjectionBasis(times=times, k_d=float(k_d), alpha=alpha, beta=beta)


@dataclass(frozen=True)
class AllocationPlan:
    h_i: np.ndarray
    d_i: np.ndarray
    objective: float
    per_ibr_energy: np.ndarray   # MWh
    binding: tuple
    revenue: float
    cost: float
    clamped: bool = False
    duals: dict | None = None


def _pareto_extremes(alpha, dcoef):
    """Indices of samples that can bind given non-negative gains.

    For the upper cap only pareto-maximal (alpha, k_d+beta) pairs matter;
    for the lower bound only pareto-minimal ones.  The steady state is kept
    explicitly.
    """
    pts = np.column_stack([alpha, dcoef])
    order = np.argsort(-pts[:, 0], kind="stable")
    upper, best = [], -np.inf
    for idx in order:
        if pts[idx, 1] > best + 1e-15:
            upper.append(idx)
            best = pts[idx, 1]
    lower, best = [], np.inf
    for idx in order[::-1]:
        if pts[idx, 1] < best - 1e-15:
            lower.append(idx)
            best = pts[idx, 1]
    last = len(alpha) - 1
    return sorted(set(upper) | {last}), sorted(set(lower) | {last})


def _solve_lp(basis, ibrs, market, target, p_caps, objective_basis=None,
              reduced=False):
    n = ibrs.n_ibr
    obj_basis = objective_basis or basis
    a_e, d_e = obj_basis.energy_coefficients()
    to_mwh = market.base_mva / 3600.0
    margins = market.c_f - np.asarray(ibrs.c_r)
    # maximize margin . E  ->  minimize the negative, with the tie-break bias
    rated = np.asarray(ibrs.p_rated, dtype=float)
    tie = -_TIE_EPS * rated / rated.max() + _TIE_EPS_IDX * np.arange(n)
    c_h = -margins * a_e * to_mwh + tie
    c_d = -margins * d_e * to_mwh + tie
    cvec = np.concatenate([c_h, c_d])

    a_eq = np.zeros((2, 2 * n))
    a_eq[0, :n] = 1.0
    a_eq[1, n:] = 1.0
    b_eq = np.array([target.h_vpp, target.d_vpp])

    alpha = basis.alpha
    dcoef = basis.damping_coeff
    if reduced:
        up_idx, lo_idx = _pareto_extremes(alpha, dcoef)
    else:
        up_idx = lo_idx = range(len(alpha))
    rows, rhs = [], []
    for i in range(n):
        for t in up_idx:
            row = np.zeros(2 * n)
            row[i] = alpha[t]
            row[n + i] = dcoef[t]
            rows.append(row)
            rhs.append(p_caps[i])
        for t in lo_idx:
            row = np.zeros(2 * n)
            row[i] = -alpha[t]
            row[n + i] = -dcoef[t]
            rows.append(row)
            rhs.append(0.0)
    a_ub = np.asarray(rows)
    b_ub = np.asarray(rhs)
    bounds = [tuple(b) for b in ibrs.h_bounds] + [tuple(b) for b in ibrs.d_bounds]

    res = linprog(cvec, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                  bounds=bounds, method="highs")
    if res.status == 2:
        h_lo = sum(b[0] for b in ibrs.h_bounds)
        h_hi = sum(b[1] for b in ibrs.h_bounds)
        d_lo = sum(b[0] for b in ibrs.d_bounds)
        d_hi = sum(b[1] for b in ibrs.d_bounds)
        if not h_lo <= target.h_vpp <= h_hi:
            cert = (f"sum of inertia boxes [{h_lo:.6g}, {h_hi:.6g}] cannot "
                    f"meet the target {target.h_vpp:.6g}")
        elif not d_lo <= target.d_vpp <= d_hi:
            cert = (f"sum of damping boxes [{d_lo:.6g}, {d_hi:.6g}] cannot "
                    f"meet the target {target.d_vpp:.6g}")
        else:
            cert = "power-cap constraints exclude every gain split meeting the targets"
        raise InfeasibleError(f"allocation infeasible: {cert}")
    if res.status != 0:
        raise SolverError(f"LP solver failed with status {res.status}: {res.message}")

    h_i = res.x[:n]
    d_i = res.x[n:]
    e_i = (a_e * h_i + d_e * d_i) * to_mwh
    revenue = float(market.c_f * e_i.sum())
    cost = float((np.asarray(ibrs.c_r) * e_i).sum())
    slack = b_ub - a_ub @ res.x
    binding = []
    per_ibr_rows = len(up_idx) + len(lo_idx)
    for i in range(n):
        base_row = i * per_ibr_rows
        if np.any(slack[base_row:base_row + len(up_idx)] < 1e-7):
            binding.append(f"p_rated[{i}]")
        if np.any(slack[base_row + len(up_idx):base_row + per_ibr_rows] < 1e-7):
            binding.append(f"p_floor[{i}]")
        if h_i[i] - ibrs.h_bounds[i][0] < 1e-7 or ibrs.h_bounds[i][1] - h_i[i] < 1e-7:
            binding.append(f"h_box[{i}]")
        if d_i[i] - ibrs.d_bounds[i][0] < 1e-7 or ibrs.d_bounds[i][1] - d_i[i] < 1e-7:
            binding.append(f"d_box[{i}]")
    duals = {
        "ineqlin": np.asarray(res.ineqlin.marginals),
        "eqlin": np.asarray(res.eqlin.marginals),
        "lower": np.asarray(res.lower.marginals),
        "upper": np.asarray(res.upper.marginals),
        "slack": slack,
        "cvec": cvec,
        "a_ub": a_ub,
        "a_eq": a_eq,
    }
    return AllocationPlan(h_i=h_i, d_i=d_i, objective=revenue - cost,
                          per_ibr_energy=e_i, binding=tuple(binding),
                          revenue=revenue, cost=cost, duals=duals)


def solve_allocation(basis: InjectionBasis, ibrs: IbrParams,
                     market: MarketParams, target: VppGain,
                     objective_basis: InjectionBasis | None = None,
                     reduced: bool = False) -> AllocationPlan:
    """Profit-maximising allocation as an exact LP.

    Power caps are enforced at every sample of `basis` (or only at the
    pareto-extremal samples when `reduced`, which is equivalent for
    non-negative gains); the revenue/cost energies are summed on
    `objective_basis` when given.
    """
    return _solve_lp(basis, ibrs, market, target,
                     np.asarray(ibrs.p_rated, dtype=float),
                     objective_basis, reduced)


def solve_allocation_robust(basis: InjectionBasis, ibrs: IbrParams,
                            market: MarketParams, target: VppGain,
                            objective_basis: InjectionBasis | None = None,
                            reduced: bool = False) -> AllocationPlan:
    """Worst-case variant: caps shrink to (1 - fluctuation) * p_rated, so the
    plan stays feasible for every capacity realization in the declared box."""
    if ibrs.fluctuation is None:
        raise ValueError("robust allocation needs fluctuation fractions")
    caps = (1.0 - np.asarray(ibrs.fluctuation)) * np.asarray(ibrs.p_rated)
    return _solve_lp(basis, ibrs, market, target, caps, objective_basis, reduced)


def _baseline_plan(basis, ibrs, market, h_i, d_i, objective_basis=None):
    obj_basis = objective_basis or basis
    a_e, d_e = obj_basis.energy_coefficients()
    to_mwh = market.base_mva / 3600.0
    clamped = False
    for i in range(ibrs.n_ibr):
        if not (ibrs.h_bounds[i][0] - 1e-12 <= h_i[i] <= ibrs.h_bounds[i][1] + 1e-12):
            clamped = True
        if not (ibrs.d_bounds[i][0] - 1e-12 <= d_i[i] <= ibrs.d_bounds[i][1] + 1e-12):
            clamped = True
    if clamped:
        h_i = _clamp_redistribute(h_i, ibrs.h_bounds)
        d_i = _clamp_redistribute(d_i, ibrs.d_bounds)
    e_i = (a_e * h_i + d_e * d_i) * to_mwh
    revenue = float(market.c_f * e_i.sum())
    cost = float((np.asarray(ibrs.c_r) * e_i).sum())
    return AllocationPlan(h_i=np.asarray(h_i, dtype=float),
                          d_i=np.asarray(d_i, dtype=float),
                          objective=revenue - cost, per_ibr_energy=e_i,
                          binding=(), revenue=revenue, cost=cost,
                          clamped=clamped)


def _clamp_redistribute(values, boxes):
    """Clamp to boxes, spreading any clipped mass over unsaturated entries."""
    v = np.asarray(values, dtype=float).copy()
    lo = np.array([b[0] for b in boxes])
    hi = np.array([b[1] for b in boxes])
    for _ in range(len(v)):
        clipped = np.clip(v, lo, hi)
        excess = float((v - clipped).sum())
        v = clipped
        if abs(excess) < 1e-12:
            break
        free = (v < hi - 1e-12) if excess > 0 else (v > lo + 1e-12)
        if not free.any():
            break
        v[free] += excess / free.sum()
    return v


def allocate_even(basis: InjectionBasis, ibrs: IbrParams, market: MarketParams,
                  target: VppGain, objective_basis=None) -> AllocationPlan:
    """Equal split of the aggregate gains across the fleet."""
    n = ibrs.n_ibr
    return _baseline_plan(basis, ibrs, market,
                          np.full(n, target.h_vpp / n),
                          np.full(n, target.d_vpp / n), objective_basis)


def allocate_prop(basis: InjectionBasis, ibrs: IbrParams, market: MarketParams,
                  target: VppGain, objective_basis=None) -> AllocationPlan:
    """Split proportional to rated power capacity."""
    w = np.asarray(ibrs.p_rated, dtype=float)
    w = w / w.sum()
    return _baseline_plan(basis, ibrs, market, target.h_vpp * w,
                          target.d_vpp * w, objective_basis)


def plan_injections(basis: InjectionBasis, plan: AllocationPlan) -> np.ndarray:
    """Per-IBR injection profiles (samples x IBR) implied by a plan."""
    return basis.injection(plan.h_i, plan.d_i)


def punishment(times, required, actual, market: MarketParams,
               signed: bool = False) -> float:
    """Economic punishment for unsatisfied support, in dollars (<= 0).

    Shortfall-only by default: over-delivery is not a failure of support.
    `signed` switches to the literal signed difference.
    """
    times = np.asarray(times, dtype=float)
    required = np.asarray(required, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if times.shape != required.shape or times.shape != actual.shape:
        raise GridMismatchError("punishment profiles must share one grid")
    diff = required - actual
    if not signed:
        diff = np.maximum(diff, 0.0)
    steps = np.diff(times)
    if steps.size == 0 or np.ptp(steps) > 1e-9 * steps[0]:
        raise GridMismatchError("punishment expects a uniform time grid")
    shortfall_pu_s = float(diff.sum() * steps[0])
    return -market.c_p * pu_seconds_to_mwh(shortfall_pu_s, market.base_mva)


def complementary_slackness(plan: AllocationPlan) -> float:
    """Largest complementary-slackness residual at the reported optimum."""
    if plan.duals is None:
        raise ValueError("plan carries no dual information")
    d = plan.duals
    resid = float(np.max(np.abs(d["ineqlin"] * d["slack"])))
    return resid
