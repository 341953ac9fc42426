"""Feasible gain region, minimal-reserve decision and line-flow screening.

The region combines the analytic RoCoF/Qss lower bounds, the implicit nadir
constraint (evaluated through the closed-form nadir), the fitted decay-rate
surface and the box caps.  The two-stage decision first drives the virtual
damping to the smallest feasible value (minimising the steady injection,
which is increasing in damping) and then the virtual inertia to the smallest
feasible value on that slice (minimising cumulative energy, which is
increasing in inertia).
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError, OverdampedError
from .freqcore import (Disturbance, EnergyIntegral, GridParams, SafetyLimits,
                       VppGain, cumulative_energy, nadir_time,
                       pu_seconds_to_mwh, vpp_power_profile, _branch2)
from .statespace import StabilityFit


@dataclass(frozen=True)
class FeasibleRegion:
    """Membership test plus boundary curves of the five-constraint region."""

    grid: GridParams
    dist: Disturbance
    limits: SafetyLimits
    fit: StabilityFit
    h_max: float
    d_max: float
    h_min_rocof: float
    d_min_qss: float

    @property
    def is_empty(self) -> bool:
        return self.min_feasible_d() is None

    def nadir_value(self, h, d):
        gain = VppGain(h, d)
        tn = nadir_time(self.grid, gain, self.dist)
        return float(_branch2(self.grid, gain, self.dist, tn)[0])

    def contains(self, gain: VppGain) -> bool:
        """All five conditions; overdamped pairs are excluded."""
        h, d = gain.h_vpp, gain.d_vpp
        if not (0.0 <= h <= self.h_max and 0.0 <= d <= self.d_max):
            return False
        if h < self.h_min_rocof - 1e-12:
            return False
        if d < self.d_min_qss - 1e-12:
            return False
        if self.fit.predict(h, d) > self.limits.sigma + 1e-12:
            return False
        try:
            if self.nadir_value(h, d) < -self.limits.nadir_lim - 1e-12:
                return False
        except OverdampedError:
            return False
        return True

    def decay_h_interval(self, d):
        """H-interval allowed by the decay constraint at fixed damping."""
        coef = self.fit.b2 + self.fit.b4 * d
        rhs = self.limits.sigma - self.fit.b1 - self.fit.b3 * d
        if coef > 0:
            return (0.0, rhs / coef)
        if coef < 0:
            return (rhs / coef, np.inf)
        return (0.0, np.inf) if rhs >= 0 else None

    def min_feasible_h(self, d, tol=1e-4):
        """Smallest feasible inertia on the fixed-damping slice, or None.

        Uses bisection on the nadir boundary (nadir depth decreases with
        inertia for this model family); falls back to a scan if the
        monotone bracket is invalid.
        """
        if d < self.d_min_qss - 1e-12 or d > self.d_max:
            return None
        interval = self.decay_h_interval(d)
        if interval is None:
            return None
        lo = max(self.h_min_rocof, 0.0, interval[0])
        hi = min(self.h_max, interval[1])
        if lo > hi:
            return None

        def ok(h):
            try:
                return self.nadir_value(h, d) >= -self.limits.nadir_lim
            except OverdampedError:
                return False

        if ok(lo):
            return lo
        if not ok(hi):
            # monotone case: nothing on the slice; confirm with a scan
            if not any(ok(h) for h in np.linspace(lo, hi, 33)):
                return None
            warnings.warn("nadir boundary non-monotone in inertia; using scan",
                          stacklevel=2)
            grid = np.linspace(lo, hi, 513)
            return float(min(h for h in grid if ok(h)))
        a, b = lo, hi
        while b - a > tol:
            m = 0.5 * (a + b)
            if ok(m):
                b = m
            else:
                a = m
        return float(b)

    def min_feasible_d(self, tol=1e-4):
        """Smallest damping whose slice is non-empty, or None."""
        lo = max(self.d_min_qss, 0.0)
        hi = self.d_max
        if lo > hi:
            return None
        if self.min_feasible_h(lo) is not None:
            return lo
        if self.min_feasible_h(hi) is None:
            # coarse scan before declaring the region empty
            cands = [d for d in np.linspace(lo, hi, 65)
                     if self.min_feasible_h(d) is not None]
            if not cands:
                return None
            hi = cands[0]
        a, b = lo, hi
        while b - a > tol:
            m = 0.5 * (a + b)
            if self.min_feasible_h(m) is not None:
                b = m
            else:
                a = m
        return float(b)

    def nadir_boundary(self, n=60):
        """Sampled (h, d) curve where the nadir constraint turns active."""
        d_grid = np.linspace(max(self.d_min_qss, 0.0), self.d_max, n)
        pts = [(self._nadir_boundary_h(d), d) for d in d_grid]
        return np.array([(h, d) for h, d in pts if h is not None])

    def decay_boundary(self, n=60):
        """Sampled (h, d) curve of the fitted decay-rate equality."""
        d_grid = np.linspace(max(self.d_min_qss, 0.0), self.d_max, n)
        pts = []
        for d in d_grid:
            interval = self.decay_h_interval(d)
            if interval is None:
                continue
            edge = interval[1] if np.isfinite(interval[1]) else interval[0]
            if np.isfinite(edge) and 0.0 <= edge <= self.h_max:
                pts.append((float(edge), float(d)))
        return np.array(pts)

    def boundary_samples(self, n=60):
        """(h, d, constraint-id) triples tracing each active boundary."""
        rows = []
        d_grid = np.linspace(max(self.d_min_qss, 0.0), self.d_max, n)
        for d in d_grid:
            rows.append((self.h_min_rocof, d, "rocof"))
        h_grid = np.linspace(max(self.h_min_rocof, 0.0), self.h_max, n)
        for h in h_grid:
            rows.append((h, self.d_min_qss, "qss"))
        for d in d_grid:
            interval = self.decay_h_interval(d)
            if interval is None:
                continue
            h_edge = interval[1] if np.isfinite(interval[1]) else interval[0]
            if np.isfinite(h_edge) and 0.0 <= h_edge <= self.h_max:
                rows.append((float(h_edge), float(d), "decay"))
        for d in d_grid:
            h = self._nadir_boundary_h(d)
            if h is not None:
                rows.append((float(h), float(d), "nadir"))
        for d in d_grid:
            rows.append((self.h_max, d, "cap_h"))
        for h in h_grid:
            rows.append((h, self.d_max, "cap_d"))
        return rows

    def _nadir_boundary_h(self, d, tol=1e-4):
        """H where the nadir constraint turns feasible at fixed d (caps
        and decay ignored), or None if it never does below h_max."""
        def ok(h):
            try:
                return self.nadir_value(h, d) >= -self.limits.nadir_lim
            except OverdampedError:
                return False
        lo, hi = max(self.h_min_rocof, 0.0), self.h_max
        if ok(lo):
            return lo
        if not ok(hi):
            return None
        a, b = lo, hi
        while b - a > tol:
            m = 0.5 * (a + b)
            if ok(m):
                b = m
            else:
                a = m
        return b


def feasible_region(grid: GridParams, dev, dist: Disturbance,
                    limits: SafetyLimits, fit: StabilityFit,
                    caps) -> FeasibleRegion:
    """Construct the region; an empty region is a valid (explicit) result."""
    h_max, d_max = caps
    h_min_rocof = max(dist.delta_p / (2.0 * limits.rocof_lim) - grid.h0, 0.0)
    if limits.qss_lim <= grid.f_db1:
        raise InfeasibleError("Qss limit does not exceed the VPP dead band")
    d_min_qss = max(
        (dist.delta_p + grid.r_droop * grid.f_db2
         - limits.qss_lim * (grid.d0 + grid.r_droop))
        / (limits.qss_lim - grid.f_db1), 0.0)
    return FeasibleRegion(grid=grid, dist=dist, limits=limits, fit=fit,
                          h_max=float(h_max), d_max=float(d_max),
                          h_min_rocof=float(h_min_rocof),
                          d_min_qss=float(d_min_qss))


@dataclass(frozen=True)
class ReserveDecision:
    """Gain pair with its reserve profile and energy figures."""

    gain: VppGain
    energy: EnergyIntegral
    energy_mwh: float
    peak_power: float
    profile_times: np.ndarray
    reserve_profile: np.ndarray
    fallback_used: bool = False


def _profile(grid, gain, dist, horizon, dt):
    times = np.arange(0.0, horizon + dt / 2.0, dt)
    if times[-1] < horizon:
        times = np.append(times, horizon)
    return times, vpp_power_profile(grid, gain, dist, times)


def min_reserve(region: FeasibleRegion, grid: GridParams, dev,
                dist: Disturbance, horizon: float, dt: float = 0.01,
                base_mva: float = 1000.0, tol: float = 1e-4) -> ReserveDecision:
    """Two-stage minimal reserve: smallest feasible damping, then smallest
    feasible inertia on that slice.  Falls back to a joint lattice search
    (flagged) if the slice unexpectedly closes."""
    d_re = region.min_feasible_d(tol)
    if d_re is None:
        raise InfeasibleError("feasible region is empty")
    h_re = region.min_feasible_h(d_re, tol)
    fallback = False
    if h_re is None:
        warnings.warn("slice at minimal damping is empty; falling back to "
                      "joint lattice search", stacklevel=2)
        fallback = True
        hs = np.linspace(max(region.h_min_rocof, 0.0), region.h_max, 200)
        ds = np.linspace(max(region.d_min_qss, 0.0), region.d_max, 200)
        best = None
        for d in ds:
            for h in hs:
                if region.contains(VppGain(h, d)):
                    e = cumulative_energy(grid, VppGain(h, d), dist, horizon, dt)
                    if best is None or e.quadrature < best[0]:
                        best = (e.quadrature, h, d)
        if best is None:
            raise InfeasibleError("feasible region is empty")
        _, h_re, d_re = best
    gain = VppGain(float(h_re), float(d_re))
    energy = cumulative_energy(grid, gain, dist, horizon, dt)
    times, profile = _profile(grid, gain, dist, horizon, dt)
    return ReserveDecision(gain=gain, energy=energy,
                           energy_mwh=pu_seconds_to_mwh(energy.quadrature, base_mva),
                           peak_power=float(profile.max()),
                           profile_times=times, reserve_profile=profile,
                           fallback_used=fallback)


def reserve_peak_baseline(gain: VppGain, grid: GridParams, dev,
                          dist: Disturbance, horizon: float, dt: float = 0.01,
                          base_mva: float = 1000.0) -> ReserveDecision:
    """Fixed reserve sized to the peak injection and held for the horizon."""
    times, profile = _profile(grid, gain, dist, horizon, dt)
    peak = float(profile.max())
    energy_pu_s = peak * horizon
    return ReserveDecision(gain=gain,
                           energy=EnergyIntegral(energy_pu_s, energy_pu_s),
                           energy_mwh=pu_seconds_to_mwh(energy_pu_s, base_mva),
                           peak_power=peak,
                           profile_times=times,
                           reserve_profile=np.full_like(times, peak))


@dataclass(frozen=True)
class PtdfLine:
    """One monitored line: its flow limit and the injection sensitivities."""

    line_id: str
    limit: float
    s_vpp: float
    s_g: tuple
    s_d: tuple

    def __post_init__(self):
        if self.limit <= 0:
            raise ValueError("line limit must be positive")
        for s in (self.s_vpp, *self.s_g, *self.s_d):
            if abs(s) > 1.0:
                raise ValueError("PTDF entries must lie in [-1, 1]")


@dataclass(frozen=True)
class PtdfNetwork:
    lines: tuple
    sg_outputs: tuple
    loads: tuple


@dataclass(frozen=True)
class LineFlowResult:
    line_id: str
    max_flow: float
    limit: float
    ok: bool
    first_violation_t: float | None


def line_flow_check(net: PtdfNetwork, profile_times, dp_vpp_profile):
    """Screen every line flow over time against its limit.

    SG outputs and loads may be scalars (held constant) or arrays on the
    same grid as the injection profile.
    """
    times = np.asarray(profile_times, dtype=float)
    inj = np.asarray(dp_vpp_profile, dtype=float)
    if times.shape != inj.shape:
        from .errors import GridMismatchError
        raise GridMismatchError("injection profile and time grid differ in length")

    def as_series(v):
        arr = np.asarray(v, dtype=float)
        if arr.ndim == 0:
            return np.full_like(times, float(arr))
        if arr.shape != times.shape:
            from .errors import GridMismatchError
            raise GridMismatchError("SG/load series not on the common grid")
        return arr

    sg_series = [as_series(p) for p in net.sg_outputs]
    load_series = [as_series(p) for p in net.loads]
    results = []
    for line in net.lines:
        flow = line.s_vpp * inj
        for s, series in zip(line.s_g, sg_series):
            flow = flow + s * series
        for s, series in zip(line.s_d, load_series):
            flow = flow - s * series
        aflow = np.abs(flow)
        over = aflow > line.limit
        first = float(times[np.argmax(over)]) if over.any() else None
        results.append(LineFlowResult(line.line_id, float(aflow.max()),
                                      line.limit, not over.any(), first))
    return results
