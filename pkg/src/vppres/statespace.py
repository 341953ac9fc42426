"""Eighth-order state-space model of the VPP-integrated system.

Blockwise assembly of the state matrix and input vector, fixed-step RK4
simulation with dead-band gating, the dominant-pole stability margin via the
in-house eigensolver, and the bilinear surface fit of that margin over
(H_VPP, D_VPP).
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import SolverError
from .freqcore import Disturbance, GridParams, VppGain

STATE_LABELS = ("f_p", "E_q", "f_g", "u_vd", "u_vq", "i_od", "i_oq", "dP_PFR")

# indices into the state vector
_FP, _EQ, _FG, _UVD, _UVQ, _IOD, _IOQ, _PFR = range(8)


@dataclass(frozen=True)
class DeviceParams:
    """Device-level control constants of the aggregated inverter.

    l1 is in per-unit-seconds (inductance / base impedance) and r1 in
    per-unit so that l1 * di/dt balances r1 * i with t in seconds; m_const
    converts per-unit frequency to rad/s.
    """

    kp_p: float
    kp_i: float
    kr_p: float
    kr_i: float
    l1: float
    r1: float
    i0_v: float
    m_const: float

    def __post_init__(self):
        for name in ("kp_p", "kp_i", "kr_p", "kr_i", "l1", "m_const"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def from_si(cls, kp_p, kp_i, kr_p, kr_i, l1_henry, r1_ohm, i0_v,
                f0_hz, v_base, s_base_va):
        """Build from SI filter values on an explicit voltage/power base."""
        z_base = v_base**2 / s_base_va
        return cls(kp_p=kp_p, kp_i=kp_i, kr_p=kr_p, kr_i=kr_i,
                   l1=l1_henry / z_base, r1=r1_ohm / z_base, i0_v=i0_v,
                   m_const=2.0 * np.pi * f0_hz)


@dataclass(frozen=True)
class StateSpaceModel:
    """Assembled model: x' = a x + bu with the full (post-activation) blocks.

    Keeps its parameter set so simulation can rebuild the matrices with the
    dead-band-gated terms masked out.
    """

    a: np.ndarray
    bu: np.ndarray
    grid: GridParams
    dev: DeviceParams
    gain: VppGain
    dist: Disturbance
    state_labels: tuple = STATE_LABELS


def _a_matrix(grid, dev, gain, vpp_droop_on=True, sg_pfr_on=True):
    """Blockwise state matrix; droop/PFR terms masked before their dead bands."""
    hv, dv = gain.h_vpp, (gain.d_vpp if vpp_droop_on else 0.0)
    m = dev.m_const
    a = np.zeros((8, 8))
    # A1 block (PLL, swing, current-integrator rows x same states)
    a[_FP, _FP] = -dev.kp_p * m
    a[_FP, _EQ] = dev.kp_i
    a[_FP, _FG] = dev.kp_p * m
    a[_EQ, _FP] = -m
    a[_EQ, _FG] = m
    a[_FG, _FG] = -grid.d0 / (2.0 * grid.h0)
    a[_UVD, _FP] = dev.kr_i * (2.0 * hv * dev.kp_p * m - dv)
    a[_UVD, _EQ] = -2.0 * dev.kr_i * hv * dev.kp_i
    a[_UVD, _FG] = -2.0 * dev.kr_i * hv * dev.kp_p * m
    # A2 block
    a[_FG, _IOD] = 1.0 / (2.0 * grid.h0)
    a[_FG, _PFR] = -1.0 / (2.0 * grid.h0)
    a[_UVD, _IOD] = -dev.kr_i
    # A3 block
    a[_IOD, _FP] = dev.kr_p * (2.0 * dev.kp_p * hv * m - dv) / dev.l1
    a[_IOD, _EQ] = -2.0 * dev.kr_p * dev.kp_i * hv / dev.l1
    a[_IOD, _FG] = -2.0 * dev.kr_p * dev.kp_p * hv * m / dev.l1
    a[_IOD, _UVD] = 1.0 / dev.l1
    if sg_pfr_on:
        a[_PFR, _FG] = grid.r_droop / grid.t_sg
    # A4 block
    a[_UVQ, _IOQ] = -dev.kr_i
    a[_IOD, _IOD] = -(dev.kr_p + dev.r1) / dev.l1
    a[_IOQ, _UVQ] = 1.0 / dev.l1
    a[_IOQ, _IOQ] = -(dev.kr_p + dev.r1) / dev.l1
    a[_PFR, _PFR] = -1.0 / grid.t_sg
    return a


def _bu_vector(grid, dev, gain, p_g, p_l, vpp_droop_on=True, sg_pfr_on=True):
    dv = gain.d_vpp if vpp_droop_on else 0.0
    bu = np.zeros(8)
    bu[_FG] = (p_g - p_l + grid.d0) / (2.0 * grid.h0)
    # frequencies are per-unit states, so the nominal point enters as 1.0
    ref = dev.i0_v + dv * 1.0 - dv * grid.f_db1
    bu[_UVD] = dev.kr_i * ref
    bu[_IOD] = dev.kr_p * ref / dev.l1
    if sg_pfr_on:
        bu[_PFR] = grid.r_droop / grid.t_sg * (grid.f_db2 - 1.0)
    return bu


def phase_matrices(grid, dev, gain, dist, vpp_droop_on, sg_pfr_on, pre_disturbance=False):
    """(A, Bu) with the requested dead-band gating and load level."""
    if dist.p_g is None or dist.p_v is None or dist.p_l is None:
        raise ValueError("state-space assembly needs dispatch components on the disturbance")
    p_l = (dist.p_g + dist.p_v) if pre_disturbance else dist.p_l
    a = _a_matrix(grid, dev, gain, vpp_droop_on, sg_pfr_on)
    bu = _bu_vector(grid, dev, gain, dist.p_g, p_l, vpp_droop_on, sg_pfr_on)
    return a, bu


def assemble(grid: GridParams, dev: DeviceParams, gain: VppGain,
             dist: Disturbance) -> StateSpaceModel:
    """Full post-activation model with the post-step load in the input."""
    a, bu = phase_matrices(grid, dev, gain, dist, True, True)
    return StateSpaceModel(a=a, bu=bu, grid=grid, dev=dev, gain=gain, dist=dist)


def equilibrium(model: StateSpaceModel) -> np.ndarray:
    """Pre-disturbance operating point: solves A x = -Bu for the masked
    (no droop, no PFR) model with the balanced load."""
    a, bu = phase_matrices(model.grid, model.dev, model.gain, model.dist,
                           vpp_droop_on=False, sg_pfr_on=False, pre_disturbance=True)
    x0 = np.linalg.solve(a, -bu)
    resid = float(np.max(np.abs(a @ x0 + bu)))
    if resid > 1e-6 * max(1.0, float(np.max(np.abs(bu)))):
        raise SolverError("equilibrium solve residual too large", residual=resid)
    return x0


@dataclass(frozen=True)
class SimResult:
    times: np.ndarray
    states: np.ndarray
    t_act_vpp: float
    t_act_sg: float

    @property
    def delta_f_grid(self):
        return self.states[:, _FG] - 1.0

    @property
    def delta_f_pll(self):
        return self.states[:, _FP] - 1.0

    @property
    def dp_vpp(self):
        """Injection deviation of the VPP (d-axis current above setpoint)."""
        return self.states[:, _IOD] - self.states[0, _IOD]

    @property
    def dp_pfr(self):
        """SG primary-response injection (state carries the opposite sign)."""
        return -self.states[:, _PFR]


def simulate(model: StateSpaceModel, x0, horizon: float, step: float,
             diverge_limit: float = 1e3) -> SimResult:
    """Fixed-step RK4 with dead-band switching.

    The droop terms of the VPP activate when |f_p - 1| crosses f_db1 and the
    SG primary response when |f_g - 1| crosses f_db2; crossing instants are
    located by bisection inside the step.  States whose magnitude exceeds
    diverge_limit times their initial scale abort the run.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    g, d, gn, di = model.grid, model.dev, model.gain, model.dist
    phases = [
        phase_matrices(g, d, gn, di, vpp_droop_on=False, sg_pfr_on=False),
        phase_matrices(g, d, gn, di, vpp_droop_on=True, sg_pfr_on=False),
        phase_matrices(g, d, gn, di, vpp_droop_on=True, sg_pfr_on=True),
    ]
    n_steps = int(round(horizon / step))
    states, switch_times = _kernels.rk4_switched(
        [p[0] for p in phases], [p[1] for p in phases],
        np.asarray(x0, dtype=float), step, n_steps,
        watch_idx=[_FP, _FG],
        thresholds=[g.f_db1, g.f_db2],
        refs=[1.0, 1.0],
        diverge_limit=diverge_limit,
    )
    times = np.arange(n_steps + 1) * step
    return SimResult(times, states, float(switch_times[0]), float(switch_times[1]))


def eigenvalues(a: np.ndarray, validate: bool = True) -> np.ndarray:
    """All eigenvalues via the in-house QR kernel.

    When validate is set, each root is checked against the characteristic
    polynomial: |det(A - lambda I)| normalised by the Hadamard row bound must
    stay below 1e-6 (the bound makes the residual scale-free).
    """
    a = np.asarray(a, dtype=float)
    eigs = _kernels.eigvals(a)
    if validate:
        n = a.shape[0]
        eye = np.eye(n)
        for lam in eigs:
            shifted = a.astype(complex) - lam * eye
            scale = float(np.prod(np.linalg.norm(shifted, axis=1)))
            resid = abs(np.linalg.det(shifted)) / max(scale, 1e-300)
            if resid > 1e-6:
                raise SolverError(
                    f"eigenvalue {lam:.6g} fails the characteristic-polynomial "
                    f"check", residual=resid)
    return eigs


def dominant_pole(model_or_matrix, validate: bool = True) -> float:
    """Stability margin P*: the rightmost real part over all eigenvalues."""
    a = model_or_matrix.a if isinstance(model_or_matrix, StateSpaceModel) \
        else np.asarray(model_or_matrix, dtype=float)
    return float(eigenvalues(a, validate=validate).real.max())


@dataclass(frozen=True)
class StabilityFit:
    """Bilinear surface P* ~ b1 + b2 H + b3 D + b4 H D over a gain lattice."""

    b1: float
    b2: float
    b3: float
    b4: float
    rms_error: float
    grid_spec: tuple
    accuracy_in_sample: float
    accuracy_held_out: float

    def predict(self, h_vpp, d_vpp):
        return self.b1 + self.b2 * h_vpp + self.b3 * d_vpp + self.b4 * h_vpp * d_vpp

    @property
    def coefficients(self):
        return np.array([self.b1, self.b2, self.b3, self.b4])


def _pole_surface(grid, dev, dist, h_values, d_values):
    vals = np.empty((len(h_values), len(d_values)))
    for i, h in enumerate(h_values):
        for j, d in enumerate(d_values):
            model = assemble(grid, dev, VppGain(h, d), dist)
            vals[i, j] = dominant_pole(model, validate=False)
    return vals


def fit_stability_surface(grid: GridParams, dev: DeviceParams, dist: Disturbance,
                          lattice) -> StabilityFit:
    """Least-squares fit of the dominant pole on the basis {1, H, D, HD}.

    The residuals are weighted by 1/|P*| so the fit minimises relative error,
    the same measure the accuracy figures report.  lattice is a (h_values,
    d_values) pair and needs at least four non-degenerate points.  Held-out
    accuracy is measured on the midpoint lattice (cell centres), guarding the
    four-parameter basis against overfitting without any randomness.
    """
    h_values = np.asarray(lattice[0], dtype=float)
    d_values = np.asarray(lattice[1], dtype=float)
    if h_values.size * d_values.size < 4 or h_values.size < 2 or d_values.size < 2:
        raise ValueError("lattice must span at least 2x2 distinct gain points")
    hh, dd = np.meshgrid(h_values, d_values, indexing="ij")
    y = _pole_surface(grid, dev, dist, h_values, d_values).ravel()
    x = np.column_stack([np.ones(y.size), hh.ravel(), dd.ravel(), (hh * dd).ravel()])
    w = 1.0 / np.maximum(np.abs(y), 1e-12)
    b, _, rank, _ = np.linalg.lstsq(x * w[:, None], y * w, rcond=None)
    if rank < 4 or not np.all(np.isfinite(b)):
        raise ValueError("rank-deficient lattice")
    pred = x @ b
    rms = float(np.sqrt(np.mean((pred - y) ** 2)))
    acc_in = float(np.mean(1.0 - np.abs((pred - y) / y)))

    h_mid = 0.5 * (h_values[:-1] + h_values[1:])
    d_mid = 0.5 * (d_values[:-1] + d_values[1:])
    hh_m, dd_m = np.meshgrid(h_mid, d_mid, indexing="ij")
    y_m = _pole_surface(grid, dev, dist, h_mid, d_mid).ravel()
    pred_m = b[0] + b[1] * hh_m.ravel() + b[2] * dd_m.ravel() \
        + b[3] * (hh_m * dd_m).ravel()
    acc_out = float(np.mean(1.0 - np.abs((pred_m - y_m) / y_m)))

    spec = (float(h_values[0]), float(h_values[-1]), int(h_values.size),
            float(d_values[0]), float(d_values[-1]), int(d_values.size))
    return StabilityFit(float(b[0]), float(b[1]), float(b[2]), float(b[3]),
                        rms, spec, acc_in, acc_out)


def dump_matrix(model: StateSpaceModel, path):
    """Row-major text dump of A and Bu for external verification."""
    with open(path, "w") as fh:
        fh.write("# A (8x8), row-major\n")
        for row in model.a:
            fh.write(" ".join(f"{v:.12e}" for v in row) + "\n")
        fh.write("# Bu (8)\n")
        fh.write(" ".join(f"{v:.12e}" for v in model.bu) + "\n")
