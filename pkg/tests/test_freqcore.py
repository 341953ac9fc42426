import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

import vppres.freqcore as fc
from vppres import Disturbance, GridParams, OverdampedError, VppGain

from conftest import PAPER_GAIN


def traj_times(horizon=60.0, dt=0.01):
    return np.arange(0.0, horizon + dt / 2, dt)


class TestSecondOrderChar:
    def test_table1_values(self, grid):
        c = fc.second_order_char(grid, PAPER_GAIN)
        # direct evaluation: omega_n = sqrt((D+R)/(2 H T_SG))
        assert c.omega_n == pytest.approx(np.sqrt(41.2094 / 209.25), rel=1e-9)
        assert c.omega_n == pytest.approx(0.4438, abs=2e-4)
        assert c.zeta < 1.0
        assert c.omega_d == pytest.approx(c.omega_n * np.sqrt(1 - c.zeta**2), rel=1e-12)
        assert c.eta2 == pytest.approx(1 / np.sqrt(1 - c.zeta**2), rel=1e-12)
        assert c.eta2 >= 1.0

    def test_vpp_absent_reduces_to_grid(self, grid):
        c = fc.second_order_char(grid, VppGain(0.0, 0.0))
        assert c.h_total == grid.h0
        assert c.d_total == grid.d0
        expected = np.sqrt((grid.d0 + grid.r_droop) / (2 * grid.h0 * grid.t_sg))
        assert c.omega_n == pytest.approx(expected, rel=1e-12)

    def test_overdamped_rejected(self, grid):
        with pytest.raises(OverdampedError) as err:
            fc.second_order_char(grid, VppGain(1.0, 30.0))
        assert err.value.zeta >= 1.0

    def test_phi1_branch_gives_zero_onset(self, grid, dist):
        # the phase branch is fixed by sin(phi1) = -1/eta1, which makes the
        # post-dead-band form pass exactly through zero deviation at onset
        c = fc.second_order_char(grid, PAPER_GAIN)
        assert -np.pi / 2 < c.phi1 < 0  # cos > 0 case for these parameters
        f0, _ = fc._branch2(grid, PAPER_GAIN, dist, 0.0)
        assert abs(f0) < 1e-15

    def test_phi1_third_quadrant_case(self):
        # T_SG omega_n^2 < zeta omega_n flips the cosine sign; onset
        # continuity must hold there as well
        g = GridParams(h0=1.0, d0=1.0, r_droop=3.0, t_sg=0.2,
                       f0=50.0, f_db1=0.0, f_db2=0.0)
        gain = VppGain(0.0, 0.0)
        c = fc.second_order_char(g, gain)
        assert g.t_sg * c.omega_n**2 < c.zeta * c.omega_n
        assert -np.pi < c.phi1 < -np.pi / 2
        d = Disturbance(delta_p=0.1)
        f0, _ = fc._branch2(g, gain, d, 0.0)
        assert abs(f0) < 1e-15


class TestDeadbandTimes:
    def test_zero_width_band(self, dist):
        g = GridParams(h0=5, d0=2, r_droop=25, t_sg=5, f_db1=0.0, f_db2=0.0)
        db = fc.deadband_times(g, PAPER_GAIN, dist)
        assert db.t_db1 == 0.0 and db.t_db2 == 0.0

    def test_closed_form_value(self, grid, dist):
        db = fc.deadband_times(grid, PAPER_GAIN, dist)
        assert db.t_db1 == pytest.approx(0.1006, abs=1e-4)
        assert db.t_db1 <= db.t_db2
        # root-finding oracle on the pre-activation branch
        h = grid.h0 + PAPER_GAIN.h_vpp
        root = brentq(lambda t: -(dist.delta_p / grid.d0)
                      * (1 - np.exp(-grid.d0 * t / (2 * h))) + grid.f_db1,
                      1e-6, 10.0)
        assert db.t_db1 == pytest.approx(root, rel=1e-9)

    def test_never_activates(self, grid):
        tiny = Disturbance(delta_p=0.001)
        db = fc.deadband_times(grid, PAPER_GAIN, tiny)
        assert db.t_db1 is None and db.t_db2 is None


class TestFreqResponse:
    def test_zero_disturbance(self, grid):
        traj = fc.freq_response(grid, PAPER_GAIN, Disturbance(delta_p=0.0),
                                traj_times())
        assert not np.any(traj.delta_f)
        assert not np.any(traj.dp_vpp)

    def test_table1_nadir_and_qss(self, grid, dist):
        traj = fc.freq_response(grid, PAPER_GAIN, dist, traj_times())
        met = fc.metrics(traj, grid, PAPER_GAIN, dist)
        assert -met.nadir * grid.f0 == pytest.approx(0.5, abs=0.02)
        assert -met.qss * grid.f0 == pytest.approx(0.33, abs=0.01)
        assert met.nadir <= met.qss <= 0.0
        assert met.t_nadir > 0.0

    def test_starts_at_zero_and_jump_is_small(self, grid, dist):
        traj = fc.freq_response(grid, PAPER_GAIN, dist, traj_times())
        assert traj.delta_f[0] == 0.0
        assert traj.db2_jump < 5e-4  # branch-origin mismatch is a diagnostic

    def test_pfr_zero_before_activation(self, grid, dist):
        traj = fc.freq_response(grid, PAPER_GAIN, dist, traj_times(dt=0.001))
        pre = traj.times < traj.t_db2
        assert np.max(np.abs(traj.dp_pfr[pre])) < 1e-12

    def test_rejects_bad_grid(self, grid, dist):
        with pytest.raises(ValueError):
            fc.freq_response(grid, PAPER_GAIN, dist, np.array([]))
        with pytest.raises(ValueError):
            fc.freq_response(grid, PAPER_GAIN, dist, np.array([0.5, 1.0]))


class TestMetrics:
    def test_rocof_formula_matches_sampled_slope(self, grid, dist):
        traj = fc.freq_response(grid, PAPER_GAIN, dist, traj_times(dt=0.001))
        met = fc.metrics(traj, grid, PAPER_GAIN, dist)
        slope = np.abs(np.gradient(traj.delta_f, traj.times))
        # the documented branch-origin jump at t_db2 produces a finite-difference
        # spike there; the physical slope maximum sits at the onset
        keep = np.abs(traj.times - traj.t_db2) > 2.5e-3
        assert slope[keep].max() == pytest.approx(met.rocof_max, rel=0.01)
        assert traj.times[keep][int(np.argmax(slope[keep]))] < 0.2

    def test_table1_rocof(self, grid, dist):
        traj = fc.freq_response(grid, PAPER_GAIN, dist, traj_times())
        met = fc.metrics(traj, grid, PAPER_GAIN, dist)
        assert met.rocof_max * grid.f0 == pytest.approx(0.3, abs=0.01)

    def test_table2_rows(self, grid, dist):
        expected = {  # (nadir Hz, settle s)
            (15.925, 14.2094): (49.50, 17.37),
            (28.0, 11.0): (49.50, 22.96),
            (19.0, 11.0): (49.46, 19.36),
        }
        for (h, d), (nadir_hz, settle_s) in expected.items():
            gain = VppGain(h, d)
            traj = fc.freq_response(grid, gain, dist, traj_times())
            met = fc.metrics(traj, grid, gain, dist)
            assert grid.f0 + met.nadir * grid.f0 == pytest.approx(nadir_hz, abs=0.02)
            assert met.settle_time == pytest.approx(settle_s, rel=0.05)

    def test_nadir_stationarity(self, grid, dist):
        tn = fc.nadir_time(grid, PAPER_GAIN, dist)
        _, fdot = fc._branch2(grid, PAPER_GAIN, dist, tn)
        assert abs(fdot) < 1e-6

    def test_qss_at_long_time(self, grid, dist):
        c = fc.second_order_char(grid, PAPER_GAIN)
        t_long = 10.0 / (c.zeta * c.omega_n)
        f, _ = fc._branch2(grid, PAPER_GAIN, dist, t_long)
        q = fc.qss_deviation(grid, PAPER_GAIN, dist)
        assert f == pytest.approx(q, rel=1e-3)

    def test_sampled_consistency_flag(self, grid, dist):
        traj = fc.freq_response(grid, PAPER_GAIN, dist, traj_times())
        met = fc.metrics(traj, grid, PAPER_GAIN, dist)
        assert met.nadir_consistent
        assert met.t_nadir_sampled == pytest.approx(met.t_nadir, abs=0.01)


class TestVppPower:
    def test_zero_gain_is_zero(self, grid, dist):
        static, dyn = fc.vpp_power(grid, VppGain(0.0, 0.0), dist, 1.0)
        assert static == pytest.approx(0.0, abs=1e-15)
        assert dyn == pytest.approx(0.0, abs=1e-15)

    def test_long_time_limit(self, grid, dist):
        static, dyn = fc.vpp_power(grid, PAPER_GAIN, dist, 200.0)
        assert abs(dyn) < 1e-12
        assert static == pytest.approx(
            fc.vpp_power_steady(grid, PAPER_GAIN, dist), rel=1e-9)

    def test_table1_peak(self, grid, dist):
        times = traj_times(dt=0.001)
        profile = fc.vpp_power_profile(grid, PAPER_GAIN, dist, times)
        assert profile.max() == pytest.approx(0.192, abs=0.003)

    def test_steady_value(self, grid, dist):
        assert fc.vpp_power_steady(grid, PAPER_GAIN, dist) == pytest.approx(
            0.0863, abs=2e-4)
        assert fc.vpp_power_steady(grid, VppGain(15.925, 0.0), dist) == 0.0
        # huge damping approaches the bare numerator
        num = dist.delta_p + grid.r_droop * grid.f_db2 \
            - (grid.d0 + grid.r_droop) * grid.f_db1
        big = fc.vpp_power_steady(grid, VppGain(15.925, 1e9), dist)
        assert big == pytest.approx(num, rel=1e-6)

    def test_steady_against_trajectory_tail(self, grid, dist):
        tail = fc.vpp_power_profile(grid, PAPER_GAIN, dist,
                                    traj_times(horizon=60.0))[-1]
        assert tail == pytest.approx(
            fc.vpp_power_steady(grid, PAPER_GAIN, dist), rel=2e-3)

    def test_steady_increasing_in_damping(self, grid, dist):
        values = [fc.vpp_power_steady(grid, VppGain(15.0, d), dist)
                  for d in np.linspace(0.5, 30.0, 100)]
        assert np.all(np.diff(values) > 0)


class TestCumulativeEnergy:
    def test_table1_energy(self, grid, dist):
        e = fc.cumulative_energy(grid, PAPER_GAIN, dist, 60.0)
        mwh = fc.pu_seconds_to_mwh(e.quadrature, 1000.0)
        assert mwh == pytest.approx(1.54, rel=0.03)
        assert e.approximation == pytest.approx(e.quadrature, rel=5e-3)

    def test_zero_gain(self, grid, dist):
        e = fc.cumulative_energy(grid, VppGain(0.0, 0.0), dist, 60.0)
        assert e.quadrature == 0.0

    def test_monotone_in_inertia(self, grid, dist):
        e1 = fc.cumulative_energy(grid, VppGain(15.925, 14.2094), dist, 60.0)
        e2 = fc.cumulative_energy(grid, VppGain(20.0, 14.2094), dist, 60.0)
        assert e2.quadrature > e1.quadrature

    def test_short_horizon_warns(self, grid, dist):
        with pytest.warns(UserWarning, match="approximation"):
            fc.cumulative_energy(grid, PAPER_GAIN, dist, 2.0)

    def test_energy_grid_monotonicity(self, grid, dist):
        hs = np.linspace(11.0, 25.0, 10)
        ds = np.linspace(12.5, 25.0, 10)
        quad = np.array([[fc.cumulative_energy(grid, VppGain(h, d), dist, 60.0,
                                               dt=0.05).quadrature
                          for d in ds] for h in hs])
        assert np.all(np.diff(quad, axis=0) > 0)  # increasing in H_VPP
        steady = np.array([[fc.vpp_power_steady(grid, VppGain(h, d), dist)
                            for d in ds] for h in hs])
        assert np.all(np.diff(steady, axis=1) > 0)  # increasing in D_VPP


@settings(max_examples=60, deadline=None)
@given(h=st.floats(0.0, 30.0), d=st.floats(0.0, 20.0))
def test_char_identities_hold(h, d):
    grid = GridParams(h0=5, d0=2, r_droop=25, t_sg=5,
                      f_db1=0.0006, f_db2=0.00066)
    try:
        c = fc.second_order_char(grid, VppGain(h, d))
    except OverdampedError:
        return
    assert c.omega_d == pytest.approx(c.omega_n * np.sqrt(1 - c.zeta**2), rel=1e-9)
    assert c.eta2 >= 1.0
    f0, _ = fc._branch2(grid, VppGain(h, d), Disturbance(delta_p=0.25), 0.0)
    assert abs(f0) < 1e-12


@settings(max_examples=40, deadline=None)
@given(h=st.floats(10.7, 30.0), d=st.floats(12.2, 25.0))
def test_nadir_below_qss(h, d):
    grid = GridParams(h0=5, d0=2, r_droop=25, t_sg=5,
                      f_db1=0.0006, f_db2=0.00066)
    dist = Disturbance(delta_p=0.25)
    gain = VppGain(h, d)
    try:
        tn = fc.nadir_time(grid, gain, dist)
    except OverdampedError:
        return
    nadir = fc._branch2(grid, gain, dist, tn)[0]
    q = fc.qss_deviation(grid, gain, dist)
    assert nadir <= q + 1e-12 <= 1e-12
