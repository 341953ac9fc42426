import numpy as np
import pytest

import vppres as v
from vppres.scenario import bundled_config_path, default_lattice

PAPER_GAIN = v.VppGain(15.925, 14.2094)
PAPER_B = np.array([-0.146, 0.0012, -0.0195, 0.0004])


@pytest.fixture(scope="session")
def cfg():
    return v.load_config(bundled_config_path())


@pytest.fixture(scope="session")
def grid(cfg):
    return cfg.grid


@pytest.fixture(scope="session")
def dev(cfg):
    return cfg.device


@pytest.fixture(scope="session")
def dist(cfg):
    return cfg.disturbance


@pytest.fixture(scope="session")
def limits(cfg):
    return cfg.limits


@pytest.fixture(scope="session")
def stability_fit(cfg):
    lattice = default_lattice(cfg.grid, cfg.disturbance, cfg.limits, cfg.caps,
                              cfg.solver.lattice_n)
    return v.fit_stability_surface(cfg.grid, cfg.device, cfg.disturbance, lattice)


@pytest.fixture(scope="session")
def region(cfg, stability_fit):
    return v.feasible_region(cfg.grid, cfg.device, cfg.disturbance, cfg.limits,
                             stability_fit, cfg.caps)


@pytest.fixture(scope="session")
def decision(cfg, region):
    return v.min_reserve(region, cfg.grid, cfg.device, cfg.disturbance,
                         cfg.market.horizon, cfg.solver.dt_trajectory,
                         cfg.market.base_mva, cfg.solver.bisect_tol)
