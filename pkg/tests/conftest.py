"""Shared fixtures: the 6x6 benchmark problem, its critical points, sweeps.

Heavy objects are session-scoped and carry their wall-clock cost so the
acceptance tests can check runtime budgets.
"""

import time
import warnings

import numpy as np
import pytest

import richardson as rs
from richardson import continuation
from richardson.critical import TruncatedScanWarning


@pytest.fixture(autouse=True)
def _quiet_scan_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncatedScanWarning)
        yield


@pytest.fixture(scope="session")
def lattice6():
    return rs.build_lattice_model(6, 18)


@pytest.fixture(scope="session")
def ground6(lattice6):
    return rs.ground_occupation(lattice6)


# Table 3 scan plan: 0-based level, scan range, cluster-size override.
TABLE3_SCANS = {
    ("neg", 3): ((-0.05, 0.0), None),
    ("neg", 2): ((-0.07, 0.0), None),
    ("neg", 1): ((-0.10, 0.0), None),
    ("neg", 0): ((-0.15, 0.0), 2),
    ("pos", 1): ((0.0, 0.20), None),
    ("pos", 2): ((0.0, 0.30), None),
    ("pos", 3): ((0.0, 0.65), None),
    ("pos", 0): ((0.0, 0.70), 2),
}


@pytest.fixture(scope="session")
def table3(lattice6, ground6):
    """First critical point per (side, level), plus the scan wall time."""
    t0 = time.time()
    points = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncatedScanWarning)
        for key, (rng, mk) in TABLE3_SCANS.items():
            pts = rs.scan_critical(lattice6, key[1], rng, ground6, m_k=mk)
            points[key] = min(pts, key=lambda p: abs(p.g_c)) if pts else None
    return {"points": points, "elapsed": time.time() - t0}


@pytest.fixture(scope="session")
def tangents6(table3, lattice6):
    out = {}
    for key, pt in table3["points"].items():
        if pt is not None:
            out[key] = rs.solve_tangent(pt, lattice6)
    return out


@pytest.fixture(scope="session")
def sweeps6(lattice6, ground6):
    """The two full ground-branch sweeps of the acceptance gate."""
    out = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncatedScanWarning)
        for name, target in (("neg", -0.15), ("pos", 0.65)):
            t0 = time.time()
            out[name] = continuation.sweep(lattice6, ground6, target)
            out[f"elapsed_{name}"] = time.time() - t0
    return out


@pytest.fixture(scope="session")
def toy_mm():
    """Two-level problem where the whole pair content collapses (M = M_k).

    Its single seniority-0 state has E(g) = 2 + 8g exactly, so the level-0
    collapse happens at g = -1/4 with E = 0.
    """
    return rs.PairingProblem((rs.Level(0.0, 6), rs.Level(1.0, 2)), 4)


@pytest.fixture(scope="session")
def toy_3lvl():
    """Three-level problem with non-trivial clusters at every level."""
    return rs.PairingProblem(
        (rs.Level(0.0, 4), rs.Level(1.0, 4), rs.Level(2.5, 2)), 4)


def physical_state_at(problem, occupation, g, *, steps=40):
    """Plain continuation from weak coupling, no crossing machinery."""
    seed = rs.init_weak_coupling(problem, occupation,
                                 np.sign(g) * 1e-3 *
                                 problem.mean_level_spacing())
    cur = rs.newton_solve(seed, problem.with_g(seed.g)).final
    for gv in np.linspace(seed.g, g, steps)[1:]:
        rep = rs.newton_solve(cur, problem.with_g(gv))
        assert rep.converged, f"continuation stalled at g={gv}"
        cur = rep.final
    return cur


def nearest_members(values, center, count):
    """Indices of the `count` energies closest to `center`."""
    return np.argsort(np.abs(np.asarray(values) - center))[:count]
