import numpy as np
import pytest

import richardson as rs
from richardson import oracle
from richardson.cluster import cluster_matrix, pn_coefficients
from richardson.critical import deflated_jacobian

from conftest import nearest_members, physical_state_at


def test_deflated_residuals_empty_when_all_collapse(toy_mm):
    res = rs.deflated_residuals(-0.25, [], toy_mm, 0, 4)
    assert res.shape == (0,)


def test_deflated_residuals_weak_coupling_limit(toy_3lvl):
    # with the cluster folded into level 0, the remaining pair sits near
    # 2 eta_j of its own level with the modified degeneracy
    from richardson.critical import deflated_d_array
    from richardson.solver import _weak_seed_arrays
    eta2 = toy_3lvl.eta2_array()
    d_mod = deflated_d_array(toy_3lvl, 0, 3)
    last = None
    for g in (1e-4, 1e-5, 1e-6):
        e0, _ = _weak_seed_arrays(eta2, d_mod, (0, 1, 0), -g)
        r = np.max(np.abs(rs.deflated_residuals(-g, e0, toy_3lvl, 0, 3)))
        if last is not None:
            assert r < 0.5 * last
        last = r
    assert last < 1e-4


def test_critical_residuals_at_g_zero(toy_3lvl):
    out = rs.critical_residuals(0.0, [2.3], toy_3lvl, 0, 3)
    assert out[0] == pytest.approx(1.0)


def test_deflated_occupation_rules(lattice6, ground6):
    # attractive side: extras leave the topmost occupied level
    occ = rs.deflated_occupation(lattice6, ground6, 3, 5, -1)
    assert occ.counts == (1, 4, 4, 0, 4, 0, 0, 0, 0)
    # repulsive side: extras leave the bottommost occupied level
    occ = rs.deflated_occupation(lattice6, ground6, 1, 5, +1)
    assert occ.counts == (0, 0, 4, 4, 5, 0, 0, 0, 0)
    with pytest.raises(ValueError):
        rs.deflated_occupation(rs.build_lattice_model(2, 2),
                               rs.ground_occupation(rs.build_lattice_model(2, 2)),
                               1, 3, -1)


def test_toy_all_collapse_exact_point(toy_mm):
    # single seniority-0 state: E(g) = 2 + 8g exactly, so the level-0
    # collapse (all four pairs at 2 eta_0 = 0) happens at g = -1/4, E = 0
    pts = rs.scan_critical(toy_mm, 0, (-0.6, 0.0))
    assert len(pts) == 1
    pt = pts[0]
    assert pt.g_c == pytest.approx(-0.25, abs=1e-10)
    assert pt.energy == pytest.approx(0.0, abs=1e-10)
    assert pt.m_k == 4
    assert pt.e_noncluster.shape == (0,)


def test_toy_points_match_oracle_eigenvalues(toy_3lvl):
    found = 0
    for k, rng in ((0, (-0.6, 0.0)), (1, (-0.6, 0.0)), (2, (0.0, 0.6))):
        for pt in rs.scan_critical(toy_3lvl, k, rng):
            spec = oracle.exact_spectrum(toy_3lvl.with_g(pt.g_c))
            assert np.min(np.abs(spec - pt.energy)) < 1e-6
            found += 1
    assert found >= 3


def test_point_invariants(toy_3lvl):
    pt = rs.scan_critical(toy_3lvl, 0, (-0.6, 0.0))[0]
    res = rs.critical_residuals(pt.g_c, pt.e_noncluster, toy_3lvl,
                                pt.k, pt.m_k)
    assert np.max(np.abs(res)) <= 1e-10
    # conjugate-closed non-cluster, real energy
    vals = pt.e_noncluster
    assert np.max(np.abs(np.sort_complex(vals) -
                         np.sort_complex(np.conj(vals)))) < 1e-9
    assert pt.energy == pytest.approx(
        pt.m_k * 2 * toy_3lvl.levels[pt.k].eta + np.sum(vals.real))
    # the cluster matrix is singular there
    pn = pn_coefficients(toy_3lvl, pt.k, pt.e_noncluster, pt.m_k - 1)
    sing = np.linalg.svd(cluster_matrix(pt.g_c, pn, pt.m_k), compute_uv=False)
    assert sing[-1] < 1e-8 * sing[0]


def test_chi_matches_measured_slopes(toy_3lvl):
    # chi_p = lim S_p/S_1 along the physical branch
    pt = rs.scan_critical(toy_3lvl, 0, (-0.6, 0.0))[0]
    tan = rs.solve_tangent(pt, toy_3lvl)
    sol = rs.restart_solve(tan, toy_3lvl, 1e-4)
    idx = nearest_members(sol.values, 2 * toy_3lvl.levels[0].eta, pt.m_k)
    ps = rs.power_sums(sol.values[idx], toy_3lvl.levels[0].eta, pt.m_k)
    ratios = ps.s / ps.s[0]
    assert np.max(np.abs(ratios - pt.chi)) < 1e-2


def test_solve_critical_bracket(lattice6, ground6, table3):
    pt = rs.solve_critical(lattice6, 3, (-0.05, 0.0), ground6)
    assert pt is not None
    assert pt.g_c == pytest.approx(table3["points"][("neg", 3)].g_c,
                                   abs=1e-12)
    assert rs.solve_critical(lattice6, 3, (-0.03, -0.02), ground6) is None


def test_scan_empty_ranges(lattice6, ground6):
    assert rs.scan_critical(lattice6, 2, (-1e-4, 1e-4), ground6) == []


def test_scan_finds_root_between_brackets(lattice6, ground6):
    # determinant changes sign across the known k=2 (0-based 1) root
    pts = rs.scan_critical(lattice6, 1, (0.15, 0.19), ground6)
    assert len(pts) == 1
    assert pts[0].g_c == pytest.approx(0.1708776, abs=2e-7)


def test_ground_k0_positive_side_empty(table3):
    assert table3["points"][("pos", 0)] is None


def test_cross_validation_extrapolation(lattice6, table3, tangents6):
    # approach the k=2 positive point from both sides; the cluster mean
    # extrapolates to 2 eta_k within 1e-3, non-cluster to e_noncluster
    # within 1e-5
    pt = table3["points"][("pos", 1)]
    tan = tangents6[("pos", 1)]
    eta2k = 2 * lattice6.levels[pt.k].eta
    for sign in (+1, -1):
        means, others, gs = [], [], []
        for delta in (sign * 2e-4, sign * 1e-4):
            sol = rs.restart_solve(tan, lattice6, delta)
            idx = nearest_members(sol.values, eta2k, pt.m_k)
            means.append(np.mean(sol.values[idx]).real)
            others.append(np.delete(sol.values, idx))
            gs.append(delta)
        # linear extrapolation to delta = 0
        w = gs[0] / (gs[0] - gs[1])
        mean0 = means[0] + w * (means[1] - means[0])
        assert abs(mean0 - eta2k) < 1e-3
        nc0 = others[0] + w * (others[1] - others[0])
        worst = 0.0
        pool = list(pt.e_noncluster)
        for z in nc0:
            j = int(np.argmin(np.abs(np.array(pool) - z)))
            worst = max(worst, abs(pool[j] - z))
            pool.pop(j)
        assert worst < 1e-5


def test_critical_point_vs_physical_branch(lattice6, ground6, table3):
    # the first negative point's non-cluster energies match the physical
    # state continued to just before the collapse (each predicted energy
    # has a state partner within its linear drift)
    pt = table3["points"][("neg", 3)]
    tan = rs.solve_tangent(pt, lattice6)
    delta = 5e-4
    state = physical_state_at(lattice6, ground6, pt.g_c + delta, steps=60)
    pool = list(state.values)
    worst = 0.0
    for z, dz in zip(pt.e_noncluster, tan.de_dg):
        pred = z + dz * delta
        j = int(np.argmin(np.abs(np.array(pool) - pred)))
        worst = max(worst, abs(pool[j] - pred))
        pool.pop(j)
    assert worst < 1e-3
