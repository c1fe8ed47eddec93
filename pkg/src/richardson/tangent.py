"""Derivatives at a critical point and the linear restart guess.

At g_c the smooth coordinates are the cluster power sums S_p and the
non-cluster energies.  Their derivatives solve one linear system: the first
row is the determinant condition det(B) = 0 of the second-order cluster
expansion, expanded along the first column of B (the only column carrying
unknowns, so the nuisance quadratic coefficients a_p drop out); the
remaining rows differentiate the non-cluster equations.  The solution
(dS_1/dg, de_b/dg) turns into a restart guess via

    S_1 ~ (dS_1/dg) dg,   S_p ~ (dS_1/dg) chi_p dg,
    e_b ~ e_b(g_c) + (de_b/dg) dg,

with the cluster energies recovered by power-sum inversion.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .cluster import invert_power_sums, pn_coefficients
from .critical import CriticalPoint, deflated_jacobian
from .errors import ConsistencyError, DegenerateTangentError
from .model import PairingProblem
from .solver import PairEnergies

TANGENT_RESIDUAL_TOL = 1e-9


@dataclass(frozen=True)
class TangentData:
    """dS_1/dg and the non-cluster de_b/dg at one critical point."""

    ds1_dg: float
    de_dg: np.ndarray
    point: CriticalPoint

    def __post_init__(self):
        de = np.array(self.de_dg, dtype=np.complex128)
        de.setflags(write=False)
        object.__setattr__(self, "de_dg", de)


def _b_constant_columns(g_c, pvals, m_k):
    """Columns 2..2M_k of the matrix B; column 1 holds the unknowns.

    Row p: diagonal (1 + 4g P_0), subdiagonal -2g(M_k+1-p), upper entries
    4g P_{j-p}.  Entries landing in column 1 are excluded (for p = 2 the
    subdiagonal coefficient multiplies a_1 = 0 and never contributes).
    """
    n = 2 * m_k
    b = np.zeros((n, n))
    for p in range(1, n + 1):
        if p >= 2:
            b[p - 1, p - 1] = 1.0 + 4.0 * g_c * pvals[0]
        if p >= 3:
            b[p - 1, p - 2] = -2.0 * g_c * (m_k + 1 - p)
        for j in range(p + 1, n + 1):
            b[p - 1, j - 1] = 4.0 * g_c * pvals[j - p]
    return b


def _first_column_cofactors(b_const):
    n = b_const.shape[0]
    cof = np.empty(n)
    for p in range(n):
        minor = np.delete(b_const, p, axis=0)[:, 1:]
        cof[p] = (-1.0) ** p * (np.linalg.det(minor) if minor.size else 1.0)
    return cof


def assemble_derivative_system(point: CriticalPoint,
                               problem: PairingProblem):
    """Linear system (matrix, rhs) in the unknowns (dS_1/dg, de_b/dg).

    Square of size M - M_k + 1, complex; the non-cluster rows come in
    conjugate pairs so the solution has real dS_1/dg and conjugate-closed
    de_b/dg.
    """
    g_c, k, m_k = point.g_c, point.k, point.m_k
    e_nc = point.e_noncluster
    nb = e_nc.shape[0]
    eta2k = problem.eta2_array()[k]
    pn = pn_coefficients(problem, k, e_nc, 2 * m_k - 1)
    chi = np.zeros(2 * m_k + 1)            # chi[p], chi_p = 0 for p > M_k
    chi[1:m_k + 1] = point.chi
    cof = _first_column_cofactors(_b_constant_columns(g_c, pn.p, m_k))

    size = nb + 1
    mat = np.zeros((size, size), dtype=np.complex128)
    rhs = np.zeros(size, dtype=np.complex128)

    # row 0: sum_p C_p B_{p,1} = 0 with
    # B_{p,1} = -chi_p/g_c - 2 g_c S_1' sum_{i=1}^{p-2} chi_{p-i-1} chi_i
    #           + 4 g_c sum_{n=0}^{M_k-p} chi_{n+p} P_n'
    for p in range(1, 2 * m_k + 1):
        conv = sum(chi[p - i - 1] * chi[i] for i in range(1, p - 1))
        mat[0, 0] += cof[p - 1] * (-2.0 * g_c) * conv
        rhs[0] += cof[p - 1] * chi[p] / g_c
        for n in range(0, m_k - p + 1):
            w = (n + 1.0) / (eta2k - e_nc) ** (n + 2)
            mat[0, 1:] += cof[p - 1] * 4.0 * g_c * chi[n + p] * w

    # rows 1..nb: derivative of the deflated equations plus the cluster
    # backreaction through dS_1/dg
    if nb:
        mat[1:, 1:] = deflated_jacobian(g_c, e_nc, problem, k, m_k)
        for a in range(nb):
            s = sum(chi[n] / (eta2k - e_nc[a]) ** (n + 1)
                    for n in range(1, m_k + 1))
            mat[1 + a, 0] = -4.0 * g_c * s
        rhs[1:] = 1.0 / g_c
    return mat, rhs


def solve_tangent(point: CriticalPoint, problem: PairingProblem,
                  *, rtol=TANGENT_RESIDUAL_TOL) -> TangentData:
    """Solve the derivative system; asserts residual and realness."""
    mat, rhs = assemble_derivative_system(point, problem)
    try:
        x = np.linalg.solve(mat, rhs)
    except np.linalg.LinAlgError as err:
        raise DegenerateTangentError(
            f"derivative system singular at g_c={point.g_c:.8g}") from err
    scale = float(np.max(np.abs(mat).sum(axis=1)) + np.max(np.abs(rhs)))
    resid = float(np.max(np.abs(mat @ x - rhs)))
    if resid > rtol * scale:
        raise DegenerateTangentError(
            f"derivative system residual {resid:.2e} exceeds "
            f"{rtol:.0e} x row norms")
    ds1 = complex(x[0])
    if abs(ds1.imag) > 1e-7 * max(1.0, abs(ds1.real)):
        raise ConsistencyError(
            f"dS_1/dg has imaginary part {ds1.imag:.3e}")
    return TangentData(ds1_dg=ds1.real, de_dg=x[1:], point=point)


def default_guess_radius(g_c: float) -> float:
    return max(1e-2 * abs(g_c), 1e-3)


def linear_guess(tangent: TangentData, delta_g: float, *,
                 max_delta=None) -> PairEnergies:
    """Restart guess for the full equations at g = g_c + delta_g.

    Cluster energies come from inverting S_p = (dS_1/dg) chi_p delta_g;
    non-cluster energies move linearly.  Origin labels: the cluster block
    carries the collapsed level, the rest keep their branch labels.
    """
    point = tangent.point
    if max_delta is None:
        max_delta = default_guess_radius(point.g_c)
    if abs(delta_g) > max_delta:
        raise ValueError(
            f"|delta_g|={abs(delta_g):.3g} exceeds guess radius "
            f"{max_delta:.3g}; pass max_delta to override")
    s_hat = tangent.ds1_dg * point.chi * delta_g
    # 2 eta_k is recoverable from the point itself:
    # energy = M_k * 2 eta_k + sum Re e_noncluster
    eta2k = (point.energy - float(np.sum(point.e_noncluster.real))) / point.m_k
    inv = invert_power_sums(s_hat, point.m_k, 0.5 * eta2k)
    if delta_g != 0.0 and inv.condition > 1e8:
        warnings.warn(
            f"power-sum inversion poorly conditioned "
            f"(estimate {inv.condition:.2g})", stacklevel=2)
    cluster_vals = inv.energies
    if delta_g != 0.0 and np.max(np.abs(cluster_vals - eta2k)) < 1e-10:
        # dS_1/dg can vanish at symmetric points; the linear guess then
        # degenerates to the exact collapse, which is a pole.  Spread the
        # cluster on a small conjugate-symmetric circle at the curvature
        # scale |delta_g| instead.
        m = point.m_k
        theta0 = 0.0 if m % 2 else math.pi / m
        cluster_vals = eta2k + abs(delta_g) * np.exp(
            1j * (theta0 + 2.0 * math.pi * np.arange(m) / m))
    nc_vals = point.e_noncluster + tangent.de_dg * delta_g
    values = np.concatenate([cluster_vals, nc_vals])
    origin = (point.k,) * point.m_k + point.noncluster_origin
    return PairEnergies(values, origin, g=point.g_c + delta_g)
