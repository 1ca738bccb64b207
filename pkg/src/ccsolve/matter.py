"""
Vlasov matter moments on the cone.

A particle of rest mass m at a cone point has momentum components
(pi^0, pi^1, pi^A) constrained to the mass shell of the trace metric.
With theta < 0 the future shell solves

    pi^0 = -pi^1 + s,
    s = sqrt((pi^1)^2 - (m^2 + Theta_AB pi^A pi^B) / theta),

so that pi^0 + pi^1 = s > 0.  The stress-energy moments entering the
constraint hierarchy are integrals of the distribution f against rational
functions of (s, pi) weighted by sqrt(det Theta):

    T_11 = -int f |theta|^3 (s - pi^1)^2 / s  sqrt|Theta| dpi
    T_1A = theta^2 int f (s - pi^1) Theta_AD pi^D / s  sqrt|Theta| dpi
    T_01 = int f |theta|^3 (s - pi^1) pi^1 / s  sqrt|Theta| dpi
    T_AB = -int f |theta| Theta_AC Theta_BD pi^C pi^D / s  sqrt|Theta| dpi
    T_00 = int f |theta|^3 s  sqrt|Theta| dpi

Quadrature is tensor-product Gauss-Legendre over the support box of the
distribution (which lies strictly inside pi^1 > 0), reduced with the
fixed-tree pairwise summation, so results are deterministic bit-for-bit.
Moments vanish identically for y^1 below the vertex-exclusion radius of
the distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .freedata import FreeDataSet, MomentumDistribution
from .summation import pairwise_sum


@dataclass
class MomentFields:
    """Stress-energy moments on the grid (S = grid shape)."""
    T11: np.ndarray   # S
    T1A: np.ndarray   # S+(2,)
    T01: np.ndarray   # S
    TAB: np.ndarray   # S+(2,2)
    T00: np.ndarray   # S

    @classmethod
    def zeros(cls, shape) -> "MomentFields":
        return cls(T11=np.zeros(shape), T1A=np.zeros(shape + (2,)),
                   T01=np.zeros(shape), TAB=np.zeros(shape + (2, 2)),
                   T00=np.zeros(shape))


def pi0_on_shell(theta: np.ndarray, G: np.ndarray, pi: np.ndarray,
                 m: float):
    """Future mass-shell solve: returns (pi0, s).

    theta broadcasts against pi[..., 0]; G has matching shape + (2,2);
    pi[..., 0] is pi^1 and pi[..., 1:] the angular components.
    """
    pi = np.asarray(pi, dtype=float)
    pi1 = pi[..., 0]
    piA = pi[..., 1:]
    Qpi = np.einsum("...ab,...a,...b->...", G, piA, piA)
    s = np.sqrt(pi1 ** 2 - (m ** 2 + Qpi) / theta)
    return -pi1 + s, s


def mass_shell_defect(theta: np.ndarray, G: np.ndarray, pi: np.ndarray,
                      m: float) -> np.ndarray:
    """|g(pi, pi) + m^2| with pi^0 taken on shell; rounding-level."""
    pi = np.asarray(pi, dtype=float)
    pi0, _ = pi0_on_shell(theta, G, pi, m)
    pi1 = pi[..., 0]
    piA = pi[..., 1:]
    Qpi = np.einsum("...ab,...a,...b->...", G, piA, piA)
    g_pipi = theta * pi0 ** 2 + 2.0 * theta * pi0 * pi1 + Qpi
    return np.abs(g_pipi + m ** 2)


def quadrature_nodes(lo, hi, nodes_per_dim: int):
    """Tensor-product Gauss-Legendre nodes/weights on a box.

    Returns (nodes, weights) with nodes of shape (K, dim), K =
    nodes_per_dim**dim.
    """
    if nodes_per_dim < 2:
        raise ValueError("need at least 2 quadrature nodes per dimension")
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = len(lo)
    x1, w1 = np.polynomial.legendre.leggauss(nodes_per_dim)
    axes = []
    waxes = []
    for i in range(n):
        a, b = lo[i], hi[i]
        axes.append(0.5 * (b - a) * x1 + 0.5 * (a + b))
        waxes.append(0.5 * (b - a) * w1)
    grids = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([gg.ravel() for gg in grids], axis=-1)
    wgrids = np.meshgrid(*waxes, indexing="ij")
    weights = np.ones(nodes.shape[0])
    for wg in wgrids:
        weights = weights * wg.ravel()
    return nodes, weights


def momentum_quadrature(integrand, box, nodes_per_dim: int) -> float:
    """Tensor-product Gauss-Legendre integral of `integrand` over a box.

    `box` is either a MomentumBox-like object with lower/upper bounds or
    a (lower, upper) pair.  Deterministic for a fixed node count: the
    reduction uses the fixed-tree pairwise sum.
    """
    if hasattr(box, "lower"):
        lo, hi = np.asarray(box.lower, float), np.asarray(box.upper, float)
    else:
        lo, hi = (np.asarray(b, dtype=float) for b in box)
    nodes, weights = quadrature_nodes(lo, hi, nodes_per_dim)
    vals = np.asarray(integrand(nodes), dtype=float)
    return float(pairwise_sum(vals * weights))


def distribution_quadrature(dist: MomentumDistribution,
                            nodes_per_dim: int = 24):
    """Nodes, weights and momentum factor of f over the support of f."""
    lo, hi = dist.support_box()
    nodes, weights = quadrature_nodes(lo, hi, nodes_per_dim)
    return nodes, weights, dist.momentum_factor(nodes)


def _shell_moments(theta2, G2, nodes, wf, m):
    """Moments on one set of cone points (arbitrary leading shape).

    theta2: (...,), G2: (..., 2, 2); nodes (K, n); wf (K,) combined
    weight*f momentum factor.  Returns dict of component arrays.
    """
    pi1 = nodes[:, 0]
    piA = nodes[:, 1:]
    # shapes: points (...), momentum K -> (..., K)
    Qpi = np.einsum("...ab,ka,kb->...k", G2, piA, piA)
    th = theta2[..., None]
    s = np.sqrt(pi1 ** 2 - (m ** 2 + Qpi) / th)
    det = (G2[..., 0, 0] * G2[..., 1, 1] - G2[..., 0, 1] * G2[..., 1, 0])
    vol = np.sqrt(det)[..., None] * wf
    absth = np.abs(th)
    TpiA = np.einsum("...ab,kb->...ka", G2, piA)  # Theta_AD pi^D
    out = {}
    out["T11"] = pairwise_sum(
        -absth ** 3 * (s - pi1) ** 2 / s * vol, axis=-1)
    out["T1A"] = pairwise_sum(
        (th ** 2 * (s - pi1) / s * vol)[..., None] * TpiA, axis=-2)
    out["T01"] = pairwise_sum(
        absth ** 3 * (s - pi1) * pi1 / s * vol, axis=-1)
    out["TAB"] = pairwise_sum(
        (-absth / s * vol)[..., None, None]
        * np.einsum("...ka,...kb->...kab", TpiA, TpiA), axis=-3)
    out["T00"] = pairwise_sum(absth ** 3 * s * vol, axis=-1)
    return out


def compute_moments(fds: FreeDataSet,
                    nodes_per_dim: int = 24) -> MomentFields:
    """All stress-energy moments of the free data on the grid.

    When the background angular metric is axisymmetric (independent of
    the azimuthal angle) and the distribution is angle-independent, the
    moments are computed on one azimuthal column and broadcast.
    """
    grid = fds.grid
    S = grid.shape
    if fds.dist is None:
        return MomentFields.zeros(S)
    dist = fds.dist
    nodes, weights, f_vals = distribution_quadrature(dist, nodes_per_dim)
    wf = weights * f_vals
    profile = dist.radial_profile(grid.r)
    active = profile > 0.0

    th = fds.jets.th
    G = fds.jets.G
    axisym = fds.axisymmetric and (
        np.max(np.abs(G - G[:, :, :1])) == 0.0
        and np.max(np.abs(th - th[:, :, :1])) == 0.0)

    out = MomentFields.zeros(S)
    if not np.any(active):
        return out
    ja = np.nonzero(active)[0]
    if axisym:
        for j in ja:
            parts = _shell_moments(th[j, :, 0], G[j, :, 0],
                                   nodes, wf, dist.m)
            q = profile[j]
            out.T11[j] = q * parts["T11"][:, None]
            out.T01[j] = q * parts["T01"][:, None]
            out.T00[j] = q * parts["T00"][:, None]
            out.T1A[j] = q * parts["T1A"][:, None, :]
            out.TAB[j] = q * parts["TAB"][:, None, :, :]
    else:
        for j in ja:
            parts = _shell_moments(th[j], G[j], nodes, wf, dist.m)
            q = profile[j]
            out.T11[j] = q * parts["T11"]
            out.T01[j] = q * parts["T01"]
            out.T00[j] = q * parts["T00"]
            out.T1A[j] = q * parts["T1A"]
            out.TAB[j] = q * parts["TAB"]
    return out


def moments_at(fds: FreeDataSet, r: np.ndarray,
               nodes_per_dim: int = 24) -> MomentFields:
    """Moments at arbitrary radii (for quadrature-refined integrators).

    Requires an analytic generator on the free data set.
    """
    if fds.generator is None:
        raise ValueError("moments_at needs an analytic generator")
    grid = fds.grid
    r = np.asarray(r, dtype=float)
    S = (len(r), grid.N_theta, grid.N_phi)
    if fds.dist is None:
        return MomentFields.zeros(S)
    jets = fds.generator.jets_at(r)
    dist = fds.dist
    nodes, weights, f_vals = distribution_quadrature(dist, nodes_per_dim)
    wf = weights * f_vals
    profile = dist.radial_profile(r)
    out = MomentFields.zeros(S)
    active = np.nonzero(profile > 0.0)[0]
    axisym = fds.axisymmetric and (
        np.max(np.abs(jets.G - jets.G[:, :, :1])) == 0.0
        and np.max(np.abs(jets.th - jets.th[:, :, :1])) == 0.0)
    for j in active:
        q = profile[j]
        if axisym:
            parts = _shell_moments(jets.th[j, :, 0], jets.G[j, :, 0],
                                   nodes, wf, dist.m)
            out.T11[j] = q * parts["T11"][:, None]
            out.T01[j] = q * parts["T01"][:, None]
            out.T00[j] = q * parts["T00"][:, None]
            out.T1A[j] = q * parts["T1A"][:, None, :]
            out.TAB[j] = q * parts["TAB"][:, None, :, :]
        else:
            parts = _shell_moments(jets.th[j], jets.G[j],
                                   nodes, wf, dist.m)
            out.T11[j] = q * parts["T11"]
            out.T01[j] = q * parts["T01"]
            out.T00[j] = q * parts["T00"]
            out.T1A[j] = q * parts["T1A"]
            out.TAB[j] = q * parts["TAB"]
    return out
