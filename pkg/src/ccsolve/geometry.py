"""
Differential geometry of the cone trace metric.

The trace of a temporal-gauge metric on the light cone is determined by a
negative function theta (the 00 = 01 component) and the angular block
Theta_AB, together with the transverse first derivatives

    psi_{mu nu} = d/dy^0 g_{mu nu} restricted to the cone,

of which psi_00 = psi_01 and psi_0A = 0 hold identically in this gauge.
This module provides:

  * `ConeGeometry`: composite quantities assembled from exact free-data
    jets by product-rule algebra (inverse angular metric, divergence
    scalar tau = Theta^AB d1 Theta_AB, its derivatives, angular
    Christoffels and their contracted derivatives).  No finite
    differencing happens here, so Minkowski data stays exact to rounding.
  * `ConeMetric`: the induced 4x4 trace metric with invariant checks.
  * The Christoffel table and the cone values of the Ricci components
    R_11, R_1A, R_AB, R_01, R_00 and of the transverse derivative of the
    contracted wave-gauge vector, written in terms of (theta, Theta, psi)
    and, where unavoidable, of the two genuinely transverse second
    derivatives d0 d0 g_11 and d0 d0 g_AB supplied externally.
  * Null structure scalars and the algebraic consistency checks tying
    d0 of the inverse metric to psi.

Angular indices are stored 0-based: array index 0 is the polar direction,
1 the azimuthal one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .freedata import Jets, invert_angular_metric
from .grids import ConeGrid, angular_derivative, radial_derivative
from .summation import max_abs


# ----------------------------------------------------------------------
# composite jet algebra
# ----------------------------------------------------------------------

@dataclass
class ConeGeometry:
    """Derived geometric quantities on the cone, exact given exact jets.

    Shapes (S = grid shape):
      Ginv        S+(2,2)    inverse angular metric
      M           S+(2,2)    M^a_b = Theta^{ac} d1 Theta_{cb}
      tau         S          divergence scalar tr M
      Q           S          M^a_b M^b_a
      dGinv_1     S+(2,2)    d1 Theta^{ab}
      dGinv_A     S+(2,2,2)  [c,a,b] = d_c Theta^{ab}
      dtau_1      S          d1 tau
      dtau_A      S+(2,)     d_c tau
      Gam         S+(2,2,2)  [c,a,b] = angular Christoffel Gamma^c_ab
      trGam       S+(2,)     Gamma^d_{dc} = half Theta^{de} d_c Theta_{de}
      div_Gam     S+(2,2)    d_c Gamma^c_ab
      div_M       S+(2,)     [a] = d_c (Theta^{cb} d1 Theta_{ab})
      div_Ginv    S+(2,)     [c] = d_a Theta^{ac}
      dd_logdet   S+(2,2)    [b,a] = d_b (Theta^{cd} d_a Theta_{cd})
      bracket     S+(2,2,2)  [d,a,b] = d_a T_db + d_b T_da - d_d T_ab
    """
    jets: Jets
    g01: np.ndarray = field(init=False)
    Ginv: np.ndarray = field(init=False)
    M: np.ndarray = field(init=False)
    tau: np.ndarray = field(init=False)
    Q: np.ndarray = field(init=False)
    dGinv_1: np.ndarray = field(init=False)
    dGinv_A: np.ndarray = field(init=False)
    dtau_1: np.ndarray = field(init=False)
    dtau_A: np.ndarray = field(init=False)
    Gam: np.ndarray = field(init=False)
    trGam: np.ndarray = field(init=False)
    div_Gam: np.ndarray = field(init=False)
    div_M: np.ndarray = field(init=False)
    div_Ginv: np.ndarray = field(init=False)
    dd_logdet: np.ndarray = field(init=False)
    bracket: np.ndarray = field(init=False)

    def __post_init__(self):
        j = self.jets
        self.g01 = 1.0 / j.th
        Ginv = invert_angular_metric(j.G)
        self.Ginv = Ginv
        self.M = np.einsum("...ac,...cb->...ab", Ginv, j.G_1)
        self.tau = np.einsum("...aa->...", self.M)
        self.Q = np.einsum("...ab,...ba->...", self.M, self.M)
        self.dGinv_1 = -np.einsum(
            "...ia,...ab,...bj->...ij", Ginv, j.G_1, Ginv)
        self.dGinv_A = -np.einsum(
            "...ia,...cab,...bj->...cij", Ginv, j.G_A, Ginv)
        self.dtau_1 = -self.Q + np.einsum("...ab,...ab->...", Ginv, j.G_11)
        self.dtau_A = (np.einsum("...cab,...ab->...c", self.dGinv_A, j.G_1)
                       + np.einsum("...ab,...cab->...c", Ginv, j.G_1A))
        # bracket[d,a,b] = d_a T_db + d_b T_da - d_d T_ab
        self.bracket = (np.swapaxes(j.G_A, -3, -2)
                        + np.swapaxes(j.G_A, -3, -1) - j.G_A)
        self.Gam = 0.5 * np.einsum(
            "...cd,...dab->...cab", Ginv, self.bracket)
        self.trGam = 0.5 * np.einsum("...de,...cde->...c", Ginv, j.G_A)
        dK = (np.einsum("...cd,...cadb->...ab", Ginv, j.G_AA)
              + np.einsum("...cd,...cbda->...ab", Ginv, j.G_AA)
              - np.einsum("...cd,...cdab->...ab", Ginv, j.G_AA))
        self.div_Gam = 0.5 * (
            np.einsum("...ccd,...dab->...ab", self.dGinv_A, self.bracket)
            + dK)
        self.div_M = (np.einsum("...ccb,...ba->...a", self.dGinv_A, j.G_1)
                      + np.einsum("...cb,...cba->...a", Ginv, j.G_1A))
        self.div_Ginv = np.einsum("...aac->...c", self.dGinv_A)
        self.dd_logdet = (
            np.einsum("...bij,...aij->...ba", self.dGinv_A, j.G_A)
            + np.einsum("...ij,...baij->...ba", Ginv, j.G_AA))


# ----------------------------------------------------------------------
# trace metric with invariants
# ----------------------------------------------------------------------

class ConeMetric:
    """Full 4x4 trace metric on the cone in null coordinates.

    g_00 = g_01 = theta < 0, g_11 = 0, g_0A = g_1A = 0, g_AB = Theta_AB;
    inverse has g^00 = 0, g^01 = 1/theta, g^11 = -1/theta,
    g^AB = (Theta_AB)^{-1}.
    """

    def __init__(self, theta: np.ndarray, G: np.ndarray):
        self.theta = np.asarray(theta, dtype=float)
        self.G = np.asarray(G, dtype=float)
        self.Ginv = invert_angular_metric(self.G)

    def matrix(self) -> np.ndarray:
        S = self.theta.shape
        g = np.zeros(S + (4, 4))
        g[..., 0, 0] = self.theta
        g[..., 0, 1] = g[..., 1, 0] = self.theta
        g[..., 2:, 2:] = self.G
        return g

    def inverse_matrix(self) -> np.ndarray:
        S = self.theta.shape
        gi = np.zeros(S + (4, 4))
        gi[..., 0, 1] = gi[..., 1, 0] = 1.0 / self.theta
        gi[..., 1, 1] = -1.0 / self.theta
        gi[..., 2:, 2:] = self.Ginv
        return gi

    def check_invariants(self, tol_structure: float = 1e-14,
                         tol_inverse: float = 1e-12) -> dict:
        """Verify signature/structure and the inverse identity.

        Structural facts (negativity of theta, symmetry and positivity of
        the angular block) must hold to tol_structure; the product of the
        assembled matrix with its assembled inverse must equal the
        identity to tol_inverse.
        """
        report = {}
        report["theta_negative"] = bool(np.all(self.theta < 0))
        report["symmetry_defect"] = max_abs(
            self.G - np.swapaxes(self.G, -1, -2))
        det = (self.G[..., 0, 0] * self.G[..., 1, 1]
               - self.G[..., 0, 1] * self.G[..., 1, 0])
        report["angular_positive"] = bool(
            np.all(det > 0) and np.all(self.G[..., 0, 0] > 0))
        prod = np.einsum("...ij,...jk->...ik",
                         self.matrix(), self.inverse_matrix())
        eye = np.zeros_like(prod)
        for i in range(4):
            eye[..., i, i] = 1.0
        report["inverse_defect"] = max_abs(prod - eye)
        report["passed"] = (report["theta_negative"]
                            and report["angular_positive"]
                            and report["symmetry_defect"] <= tol_structure
                            and report["inverse_defect"] <= tol_inverse)
        return report


# ----------------------------------------------------------------------
# transverse first-derivative fields
# ----------------------------------------------------------------------

@dataclass
class PsiFields:
    """Transverse first derivatives of the metric on the cone.

    psi11 : S        d0 g_11
    psi1A : S+(2,)   d0 g_1A
    psiAB : S+(2,2)  d0 g_AB
    psi01 : S        d0 g_01 (= d0 g_00 in temporal gauge)
    chi   : S        Theta^AB psi_AB
    """
    psi11: np.ndarray
    psi1A: np.ndarray
    psiAB: np.ndarray
    psi01: np.ndarray
    chi: np.ndarray

    @classmethod
    def zeros(cls, shape) -> "PsiFields":
        return cls(psi11=np.zeros(shape),
                   psi1A=np.zeros(shape + (2,)),
                   psiAB=np.zeros(shape + (2, 2)),
                   psi01=np.zeros(shape),
                   chi=np.zeros(shape))


@dataclass
class PsiDerivs:
    """Cone-tangent derivatives of the psi fields.

    All first tangential derivatives of the psi fields are stored.
    dA_psi1A[b, a] = d_b psi_{1a}; dA_psiAB[c, a, b] = d_c psi_{ab}.
    """
    d1_psi11: np.ndarray
    dA_psi11: np.ndarray
    d1_psi1A: np.ndarray
    dA_psi1A: np.ndarray
    d1_psiAB: np.ndarray
    dA_psiAB: np.ndarray
    d1_psi01: np.ndarray
    dA_psi01: np.ndarray

    @classmethod
    def from_fields(cls, psi: PsiFields, grid: ConeGrid,
                    acc: int = 4) -> "PsiDerivs":
        def dA(v, a):
            return angular_derivative(v, grid, a + 2, 1, acc=acc)

        return cls(
            d1_psi11=radial_derivative(psi.psi11, grid, 1, acc=acc),
            dA_psi11=np.stack([dA(psi.psi11, a) for a in range(2)],
                              axis=-1),
            d1_psi1A=radial_derivative(psi.psi1A, grid, 1, acc=acc),
            dA_psi1A=np.stack([dA(psi.psi1A, b) for b in range(2)],
                              axis=-2),
            d1_psiAB=radial_derivative(psi.psiAB, grid, 1, acc=acc),
            dA_psiAB=np.stack([dA(psi.psiAB, c) for c in range(2)],
                              axis=-3),
            d1_psi01=radial_derivative(psi.psi01, grid, 1, acc=acc),
            dA_psi01=np.stack([dA(psi.psi01, a) for a in range(2)],
                              axis=-1),
        )


@dataclass
class TransverseSecond:
    """Genuinely transverse second derivatives d0 d0 g_{mu nu}.

    These cannot be computed from cone data alone; they are inputs taken
    from an ambient metric (oracle tests) or set to zero when only
    cone-intrinsic combinations are needed.  Only dd00_g11 and dd00_gAB
    survive in the final curvature expressions; the 01 and 1A slots are
    carried so the first-principles assembly can demonstrate numerically
    that they cancel.
    """
    dd00_g11: np.ndarray
    dd00_gAB: np.ndarray
    dd00_g01: np.ndarray | None = None
    dd00_g1A: np.ndarray | None = None

    def __post_init__(self):
        S = self.dd00_g11.shape
        if self.dd00_g01 is None:
            self.dd00_g01 = np.zeros(S)
        if self.dd00_g1A is None:
            self.dd00_g1A = np.zeros(S + (2,))

    @classmethod
    def zeros(cls, shape) -> "TransverseSecond":
        return cls(dd00_g11=np.zeros(shape),
                   dd00_gAB=np.zeros(shape + (2, 2)))


# ----------------------------------------------------------------------
# Christoffel table on the cone
# ----------------------------------------------------------------------

def christoffels_on_cone(jets: Jets, geo: ConeGeometry,
                         psi: PsiFields) -> np.ndarray:
    """All Christoffel symbols of the trace metric, shape S+(4,4,4).

    Index order: [upper, lower, lower], coordinates (y^0, y^1, angular).
    Every entry is expressible in cone data; no transverse second
    derivatives enter the Christoffels themselves.
    """
    j = jets
    g01 = geo.g01
    S = j.th.shape
    Gam4 = np.zeros(S + (4, 4, 4))

    Gam4[..., 0, 0, 0] = 0.5 * g01 * (2.0 * psi.psi01 - j.th_1)
    Gam4[..., 0, 0, 1] = 0.5 * g01 * psi.psi11
    Gam4[..., 0, 0, 2:] = 0.5 * g01[..., None] * (psi.psi1A + j.th_A)
    # Gam^0_11 = Gam^0_1C = 0
    Gam4[..., 0, 2:, 2:] = -0.5 * g01[..., None, None] * j.G_1

    Gam4[..., 1, 0, 0] = 0.5 * g01 * (j.th_1 - psi.psi01)
    Gam4[..., 1, 0, 1] = 0.5 * g01 * (j.th_1 - psi.psi11)
    Gam4[..., 1, 0, 2:] = -0.5 * g01[..., None] * psi.psi1A
    Gam4[..., 1, 1, 1] = 0.5 * g01 * (2.0 * j.th_1 - psi.psi11)
    Gam4[..., 1, 1, 2:] = 0.5 * g01[..., None] * (j.th_A - psi.psi1A)
    Gam4[..., 1, 2:, 2:] = 0.5 * g01[..., None, None] * (j.G_1 - psi.psiAB)

    Gam4[..., 2:, 0, 0] = -0.5 * np.einsum(
        "...cb,...b->...c", geo.Ginv, j.th_A)
    Gam4[..., 2:, 0, 1] = 0.5 * np.einsum(
        "...cb,...b->...c", geo.Ginv, psi.psi1A - j.th_A)
    Gam4[..., 2:, 0, 2:] = 0.5 * np.einsum(
        "...cb,...bd->...cd", geo.Ginv, psi.psiAB)
    Gam4[..., 2:, 1, 2:] = 0.5 * geo.M
    # Gam^C_11 = 0
    Gam4[..., 2:, 2:, 2:] = geo.Gam

    # symmetrize the lower pair
    lower = np.swapaxes(Gam4, -1, -2)
    tri = np.triu(np.ones((4, 4)))
    Gam4 = Gam4 * tri + lower * (1.0 - tri)
    return Gam4


# ----------------------------------------------------------------------
# Ricci components on the cone
# ----------------------------------------------------------------------

def ricci_11(geo: ConeGeometry, psi: PsiFields) -> np.ndarray:
    """R_11 on the cone: algebraic in the jets and psi_11."""
    j = geo.jets
    g01 = geo.g01
    return (0.25 * g01 * geo.tau * psi.psi11 + 0.5 * geo.dtau_1
            + 0.25 * geo.Q - 0.5 * g01 * j.th_1 * geo.tau)


def ricci_1A(geo: ConeGeometry, psi: PsiFields,
             pd: PsiDerivs) -> np.ndarray:
    """R_1A on the cone, shape S+(2,)."""
    j = geo.jets
    g01 = geo.g01
    W = -geo.dGinv_1  # Theta^{de} Theta^{cb} d1 Theta_{db}, indices (e,c)
    t = 2.0 * geo.trGam  # Theta^{ef} d_c Theta_{ef}
    out = (0.5 * g01[..., None] * pd.d1_psi1A
           + (g01 * (0.25 * geo.tau
                     - 0.5 * g01 * j.th_1))[..., None] * psi.psi1A
           + 0.5 * (g01 * (g01 * psi.psi11 - g01 * j.th_1
                           - 0.5 * geo.tau))[..., None] * j.th_A
           - 0.5 * geo.div_M
           + 0.5 * geo.dtau_A
           - 0.5 * g01[..., None] * pd.dA_psi11
           + 0.5 * g01[..., None] * j.th_1A
           - 0.25 * np.einsum("...c,...ca->...a", t, geo.M)
           + 0.25 * np.einsum("...ec,...aec->...a",
                              W, np.swapaxes(geo.bracket, -3, -2)))
    return out


def ricci_AB(geo: ConeGeometry, psi: PsiFields,
             pd: PsiDerivs) -> np.ndarray:
    """R_AB on the cone, shape S+(2,2)."""
    j = geo.jets
    g01 = geo.g01
    Gi = geo.Ginv
    r = g01[..., None, None] * pd.d1_psiAB
    r = r + (0.5 * g01 * (-g01 * psi.psi11
                          + 0.5 * geo.tau))[..., None, None] * psi.psiAB
    cross = np.einsum("...ca,...cb->...ab", psi.psiAB, geo.M)
    r = r + 0.5 * g01[..., None, None] * (
        -cross - np.swapaxes(cross, -1, -2)
        + 0.5 * psi.chi[..., None, None] * j.G_1)
    r = r + 0.25 * (g01 ** 2 * psi.psi11)[..., None, None] * j.G_1
    r = r + g01[..., None, None] * np.einsum("...dab,...d->...ab",
                                             geo.Gam, psi.psi1A)
    r = r - 0.5 * g01[..., None, None] * (
        pd.dA_psi1A + np.swapaxes(pd.dA_psi1A, -1, -2))
    r = r - geo.div_Gam
    r = r - 0.5 * (g01 ** 2)[..., None, None] * np.einsum(
        "...a,...b->...ab", j.th_A, j.th_A)
    r = r + g01[..., None, None] * j.th_AA
    r = r + 0.5 * geo.dd_logdet
    r = r + 0.5 * (g01 ** 2)[..., None, None] * np.einsum(
        "...a,...b->...ab", psi.psi1A, psi.psi1A)
    r = r + 0.5 * g01[..., None, None] * np.einsum(
        "...cd,...ac,...db->...ab", Gi, j.G_1, j.G_1)
    r = r - 0.25 * (g01 * geo.tau)[..., None, None] * j.G_1
    # second radial derivative of the angular block (radial part of the
    # 1-Christoffel divergence)
    r = r - 0.5 * g01[..., None, None] * j.G_11
    r = r + np.einsum("...dac,...cdb->...ab", geo.Gam, geo.Gam)
    lower_vec = g01[..., None] * j.th_A + geo.trGam
    r = r - np.einsum("...c,...cab->...ab", lower_vec, geo.Gam)
    return r


def ricci_01(geo: ConeGeometry, psi: PsiFields, pd: PsiDerivs,
             trans: TransverseSecond) -> np.ndarray:
    """R_01 on the cone; needs the transverse input d0 d0 g_11."""
    j = geo.jets
    g01 = geo.g01
    Gi = geo.Ginv
    r = (-0.5 * g01 * trans.dd00_g11
         + g01 * pd.d1_psi01
         - g01 ** 2 * j.th_1 * psi.psi01
         + 0.25 * g01 ** 2 * j.th_1 * psi.psi11
         + 0.25 * np.einsum("...ab,...ab->...", geo.dGinv_1, psi.psiAB)
         + 0.5 * np.einsum("...ab,...ab->...", Gi, pd.d1_psiAB)
         + 0.5 * (g01 * j.th_1) ** 2
         + 0.5 * g01 ** 2 * psi.psi11 * psi.psi01
         - 0.25 * (g01 * psi.psi11) ** 2
         - 0.25 * g01 * geo.tau * (j.th_1 - psi.psi11)
         + 0.5 * g01 * np.einsum("...cb,...c,...b->...",
                                 Gi, psi.psi1A, psi.psi1A)
         - 0.5 * np.einsum("...c,...c->...",
                           geo.div_Ginv, psi.psi1A - j.th_A)
         - 0.5 * g01 * j.th_11
         - 0.5 * (np.einsum("...cd,...cd->...", Gi, pd.dA_psi1A)
                  - np.einsum("...cd,...cd->...", Gi, j.th_AA))
         - 0.5 * g01 * np.einsum("...cb,...c,...b->...",
                                 Gi, j.th_A, psi.psi1A)
         - 0.25 * g01 * psi.chi * psi.psi11
         - 0.5 * np.einsum("...cb,...b,...c->...",
                           Gi, psi.psi1A - j.th_A, geo.trGam))
    return r


def ricci_00(geo: ConeGeometry, psi: PsiFields, pd: PsiDerivs,
             trans: TransverseSecond) -> np.ndarray:
    """R_00 on the cone; needs both transverse inputs."""
    j = geo.jets
    g01 = geo.g01
    Gi = geo.Ginv
    r = (-0.5 * g01 * trans.dd00_g11
         + 0.5 * np.einsum("...ab,...ab->...", Gi, trans.dd00_gAB)
         + g01 * pd.d1_psi01
         + 0.5 * np.einsum("...ab,...ab->...", Gi, j.th_AA)
         - 0.5 * g01 * j.th_11
         + 0.5 * g01 * (g01 * psi.psi11 - 2.0 * g01 * j.th_1
                        + np.einsum("...cb,...cb->...", Gi,
                                    0.5 * j.G_1 - psi.psiAB)) * psi.psi01
         - 0.25 * (g01 * psi.psi11) ** 2
         + 0.5 * g01 * np.einsum("...ac,...a,...c->...",
                                 Gi, psi.psi1A, psi.psi1A)
         - 0.25 * np.einsum("...da,...cb,...ba,...cd->...",
                            Gi, Gi, psi.psiAB, psi.psiAB)
         + 0.25 * g01 ** 2 * j.th_1 * psi.psi11
         + 0.5 * (g01 * j.th_1) ** 2
         + 0.5 * np.einsum(
             "...c,...c->...",
             -g01[..., None] * np.einsum("...cd,...d->...c",
                                         Gi, psi.psi1A) + geo.div_Ginv,
             j.th_A)
         - 0.25 * g01 * np.einsum("...cb,...cb->...",
                                  Gi, j.G_1 - psi.psiAB) * j.th_1
         + 0.5 * np.einsum("...db,...b,...d->...", Gi, j.th_A, geo.trGam))
    return r


def wave_gauge_transverse(geo: ConeGeometry, psi: PsiFields,
                          trans: TransverseSecond) -> np.ndarray:
    """d0 of the contracted wave-gauge vector sum (0 and 1 components).

    Algebraic in psi apart from the two transverse second derivatives.
    """
    g01 = geo.g01
    Gi = geo.Ginv
    return (0.5 * g01 ** 2 * trans.dd00_g11
            - 0.5 * g01 * np.einsum("...ab,...ab->...", Gi,
                                    trans.dd00_gAB)
            - 1.5 * g01 ** 3 * psi.psi01 * psi.psi11
            + 0.5 * g01 ** 3 * psi.psi11 ** 2
            + 0.5 * g01 ** 2 * psi.psi01 * psi.chi
            - g01 ** 2 * np.einsum("...ac,...c,...a->...",
                                   Gi, psi.psi1A, psi.psi1A)
            + 0.5 * g01 * np.einsum("...ac,...bd,...ab,...cd->...",
                                    Gi, Gi, psi.psiAB, psi.psiAB))


# ----------------------------------------------------------------------
# first-principles assembly of the curvature from cone data
# ----------------------------------------------------------------------

def _psi_matrix(psi: PsiFields, S) -> np.ndarray:
    psi4 = np.zeros(S + (4, 4))
    psi4[..., 0, 0] = psi.psi01
    psi4[..., 0, 1] = psi4[..., 1, 0] = psi.psi01
    psi4[..., 1, 1] = psi.psi11
    psi4[..., 1, 2:] = psi.psi1A
    psi4[..., 2:, 1] = psi.psi1A
    psi4[..., 2:, 2:] = psi.psiAB
    return psi4


def ricci_assembled(jets: Jets, psi: PsiFields, pd: PsiDerivs,
                    trans: TransverseSecond) -> dict:
    """Ricci tensor and wave-gauge transverse derivative from cone data,
    assembled directly from the definition.

    Builds the full arrays of metric derivatives on the cone (tangential
    ones from the jets and psi derivatives, transverse ones from psi and
    the supplied second transversals), converts them to derivatives of
    the inverse metric, forms the Christoffel symbols and their first
    derivatives, and contracts.  This route never expands products, so it
    is immune to transcription slips in the closed-form component
    expressions and serves as their independent adjudicator.

    Returns {"ricci": S+(4,4), "d0_wave_gauge": S}.
    """
    j = jets
    S = j.th.shape
    g = ConeMetric(j.th, j.G)
    ginv = g.inverse_matrix()

    # dg[..., mu, rho, nu] = d_mu g_{rho nu} on the cone
    dg = np.zeros(S + (4, 4, 4))
    dg[..., 0, :, :] = _psi_matrix(psi, S)
    dg[..., 1, 0, 0] = dg[..., 1, 0, 1] = dg[..., 1, 1, 0] = j.th_1
    dg[..., 1, 2:, 2:] = j.G_1
    for a in range(2):
        dg[..., 2 + a, 0, 0] = j.th_A[..., a]
        dg[..., 2 + a, 0, 1] = dg[..., 2 + a, 1, 0] = j.th_A[..., a]
        dg[..., 2 + a, 2:, 2:] = j.G_A[..., a, :, :]

    # ddg[..., ka, la, mu, nu] = d_ka d_la g_{mu nu}, symmetric in (ka,la)
    ddg = np.zeros(S + (4, 4, 4, 4))

    def put(ka, la, mu, nu, val):
        ddg[..., ka, la, mu, nu] = val
        ddg[..., la, ka, mu, nu] = val
        ddg[..., ka, la, nu, mu] = val
        ddg[..., la, ka, nu, mu] = val

    put(0, 0, 0, 0, trans.dd00_g01)
    put(0, 0, 0, 1, trans.dd00_g01)
    put(0, 0, 1, 1, trans.dd00_g11)
    put(0, 1, 0, 0, pd.d1_psi01)
    put(0, 1, 0, 1, pd.d1_psi01)
    put(0, 1, 1, 1, pd.d1_psi11)
    put(1, 1, 0, 0, j.th_11)
    put(1, 1, 0, 1, j.th_11)
    for a in range(2):
        put(0, 0, 1, 2 + a, trans.dd00_g1A[..., a])
        put(0, 1, 1, 2 + a, pd.d1_psi1A[..., a])
        put(0, 2 + a, 0, 0, pd.dA_psi01[..., a])
        put(0, 2 + a, 0, 1, pd.dA_psi01[..., a])
        put(0, 2 + a, 1, 1, pd.dA_psi11[..., a])
        put(1, 2 + a, 0, 0, j.th_1A[..., a])
        put(1, 2 + a, 0, 1, j.th_1A[..., a])
        for b in range(2):
            put(0, 2 + a, 1, 2 + b, pd.dA_psi1A[..., a, b])
            put(2 + a, 2 + b, 0, 0, j.th_AA[..., a, b])
            put(2 + a, 2 + b, 0, 1, j.th_AA[..., a, b])
            for c in range(b, 2):
                put(0, 2 + a, 2 + b, 2 + c, pd.dA_psiAB[..., a, b, c])
    ddg[..., 0, 0, 2:, 2:] = trans.dd00_gAB
    ddg[..., 0, 1, 2:, 2:] = ddg[..., 1, 0, 2:, 2:] = pd.d1_psiAB
    ddg[..., 1, 1, 2:, 2:] = j.G_11
    for a in range(2):
        ddg[..., 1, 2 + a, 2:, 2:] = j.G_1A[..., a, :, :]
        ddg[..., 2 + a, 1, 2:, 2:] = j.G_1A[..., a, :, :]
        for b in range(2):
            ddg[..., 2 + a, 2 + b, 2:, 2:] = j.G_AA[..., a, b, :, :]

    # d_mu of the inverse metric; for mu = 0 this is the gauge relation
    # tying it to psi, for tangential mu it is plain matrix calculus
    dginv = -np.einsum("...ma,...kab,...bn->...kmn", ginv, dg, ginv)

    brk = (np.einsum("...mrn->...rmn", dg) + np.einsum("...nrm->...rmn", dg)
           - dg)
    Gam = 0.5 * np.einsum("...sr,...rmn->...smn", ginv, brk)
    dbrk = (np.einsum("...kmrn->...krmn", ddg)
            + np.einsum("...knrm->...krmn", ddg) - ddg)
    dGam = (0.5 * np.einsum("...ksr,...rmn->...ksmn", dginv, brk)
            + 0.5 * np.einsum("...sr,...krmn->...ksmn", ginv, dbrk))

    ricci = (np.einsum("...ngmg->...mn", dGam)
             - np.einsum("...ggmn->...mn", dGam)
             + np.einsum("...dmg,...gdn->...mn", Gam, Gam)
             - np.einsum("...ggd,...dmn->...mn", Gam, Gam))

    d0_wave = (np.einsum("...nr,...mnr->...m", dginv[..., 0, :, :], Gam)
               + np.einsum("...nr,...mnr->...m", ginv,
                           dGam[..., 0, :, :, :]))
    return {"ricci": ricci,
            "christoffels": Gam,
            "d0_wave_gauge": d0_wave[..., 0] + d0_wave[..., 1]}


# ----------------------------------------------------------------------
# null structure
# ----------------------------------------------------------------------

class NullStructure(NamedTuple):
    """Optical quantities of the cone foliation.

    xi      S+(2,)    torsion one-form, (d_A theta - psi_1A) / 4
    chi     S+(2,2)   outgoing null second fundamental form, d1 Theta / 2
    chibar  S+(2,2)   incoming counterpart, psi_AB / 2
    kappa   S         inaffinity, (2 d1 theta - psi_11) / (2 theta)
    trchi   S         expansion, Theta^AB d1 Theta_AB / 2
    """
    xi: np.ndarray
    chi: np.ndarray
    chibar: np.ndarray
    kappa: np.ndarray
    trchi: np.ndarray


def null_structure(geo: ConeGeometry, psi: PsiFields) -> NullStructure:
    j = geo.jets
    return NullStructure(
        xi=0.25 * (j.th_A - psi.psi1A),
        chi=0.5 * j.G_1,
        chibar=0.5 * psi.psiAB,
        kappa=(2.0 * j.th_1 - psi.psi11) / (2.0 * j.th),
        trchi=0.5 * geo.tau,
    )


# ----------------------------------------------------------------------
# algebraic consistency of d0 of the inverse metric
# ----------------------------------------------------------------------

def algebraic_relations_check(geo: ConeGeometry,
                              psi: PsiFields) -> dict:
    """Verify the identities tying d0 g^{mu nu} to psi on the cone.

    Builds the full 4x4 psi matrix (psi_00 = psi_01, psi_0A = 0), forms
    d0 g^{mu nu} = -g^{mu a} psi_{ab} g^{b nu}, and compares against the
    closed-form right-hand sides, including d0 (g^{0i} + g^{1i}) = 0 for
    the spatial columns i >= 1.  All defects are pure rounding.
    """
    j = geo.jets
    S = j.th.shape
    g01 = geo.g01
    psi4 = np.zeros(S + (4, 4))
    psi4[..., 0, 0] = psi.psi01
    psi4[..., 0, 1] = psi4[..., 1, 0] = psi.psi01
    psi4[..., 1, 1] = psi.psi11
    psi4[..., 1, 2:] = psi.psi1A
    psi4[..., 2:, 1] = psi.psi1A
    psi4[..., 2:, 2:] = psi.psiAB

    gi = ConeMetric(j.th, j.G).inverse_matrix()
    d0gi = -np.einsum("...ma,...ab,...bn->...mn", gi, psi4, gi)

    defects = {
        "d0_ginv_00": max_abs(d0gi[..., 0, 0] + g01 ** 2 * psi.psi11),
        "d0_ginv_01": max_abs(
            d0gi[..., 0, 1] + g01 ** 2 * (psi.psi01 - psi.psi11)),
        "d0_ginv_01_plus_11": max_abs(
            d0gi[..., 0, 1] + d0gi[..., 1, 1]),
        "d0_ginv_0C": max_abs(
            d0gi[..., 0, 2:] + g01[..., None] * np.einsum(
                "...cd,...d->...c", geo.Ginv, psi.psi1A)),
        "d0_ginv_AB": max_abs(
            d0gi[..., 2:, 2:] + np.einsum(
                "...ac,...cd,...db->...ab",
                geo.Ginv, psi.psiAB, geo.Ginv)),
        "d0_row_sum_spatial": max_abs(
            d0gi[..., 0, 1:] + d0gi[..., 1, 1:]),
    }
    defects["max"] = max(defects.values())
    return defects
