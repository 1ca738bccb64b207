"""
Ambient test metrics for the geometry oracle.

The curvature formulas on the cone express components of the Ricci tensor
through cone data (theta, Theta, psi) plus two transverse second
derivatives.  To test them we need metrics defined in a neighborhood of
the cone, respecting the gauge structure on {y^0 = 0}:

    g_00 = g_01 identically (temporal gauge),
    g_0A = 0 identically,
    g_11 and g_1A vanish on {y^0 = 0},
    g_01|cone = theta < 0,  g_AB|cone positive definite.

Members of `ExtendedMetric` are built from separable closed-form sums, so
both the metric values at arbitrary 4d points (consumed by the pure
finite-difference oracle) and every derivative needed by the formula side
(consumed through exact jets, psi fields and transverse seconds) come
from the same analytic object with no interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analytic import ONE, Cos, Poly, SepSum, SepTerm, Sin
from .freedata import Jets
from .geometry import PsiDerivs, PsiFields, TransverseSecond
from .grids import ConeGrid

Y0 = Poly((0.0, 1.0))
Y0SQ = Poly((0.0, 0.0, 1.0))
Y1SQ = Poly((0.0, 0.0, 1.0))


@dataclass
class ConeRestriction:
    """Exact cone data of an ambient metric: jets, psi and transversals."""
    jets: Jets
    psi: PsiFields
    pd: PsiDerivs
    trans: TransverseSecond


class ExtendedMetric:
    """A 4d metric given componentwise by separable closed-form sums.

    comps[i][j] for 0 <= i <= j <= 3 holds the SepSum of component (i, j);
    the (0,0) slot is ignored and aliased to (0,1) to enforce the
    temporal gauge identity, and (0,2), (0,3) are identically zero.
    """

    def __init__(self, comps):
        self.comps = comps

    def component(self, i: int, j: int) -> SepSum:
        i, j = min(i, j), max(i, j)
        if i == 0 and j == 0:
            return self.comps[0][1]
        if i == 0 and j in (2, 3):
            return SepSum([])
        return self.comps[i][j]

    def value(self, y0, y1, th, ph, orders=(0, 0, 0, 0)) -> np.ndarray:
        """Metric (or any mixed partial) as (..., 4, 4) array."""
        shape = np.broadcast(y0, y1, th, ph).shape
        g = np.zeros(shape + (4, 4))
        for i in range(4):
            for j in range(i, 4):
                g[..., i, j] = self.component(i, j).eval(
                    orders, y0, y1, th, ph)
                g[..., j, i] = g[..., i, j]
        return g

    # -- exact cone data ------------------------------------------------

    def cone_restriction(self, grid: ConeGrid) -> ConeRestriction:
        y1, th, ph = grid.mesh()
        S = grid.shape
        zero = 0.0

        def ev(i, j, k0=0, k1=0, kt=0, kp=0):
            return (self.component(i, j).eval((k0, k1, kt, kp),
                                              zero, y1, th, ph)
                    + np.zeros(S))

        theta = ev(0, 1)
        th_1 = ev(0, 1, k1=1)
        th_11 = ev(0, 1, k1=2)
        th_A = np.stack([ev(0, 1, kt=1), ev(0, 1, kp=1)], axis=-1)
        th_AA = np.zeros(S + (2, 2))
        th_AA[..., 0, 0] = ev(0, 1, kt=2)
        th_AA[..., 1, 1] = ev(0, 1, kp=2)
        th_AA[..., 0, 1] = th_AA[..., 1, 0] = ev(0, 1, kt=1, kp=1)

        def ang_block(k0=0, k1=0, kt=0, kp=0):
            out = np.zeros(S + (2, 2))
            for a in range(2):
                for b in range(a, 2):
                    out[..., a, b] = ev(2 + a, 2 + b, k0, k1, kt, kp)
                    out[..., b, a] = out[..., a, b]
            return out

        G = ang_block()
        G_1 = ang_block(k1=1)
        G_11 = ang_block(k1=2)
        G_A = np.stack([ang_block(kt=1), ang_block(kp=1)], axis=3)
        G_1A = np.stack([ang_block(k1=1, kt=1), ang_block(k1=1, kp=1)],
                        axis=3)
        G_AA = np.zeros(S + (2, 2, 2, 2))
        G_AA[..., 0, 0, :, :] = ang_block(kt=2)
        G_AA[..., 1, 1, :, :] = ang_block(kp=2)
        mixed = ang_block(kt=1, kp=1)
        G_AA[..., 0, 1, :, :] = mixed
        G_AA[..., 1, 0, :, :] = mixed
        th_1A = np.stack([ev(0, 1, k1=1, kt=1), ev(0, 1, k1=1, kp=1)],
                         axis=-1)
        jets = Jets(th=theta, th_1=th_1, th_11=th_11, th_A=th_A,
                    th_1A=th_1A, th_AA=th_AA, G=G, G_1=G_1, G_11=G_11,
                    G_A=G_A, G_1A=G_1A, G_AA=G_AA)

        psi = PsiFields(
            psi11=ev(1, 1, k0=1),
            psi1A=np.stack([ev(1, 2, k0=1), ev(1, 3, k0=1)], axis=-1),
            psiAB=ang_block(k0=1),
            psi01=ev(0, 1, k0=1),
            chi=np.zeros(S),
        )
        from .freedata import invert_angular_metric
        psi.chi = np.einsum("...ab,...ab->...",
                            invert_angular_metric(G), psi.psiAB)

        pd = PsiDerivs(
            d1_psi11=ev(1, 1, k0=1, k1=1),
            dA_psi11=np.stack([ev(1, 1, k0=1, kt=1),
                               ev(1, 1, k0=1, kp=1)], axis=-1),
            d1_psi1A=np.stack([ev(1, 2, k0=1, k1=1),
                               ev(1, 3, k0=1, k1=1)], axis=-1),
            dA_psi1A=np.stack(
                [np.stack([ev(1, 2, k0=1, kt=1),
                           ev(1, 3, k0=1, kt=1)], axis=-1),
                 np.stack([ev(1, 2, k0=1, kp=1),
                           ev(1, 3, k0=1, kp=1)], axis=-1)], axis=-2),
            d1_psiAB=ang_block(k0=1, k1=1),
            dA_psiAB=np.stack([ang_block(k0=1, kt=1),
                               ang_block(k0=1, kp=1)], axis=3),
            d1_psi01=ev(0, 1, k0=1, k1=1),
            dA_psi01=np.stack([ev(0, 1, k0=1, kt=1),
                               ev(0, 1, k0=1, kp=1)], axis=-1),
        )

        trans = TransverseSecond(
            dd00_g11=ev(1, 1, k0=2),
            dd00_gAB=ang_block(k0=2),
            dd00_g01=ev(0, 1, k0=2),
            dd00_g1A=np.stack([ev(1, 2, k0=2), ev(1, 3, k0=2)], axis=-1),
        )
        return ConeRestriction(jets=jets, psi=psi, pd=pd, trans=trans)


def oracle_metric(amplitude: float = 0.05,
                  flat: bool = False) -> ExtendedMetric:
    """A gauge-respecting ambient metric for oracle tests.

    flat=True returns the unperturbed null-form Minkowski metric; the
    default adds bounded separable perturbations activating every
    curvature term (transverse, radial and angular dependence in each
    metric block that the gauge allows to be nonzero).
    """
    a = float(amplitude)
    comps = [[None] * 4 for _ in range(4)]

    g01 = SepSum([SepTerm(-1.0)])
    g11 = SepSum([])
    g12 = SepSum([])
    g13 = SepSum([])
    g22 = SepSum([SepTerm(1.0, ONE, Y1SQ, ONE, ONE)])
    g23 = SepSum([])
    # round azimuthal block: (y^1)^2 sin^2 th = (y^1)^2 (1 - cos 2th)/2
    g33 = SepSum([SepTerm(0.5, ONE, Y1SQ, ONE, ONE),
                  SepTerm(-0.5, ONE, Y1SQ, Cos(2.0), ONE)])

    if not flat:
        g01 = g01 + SepSum([
            SepTerm(a, ONE, Sin(0.9, 0.7), Cos(1.0), Sin(1.0)),
            SepTerm(a, Y0, Sin(1.2, 0.4), Cos(1.0, 0.2), Cos(2.0)),
            SepTerm(0.5 * a, Y0SQ, Sin(0.8, 0.9), Sin(1.0, 0.3),
                    Cos(1.0)),
        ])
        g11 = g11 + SepSum([
            SepTerm(a, Y0, Sin(1.1, 0.5), Cos(2.0, 0.1), Sin(2.0)),
            SepTerm(0.7 * a, Y0SQ, Cos(0.6, 0.2), Sin(1.0, 0.8),
                    Cos(1.0)),
        ])
        g12 = g12 + SepSum([
            SepTerm(a, Y0, Cos(1.3, 0.2), Sin(2.0, 0.4), Cos(1.0)),
            SepTerm(0.4 * a, Y0SQ, Sin(0.7, 0.1), Cos(1.0, 0.5),
                    Sin(2.0)),
        ])
        g13 = g13 + SepSum([
            SepTerm(a, Y0, Sin(0.8, 0.3), Cos(1.0, 0.6), Sin(1.0, 0.2)),
        ])
        g22 = g22 + SepSum([
            SepTerm(a, ONE, Sin(1.4, 0.2), Cos(2.0, 0.3), Cos(1.0)),
            SepTerm(a, Y0, Cos(0.9, 0.4), Sin(1.0, 0.1), Sin(2.0)),
            SepTerm(0.6 * a, Y0SQ, Sin(1.0, 0.6), Cos(1.0, 0.9),
                    Cos(2.0)),
        ])
        g23 = g23 + SepSum([
            SepTerm(a, ONE, Cos(1.1, 0.8), Sin(2.0, 0.2), Sin(1.0)),
            SepTerm(0.5 * a, Y0, Sin(0.6, 0.5), Cos(2.0, 0.7),
                    Cos(1.0, 0.4)),
        ])
        g33 = g33 + SepSum([
            SepTerm(a, ONE, Sin(0.5, 0.9), Cos(1.0, 0.2), Cos(2.0, 0.5)),
            SepTerm(a, Y0, Cos(1.2, 0.3), Sin(2.0, 0.6), Sin(1.0, 0.7)),
            SepTerm(0.8 * a, Y0SQ, Cos(0.8, 0.1), Cos(2.0, 0.4),
                    Sin(2.0, 0.3)),
        ])

    comps[0][1] = g01
    comps[1][1] = g11
    comps[1][2] = g12
    comps[1][3] = g13
    comps[2][2] = g22
    comps[2][3] = g23
    comps[3][3] = g33
    return ExtendedMetric(comps)
