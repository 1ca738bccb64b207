"""
Admissible free data on the cone.

Free data consist of a prescribed angular metric gamma_AB(y^1, y^A)
(symmetric positive definite away from the vertex, with nowhere-vanishing
divergence scalar |gamma^AB d1 gamma_AB| > 0), a negative function
theta(y^1, y^A), a particle distribution f on momentum space with compact
support away from {pi^1 <= 0} and away from the vertex, and a rest mass m.

The generators in this module produce *jets*: exact closed-form derivative
arrays (d1, d1d1, dA, dA dB, d1 dA) of theta and gamma alongside their
values.  Every composite derivative downstream (divergence scalar,
Christoffels, curvature-like combinations) is assembled by product-rule
algebra on these jets, so the Minkowski data set solves the constraint
hierarchy to rounding, not merely to discretization error.  Finite
differences are reserved for solved fields and for externally supplied
(file-loaded) data via `Jets.from_values_fd`.

Vertex admissibility: theta = -1 + O(r^2) and gamma_AB = r^2 s_AB + O(r^4)
with s_AB the round chart metric; `validate_free_data` checks these by
log-log slope fits on the inner third of the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .analytic import AngularFunction, Cos, Sin
from .grids import ConeGrid, angular_derivative, radial_derivative
from .summation import pairwise_sum

# ----------------------------------------------------------------------
# smooth cutoffs
# ----------------------------------------------------------------------


def _sigma(t: np.ndarray) -> np.ndarray:
    """exp(-1/t) for t > 0, else 0; the standard C-infinity glue."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def smooth_step(t: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, monotone between."""
    a = _sigma(np.asarray(t, dtype=float))
    b = _sigma(1.0 - np.asarray(t, dtype=float))
    return a / (a + b + 1e-300)


def mollifier(u: np.ndarray) -> np.ndarray:
    """C-infinity bump on (-1, 1), equal to 1 at u = 0."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ui * ui))
    return out


# ----------------------------------------------------------------------
# momentum distribution
# ----------------------------------------------------------------------

@dataclass
class MomentumDistribution:
    """Compactly supported particle density f(y^1, pi).

    A product bump: amplitude * q(y^1) * prod_i B((pi^i - center_i)/radii_i)
    with B the C-infinity mollifier and q a smooth radial switch that
    vanishes identically for y^1 < r_f.  Independent of the cone angle,
    which the moment quadrature exploits (moments then depend on the angle
    only through Theta_AB pi^A pi^B).
    """
    amplitude: float
    center: tuple
    radii: tuple
    c1: float
    c2: float
    r_f: float
    ramp: float
    m: float = 1.0

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float)
        radii = np.asarray(self.radii, dtype=float)
        if center.shape != radii.shape or center.ndim != 1:
            raise ValueError("center/radii must be matching 1-d tuples")
        if np.any(radii <= 0):
            raise ValueError("bump radii must be positive")
        if center[0] - radii[0] < self.c1:
            raise ValueError(
                "momentum support touches pi^1 < c1; inadmissible")
        if self.c1 <= 0:
            raise ValueError("need c1 > 0")
        if self.r_f <= 0:
            raise ValueError("need vertex exclusion radius r_f > 0")
        if self.m == 0.0:
            # support must avoid sum_A (pi^A)^2 <= c2
            amin = np.maximum(np.abs(center[1:]) - radii[1:], 0.0)
            if float(np.sum(amin ** 2)) <= self.c2:
                raise ValueError(
                    "massless case: angular momentum support must stay "
                    "outside sum_A (pi^A)^2 <= c2")

    @property
    def dim(self) -> int:
        return len(self.center)

    def support_box(self):
        center = np.asarray(self.center, dtype=float)
        radii = np.asarray(self.radii, dtype=float)
        lo = center - radii
        hi = center + radii
        lo[0] = max(lo[0], self.c1)
        return lo, hi

    def radial_profile(self, y1):
        """Smooth switch q(y^1): 0 below r_f, 1 beyond r_f + ramp."""
        return smooth_step((np.asarray(y1, dtype=float) - self.r_f)
                           / self.ramp)

    def momentum_factor(self, pi):
        """amplitude * product of mollifiers; f = profile(y^1) * this."""
        pi = np.asarray(pi, dtype=float)
        center = np.asarray(self.center, dtype=float)
        radii = np.asarray(self.radii, dtype=float)
        prod = np.full(pi.shape[:-1], self.amplitude)
        for i in range(pi.shape[-1]):
            prod = prod * mollifier((pi[..., i] - center[i]) / radii[i])
        return prod

    def __call__(self, y1, pi):
        """Evaluate f; pi has shape (..., dim), y1 broadcasts against it."""
        pi = np.asarray(pi, dtype=float)
        center = np.asarray(self.center, dtype=float)
        radii = np.asarray(self.radii, dtype=float)
        val = self.amplitude * self.radial_profile(y1)
        prod = np.ones(pi.shape[:-1])
        for i in range(pi.shape[-1]):
            prod = prod * mollifier((pi[..., i] - center[i]) / radii[i])
        return val * prod


def bump_distribution(center, radii, amplitude, c1, c2, r_f,
                      ramp=None, m=1.0) -> MomentumDistribution:
    """Construct the standard smooth bump distribution."""
    if ramp is None:
        ramp = 2.0 * r_f
    return MomentumDistribution(amplitude=float(amplitude),
                                center=tuple(center), radii=tuple(radii),
                                c1=float(c1), c2=float(c2), r_f=float(r_f),
                                ramp=float(ramp), m=float(m))


# ----------------------------------------------------------------------
# jets
# ----------------------------------------------------------------------

@dataclass
class Jets:
    """theta and Theta with exact partial derivatives on the grid.

    Shapes (S = (N_r, N_theta, N_phi), a/b angular direction indices):
      th, th_1, th_11 : S
      th_A            : S + (2,)         d_a theta
      th_1A           : S + (2,)         d_1 d_a theta
      th_AA           : S + (2, 2)       d_a d_b theta
      G, G_1, G_11    : S + (2, 2)       Theta_ij and radial derivatives
      G_A             : S + (2, 2, 2)    [a, i, j] = d_a Theta_ij
      G_1A            : S + (2, 2, 2)    [a, i, j] = d_1 d_a Theta_ij
      G_AA            : S + (2, 2, 2, 2) [a, b, i, j] = d_a d_b Theta_ij
    """
    th: np.ndarray
    th_1: np.ndarray
    th_11: np.ndarray
    th_A: np.ndarray
    th_1A: np.ndarray
    th_AA: np.ndarray
    G: np.ndarray
    G_1: np.ndarray
    G_11: np.ndarray
    G_A: np.ndarray
    G_1A: np.ndarray
    G_AA: np.ndarray
    exact: bool = True

    @classmethod
    def from_values_fd(cls, theta_vals: np.ndarray, G_vals: np.ndarray,
                       grid: ConeGrid) -> "Jets":
        """Finite-difference jets for externally supplied field values."""
        S = grid.shape

        def dA(v, a, order=1):
            return angular_derivative(v, grid, a + 2, order)

        th = np.asarray(theta_vals, dtype=float)
        G = np.asarray(G_vals, dtype=float)
        th_A = np.stack([dA(th, a) for a in range(2)], axis=-1)
        th_AA = np.zeros(S + (2, 2))
        th_AA[..., 0, 0] = dA(th, 0, 2)
        th_AA[..., 1, 1] = dA(th, 1, 2)
        th_AA[..., 0, 1] = th_AA[..., 1, 0] = dA(dA(th, 0), 1)
        G_A = np.stack([dA(G, a) for a in range(2)], axis=3)
        G_1 = radial_derivative(G, grid, 1)
        G_1A = np.stack([dA(G_1, a) for a in range(2)], axis=3)
        G_AA = np.zeros(S + (2, 2, 2, 2))
        G_AA[..., 0, 0, :, :] = dA(G, 0, 2)
        G_AA[..., 1, 1, :, :] = dA(G, 1, 2)
        mixed = dA(dA(G, 0), 1)
        G_AA[..., 0, 1, :, :] = mixed
        G_AA[..., 1, 0, :, :] = mixed
        th_1 = radial_derivative(th, grid, 1)
        return cls(th=th, th_1=th_1,
                   th_11=radial_derivative(th, grid, 2),
                   th_A=th_A,
                   th_1A=np.stack([dA(th_1, 0), dA(th_1, 1)], axis=-1),
                   th_AA=th_AA,
                   G=G, G_1=G_1, G_11=radial_derivative(G, grid, 2),
                   G_A=G_A, G_1A=G_1A, G_AA=G_AA, exact=False)


# ----------------------------------------------------------------------
# round chart metric
# ----------------------------------------------------------------------

def round_sphere(theta_nodes: np.ndarray, phi_nodes: np.ndarray):
    """s_AB = diag(1, sin^2 theta) and its theta-derivatives.

    Returns (s, s_d, s_dd) of shape (N_theta, N_phi, 2, 2).
    """
    Nt, Np = len(theta_nodes), len(phi_nodes)
    th = theta_nodes[:, None]
    s = np.zeros((Nt, Np, 2, 2))
    s_d = np.zeros_like(s)
    s_dd = np.zeros_like(s)
    s[..., 0, 0] = 1.0
    s[..., 1, 1] = np.sin(th) ** 2
    s_d[..., 1, 1] = np.sin(2.0 * th)
    s_dd[..., 1, 1] = 2.0 * np.cos(2.0 * th)
    return s, s_d, s_dd


# ----------------------------------------------------------------------
# generators
# ----------------------------------------------------------------------

class MinkowskiGenerator:
    """theta = -1, gamma = (y^1)^2 * round chart metric; exact jets."""

    preset = "minkowski"

    def __init__(self, grid: ConeGrid):
        if grid.n != 3:
            raise NotImplementedError("free data generators require n=3")
        self.grid = grid
        self.params = {}
        self.axisymmetric = True

    def jets_at(self, r: np.ndarray) -> Jets:
        grid = self.grid
        r = np.asarray(r)
        if not np.issubdtype(r.dtype, np.floating):
            r = r.astype(float)
        s, s_d, s_dd = round_sphere(grid.theta, grid.phi)
        S = (len(r), grid.N_theta, grid.N_phi)
        rr = r[:, None, None, None, None]
        G = rr ** 2 * s
        G_1 = 2.0 * rr * s
        G_11 = 2.0 * s + np.zeros_like(G)
        G_A = np.zeros(S + (2, 2, 2))
        G_A[..., 0, :, :] = rr ** 2 * s_d
        G_1A = np.zeros_like(G_A)
        G_1A[..., 0, :, :] = 2.0 * rr * s_d
        G_AA = np.zeros(S + (2, 2, 2, 2))
        G_AA[..., 0, 0, :, :] = rr ** 2 * s_dd
        th = -np.ones(S)
        z = np.zeros(S)
        return Jets(th=th, th_1=z, th_11=z.copy(),
                    th_A=np.zeros(S + (2,)), th_1A=np.zeros(S + (2,)),
                    th_AA=np.zeros(S + (2, 2)),
                    G=G, G_1=G_1, G_11=G_11, G_A=G_A, G_1A=G_1A, G_AA=G_AA)


class PerturbedGenerator:
    """Smooth admissible perturbation of the Minkowski cone data.

    gamma_AB = (y^1)^2 (s_AB + eps (y^1)^2 H_AB(theta, phi)),
    theta    = -1 - eps (y^1)^2 U(theta, phi),

    with bounded angular profiles chosen so that positivity survives
    (H scales like the round metric towards the caps).  Preserves the
    vertex expansions by construction.
    """

    preset = "perturbed"

    def __init__(self, grid: ConeGrid, eps: float = 0.05, mode: int = 2):
        if grid.n != 3:
            raise NotImplementedError("free data generators require n=3")
        self.grid = grid
        self.eps = float(eps)
        self.mode = int(mode)
        self.params = {"eps": self.eps, "mode": self.mode}
        self.axisymmetric = False
        k = float(mode)
        # H_thth = cos(k th) cos(k ph)
        self._H = [[AngularFunction([(1.0, Cos(k), Cos(k))]), None],
                   [None, None]]
        # H_thph = sin^2(th) sin(k ph) = (1/2 - cos(2 th)/2) sin(k ph)
        htp = AngularFunction([(0.5, Cos(0.0), Sin(k)),
                               (-0.5, Cos(2.0), Sin(k))])
        self._H[0][1] = htp
        self._H[1][0] = htp
        # H_phph = sin^2(th) cos(k ph)
        self._H[1][1] = AngularFunction([(0.5, Cos(0.0), Cos(k)),
                                         (-0.5, Cos(2.0), Cos(k))])
        # U = 1 + cos(2 th) cos(ph) / 2
        self._U = AngularFunction([(1.0, Cos(0.0), Cos(0.0)),
                                   (0.5, Cos(2.0), Cos(1.0))])

    def _angular_tables(self, grid):
        th2 = grid.theta[:, None]
        ph2 = grid.phi[None, :]
        H = np.zeros((grid.N_theta, grid.N_phi, 2, 2))
        H_A = np.zeros((grid.N_theta, grid.N_phi, 2, 2, 2))
        H_AA = np.zeros((grid.N_theta, grid.N_phi, 2, 2, 2, 2))
        for i in range(2):
            for j in range(2):
                f = self._H[i][j]
                H[..., i, j] = f.d(0, 0, th2, ph2)
                H_A[..., 0, i, j] = f.d(1, 0, th2, ph2)
                H_A[..., 1, i, j] = f.d(0, 1, th2, ph2)
                H_AA[..., 0, 0, i, j] = f.d(2, 0, th2, ph2)
                H_AA[..., 1, 1, i, j] = f.d(0, 2, th2, ph2)
                mixed = f.d(1, 1, th2, ph2)
                H_AA[..., 0, 1, i, j] = mixed
                H_AA[..., 1, 0, i, j] = mixed
        U = self._U.d(0, 0, th2, ph2)
        U_A = np.stack([self._U.d(1, 0, th2, ph2),
                        self._U.d(0, 1, th2, ph2)], axis=-1)
        U_AA = np.zeros((grid.N_theta, grid.N_phi, 2, 2))
        U_AA[..., 0, 0] = self._U.d(2, 0, th2, ph2)
        U_AA[..., 1, 1] = self._U.d(0, 2, th2, ph2)
        um = self._U.d(1, 1, th2, ph2)
        U_AA[..., 0, 1] = um
        U_AA[..., 1, 0] = um
        return H, H_A, H_AA, U, U_A, U_AA

    def jets_at(self, r: np.ndarray) -> Jets:
        grid = self.grid
        eps = self.eps
        r = np.asarray(r)
        if not np.issubdtype(r.dtype, np.floating):
            r = r.astype(float)
        s, s_d, s_dd = round_sphere(grid.theta, grid.phi)
        H, H_A, H_AA, U, U_A, U_AA = self._angular_tables(grid)
        S = (len(r), grid.N_theta, grid.N_phi)
        r1 = r[:, None, None]
        rr = r[:, None, None, None, None]
        rrA = r[:, None, None, None, None, None]
        rrAA = r[:, None, None, None, None, None, None]

        G = rr ** 2 * s + eps * rr ** 4 * H
        G_1 = 2.0 * rr * s + 4.0 * eps * rr ** 3 * H
        G_11 = 2.0 * s + 12.0 * eps * rr ** 2 * H
        G_A = eps * rrA ** 4 * H_A + np.zeros(S + (2, 2, 2))
        G_A[..., 0, :, :] += (r[:, None, None, None, None] ** 2 * s_d)
        G_1A = 4.0 * eps * rrA ** 3 * H_A
        G_1A[..., 0, :, :] += 2.0 * r[:, None, None, None, None] * s_d
        G_AA = eps * rrAA ** 4 * H_AA
        G_AA[..., 0, 0, :, :] += r[:, None, None, None, None] ** 2 * s_dd

        th = -1.0 - eps * r1 ** 2 * U
        th_1 = -2.0 * eps * r1 * U
        th_11 = -2.0 * eps * U + np.zeros(S)
        th_A = -eps * (r1 ** 2)[..., None] * U_A
        th_1A = -2.0 * eps * r1[..., None] * U_A
        th_AA = -eps * (r1 ** 2)[..., None, None] * U_AA
        return Jets(th=th, th_1=th_1, th_11=th_11, th_A=th_A,
                    th_1A=th_1A, th_AA=th_AA,
                    G=G, G_1=G_1, G_11=G_11, G_A=G_A, G_1A=G_1A, G_AA=G_AA)


# ----------------------------------------------------------------------
# free data set
# ----------------------------------------------------------------------

@dataclass
class FreeDataSet:
    """Free data bundle handed to the constraint solver."""
    grid: ConeGrid
    preset: str
    params: dict
    jets: Jets
    generator: object  # has jets_at(r); None for file-loaded data
    dist: MomentumDistribution | None
    m: float
    scheme: str = "unconstrained-kappa"
    axisymmetric: bool = False

    @property
    def theta(self) -> np.ndarray:
        return self.jets.th

    @property
    def gamma(self) -> np.ndarray:
        return self.jets.G


def minkowski_free_data(grid: ConeGrid) -> FreeDataSet:
    gen = MinkowskiGenerator(grid)
    return FreeDataSet(grid=grid, preset="minkowski", params={},
                       jets=gen.jets_at(grid.r), generator=gen,
                       dist=None, m=0.0, axisymmetric=True)


def perturbed_free_data(grid: ConeGrid, eps: float = 0.05,
                        mode: int = 2) -> FreeDataSet:
    gen = PerturbedGenerator(grid, eps=eps, mode=mode)
    fds = FreeDataSet(grid=grid, preset="perturbed",
                      params=gen.params, jets=gen.jets_at(grid.r),
                      generator=gen, dist=None, m=0.0, axisymmetric=False)
    report = validate_free_data(fds)
    if not report["passed"]:
        raise ValueError("inadmissible perturbation: "
                         + "; ".join(report["failures"]))
    return fds


def matter_bump_free_data(grid: ConeGrid, amplitude: float = 1.0,
                          center=(1.5, 0.4, 0.0), radii=(0.5, 0.5, 0.5),
                          c1: float = 0.5, c2: float = 0.01,
                          r_f: float | None = None,
                          ramp: float | None = None,
                          m: float = 1.0) -> FreeDataSet:
    """Minkowski background plus a momentum bump with angular offset.

    The offset momentum center (nonzero pi^A component) makes every
    moment field nonzero, so all five hierarchy stages activate.
    """
    if r_f is None:
        r_f = 0.05 * grid.R
    if ramp is None:
        ramp = 0.15 * grid.R
    dist = bump_distribution(center, radii, amplitude, c1, c2, r_f,
                             ramp=ramp, m=m)
    if dist.dim != grid.n:
        raise ValueError("momentum bump dimension must equal n")
    gen = MinkowskiGenerator(grid)
    params = {"amplitude": amplitude, "center": list(center),
              "radii": list(radii), "c1": c1, "c2": c2, "r_f": r_f,
              "ramp": ramp, "m": m}
    return FreeDataSet(grid=grid, preset="matter-bump", params=params,
                       jets=gen.jets_at(grid.r), generator=gen,
                       dist=dist, m=m, axisymmetric=True)


PRESETS = {
    "minkowski": lambda grid, **kw: minkowski_free_data(grid),
    "perturbed": lambda grid, **kw: perturbed_free_data(grid, **kw),
    "matter-bump": lambda grid, **kw: matter_bump_free_data(grid, **kw),
}


def make_free_data(grid: ConeGrid, preset: str, **params) -> FreeDataSet:
    if preset not in PRESETS:
        raise KeyError(f"unknown free-data preset: {preset}")
    return PRESETS[preset](grid, **params)


# ----------------------------------------------------------------------
# validation
# ----------------------------------------------------------------------

def _loglog_slope(y1: np.ndarray, vals: np.ndarray) -> float:
    mask = vals > 0
    if mask.sum() < 3:
        return float("nan")
    x = np.log(y1[mask])
    y = np.log(vals[mask])
    A = np.vstack([x, np.ones_like(x)]).T
    slope, _ = np.linalg.lstsq(A, y, rcond=None)[0]
    return float(slope)


def validate_free_data(fds: FreeDataSet) -> dict:
    """Check admissibility: positivity, divergence scalar, vertex orders."""
    grid = fds.grid
    jets = fds.jets
    failures = []

    # theta < 0 everywhere
    if np.any(jets.th >= 0):
        node = np.unravel_index(int(np.argmax(jets.th)), grid.shape)
        failures.append(f"theta >= 0 at node {node}")

    # gamma SPD: 2x2 check via trace/det
    det = (jets.G[..., 0, 0] * jets.G[..., 1, 1]
           - jets.G[..., 0, 1] ** 2)
    if np.any(det <= 0) or np.any(jets.G[..., 0, 0] <= 0):
        bad = det <= 0
        node = np.unravel_index(int(np.argmax(bad)), grid.shape)
        failures.append(f"gamma not positive definite at node {node}")

    # nowhere-vanishing divergence scalar
    Ginv = invert_angular_metric(jets.G)
    tau = np.einsum("...ab,...ab->...", Ginv, jets.G_1)
    tau_floor = float(np.min(np.abs(tau) * grid.r[:, None, None]))
    if tau_floor < 0.5:  # |tau| >= ~(n-1)/y1 near the vertex; 0.5 is lax
        idx = np.unravel_index(
            int(np.argmin(np.abs(tau) * grid.r[:, None, None])), grid.shape)
        failures.append(f"divergence scalar degenerate near node {idx}")

    # vertex expansions on the inner third
    third = max(4, grid.N_r // 3)
    r_in = grid.r[:third]
    dev_theta = np.max(np.abs(jets.th[:third] + 1.0), axis=(1, 2))
    s, _, _ = round_sphere(grid.theta, grid.phi)
    ratio = jets.G[:third] / (r_in[:, None, None, None, None] ** 2)
    dev_gamma = np.max(np.abs(ratio - s), axis=(1, 2, 3, 4))
    slope_theta = _loglog_slope(r_in, dev_theta)
    slope_gamma = _loglog_slope(r_in, dev_gamma)
    theta_floor = float(np.max(dev_theta)) <= 1e-13
    gamma_floor = float(np.max(dev_gamma)) <= 1e-13
    if not theta_floor and not (slope_theta >= 2.0 * 0.9):
        failures.append(
            f"theta vertex expansion violated (slope {slope_theta:.2f} < 2)")
    if not gamma_floor and not (slope_gamma >= 2.0 * 0.9):
        failures.append(
            f"gamma vertex expansion violated (slope {slope_gamma:.2f} < 2)")

    # matter support rules
    if fds.dist is not None:
        d = fds.dist
        lo, _ = d.support_box()
        if lo[0] < d.c1:
            failures.append("momentum support touches pi^1 < c1")
        if d.r_f <= 0:
            failures.append("r_f must be positive")

    return {
        "passed": not failures,
        "failures": failures,
        "theta_slope": None if theta_floor else slope_theta,
        "gamma_slope": None if gamma_floor else slope_gamma,
        "theta_deviation_max": float(np.max(dev_theta)),
        "gamma_deviation_max": float(np.max(dev_gamma)),
        "divergence_scalar_floor": tau_floor,
    }


def invert_angular_metric(G: np.ndarray) -> np.ndarray:
    """Explicit 2x2 inverse of the angular metric at every node."""
    det = G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0]
    inv = np.empty_like(G)
    inv[..., 0, 0] = G[..., 1, 1] / det
    inv[..., 1, 1] = G[..., 0, 0] / det
    inv[..., 0, 1] = -G[..., 0, 1] / det
    inv[..., 1, 0] = -G[..., 1, 0] / det
    return inv


# ----------------------------------------------------------------------
# conformal rescale (divergence-scalar prescription)
# ----------------------------------------------------------------------

def conformal_rescale(grid: ConeGrid, generator, omega0_sing: float,
                      omega0_smooth=None, n: int = 3):
    """Rescale gamma -> e^omega gamma so the divergence scalar equals
    omega_0 = omega0_sing / y^1 + omega0_smooth(y^1).

    omega(y^1) = -1/(n-1) * integral of (gamma^AB d1 gamma_AB - omega_0).
    The 1/lambda parts are integrated in closed form (log), the smooth
    remainder by 4-point Gauss panels between nodes with the generator
    evaluated at the Gauss abscissae (analytic integrand, no interpolation).

    Returns (omega, d1_omega, rescaled_G) on the grid.  When
    omega0_sing == 2(n-1) the log term is absent and omega(0) = 0;
    otherwise omega is normalized to vanish at y^1 = R.
    """
    if omega0_smooth is None:
        def omega0_smooth(lam):
            return np.zeros((grid.N_theta, grid.N_phi))
    sing_coeff = 2.0 * (n - 1) - float(omega0_sing)
    if abs(float(omega0_sing)) <= 0.0:
        raise ValueError("omega_0 must be nonvanishing for y^1 != 0")

    def smooth_remainder(lam: np.ndarray) -> np.ndarray:
        jets = generator.jets_at(lam)
        Ginv = invert_angular_metric(jets.G)
        tau = np.einsum("...ab,...ab->...", Ginv, jets.G_1)
        rem = tau - 2.0 * (n - 1) / lam[:, None, None]
        for k, lk in enumerate(lam):
            rem[k] -= omega0_smooth(lk)
        return rem

    # 4-point Gauss-Legendre panels [r_{j-1}, r_j], r_0 = 0
    gx, gw = np.polynomial.legendre.leggauss(4)
    edges = np.concatenate([[0.0], grid.r])
    cumulative = np.zeros(grid.shape)
    running = np.zeros((grid.N_theta, grid.N_phi))
    for j in range(grid.N_r):
        a, b = edges[j], edges[j + 1]
        lam = 0.5 * (b - a) * gx + 0.5 * (a + b)
        vals = smooth_remainder(lam)  # (4, Nt, Np)
        panel = 0.5 * (b - a) * pairwise_sum(
            vals * gw[:, None, None], axis=0)
        running = running + panel
        cumulative[j] = running

    omega = -cumulative / (n - 1)
    if abs(sing_coeff) > 1e-14:
        omega = omega - (sing_coeff / (n - 1)) * np.log(
            grid.r / grid.R)[:, None, None]

    jets = generator.jets_at(grid.r)
    Ginv = invert_angular_metric(jets.G)
    tau = np.einsum("...ab,...ab->...", Ginv, jets.G_1)
    omega0_vals = omega0_sing / grid.r[:, None, None] + np.stack(
        [omega0_smooth(rk) + np.zeros((grid.N_theta, grid.N_phi))
         for rk in grid.r])
    d1_omega = -(tau - omega0_vals) / (n - 1)
    rescaled = np.exp(omega)[..., None, None] * jets.G
    return omega, d1_omega, rescaled
