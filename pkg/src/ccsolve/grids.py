"""
Cone and momentum-space discretization.

Coordinates on the light cone: radial parameter y^1 along the null
generators and angular coordinates y^A on the (n-1)-sphere.  For n=3 the
angular chart is standard spherical (theta, phi) with polar caps of
half-angle delta excluded:

    y^1_j   = j*h,          h = R/N_r,  j = 1..N_r   (no vertex node),
    theta_k in [delta, pi-delta]  uniform, closed endpoints,
    phi_l   in [0, 2*pi)          uniform, periodic.

Scalar fields are arrays of shape (N_r, N_theta, N_phi); angular one-forms
carry a trailing axis of length n-1 and angular 2-tensors two such axes.
Angular index A in {2..n} maps to array axis value A-2 (A=2 <-> theta,
A=3 <-> phi for n=3).

Differential operators are finite differences of selectable accuracy
(default 4th order): central stencils in the interior, one-sided stencils
of the same order at radial and theta boundaries, periodic wrap in phi.
Stencil weights come from a Fornberg-style generator, so polynomial
exactness up to the stencil order holds by construction.

For n > 3 the grid bookkeeping (node placement, index ranges) is
supported, but the geometry/solver modules only implement n = 3.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


# ----------------------------------------------------------------------
# momentum box
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class MomentumBox:
    """Axis-aligned box in momentum space (pi^1, pi^2, ..., pi^n).

    The first axis is pi^1; its lower bound must stay strictly positive
    (the mass-shell root needs pi^1 >= c_1 > 0 on the support of f).
    """
    lower: tuple
    upper: tuple
    nodes_per_dim: int = 8

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("momentum box bounds must be 1-d and matching")
        if np.any(hi <= lo):
            raise ValueError("momentum box has empty extent on some axis")
        if lo[0] <= 0.0:
            raise ValueError(
                "momentum box touches pi^1 <= 0; the mass-shell root "
                "requires pi^1 >= c_1 > 0")
        if self.nodes_per_dim < 2:
            raise ValueError("nodes_per_dim < 2")

    @property
    def dim(self) -> int:
        return len(self.lower)


# ----------------------------------------------------------------------
# cone grid
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ConeGrid:
    """Discretization of the cone: radial nodes x angular chart nodes."""
    n: int
    R: float
    N_r: int
    N_theta: int
    N_phi: int
    delta: float
    momentum_box: MomentumBox
    r: np.ndarray = field(repr=False)          # (N_r,)  y^1 nodes, j*h
    theta: np.ndarray = field(repr=False)      # (N_theta,)
    phi: np.ndarray = field(repr=False)        # (N_phi,)
    h: float = 0.0
    dtheta: float = 0.0
    dphi: float = 0.0

    @property
    def shape(self):
        return (self.N_r, self.N_theta, self.N_phi)

    @property
    def n_angular(self) -> int:
        """Number of angular coordinate directions (= n - 1)."""
        return self.n - 1

    @property
    def node_count(self) -> int:
        return self.N_r * self.N_theta * self.N_phi

    def mesh(self):
        """Broadcastable (y1, theta, phi) arrays of the grid shape."""
        return (self.r[:, None, None],
                self.theta[None, :, None],
                self.phi[None, None, :])

    def interior_mask(self) -> np.ndarray:
        """Boolean mask selecting nodes used in residual norms.

        Excludes the first radial node (singular-startup cell) and a
        band of theta rows at each cap boundary.  The band width scales
        with N_theta (a fixed angular strip, at least two rows), because
        the one-sided chart-boundary stencils are lower order by
        construction and their error is row-localized.
        """
        rows = max(2, self.N_theta // 8 + 1)
        m = np.zeros(self.shape, dtype=bool)
        m[1:, rows:-rows, :] = True
        return m


def build_grid(n: int, R: float, N_r: int, N_theta: int, N_phi: int,
               delta: float,
               momentum_box: MomentumBox | None = None) -> ConeGrid:
    """Construct a ConeGrid; validates every invariant."""
    if n < 3:
        raise ValueError("spatial dimension n must be >= 3")
    if min(N_r, N_theta, N_phi) < 4:
        raise ValueError("need at least 4 nodes per direction")
    if not (0.0 < delta < np.pi / 4):
        raise ValueError("polar-cap half-angle delta must lie in (0, pi/4)")
    if R <= 0.0:
        raise ValueError("radial extent R must be positive")
    if momentum_box is not None and momentum_box.dim != n:
        raise ValueError("momentum box dimension must equal n")
    h = R / N_r
    r = h * np.arange(1, N_r + 1, dtype=float)
    theta = np.linspace(delta, np.pi - delta, N_theta)
    phi = np.arange(N_phi) * (2.0 * np.pi / N_phi)
    return ConeGrid(n=n, R=float(R), N_r=N_r, N_theta=N_theta, N_phi=N_phi,
                    delta=float(delta), momentum_box=momentum_box,
                    r=r, theta=theta, phi=phi,
                    h=h, dtheta=float(theta[1] - theta[0]),
                    dphi=float(phi[1] - phi[0]))


# ----------------------------------------------------------------------
# finite-difference weights (Fornberg's algorithm)
# ----------------------------------------------------------------------

def fd_weights(z: float, x: np.ndarray, m: int) -> np.ndarray:
    """Weights w s.t. sum_k w[k] f(x[k]) approximates d^m f / dx^m at z.

    Classic recursive generation of finite-difference weights on
    arbitrary nodes; exact for polynomials of degree len(x)-1.
    """
    x = np.asarray(x, dtype=float)
    nn = len(x)
    if m >= nn:
        raise ValueError("stencil too short for requested derivative")
    c = np.zeros((nn, m + 1))
    c[0, 0] = 1.0
    c1 = 1.0
    c4 = x[0] - z
    for i in range(1, nn):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1]
                                    - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


@lru_cache(maxsize=None)
def _diff_matrix_cached(N: int, h: float, order: int, acc: int) -> np.ndarray:
    """Dense differentiation matrix on N uniform nodes, spacing h.

    Interior rows use centered stencils of width acc+1 (first derivative)
    or acc+1+(order-1) nodes as needed; boundary rows slide the stencil
    window inward and take two extra nodes.  The extra exactness absorbs
    the order lost when a derived field carrying row-dependent stencil
    error is differentiated again (each pass over rough, row-localized
    error costs one power of h), keeping chained derivative evaluations
    at full order up to the chart boundary.
    """
    if order not in (1, 2):
        raise ValueError("derivative order must be 1 or 2")
    width = acc + order  # nodes needed for accuracy `acc`
    if width % 2 == 0:
        width += 1       # keep stencils symmetric-capable
    if N < width:
        raise ValueError(f"need at least {width} nodes for acc={acc}")
    D = np.zeros((N, N))
    half = width // 2
    x = np.arange(N, dtype=float) * h
    for i in range(N):
        if half <= i <= N - 1 - half:
            idx = np.arange(i - half, i - half + width)
        else:
            wb = min(width + 2, N)
            lo = min(max(i - wb // 2, 0), N - wb)
            idx = np.arange(lo, lo + wb)
        D[i, idx] = fd_weights(x[i], x[idx], order)
    return D


def diff_matrix(N: int, h: float, order: int, acc: int = 4) -> np.ndarray:
    return _diff_matrix_cached(N, float(h), order, acc)


@lru_cache(maxsize=None)
def _periodic_stencil_cached(h: float, order: int, acc: int) -> np.ndarray:
    width = acc + order
    if width % 2 == 0:
        width += 1
    half = width // 2
    x = np.arange(-half, half + 1, dtype=float) * h
    return fd_weights(0.0, x, order)


def periodic_stencil(h: float, order: int, acc: int = 4) -> np.ndarray:
    """Centered stencil weights for a uniform periodic direction."""
    return _periodic_stencil_cached(float(h), order, acc)


def apply_along_axis_matrix(values: np.ndarray, D: np.ndarray,
                            axis: int) -> np.ndarray:
    v = np.moveaxis(values, axis, 0)
    out = np.tensordot(D, v, axes=(1, 0))
    return np.moveaxis(out, 0, axis)


def apply_periodic_stencil(values: np.ndarray, w: np.ndarray,
                           axis: int) -> np.ndarray:
    half = len(w) // 2
    out = np.zeros_like(values, dtype=float)
    for k, wk in enumerate(w):
        shift = k - half
        if wk != 0.0:
            out += wk * np.roll(values, -shift, axis=axis)
    return out


# ----------------------------------------------------------------------
# grid derivative operators
# ----------------------------------------------------------------------

def radial_derivative(values: np.ndarray, grid: ConeGrid, order: int = 1,
                      acc: int = 4) -> np.ndarray:
    """d/dy^1 (order=1) or d^2/d(y^1)^2 (order=2) along the rays."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    D = diff_matrix(grid.N_r, grid.h, order, acc)
    return apply_along_axis_matrix(np.asarray(values, dtype=float), D, 0)


def angular_derivative(values: np.ndarray, grid: ConeGrid, A: int,
                       order: int = 1, acc: int = 4) -> np.ndarray:
    """d/dy^A on the chart; A in {2..n}. Periodic wrap in phi (A = n)."""
    if grid.n != 3:
        raise NotImplementedError("angular derivatives implemented for n=3")
    if A not in (2, 3):
        raise ValueError("angular index A must be 2 (theta) or 3 (phi)")
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    v = np.asarray(values, dtype=float)
    if A == 2:
        D = diff_matrix(grid.N_theta, grid.dtheta, order, acc)
        return apply_along_axis_matrix(v, D, 1)
    w = periodic_stencil(grid.dphi, order, acc)
    return apply_periodic_stencil(v, w, 2)


# ----------------------------------------------------------------------
# Cartesian <-> null coordinate maps (n = 3)
# ----------------------------------------------------------------------

def null_from_cartesian(x: np.ndarray):
    """(x^0, x^1, x^2, x^3) -> (y^0, y^1, theta, phi)."""
    x = np.asarray(x, dtype=float)
    r = np.sqrt(x[1] ** 2 + x[2] ** 2 + x[3] ** 2)
    if r == 0.0:
        raise ValueError("angular coordinates undefined at the vertex r=0")
    theta = np.arccos(np.clip(x[3] / r, -1.0, 1.0))
    phi = np.arctan2(x[2], x[1]) % (2.0 * np.pi)
    return np.array([x[0] - r, r, theta, phi])


def cartesian_from_null(y: np.ndarray):
    """(y^0, y^1, theta, phi) -> (x^0, x^1, x^2, x^3)."""
    y0, y1, th, ph = np.asarray(y, dtype=float)
    direction = np.array([np.sin(th) * np.cos(ph),
                          np.sin(th) * np.sin(ph),
                          np.cos(th)])
    x0 = y0 + y1
    return np.concatenate([[x0], y1 * direction])


def unit_direction(theta: float, phi: float) -> np.ndarray:
    return np.array([np.sin(theta) * np.cos(phi),
                     np.sin(theta) * np.sin(phi),
                     np.cos(theta)])


def angular_jacobian(y1: float, theta: float, phi: float) -> np.ndarray:
    """J[A-2, s-1] = dy^A/dx^s = (1/y^1)(dy^A/du^s - (dy^A/du^k) u^k u^s).

    u^i is the unit direction; dtheta/du = (0, 0, -1/sin(theta)) and
    dphi/du = (-sin(phi), cos(phi), 0)/sin(theta) in the spherical chart.
    """
    if y1 <= 0.0:
        raise ValueError("Jacobian undefined at the vertex y^1 = 0")
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    if st == 0.0:
        raise ValueError("chart singular at the pole")
    u = unit_direction(theta, phi)
    dy_du = np.array([[0.0, 0.0, -1.0 / st],
                      [-sp / st, cp / st, 0.0]])
    proj = dy_du @ u  # (dy^A/du^k) u^k
    J = (dy_du - np.outer(proj, u)) / y1
    return J


def cartesian_null_maps(point: np.ndarray):
    """Forward map, inverse map and angular Jacobian at a spacetime point.

    Returns (y, x_roundtrip, J) where y = null coordinates of `point`,
    x_roundtrip = cartesian_from_null(y), and J = dy^A/dx^s (2 x 3).
    """
    y = null_from_cartesian(point)
    x_back = cartesian_from_null(y)
    J = angular_jacobian(y[1], y[2], y[3])
    return y, x_back, J


# ----------------------------------------------------------------------
# field containers
# ----------------------------------------------------------------------

@dataclass
class Field:
    """A named grid function: scalar, angular one-form or 2-tensor.

    kind: 'scalar' (shape grid.shape), 'oneform' (+(n-1,)),
    'tensor' (+(n-1, n-1), symmetric enforced on construction).
    """
    name: str
    kind: str
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.kind == "tensor":
            sym_defect = np.max(np.abs(
                self.values - np.swapaxes(self.values, -1, -2)))
            if sym_defect > 1e-12 * max(1.0, np.max(np.abs(self.values))):
                raise ValueError(
                    f"tensor field {self.name} not symmetric "
                    f"(defect {sym_defect:.3e})")
            self.values = 0.5 * (self.values
                                 + np.swapaxes(self.values, -1, -2))


def symmetrize(t: np.ndarray) -> np.ndarray:
    return 0.5 * (t + np.swapaxes(t, -1, -2))
