"""
Alternate first-stage schemes: prescribed non-affinity.

The hierarchy in `solver` treats the angular metric Theta as free data
and solves the Hamiltonian constraint algebraically for psi_11, i.e.
for the non-affinity kappa = (2 d1 theta - psi_11)/(2 theta) of the
null generators.  The two schemes here invert that choice: kappa is
prescribed and the Raychaudhuri equation is solved as a radial ODE for
part of the angular metric instead.

Scheme 1 (conformal): Theta = Omega^2 gamma with the conformal class
gamma free.  Raychaudhuri becomes a linear (in vacuum) second order
radial ODE for Omega with Minkowskian vertex values Omega -> 1,
d1 Omega -> 0.

Scheme 2 (shear): the trace-free part of the expansion tensor (the
shear sigma^A_B) is free, and the pair (Theta_AB, trchi) is transported
radially; Raychaudhuri drives the expansion scalar trchi while the
shear drives the conformal class.  The singular vertex transport is
removed by the substitutions Theta = (y^1)^2 Phi and
trchi = (n-1)/y^1 + p, after which the system is regular at y^1 = 0.  An independent linearized route (the substitution V with
trchi = (n-1) d1 V / V, integrated by an adaptive off-the-shelf
stepper) cross-checks the expansion in vacuum.

Both schemes integrate from the exact vertex by the same machinery as
the hierarchy stages: Picard iteration of the Volterra forms on the
innermost nodes, then a product-integration Adams predictor-corrector
that propagates any homogeneous power kernel exactly and interpolates
only the regular part of the right-hand side.

Both schemes reduce to the identity on Minkowski data: Omega = 1,
trchi = (n-1)/y^1, Theta the round metric scaled by (y^1)^2.
"""

from __future__ import annotations

import numpy as np

from .freedata import FreeDataSet, Jets, invert_angular_metric
from .solver import StageError

# ----------------------------------------------------------------------
# shared vertex integrator
# ----------------------------------------------------------------------

def _vertex_ode_march(grid, exps, base, phi, stage, guard=None,
                      picard: int = 6, outer_tail: int = 4):
    """Integrate d1 u_i + (k_i / y^1) u_i = phi_i(y^1, u) from the vertex.

    `exps` lists the per-component singular exponents k_i >= 0, `base`
    the vertex values (necessarily zero wherever k_i > 0), and
    `phi(r, state)` returns the regular right-hand sides on a single
    shell: r is a length-one float array, each state component is
    shaped like the matching base entry with a leading axis of one.

    Startup solves the Volterra forms

        u_i(y) = y^-k_i int_0^y lam^k_i phi_i dlam      (k_i > 0),
        u_i(y) = u_i(0) + int_0^y phi_i dlam            (k_i = 0),

    on the innermost nodes by Picard iteration with panel-wise Gauss
    quadrature and a Lagrange interpolant through the vertex and the
    startup nodes.  The outward march is a predict-evaluate-correct
    step per node with product-integration weights for the kernel
    (lam/y)^k_i; the corrector stencil is quartic near the vertex and
    of width `outer_tail` beyond.  `guard(y, state)` is called at
    every node.
    Returns one full radial array per component.
    """
    from .solver import _GAUSS_X, _GAUSS_W, _product_weights

    grid_r = grid.r
    ncomp = len(exps)
    m = min(4, grid.N_r - 1)
    xs = np.concatenate([[0.0], grid_r[:m]])

    def _bshape(i):
        return (m,) + base[i].shape[1:]

    u_n = [np.broadcast_to(base[i][0], _bshape(i)).copy()
           for i in range(ncomp)]
    lam_g = (0.5 * (xs[1:] - xs[:-1])[:, None]
             * (_GAUSS_X[None, :] + 1.0) + xs[:-1][:, None])
    for _ in range(picard):
        integ = [np.zeros(_bshape(i)) for i in range(ncomp)]
        for j in range(m):
            half = 0.5 * (xs[j + 1] - xs[j])
            for gi in range(4):
                lam = lam_g[j, gi]
                wl = np.ones(len(xs))
                for p in range(len(xs)):
                    for q in range(len(xs)):
                        if q != p:
                            wl[p] *= (lam - xs[q]) / (xs[p] - xs[q])
                state = []
                for i in range(ncomp):
                    sv = wl[0] * base[i][0]
                    for p in range(1, len(xs)):
                        sv = sv + wl[p] * u_n[i][p - 1]
                    state.append(sv[None])
                f = phi([lam], state)
                for i in range(ncomp):
                    integ[i][j] += (half * _GAUSS_W[gi]
                                    * lam ** exps[i] * f[i][0])
        for i in range(ncomp):
            cum = np.cumsum(integ[i], axis=0)
            if exps[i] > 0:
                rk = (grid_r[:m] ** exps[i]).reshape(
                    (m,) + (1,) * (cum.ndim - 1))
                u_n[i] = cum / rk
            else:
                u_n[i] = base[i][0][None] + cum

    out = [np.zeros((grid.N_r,) + base[i].shape[1:]) for i in range(ncomp)]
    for i in range(ncomp):
        out[i][:m] = u_n[i]
    if guard is not None:
        for j in range(m):
            guard(grid_r[j], [u_n[i][j] for i in range(ncomp)])

    hist_y: list = []
    hist_S: list = []
    for j in range(m):
        hist_y.append(grid_r[j])
        hist_S.append(phi([grid_r[j]],
                          [u_n[i][j][None] for i in range(ncomp)]))
    u = [u_n[i][m - 1][None].copy() for i in range(ncomp)]
    for j in range(m, grid.N_r):
        a, b = grid_r[j - 1], grid_r[j]
        by = np.asarray(hist_y)
        Wp = {k: _product_weights(a, b, by, k) for k in set(exps)}
        pred = []
        for i in range(ncomp):
            up = (a / b) ** exps[i] * u[i]
            for q in range(len(by)):
                up = up + Wp[exps[i]][q] * hist_S[q][i]
            pred.append(up)
        Sb = phi([b], pred)
        tail = min(len(by), 4 if b < 0.125 * grid.R else outer_tail)
        cy = np.concatenate([by[-tail:], [b]])
        Wc = {k: _product_weights(a, b, cy, k) for k in set(exps)}
        for _ in range(2):
            corr = []
            for i in range(ncomp):
                uc = (a / b) ** exps[i] * u[i] + Wc[exps[i]][-1] * Sb[i]
                for q in range(tail):
                    uc = uc + Wc[exps[i]][q] * hist_S[len(by) - tail + q][i]
                corr.append(uc)
            Sb = phi([b], corr)
        hist_y = (hist_y + [b])[-5:]
        hist_S = (hist_S + [Sb])[-5:]
        u = corr
        for i in range(ncomp):
            if not np.all(np.isfinite(u[i])):
                raise StageError(stage,
                                 f"non-finite value at y^1 = {b:.4f}")
            out[i][j] = u[i][0]
        if guard is not None:
            guard(b, [u[i][0] for i in range(ncomp)])
    return out


# ----------------------------------------------------------------------
# scheme 1: conformal factor for prescribed non-affinity
# ----------------------------------------------------------------------

def _gamma_scalars(jets: Jets):
    """(gamma^EC d1 gamma_EC, its d1, gamma:gamma d1d1-square) scalars."""
    Ginv = invert_angular_metric(jets.G)
    M = np.einsum("...ac,...cb->...ab", Ginv, jets.G_1)
    t = np.einsum("...aa->...", M)
    Qs = np.einsum("...ab,...ba->...", M, M)
    dt = -Qs + np.einsum("...ab,...ab->...", Ginv, jets.G_11)
    return t, dt, Qs


def _conformal_matter(theta, G_scaled, nodes, wf, m):
    """T_11(theta, Omega^2 gamma) for the conformal source term."""
    from .matter import _shell_moments
    return _shell_moments(theta, G_scaled, nodes, wf, m)["T11"]


def conformal_scheme(fds: FreeDataSet, kappa, n: int = 3):
    """First constraint solved by a conformal factor Omega.

    Free data: the angular metric gamma (from `fds`), the non-affinity
    function kappa (callable of y^1 returning an array broadcastable to
    one radial shell, or a constant), theta, f and m.  Integrates the
    second order radial ODE

        2 Omega'' + 2 a Omega' + b Omega = 2 Omega T_11 / (n - 1),

    a = -kappa + t/(n-1), b = d1 t/(n-1) - kappa t/(n-1) + q/(2(n-1)),
    with t = gamma^EC d1 gamma_EC and q the squared radial derivative
    contraction, starting from Minkowskian vertex values Omega -> 1,
    Omega' -> 0.  Returns (Omega, Theta = Omega^2 gamma, psi11) with
    psi11 recovered from kappa via kappa = (2 d1 theta - psi11)/(2 theta).

    The damping coefficient carries the vertex singularity
    a = 2/y^1 + regular, so the equation is integrated as the pair
    (u = d1 Omega with power kernel exponent 2, Omega with exponent 0)
    by the shared vertex integrator.  T_11 is evaluated with the
    current Omega at every evaluation radius.
    """
    grid = fds.grid
    gen = fds.generator
    if gen is None:
        raise StageError("conformal", "scheme needs an analytic generator")
    kap = kappa if callable(kappa) else (
        lambda r, _k=float(kappa): np.full((len(r), grid.N_theta,
                                            grid.N_phi), _k))
    if fds.dist is not None:
        from .matter import distribution_quadrature
        nodes, weights, fvals = distribution_quadrature(fds.dist)
        wf = weights * fvals
        profile = fds.dist.radial_profile
    else:
        nodes = wf = None
        profile = None

    shell = (1, grid.N_theta, grid.N_phi)

    def phi_u(r, om, u):
        """Regular part of the u equation: u' + (2/y^1) u = phi_u."""
        r = np.asarray(r, dtype=float)
        jets = gen.jets_at(r)
        t, dt, q = _gamma_scalars(jets)
        kv = np.asarray(kap(r))
        rr = r[:, None, None]
        abar = -kv + t / (n - 1) - 2.0 / rr
        bhalf = 0.5 * (dt / (n - 1) - kv * t / (n - 1)
                       + 0.5 * q / (n - 1))
        out = -abar * u - bhalf * om
        if nodes is not None:
            pr = float(profile(float(r[0])))
            if pr > 0.0:
                Gsc = (om ** 2)[..., None, None] * jets.G
                T11 = pr * _conformal_matter(jets.th, Gsc,
                                             nodes, wf, fds.dist.m)
                out = out + om * T11 / (n - 1)
        return out

    def phi(r, state):
        u, om = state
        return [phi_u(r, om, u), u]

    def guard(b, state):
        if np.any(state[1] <= 0.0):
            raise StageError("conformal", f"Omega <= 0 at y^1 = {b:.4f}")

    base = [np.zeros(shell), np.ones(shell)]
    _, Om = _vertex_ode_march(grid, (2.0, 0.0), base, phi,
                              stage="conformal", guard=guard)

    Theta = (Om ** 2)[..., None, None] * fds.jets.G
    kv = np.asarray(kap(grid.r))
    psi11 = 2.0 * fds.jets.th_1 - 2.0 * fds.jets.th * kv
    return Om, Theta, psi11


# ----------------------------------------------------------------------
# alternate scheme 2: shear and non-affinity as free data
# ----------------------------------------------------------------------

def shear_scheme(fds: FreeDataSet, sigma=None, kappa=0.0, n: int = 3):
    """Angular metric transport from prescribed shear components.

    sigma: callable of y^1 returning the mixed-index shear (shape
    (1, N_theta, N_phi, 2, 2), trace-free), or None for zero shear.
    kappa: non-affinity (constant or callable as in conformal_scheme).
    theta, f, m come from `fds`.

    Integrates, per ray,

        d1 Theta_AB = 2 Theta_AC sigma^C_B + (2 trchi/(n-1)) Theta_AB,
        d1 trchi    = kappa trchi - trchi^2/(n-1) - sigma:sigma + T_11,

    the expansion equation being the Hamiltonian constraint rewritten
    through trchi = Theta^AB d1 Theta_AB / 2 and the non-affinity
    relation kappa = (2 d1 theta - psi_11)/(2 theta); the d1 theta
    contributions cancel identically in that reduction, leaving the
    bare kappa coefficient.

    The vertex singularity is removed by the substitutions
    Theta = (y^1)^2 Phi (Phi -> round metric, exponent 0) and
    trchi = (n-1)/y^1 + p (p -> 0 like y^1 at the vertex, exponent 2),
    after which both components are regular and are integrated by the
    shared vertex integrator.  Returns (Theta, trchi).
    """
    grid = fds.grid
    gen = fds.generator
    if gen is None:
        raise StageError("shear", "scheme needs an analytic generator")
    from .freedata import round_sphere
    s_round, _, _ = round_sphere(grid.theta, grid.phi)
    shell = (1, grid.N_theta, grid.N_phi)
    sig = sigma if sigma is not None else (
        lambda r: np.zeros(shell + (2, 2)))
    kap = kappa if callable(kappa) else (
        lambda r, _k=float(kappa): np.full(shell, _k))

    if fds.dist is not None:
        from .matter import distribution_quadrature, _shell_moments
        nodes, weights, fvals = distribution_quadrature(fds.dist)
        wf = weights * fvals
    else:
        nodes = None

    c = float(n - 1)

    def phi(r, state):
        Phi, p = state
        r = np.asarray(r, dtype=float)
        rr = float(r[0])
        sg = np.asarray(sig(r))
        trsig2 = np.einsum("...ab,...ba->...", sg, sg)
        kv = np.asarray(kap(r))
        T11 = np.zeros(shell)
        if nodes is not None:
            pr = float(fds.dist.radial_profile(rr))
            if pr > 0.0:
                jets = gen.jets_at(r)
                G_cur = rr ** 2 * Phi
                T11 = pr * _shell_moments(jets.th, G_cur, nodes, wf,
                                          fds.dist.m)["T11"]
        dp = kv * (c / rr + p) - p ** 2 / c + T11 - trsig2
        dPhi = (2.0 * np.einsum("...ac,...cb->...ab", Phi, sg)
                + (2.0 * p / c)[..., None, None] * Phi)
        return [dPhi, dp]

    def guard(b, state):
        Phi, p = state
        det = Phi[..., 0, 0] * Phi[..., 1, 1] - Phi[..., 0, 1] ** 2
        if np.any(det <= 0.0) or np.any(Phi[..., 0, 0] <= 0.0):
            raise StageError("shear",
                             f"angular metric lost positivity at "
                             f"y^1 = {b:.4f}")
        if np.any(c / b + p <= 0.0):
            raise StageError("shear",
                             f"expansion crossed zero at y^1 = {b:.4f}")

    base = [s_round[None].copy(), np.zeros(shell)]
    Phi_tab, p_tab = _vertex_ode_march(grid, (0.0, 2.0), base, phi,
                                       stage="shear", guard=guard)
    r2 = (grid.r ** 2)[:, None, None]
    Theta = r2[..., None, None] * Phi_tab
    trchi = c / grid.r[:, None, None] + p_tab
    return Theta, trchi


def shear_expansion_linearized(fds: FreeDataSet, sigma=None, kappa=0.0,
                               n: int = 3, rtol: float = 1e-10):
    """Expansion from the linearizing substitution V = exp(int trchi/(n-1)).

    Solves the second order linear equation

        V'' - kappa V' + (T_11 - sigma:sigma)/(1-n) V = 0,
        V(0) = 0,  V'(0) = 1,

    with an independent adaptive integrator (scipy RK45) and returns
    trchi = (n-1) V'/V on the grid.  Matter requires the transported
    Theta, so this route is intended for the vacuum cross-check.
    """
    from scipy.integrate import solve_ivp
    grid = fds.grid
    gen = fds.generator
    shell = (1, grid.N_theta, grid.N_phi)
    sig = sigma if sigma is not None else (
        lambda r: np.zeros(shell + (2, 2)))
    kap = kappa if callable(kappa) else (
        lambda r, _k=float(kappa): np.full(shell, _k))
    if fds.dist is not None:
        raise ValueError("linearized expansion cross-check is vacuum only")
    size = grid.N_theta * grid.N_phi

    def rhs(r, y):
        V = y[:size].reshape(shell[1:])
        dV = y[size:].reshape(shell[1:])
        kv = np.asarray(kap(np.asarray([r])))[0]
        sg = np.asarray(sig(np.asarray([r])))[0]
        trsig2 = np.einsum("...ab,...ba->...", sg, sg)
        ddV = kv * dV + (0.0 - trsig2) / (n - 1) * V
        return np.concatenate([dV.ravel(), ddV.ravel()])

    t0 = 1e-8
    y0 = np.concatenate([np.full(size, t0), np.ones(size)])
    sol = solve_ivp(rhs, (t0, grid.R), y0, t_eval=grid.r,
                    rtol=rtol, atol=1e-13, method="RK45")
    if not sol.success:
        raise StageError("shear", "linearized expansion solve failed")
    V = sol.y[:size].T.reshape(grid.shape)
    dV = sol.y[size:].T.reshape(grid.shape)
    return (n - 1) * dV / V
