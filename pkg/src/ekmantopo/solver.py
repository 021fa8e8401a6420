"""Direct axisymmetric solver for the rotating Stokes system over topography.

Solves, in terrain-following coordinates over the disk-shore topography,

    du/dt - eps beta Lap u + (1/eps) e_z ^ u = -(1/eps) grad p,
    div u = 0,   u = 0 on every wall,

for the cylindrical components (u_r, u_theta, u_z) of an axisymmetric flow,
with optional explicit advection.  The domain is the annular column
r in [r_min, r_out], z in (-phi(rho), 0), mapped to sigma = z/phi in [-1, 0];
the shore is truncated at phi(rho_min) = 2 eps^(1-a) with a no-slip wall
(both the limit profile and well-prepared solutions are asymptotically
negligible there, and the wall-sensitivity check quantifies the truncation).

Discretization notes.

* Staggering: u_r and u_theta live on radial faces at sigma centers (their
  collocation makes the Coriolis rotation an exact pointwise isometry),
  u_z on sigma faces at radial centers, pressure at cell centers.
* Each diffusion substep inverts (V + eps beta dt L) with L assembled from
  the mapped gradient quadratic form

      |grad u|^2 = (u_r|sigma + A u_sigma)^2 + u_sigma^2/phi^2,
      A = -sigma phi'/phi,

  plus the -u/r^2 curvature sink for u_r, u_theta.  L is symmetric positive
  semidefinite by construction, so every substep strictly dissipates the
  discrete energy -- the linear scheme satisfies the energy inequality to
  rounding, which the run loop asserts each step.
* The projection acts on (u_r, Omega) with Omega = u_z - sigma phi' u_r the
  terrain-crossing flux, whose MAC divergence is

      div u = (r u_r)_r / r + Omega_sigma / phi.

  It is orthogonal in the physical energy metric M (so it cannot create
  energy); M has a diagonal Schur complement, making M^-1 exact and cheap.
  The Poisson solve is preconditioned conjugate gradients to relative
  residual 1e-12, with iteration diagnostics on failure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dual import value_of
from .geometry import Topography, lambda_phi
from .profiles import AnsatzParams, assemble_components

__all__ = ["Grid2D", "SolverState", "StokesCoriolisSolver", "SolverError", "ConfigError"]


class SolverError(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


def _stretched_sigma(nz: int, gamma: float = 0.7):
    """sigma faces on [-1, 0] clustered at both ends (spacing ~ (1-gamma)/nz)."""
    s = np.linspace(0.0, 1.0, nz + 1)
    return -1.0 + (s - gamma / (2 * np.pi) * np.sin(2 * np.pi * s))


@dataclass
class Grid2D:
    """Staggered (r, sigma) grid over the truncated ocean annulus."""

    topo: Topography
    r_min: float
    r_out: float
    nr: int
    nz: int
    gamma: float = 0.7

    def __post_init__(self):
        if self.r_min <= self.topo.shore.R:
            raise ConfigError("r_min must sit outside the shore circle")
        self.r_f = np.linspace(self.r_min, self.r_out, self.nr + 1)
        self.r_c = 0.5 * (self.r_f[1:] + self.r_f[:-1])
        self.dr = self.r_f[1] - self.r_f[0]
        self.sig_f = _stretched_sigma(self.nz, self.gamma)
        self.sig_c = 0.5 * (self.sig_f[1:] + self.sig_f[:-1])
        self.dsig_c = np.diff(self.sig_f)  # cell heights
        R = self.topo.shore.R
        self.rho_f = self.r_f - R
        self.rho_c = self.r_c - R
        self.phi_f = value_of(self.topo.depth.phi(self.rho_f))
        self.phi_c = value_of(self.topo.depth.phi(self.rho_c))
        self.dphi_f = value_of(self.topo.depth.dphi(self.rho_f))
        self.dphi_c = value_of(self.topo.depth.dphi(self.rho_c))
        if np.any(self.phi_c <= 0) or np.any(self.phi_f <= 0):
            raise ConfigError("sigma map degenerate: phi must stay positive")

    def min_wall_spacing(self):
        """Smallest physical vertical spacing adjacent to lid or bottom."""
        d_top = self.dsig_c[-1] * self.phi_c
        d_bot = self.dsig_c[0] * self.phi_c
        return float(min(d_top.min(), d_bot.min()))

    def require_layer_resolution(self, sqrtE: float):
        need = sqrtE / 4.0
        have = self.min_wall_spacing()
        if have > need:
            factor = have / need
            raise ConfigError(
                f"vertical grid under-resolves the Ekman layer: wall spacing "
                f"{have:.3e} exceeds sqrt(E)/4 = {need:.3e}; increase solver.nz "
                f"to at least {int(np.ceil(self.nz * factor))} or increase eps"
            )


@dataclass
class SolverState:
    t: float
    u_r: np.ndarray  # (nr+1, nz), boundary faces zero
    u_th: np.ndarray  # (nr+1, nz)
    u_z: np.ndarray  # (nr, nz+1), wall sigma-faces zero
    p: np.ndarray  # (nr, nz)


# ---------------------------------------------------------------------------
# operator assembly helpers
# ---------------------------------------------------------------------------


def _face_index(nr, nz):
    """Interior unknown indices for face-located scalars (drop i=0, i=nr)."""
    ii, jj = np.meshgrid(np.arange(1, nr), np.arange(nz), indexing="ij")
    idx = -np.ones((nr + 1, nz), dtype=int)
    idx[1:nr, :] = np.arange((nr - 1) * nz).reshape(nr - 1, nz)
    return idx, ii.ravel(), jj.ravel()


def _zface_index(nr, nz):
    """Interior unknowns for sigma-face scalars (drop j=0, j=nz)."""
    idx = -np.ones((nr, nz + 1), dtype=int)
    idx[:, 1:nz] = np.arange(nr * (nz - 1)).reshape(nr, nz - 1)
    return idx


def _coo(rows, cols, vals, shape):
    return sp.csr_matrix(sp.coo_matrix((vals, (rows, cols)), shape=shape))


class _GradSamples:
    """Accumulate gradient samples G (rows) with weights to build G^T W G."""

    def __init__(self, n_unknown):
        self.rows = []
        self.cols = []
        self.vals = []
        self.weights = []
        self.n_row = 0
        self.n_unknown = n_unknown

    def add(self, entries, weight):
        """entries: list of (unknown_index, coeff); index -1 means Dirichlet 0."""
        for idx, coeff in entries:
            if idx >= 0:
                self.rows.append(self.n_row)
                self.cols.append(idx)
                self.vals.append(coeff)
        self.weights.append(weight)
        self.n_row += 1

    def assemble(self):
        G = _coo(self.rows, self.cols, self.vals, (self.n_row, self.n_unknown))
        W = sp.diags(np.asarray(self.weights))
        return (G.T @ W @ G).tocsc()


def _build_face_laplacian(grid: Grid2D, sink: bool):
    """Energy-form Laplacian for scalars on (r-face, sigma-center) nodes."""
    nr, nz = grid.nr, grid.nz
    idx, _, _ = _face_index(nr, nz)
    n_unk = (nr - 1) * nz
    gs = _GradSamples(n_unk)
    dr = grid.dr
    sig_c, sig_f = grid.sig_c, grid.sig_f

    # vertical gradient samples at (r-face i, sigma-face j), 1/phi^2 term
    for i in range(1, nr):
        phi = grid.phi_f[i]
        w_r = grid.r_f[i] * dr
        for j in range(nz + 1):
            if j == 0:
                h = (sig_c[0] - sig_f[0]) * phi
                entries = [(idx[i, 0], 1.0 / h)]
                span = sig_c[0] - sig_f[0]
            elif j == nz:
                h = (sig_f[nz] - sig_c[nz - 1]) * phi
                entries = [(idx[i, nz - 1], -1.0 / h)]
                span = sig_f[nz] - sig_c[nz - 1]
            else:
                h = (sig_c[j] - sig_c[j - 1]) * phi
                entries = [(idx[i, j], 1.0 / h), (idx[i, j - 1], -1.0 / h)]
                span = sig_c[j] - sig_c[j - 1]
            gs.add(entries, TWO_PI * w_r * phi * span)

    # (d_r + A d_sigma) samples at cell centers
    for i in range(nr):
        phi = grid.phi_c[i]
        Acoef = -grid.dphi_c[i] / phi
        w = grid.r_c[i] * dr * phi
        for j in range(nz):
            entries = {}

            def acc(index, coeff):
                if index >= 0:
                    entries[index] = entries.get(index, 0.0) + coeff

            acc(idx[i + 1, j], 1.0 / dr)
            acc(idx[i, j], -1.0 / dr)
            # wide vertical difference averaged from the four face samples
            Av = Acoef * grid.sig_c[j]
            for fi in (i, i + 1):
                for fj in (j, j + 1):
                    if fj == 0:
                        h = (sig_c[0] - sig_f[0]) * grid.phi_f[fi]
                        acc(idx[fi, 0], 0.25 * Av / h)
                    elif fj == nz:
                        h = (sig_f[nz] - sig_c[nz - 1]) * grid.phi_f[fi]
                        acc(idx[fi, nz - 1], -0.25 * Av / h)
                    else:
                        h = (sig_c[fj] - sig_c[fj - 1]) * grid.phi_f[fi]
                        acc(idx[fi, fj], 0.25 * Av / h)
                        acc(idx[fi, fj - 1], -0.25 * Av / h)
            gs.add(list(entries.items()), TWO_PI * w * grid.dsig_c[j])

    L = gs.assemble()
    if sink:
        V = _face_volumes(grid).ravel()
        rr = np.repeat(grid.r_f[1:nr], nz)
        L = L + sp.diags(V / rr**2)
    return L


def _build_zface_laplacian(grid: Grid2D):
    """Energy-form Laplacian for scalars on (r-center, sigma-face) nodes."""
    nr, nz = grid.nr, grid.nz
    idx = _zface_index(nr, nz)
    n_unk = nr * (nz - 1)
    gs = _GradSamples(n_unk)
    dr = grid.dr
    sig_c, sig_f = grid.sig_c, grid.sig_f

    # vertical samples at sigma centers (compact), 1/phi^2 term
    for i in range(nr):
        phi = grid.phi_c[i]
        w_r = grid.r_c[i] * dr
        for j in range(nz):
            h = grid.dsig_c[j] * phi
            entries = [(idx[i, j + 1], 1.0 / h), (idx[i, j], -1.0 / h)]
            gs.add(entries, TWO_PI * w_r * phi * grid.dsig_c[j])

    # (d_r + A d_sigma) samples at (r-face, sigma-face interior) nodes
    dsig_zf = np.empty(nz + 1)
    dsig_zf[1:nz] = sig_c[1:] - sig_c[:-1]
    dsig_zf[0] = sig_c[0] - sig_f[0]
    dsig_zf[nz] = sig_f[nz] - sig_c[nz - 1]
    for i in range(nr + 1):
        phi = grid.phi_f[i]
        Acoef = -grid.dphi_f[i] / phi
        w = grid.r_f[i] * dr * phi
        for j in range(1, nz):
            entries = {}

            def acc(index, coeff):
                if index >= 0:
                    entries[index] = entries.get(index, 0.0) + coeff

            if i == 0:
                acc(idx[0, j], 1.0 / (0.5 * dr))
            elif i == nr:
                acc(idx[nr - 1, j], -1.0 / (0.5 * dr))
            else:
                acc(idx[i, j], 1.0 / dr)
                acc(idx[i - 1, j], -1.0 / dr)
            Av = Acoef * sig_f[j]
            cols = (i - 1, i) if 0 < i < nr else ((0, 0) if i == 0 else (nr - 1, nr - 1))
            for ci in cols:
                for cj in (j - 1, j):
                    h = grid.dsig_c[cj] * grid.phi_c[ci]
                    acc(idx[ci, cj + 1], 0.5 * 0.5 * Av / h)
                    acc(idx[ci, cj], -0.5 * 0.5 * Av / h)
            gs.add(list(entries.items()), TWO_PI * w * dsig_zf[j])
    return gs.assemble()


TWO_PI = 2.0 * np.pi  # azimuthal measure of the axisymmetric volume element


def _face_volumes(grid: Grid2D):
    return (
        TWO_PI
        * grid.r_f[1 : grid.nr, None]
        * grid.dr
        * grid.phi_f[1 : grid.nr, None]
        * grid.dsig_c[None, :]
    )


def _zface_volumes(grid: Grid2D):
    sig_c, sig_f, nz = grid.sig_c, grid.sig_f, grid.nz
    dsig_zf = sig_c[1:] - sig_c[:-1]
    return (
        TWO_PI * grid.r_c[:, None] * grid.dr * grid.phi_c[:, None] * dsig_zf[None, :]
    )


def _cell_volumes(grid: Grid2D):
    return (
        TWO_PI * grid.r_c[:, None] * grid.dr * grid.phi_c[:, None]
        * grid.dsig_c[None, :]
    )


# ---------------------------------------------------------------------------
# the solver
# ---------------------------------------------------------------------------


class StokesCoriolisSolver:
    """Time stepper with exact rotation, implicit diffusion, energy projection."""

    def __init__(self, params: AnsatzParams, grid: Grid2D, dt: float,
                 nonlinear: bool = False, poisson_tol: float = 1e-12):
        self.params = params
        self.grid = grid
        self.dt = float(dt)
        self.nonlinear = bool(nonlinear)
        self.poisson_tol = poisson_tol
        grid.require_layer_resolution(params.sqrtE)
        nu = params.eps * params.topo.beta
        self.nu = nu

        self.V_face = _face_volumes(grid)
        self.V_zface = _zface_volumes(grid)
        self.V_cell = _cell_volumes(grid)

        self.L_face_sink = _build_face_laplacian(grid, sink=True)
        self.L_zface = _build_zface_laplacian(grid)
        Vf = sp.diags(self.V_face.ravel())
        Vz = sp.diags(self.V_zface.ravel())
        self._diff_face = spla.splu((Vf + nu * self.dt * self.L_face_sink).tocsc())
        self._diff_zface = spla.splu((Vz + nu * self.dt * self.L_zface).tocsc())
        self._build_projection()
        self.last_poisson_iters = 0

    # -- projection machinery ------------------------------------------------

    def _build_projection(self):
        g = self.grid
        nr, nz = g.nr, g.nz
        n_r = (nr - 1) * nz
        n_o = nr * (nz - 1)
        idx_f, _, _ = _face_index(nr, nz)
        idx_z = _zface_index(nr, nz)

        rows, cols, vals = [], [], []
        n_cell = nr * nz

        def cell(i, j):
            return i * nz + j

        # flux form: r phi div = d_r(r phi u_r)|sigma + d_sigma(r Omega),
        # which telescopes exactly against the cell volumes (compatibility).
        for i in range(nr):
            for j in range(nz):
                c = cell(i, j)
                coef = 1.0 / (g.r_c[i] * g.phi_c[i] * g.dr)
                if idx_f[i + 1, j] >= 0:
                    rows.append(c); cols.append(idx_f[i + 1, j])
                    vals.append(coef * g.r_f[i + 1] * g.phi_f[i + 1])
                if idx_f[i, j] >= 0:
                    rows.append(c); cols.append(idx_f[i, j])
                    vals.append(-coef * g.r_f[i] * g.phi_f[i])
                coefz = 1.0 / (g.phi_c[i] * g.dsig_c[j])
                if idx_z[i, j + 1] >= 0:
                    rows.append(c); cols.append(n_r + idx_z[i, j + 1]); vals.append(coefz)
                if idx_z[i, j] >= 0:
                    rows.append(c); cols.append(n_r + idx_z[i, j]); vals.append(-coefz)
        D = _coo(rows, cols, vals, (n_cell, n_r + n_o))
        Wc = sp.diags(self.V_cell.ravel())
        self._B = (Wc @ D).tocsr()
        self._D = D

        # interpolation A: u_r faces -> sigma-face nodes, times sigma phi'
        rows, cols, vals = [], [], []
        for i in range(nr):
            for j in range(1, nz):
                zi = idx_z[i, j]
                w = g.sig_f[j] * g.dphi_c[i]
                for fi in (i, i + 1):
                    for cj in (j - 1, j):
                        if idx_f[fi, cj] >= 0:
                            rows.append(zi); cols.append(idx_f[fi, cj])
                            vals.append(0.25 * w)
        A = _coo(rows, cols, vals, (n_o, n_r))
        self._A = A

        vf = self.V_face.ravel()
        vz = self.V_zface.ravel()
        self._vf = vf
        self._vz = vz
        # M = [[Vf + A^T Vz A, A^T Vz], [Vz A, Vz]]; Schur complement is Vf.
        Minv11 = sp.diags(1.0 / vf)
        Minv12 = -Minv11 @ A.T
        Minv21 = Minv12.T
        Minv22 = sp.diags(1.0 / vz) + A @ Minv11 @ A.T
        Minv = sp.bmat([[Minv11, Minv12], [Minv21, Minv22]]).tocsr()
        S = (self._B @ Minv @ self._B.T).tocsr()
        # S has the constant-pressure nullspace; ground node 0 and solve the
        # reduced SPD system (the preconditioner is its exact factorization,
        # so PCG converges in a couple of iterations).
        self._S_red = S[1:, 1:].tocsc()
        self._S_factor = spla.splu(self._S_red)
        self._Minv = Minv
        # Coriolis-coupled metric: the Cayley rotation with alpha = tan(dt/2eps)
        # adds alpha^2 Vf to the u_r block; Schur complement stays diagonal.
        self._alpha = np.tan(0.5 * self.dt / self.params.eps)
        a2 = self._alpha**2
        Ma11 = sp.diags(1.0 / ((1.0 + a2) * vf))
        Ma12 = -Ma11 @ A.T
        Ma22 = sp.diags(1.0 / vz) + A @ Ma11 @ A.T
        Minv_a = sp.bmat([[Ma11, Ma12], [Ma12.T, Ma22]]).tocsr()
        S_a = (self._B @ Minv_a @ self._B.T).tocsr()
        self._Sa_factor = spla.splu(S_a[1:, 1:].tocsc())

    def _apply_Minv(self, a, b):
        x = (a - self._A.T @ b) / self._vf
        y = b / self._vz - self._A @ x
        return x, y

    def _apply_Minv_alpha(self, a, b):
        x = (a - self._A.T @ b) / ((1.0 + self._alpha**2) * self._vf)
        y = b / self._vz - self._A @ x
        return x, y

    def _project(self, u_r, Omega):
        g = self.grid
        n_r = (g.nr - 1) * g.nz
        v_r = u_r[1 : g.nr, :].ravel()
        v_o = Omega[:, 1 : g.nz].ravel()
        v = np.concatenate([v_r, v_o])
        rhs = self._B @ v
        rhs = rhs - rhs.mean()  # compatibility (the weighted div sums to zero)
        iters = [0]

        def cb(xk):
            iters[0] += 1

        def s_apply(q_red):
            q = np.concatenate([[0.0], q_red])
            w = self._B.T @ q
            x, y = self._apply_Minv(w[:n_r], w[n_r:])
            return (self._B @ np.concatenate([x, y]))[1:]

        n_red = len(rhs) - 1
        Sop = spla.LinearOperator((n_red, n_red), matvec=s_apply)
        Mop = spla.LinearOperator((n_red, n_red), matvec=self._S_factor.solve)
        sol_red, info = spla.cg(Sop, rhs[1:], rtol=self.poisson_tol, atol=0.0,
                                maxiter=200, M=Mop, callback=cb)
        if info != 0:
            raise SolverError(
                f"pressure projection PCG failed to reach rel. residual "
                f"{self.poisson_tol:g} within {iters[0]} iterations (info={info})"
            )
        self.last_poisson_iters = iters[0]
        sol = np.concatenate([[0.0], sol_red])
        w = self._B.T @ sol
        dx, dy = self._apply_Minv(w[:n_r], w[n_r:])
        v_r2 = v_r - dx
        v_o2 = v_o - dy
        u_r2 = u_r.copy()
        u_r2[1 : g.nr, :] = v_r2.reshape(g.nr - 1, g.nz)
        Om2 = Omega.copy()
        Om2[:, 1 : g.nz] = v_o2.reshape(g.nr, g.nz - 1)
        return u_r2, Om2, sol.reshape(g.nr, g.nz)

    def _rotate_project(self, u_r, u_th, u_z):
        """Coupled Coriolis rotation + pressure, Cayley form.

        Solves the Crank-Nicolson system for the rotation-pressure subflow

            M(v' - v) = 2 alpha Vf (u_th + u_th')/2 |_r-slot - B^T p,
            Vf(u_th' - u_th) = -2 alpha Vf (u_r + u_r')/2,     B v' = 0,

        with alpha = tan(dt / 2 eps), which rotates (u_r, u_theta) by exactly
        dt/eps while the pressure keeps the velocity divergence free.
        Discrete geostrophic states are exact fixed points and the total
        energy is conserved to solver tolerance, so the substep cannot
        masquerade as Ekman pumping.
        """
        g = self.grid
        nr, nz = g.nr, g.nz
        n_r = (nr - 1) * nz
        al = self._alpha
        Om = self._omega_from(u_r, u_z)
        v_r = u_r[1:nr, :].ravel()
        v_o = Om[:, 1:nz].ravel()
        uz_vec = self._A @ v_r + v_o  # u_z at interior sigma-faces
        th = u_th[1:nr, :].ravel()
        b_r = self._vf * v_r + self._A.T @ (self._vz * uz_vec) + self._vf * (
            2.0 * al * th - al * al * v_r
        )
        b_o = self._vz * uz_vec
        x0, y0 = self._apply_Minv_alpha(b_r, b_o)
        rhs = self._B @ np.concatenate([x0, y0])
        rhs = rhs - rhs.mean()
        iters = [0]

        def cb(xk):
            iters[0] += 1

        def s_apply(q_red):
            q = np.concatenate([[0.0], q_red])
            w = self._B.T @ q
            x, y = self._apply_Minv_alpha(w[:n_r], w[n_r:])
            return (self._B @ np.concatenate([x, y]))[1:]

        n_red = len(rhs) - 1
        Sop = spla.LinearOperator((n_red, n_red), matvec=s_apply)
        Mop = spla.LinearOperator((n_red, n_red), matvec=self._Sa_factor.solve)
        sol_red, info = spla.cg(Sop, rhs[1:], rtol=self.poisson_tol, atol=0.0,
                                maxiter=200, M=Mop, callback=cb)
        if info != 0:
            raise SolverError(
                f"pressure projection PCG failed to reach rel. residual "
                f"{self.poisson_tol:g} within {iters[0]} iterations (info={info})"
            )
        self.last_poisson_iters = max(self.last_poisson_iters, iters[0])
        p_s = np.concatenate([[0.0], sol_red])
        w = self._B.T @ p_s
        dx, dy = self._apply_Minv_alpha(w[:n_r], w[n_r:])
        v_r2 = x0 - dx
        v_o2 = y0 - dy
        th2 = th - al * (v_r2 + v_r)
        u_r2 = np.zeros_like(u_r)
        u_r2[1:nr, :] = v_r2.reshape(nr - 1, nz)
        u_th2 = np.zeros_like(u_th)
        u_th2[1:nr, :] = th2.reshape(nr - 1, nz)
        Om2 = np.zeros_like(Om)
        Om2[:, 1:nz] = v_o2.reshape(nr, nz - 1)
        u_z2 = self._uz_from(u_r2, Om2)
        q = p_s * (self.params.eps / self.dt)
        return u_r2, u_th2, u_z2, q.reshape(nr, nz)

    # -- field conversions ---------------------------------------------------

    def _omega_from(self, u_r, u_z):
        g = self.grid
        Om = np.zeros_like(u_z)
        ur_avg = 0.25 * (
            u_r[: g.nr, :-1] + u_r[1:, :-1] + u_r[: g.nr, 1:] + u_r[1:, 1:]
        )
        Om[:, 1 : g.nz] = u_z[:, 1 : g.nz] - g.sig_f[None, 1 : g.nz] * g.dphi_c[
            :, None
        ] * ur_avg
        return Om

    def _uz_from(self, u_r, Om):
        g = self.grid
        u_z = np.zeros_like(Om)
        ur_avg = 0.25 * (
            u_r[: g.nr, :-1] + u_r[1:, :-1] + u_r[: g.nr, 1:] + u_r[1:, 1:]
        )
        u_z[:, 1 : g.nz] = Om[:, 1 : g.nz] + g.sig_f[None, 1 : g.nz] * g.dphi_c[
            :, None
        ] * ur_avg
        return u_z

    # -- diagnostics -----------------------------------------------------------

    def energy(self, st: SolverState):
        g = self.grid
        e = 0.5 * np.sum(self.V_face * (st.u_r[1 : g.nr] ** 2 + st.u_th[1 : g.nr] ** 2))
        e += 0.5 * np.sum(self.V_zface * st.u_z[:, 1 : g.nz] ** 2)
        return float(e)

    def dissipation(self, st: SolverState):
        """eps beta |grad u|^2 in the discrete energy form (plus sinks)."""
        return self._dissipation_fields(st.u_r, st.u_th, st.u_z)

    def _dissipation_fields(self, u_r, u_th, u_z):
        g = self.grid
        out = 0.0
        for f in (u_r, u_th):
            v = f[1 : g.nr, :].ravel()
            out += float(v @ (self.L_face_sink @ v))
        vz = u_z[:, 1 : g.nz].ravel()
        out += float(vz @ (self.L_zface @ vz))
        return self.nu * out

    def divergence(self, st: SolverState):
        g = self.grid
        Om = self._omega_from(st.u_r, st.u_z)
        v = np.concatenate([st.u_r[1 : g.nr].ravel(), Om[:, 1 : g.nz].ravel()])
        return (self._D @ v).reshape(g.nr, g.nz)

    def div_norm(self, st: SolverState):
        """Max |div| normalized by velocity scale over grid scale."""
        div = self.divergence(st)
        umax = max(
            np.abs(st.u_r).max(), np.abs(st.u_th).max(), np.abs(st.u_z).max(), 1e-300
        )
        scale = umax / min(self.grid.dr, self.grid.min_wall_spacing())
        return float(np.abs(div).max() / scale)

    # -- initialization and stepping ------------------------------------------

    def init_state(self):
        g = self.grid
        p = self.params
        u_r = np.zeros((g.nr + 1, g.nz))
        u_th = np.zeros_like(u_r)
        u0 = value_of(p.data.u0(g.rho_f, p.topo))
        u_th[1 : g.nr, :] = u0[1 : g.nr, None]
        u_z = np.zeros((g.nr, g.nz + 1))
        st = SolverState(0.0, u_r, u_th, u_z, np.zeros((g.nr, g.nz)))
        u_r2, Om2, q = self._project(st.u_r, self._omega_from(st.u_r, st.u_z))
        st.u_r = u_r2
        st.u_z = self._uz_from(u_r2, Om2)
        st.p = q
        return st

    def step(self, st: SolverState):
        g = self.grid
        # (i) implicit diffusion, component by component
        u_r = st.u_r.copy()
        u_th = st.u_th.copy()
        u_z = st.u_z.copy()
        u_r[1 : g.nr] = self._diff_face.solve(
            (self.V_face * u_r[1 : g.nr]).ravel()
        ).reshape(g.nr - 1, g.nz)
        u_th[1 : g.nr] = self._diff_face.solve(
            (self.V_face * u_th[1 : g.nr]).ravel()
        ).reshape(g.nr - 1, g.nz)
        u_z[:, 1 : g.nz] = self._diff_zface.solve(
            (self.V_zface * u_z[:, 1 : g.nz]).ravel()
        ).reshape(g.nr, g.nz - 1)
        # dissipation of this step, sampled where the implicit-Euler energy
        # identity holds: E_after + dt * D_after <= E_before exactly
        diss = self._dissipation_fields(u_r, u_th, u_z)
        # the diffusion wall fluxes leave a small divergence; clean it first
        u_r, Om, _ = self._project(u_r, self._omega_from(u_r, u_z))
        u_z = self._uz_from(u_r, Om)
        # (ii) exact Coriolis rotation by dt/eps, coupled with the pressure
        u_r, u_th, u_z, q = self._rotate_project(u_r, u_th, u_z)
        new = SolverState(st.t + self.dt, u_r, u_th, u_z, q)
        # (iv) optional explicit advection
        if self.nonlinear:
            self._advect(new)
            u_r2, Om2, q2 = self._project(new.u_r, self._omega_from(new.u_r, new.u_z))
            new.u_r, new.u_z, new.p = u_r2, self._uz_from(u_r2, Om2), q2
        return new, diss

    def _advect(self, st: SolverState):
        """Second-order upwind transport of each component, explicit.

        The advecting pair is (u_r, sigma_dot) with sigma_dot = Omega/phi the
        contravariant vertical velocity, so u.grad in mapped coordinates is
        u_r d_r|sigma + sigma_dot d_sigma.  Includes the metric swirl terms
        u_r u_theta / r (theta momentum) and -u_theta^2 / r (radial).
        """
        g = self.grid
        dt = self.dt
        Om = self._omega_from(st.u_r, st.u_z)
        sig_dot_c = 0.5 * (Om[:, :-1] + Om[:, 1:]) / g.phi_c[:, None]
        sd_f = np.zeros((g.nr + 1, g.nz))
        sd_f[1 : g.nr] = 0.5 * (sig_dot_c[: g.nr - 1] + sig_dot_c[1:])
        r_f = g.r_f[:, None]
        swirl_r = st.u_th**2 / r_f
        swirl_th = -st.u_r * st.u_th / r_f
        for name, extra in (("u_r", swirl_r), ("u_th", swirl_th)):
            f = getattr(st, name)
            d_r = _upwind_d(f, st.u_r, g.dr, axis=0)
            d_s = _upwind_d(f, sd_f, None, axis=1, spacing=g.dsig_c)
            fn = f - dt * (st.u_r * d_r + sd_f * d_s - extra)
            fn[0] = 0.0
            fn[g.nr] = 0.0
            setattr(st, name, fn)
        ur_c = 0.5 * (st.u_r[: g.nr] + st.u_r[1:])
        ur_z = np.zeros_like(st.u_z)
        ur_z[:, 1 : g.nz] = 0.5 * (ur_c[:, :-1] + ur_c[:, 1:])
        sd_z = np.zeros_like(st.u_z)
        sd_z[:, 1 : g.nz] = Om[:, 1 : g.nz] / g.phi_c[:, None]
        spacing_z = np.concatenate([[g.dsig_c[0]], g.dsig_c, [g.dsig_c[-1]]])
        d_r = _upwind_d(st.u_z, ur_z, g.dr, axis=0)
        d_s = _upwind_d(st.u_z, sd_z, None, axis=1, spacing=spacing_z)
        st.u_z = st.u_z - dt * (ur_z * d_r + sd_z * d_s)
        st.u_z[:, 0] = 0.0
        st.u_z[:, g.nz] = 0.0
        cfl = dt * (
            np.abs(st.u_r).max() / g.dr + np.abs(sig_dot_c).max() / g.dsig_c.min()
        )
        if cfl > 1.0:
            raise SolverError(f"advection CFL violated (cfl={cfl:.2f}); reduce dt")

    def run(self, tmax: float, snap_every: int = 0, on_step=None,
            energy_tol: float = 1e-6):
        """March to tmax; assert the per-step energy inequality throughout.

        Returns a dict with time series (t, energy, dissipation, div) and a
        list of snapshot states.  The instability detector aborts on any
        relative energy growth beyond ``energy_tol`` per step.
        """
        st = self.init_state()
        n_steps = int(np.ceil(tmax / self.dt - 1e-12))
        series = {"t": [st.t], "energy": [self.energy(st)], "dissipation": [0.0],
                  "div": [self.div_norm(st)], "poisson_iters": [0]}
        snaps = [st]
        e_prev = series["energy"][0]
        max_step_ratio = -np.inf
        for n in range(1, n_steps + 1):
            st, d = self.step(st)
            e = self.energy(st)
            budget = e + self.dt * d
            ratio = (budget - e_prev) / max(e_prev, 1e-300)
            max_step_ratio = max(max_step_ratio, ratio)
            if e > e_prev * (1.0 + energy_tol):
                raise SolverError(
                    f"instability detected at step {n}: energy grew by "
                    f"{(e / e_prev - 1):.3e} in one step"
                )
            series["t"].append(st.t)
            series["energy"].append(e)
            series["dissipation"].append(d)
            series["div"].append(self.div_norm(st))
            series["poisson_iters"].append(self.last_poisson_iters)
            if on_step is not None:
                on_step(st)
            if snap_every and n % snap_every == 0:
                snaps.append(st)
            e_prev = e
        series["max_energy_step_ratio"] = max_step_ratio
        return {"series": series, "snapshots": snaps, "final": st}

    # -- comparisons ------------------------------------------------------------

    def limit_theta(self, t: float):
        g = self.grid
        p = self.params
        lam = value_of(lambda_phi(g.rho_f, p.topo))
        u0 = value_of(p.data.u0(g.rho_f, p.topo))
        return u0 * np.exp(-t * lam)

    def err_vs_limit(self, st: SolverState):
        g = self.grid
        ub = self.limit_theta(st.t)[1 : g.nr, None]
        e2 = np.sum(self.V_face * (st.u_r[1 : g.nr] ** 2 + (st.u_th[1 : g.nr] - ub) ** 2))
        e2 += np.sum(self.V_zface * st.u_z[:, 1 : g.nz] ** 2)
        n2 = np.sum(self.V_face * self.limit_theta(0.0)[1 : g.nr, None] ** 2)
        return float(np.sqrt(e2 / n2))

    def err_vs_ansatz(self, st: SolverState):
        g = self.grid
        p = self.params
        e2 = 0.0
        # face nodes: u_r, u_theta
        rho = np.repeat(g.rho_f[1 : g.nr], g.nz)
        z = (g.sig_c[None, :] * g.phi_f[1 : g.nr, None]).ravel()
        lap = 1.0 / (np.repeat(g.r_f[1 : g.nr], g.nz))
        vr, vth, _ = assemble_components(st.t, rho, z, lap, p)
        vr = value_of(vr).reshape(g.nr - 1, g.nz)
        vth = value_of(vth).reshape(g.nr - 1, g.nz)
        e2 += np.sum(self.V_face * ((st.u_r[1 : g.nr] - vr) ** 2
                                    + (st.u_th[1 : g.nr] - vth) ** 2))
        rho_c = np.repeat(g.rho_c, g.nz - 1)
        zz = (g.sig_f[None, 1 : g.nz] * g.phi_c[:, None]).ravel()
        lap_c = 1.0 / np.repeat(g.r_c, g.nz - 1)
        _, _, vz = assemble_components(st.t, rho_c, zz, lap_c, p)
        vz = value_of(vz).reshape(g.nr, g.nz - 1)
        e2 += np.sum(self.V_zface * (st.u_z[:, 1 : g.nz] - vz) ** 2)
        n2 = np.sum(self.V_face * self.limit_theta(0.0)[1 : g.nr, None] ** 2)
        return float(np.sqrt(e2 / n2))

    def sample_ansatz(self, t: float):
        """SolverState filled with the closed-form approximate solution."""
        g = self.grid
        p = self.params
        u_r = np.zeros((g.nr + 1, g.nz))
        u_th = np.zeros_like(u_r)
        rho = np.repeat(g.rho_f[1 : g.nr], g.nz)
        z = (g.sig_c[None, :] * g.phi_f[1 : g.nr, None]).ravel()
        lap = 1.0 / np.repeat(g.r_f[1 : g.nr], g.nz)
        vr, vth, _ = assemble_components(t, rho, z, lap, p)
        u_r[1 : g.nr] = value_of(vr).reshape(g.nr - 1, g.nz)
        u_th[1 : g.nr] = value_of(vth).reshape(g.nr - 1, g.nz)
        u_z = np.zeros((g.nr, g.nz + 1))
        rho_c = np.repeat(g.rho_c, g.nz - 1)
        zz = (g.sig_f[None, 1 : g.nz] * g.phi_c[:, None]).ravel()
        lap_c = 1.0 / np.repeat(g.r_c, g.nz - 1)
        _, _, vz = assemble_components(t, rho_c, zz, lap_c, p)
        u_z[:, 1 : g.nz] = value_of(vz).reshape(g.nr, g.nz - 1)
        return SolverState(t, u_r, u_th, u_z, np.zeros((g.nr, g.nz)))


def _upwind_d(f, vel, dr, axis, spacing=None):
    """Second-order upwind one-sided difference of f along axis."""
    out = np.zeros_like(f)
    n = f.shape[axis]
    fm = np.moveaxis(f, axis, 0)
    om = np.moveaxis(out, axis, 0)
    vm = np.moveaxis(vel, axis, 0)
    if spacing is None:
        h = np.full(n, dr)
    else:
        h = spacing
    for k in range(n):
        hm = h[min(k, n - 1)] if np.ndim(h) else h
        if k >= 2:
            back = (3 * fm[k] - 4 * fm[k - 1] + fm[k - 2]) / (2 * hm)
        elif k >= 1:
            back = (fm[k] - fm[k - 1]) / hm
        else:
            back = fm[k] * 0
        if k <= n - 3:
            fwd = (-3 * fm[k] + 4 * fm[k + 1] - fm[k + 2]) / (2 * hm)
        elif k <= n - 2:
            fwd = (fm[k + 1] - fm[k]) / hm
        else:
            fwd = fm[k] * 0
        om[k] = np.where(vm[k] >= 0, back, fwd)
    return out


def shore_wall_radius(topo: Topography, eps: float, a: float, factor: float = 2.0):
    """r_min with phi(rho_min) = factor * eps^(1-a), found by bisection."""
    target = factor * eps ** (1.0 - a)
    if target >= topo.H:
        raise ConfigError(
            f"shore truncation depth {target:.3f} exceeds the maximum depth "
            f"{topo.H}; decrease eps or increase depth H"
        )
    lo = topo.rho0 * (1 + 1e-12)
    hi = lo + 1.0
    f = lambda r: value_of(topo.depth.phi(np.array([r])))[0] - target
    while f(hi) < 0:
        hi += 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return topo.shore.R + 0.5 * (lo + hi)
