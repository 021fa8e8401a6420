"""Closed-form evaluation of every term of the approximate solution.

The approximate velocity/pressure pair is assembled from interior terms and
boundary layer terms at orders 0, a, 1 and 2 in the Rossby number eps,

    U_app = U0_int + U0_surf + U0_bot
            + eps^a (Ua_surf + Ua_bot)
            + eps   (U1_int + U1_surf + U1_bot)
            + eps^2 (U2_surf + U2_bot),
    P_app = P0_int + eps P1_bot,

with every component expressed in the orthonormal frame
(grad rho, perp grad rho, e_z).  Layer terms are functions of the fast
variables

    surface: zeta1 = z / sqrt(E),              cut-off  zeta2 = -z / eps^(1-a)
    bottom:  zeta1 = -(z + phi) / (delta sqrt(E)),  zeta2 = (z + phi) / eps^(1-a)

where E = 2 beta eps^2 is the Ekman number and delta = (1+phi'^2)^(3/4).
The azimuthal profile obeys the pumping law

    u_eps(t, rho) = (1 - chi(phi/eps^(1-a))) exp(-t lambda_phi(rho)) u0(rho),

so every term damps at the slope-modulated rate lambda_phi.

Sign and amplitude conventions.  The construction below is *exactly*
divergence free and satisfies the no-slip condition identically wherever the
depth exceeds 2 eps^(1-a); both properties are enforced to machine precision
by the verification suite, and they pin down every sign and amplitude:

* the vertical component of the order-1 surface layer carries a plus sign
  and is truncated in the surface cut-off variable -z/eps^(1-a);
* the order-a bottom amplitude is +sqrt(2 beta)/2 delta^(1/3);
* the delta'-part of the order-1 bottom vertical component carries the full
  sqrt(2 beta) factor;
* the order-2 amplitudes carry sqrt(2 beta) (surface) and delta sqrt(2 beta)
  (bottom);
* the bottom pressure corrector is
  +(sqrt(2 beta)/2) (phi'/(1+phi'^2)^(1/4)) u_eps chi(zeta2) e^z1(sin+cos),
  the unique choice that cancels the order (1/eps) vertical momentum balance
  of the bottom layer exactly.

Every evaluator works on plain ndarrays or on :class:`~ekmantopo.dual.Jet`
inputs, so the same code path produces values and exact derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .cutoffs import CutoffChi, CutoffK
from .dual import Jet, cos, exp, sin, value_of
from .geometry import (
    GeometryDomainError,
    Topography,
    dlambda_phi,
    frame_bundle,
    lambda_phi,
    shore_distance,
)

__all__ = [
    "FrameVector",
    "InitialSwirl",
    "AnsatzParams",
    "TERM_IDS",
    "LAYER_TERMS",
    "INTERIOR_TERMS",
    "evaluate_term",
    "assemble_components",
    "assemble_U_app",
    "u_theta_eps",
    "limit_profile",
    "surface_layer_matrix",
    "pressure_p0",
    "pressure_p1_bot",
    "grad_pressure_components",
]

TERM_IDS = (
    "u0_int",
    "u0_surf",
    "u0_bot",
    "ua_surf",
    "ua_bot",
    "u1_int",
    "u1_surf",
    "u1_bot",
    "u2_surf",
    "u2_bot",
)
INTERIOR_TERMS = ("u0_int", "u1_int")
LAYER_TERMS = tuple(t for t in TERM_IDS if t not in INTERIOR_TERMS)
SURFACE_TERMS = ("u0_surf", "ua_surf", "u1_surf", "u2_surf")
BOTTOM_TERMS = ("u0_bot", "ua_bot", "u1_bot", "u2_bot")


@dataclass(frozen=True)
class FrameVector:
    """Velocity components in the frame (grad rho, perp grad rho, e_z)."""

    v_rho: float
    v_theta: float
    v_z: float

    def to_cartesian(self, grad_rho):
        nx, ny = grad_rho
        return np.array(
            [
                self.v_rho * nx - self.v_theta * ny,
                self.v_rho * ny + self.v_theta * nx,
                self.v_z,
            ]
        )

    def norm(self):
        return float(np.sqrt(self.v_rho**2 + self.v_theta**2 + self.v_z**2))


@dataclass(frozen=True)
class InitialSwirl:
    """Initial azimuthal profile u0(rho) with derivatives to third order.

    Families:
      ``gaussian``  u0 = A phi(rho) exp(-((rho-center)/width)^2) -- the
                    default; the depth factor keeps u0/phi bounded.
      ``shore``     u0 = A exp(-((rho-center)/width)^2) -- no depth factor,
                    so u0/phi blows up at the shore.  Negative-control family
                    for the gradient-budget check.
    """

    family: str
    amplitude: float
    center: float
    width: float

    def __post_init__(self):
        if self.family not in ("gaussian", "shore"):
            raise ValueError(f"unknown initial data family {self.family!r}")
        if self.width <= 0:
            raise ValueError("data width must be positive")

    def _gauss(self, rho):
        s = (rho - self.center) / self.width
        return exp(-(s * s))

    def _dgauss(self, rho):
        s = (rho - self.center) / self.width
        return exp(-(s * s)) * (-2.0 * s / self.width)

    def u0(self, rho, topo: Topography):
        g = self._gauss(rho)
        if self.family == "gaussian":
            return self.amplitude * topo.depth.phi(rho) * g
        return self.amplitude * g

    def du0(self, rho, topo: Topography):
        g = self._gauss(rho)
        dg = self._dgauss(rho)
        if self.family == "gaussian":
            return self.amplitude * (topo.depth.dphi(rho) * g + topo.depth.phi(rho) * dg)
        return self.amplitude * dg

    def sup_ratio_to_depth(self, topo: Topography, n: int = 4000):
        """Sampled sup of |u0/phi| over the ocean (finite iff well prepared)."""
        rho = np.linspace(topo.rho0 + 1e-9, self.center + 12 * self.width, n)
        phi = value_of(topo.depth.phi(rho))
        u = value_of(self.u0(rho, topo))
        with np.errstate(divide="ignore"):
            return float(np.max(np.abs(u) / np.maximum(phi, 1e-300)))

    def sup_abs(self, topo: Topography, n: int = 4000):
        rho = np.linspace(topo.rho0 + 1e-9, self.center + 12 * self.width, n)
        return float(np.max(np.abs(value_of(self.u0(rho, topo)))))


@dataclass(frozen=True)
class AnsatzParams:
    """Everything the term evaluators need: topography, eps, cut-offs, data.

    Derived quantities (Ekman number, layer scales) are computed once.  A
    ``mutation`` tag deliberately corrupts the construction and exists only
    for negative-control fixtures:

      ``sign_flip``   flips the sign of the order-1 surface vertical term;
      ``cutoff_var``  truncates that term in the bottom cut-off variable
                      (z+phi)/eps^(1-a), which annihilates it near the surface.
    """

    topo: Topography
    eps: float
    a: float = 0.75
    chi: CutoffChi = None
    k: CutoffK = None
    data: InitialSwirl = None
    mutation: str | None = None
    eps0: float = 0.3
    truncate: bool = True

    def __post_init__(self):
        if not (0.0 < self.eps <= self.eps0):
            raise ValueError(f"eps must lie in (0, {self.eps0}]")
        if not (2.0 / 3.0 < self.a < 1.0):
            raise ValueError("shore exponent a must lie in (2/3, 1)")
        if self.chi is None:
            object.__setattr__(self, "chi", CutoffChi())
        if self.k is None:
            object.__setattr__(self, "k", CutoffK())
        if self.data is None:
            raise ValueError("initial data required")
        if self.mutation not in (None, "sign_flip", "cutoff_var"):
            raise ValueError(f"unknown mutation {self.mutation!r}")
        if self.eps1ma >= self.topo.H / 2.0:
            raise ValueError(
                "eps^(1-a) must stay below H/2 so the truncated ocean is nonempty"
            )

    @property
    def E(self):
        return 2.0 * self.topo.beta * self.eps**2

    @property
    def sqrtE(self):
        return self.eps * np.sqrt(2.0 * self.topo.beta)

    @property
    def eps1ma(self):
        return self.eps ** (1.0 - self.a)

    @property
    def c0(self):
        """sqrt(2 beta)/2, the recurring layer amplitude."""
        return 0.5 * np.sqrt(2.0 * self.topo.beta)

    def with_eps(self, eps):
        return replace(self, eps=float(eps))

    def untruncated(self):
        """Copy with all chi truncations disabled (classical, unbounded layers)."""
        return replace(self, truncate=False)


# ---------------------------------------------------------------------------
# radial building blocks (functions of t and rho only)
# ---------------------------------------------------------------------------


def u_theta_eps(t, rho, p: AnsatzParams):
    """Truncated azimuthal profile (1 - chi(phi/eps^(1-a))) e^(-t lam) u0."""
    topo = p.topo
    lam = lambda_phi_safe(rho, p)
    if p.truncate:
        shore_factor = 1.0 - p.chi(topo.depth.phi(rho) / p.eps1ma)
    else:
        shore_factor = 1.0
    return shore_factor * exp(-t * lam) * p.data.u0(rho, topo)


def du_theta_eps(t, rho, p: AnsatzParams):
    """d/drho of u_theta_eps at fixed t (analytic chain rule)."""
    topo = p.topo
    phi = topo.depth.phi(rho)
    dphi = topo.depth.dphi(rho)
    lam = lambda_phi_safe(rho, p)
    dlam = dlambda_phi(rho, topo)
    decay = exp(-t * lam)
    u0 = p.data.u0(rho, topo)
    du0 = p.data.du0(rho, topo)
    if p.truncate:
        shore_factor = 1.0 - p.chi(phi / p.eps1ma)
        dshore = -p.chi.deriv(phi / p.eps1ma) * dphi / p.eps1ma
    else:
        shore_factor, dshore = 1.0, 0.0
    return dshore * decay * u0 + shore_factor * decay * (du0 - t * dlam * u0)


def lambda_phi_safe(rho, p: AnsatzParams):
    """lambda_phi, with the shore singularity masked where the profile is cut off.

    The pumping rate blows up like 1/phi at the shore, but every term that
    uses it carries the shore cut-off factor, which vanishes identically for
    phi <= eps^(1-a)/2.  Masking there keeps exp(-t lambda) finite without
    changing any value the cut-off lets through.
    """
    topo = p.topo
    phi = topo.depth.phi(rho)
    phi_v = value_of(phi)
    floor = 0.25 * p.eps1ma
    safe = np.maximum(phi_v, floor)
    if isinstance(phi, Jet):
        mask = phi_v > floor
        phi = Jet(safe, phi.g * mask, phi.lap * mask)
    else:
        phi = safe
    dphi = topo.depth.dphi(rho)
    q = (1.0 + dphi * dphi) ** 0.25
    return np.sqrt(2.0 * topo.beta) / phi * (1.0 + q) * 0.5


def _radial_blocks(t, rho, lap_rho, p: AnsatzParams):
    """Shared slow factors: u, du, lam, div_h combos, delta and friends."""
    topo = p.topo
    dphi = topo.depth.dphi(rho)
    d2phi = topo.depth.d2phi(rho)
    one_p = 1.0 + dphi * dphi
    q = one_p**0.25  # delta^(1/3)
    delta = one_p**0.75
    ddelta = 1.5 * dphi * d2phi / q
    dq = 0.5 * dphi * d2phi / delta
    u = u_theta_eps(t, rho, p)
    du = du_theta_eps(t, rho, p)
    lam = lambda_phi_safe(rho, p)
    dlam = dlambda_phi(rho, topo)
    div_u = du + u * lap_rho  # div_h(u grad rho)
    lam_u = lam * u
    dlam_u = dlam * u + lam * du
    div_lam_u = dlam_u + lam_u * lap_rho  # div_h(lam u grad rho)
    div_qu = dq * u + q * du + q * u * lap_rho  # div_h(delta^(1/3) u grad rho)
    return dict(
        phi=topo.depth.phi(rho),
        dphi=dphi,
        q=q,
        delta=delta,
        ddelta=ddelta,
        u=u,
        du=du,
        lam=lam,
        div_u=div_u,
        lam_u=lam_u,
        div_lam_u=div_lam_u,
        div_qu=div_qu,
    )


# ---------------------------------------------------------------------------
# term evaluators
# ---------------------------------------------------------------------------



def _chi(p: AnsatzParams, s):
    return p.chi(s) if p.truncate else 1.0


def _dchi(p: AnsatzParams, s):
    return p.chi.deriv(s) if p.truncate else 0.0


def _osc(zeta):
    """e^zeta sin zeta and e^zeta cos zeta."""
    e = exp(zeta)
    return e * sin(zeta), e * cos(zeta)


def evaluate_term(term, t, rho, z, lap_rho, p: AnsatzParams):
    """Frame components (v_rho, v_theta, v_z) of one ansatz term.

    Works elementwise over broadcastable ndarray inputs, or on Jets; ``t``
    may be scalar or match the batch.  The eps-power prefactor of the term
    is *not* included (see :func:`assemble_components`).
    """
    b = _radial_blocks(t, rho, lap_rho, p)
    c0 = p.c0
    if term == "u0_int":
        return 0.0 * b["u"], b["u"], 0.0 * b["u"]
    if term == "u1_int":
        vz = -c0 * b["div_u"] - z * b["div_lam_u"]
        return b["lam_u"], 0.0 * b["u"], vz

    if term in SURFACE_TERMS:
        zeta1 = z / p.sqrtE
        zeta2 = -z / p.eps1ma
        S, C = _osc(zeta1)
        if term == "u0_surf":
            chi = _chi(p, zeta2)
            return b["u"] * chi * S, -b["u"] * chi * C, 0.0 * S
        if term == "ua_surf":
            dchi = _dchi(p, zeta2)
            vr = c0 * b["u"] * dchi * (C - S)
            return vr, 0.0 * S, 0.0 * S
        if term == "u1_surf":
            vr = -b["lam_u"] * p.k(zeta1)
            zeta2_z = zeta2 if p.mutation != "cutoff_var" else (z + b["phi"]) / p.eps1ma
            sign = -1.0 if p.mutation == "sign_flip" else 1.0
            vz = sign * c0 * b["div_u"] * _chi(p, zeta2_z) * (C - S)
            return vr, 0.0 * S, vz
        if term == "u2_surf":
            root2b = 2.0 * c0
            vz = -root2b * b["div_lam_u"] * p.k.K_surf(zeta1)
            return 0.0 * S, 0.0 * S, vz

    if term in BOTTOM_TERMS:
        zeta1 = -(z + b["phi"]) / (b["delta"] * p.sqrtE)
        zeta2 = (z + b["phi"]) / p.eps1ma
        S, C = _osc(zeta1)
        qinv23 = b["delta"] ** (-2.0 / 3.0)
        if term == "u0_bot":
            chi = _chi(p, zeta2)
            vr = b["u"] * chi * qinv23 * S
            return vr, -b["u"] * chi * C, -b["dphi"] * vr
        if term == "ua_bot":
            dchi = _dchi(p, zeta2)
            vr = c0 * b["q"] * b["u"] * dchi * (C - S)
            return vr, 0.0 * S, -b["dphi"] * vr
        if term == "u1_bot":
            root2b = 2.0 * c0
            kz = p.k(zeta1)
            vr = -b["lam_u"] * kz
            W = 0.5 * (S - C)
            chi = _chi(p, zeta2)
            vz = b["dphi"] * b["lam_u"] * kz + root2b * chi * (
                b["div_qu"] * W - (b["ddelta"] / b["delta"] ** (2.0 / 3.0)) * b["u"] * zeta1 * S
            )
            return vr, 0.0 * S, vz
        if term == "u2_bot":
            root2b = 2.0 * c0
            vz = root2b * (
                b["delta"] * b["div_lam_u"] * p.k.K_surf(zeta1)
                - b["ddelta"] * b["lam_u"] * p.k.K1_bot(zeta1)
            )
            return 0.0 * S, 0.0 * S, vz

    raise ValueError(f"unknown term id {term!r}")


def _eps_power(term, p: AnsatzParams):
    if term.startswith("u0"):
        return 1.0
    if term.startswith("ua"):
        return p.eps**p.a
    if term.startswith("u1"):
        return p.eps
    return p.eps**2


def assemble_components(t, rho, z, lap_rho, p: AnsatzParams, terms=TERM_IDS):
    """Sum of eps-weighted terms, as frame components."""
    acc = None
    for term in terms:
        w = _eps_power(term, p)
        tri = evaluate_term(term, t, rho, z, lap_rho, p)
        scaled = tuple(w * c for c in tri)
        acc = scaled if acc is None else tuple(a + s for a, s in zip(acc, scaled))
    return acc


# ---------------------------------------------------------------------------
# pressures
# ---------------------------------------------------------------------------


def pressure_p0(t, rho, p: AnsatzParams, n_gauss: int = 96, with_value: bool = True):
    """P0(t, rho) = integral of u_theta_eps from rho0 to rho.

    The lower limit is the shore abscissa (the pressure is defined up to a
    constant; only its gradient enters any balance).  The radial gradient is
    exactly u_theta_eps, which fixes the sign through the geostrophic balance
    e_z ^ U0 + grad P0 = 0.  ``with_value=False`` skips the value quadrature
    and returns a jet whose value slot is zero -- derivative consumers
    (residuals) only read the gradient.
    """
    rho_v = np.atleast_1d(value_of(rho)).astype(float)
    a = p.topo.rho0
    t_v = value_of(t)
    if with_value:
        xs, ws = np.polynomial.legendre.leggauss(n_gauss)
        half = 0.5 * (rho_v - a)
        nodes = half[..., None] * xs + 0.5 * (rho_v + a)[..., None]
        t_b = np.broadcast_to(np.asarray(t_v, float), rho_v.shape)[..., None]
        vals = value_of(u_theta_eps(t_b, nodes, p))
        f0 = np.sum(ws * vals, axis=-1) * half
        f0 = f0.reshape(np.shape(value_of(rho)))
    else:
        f0 = np.zeros(np.shape(value_of(rho)))
    if isinstance(rho, Jet):
        f1 = value_of(u_theta_eps(value_of(t), value_of(rho), p))
        f2 = value_of(du_theta_eps(value_of(t), value_of(rho), p))
        out = rho._compose(f0, f1, f2)
        if isinstance(t, Jet) and np.any(t.g[3] != 0.0):
            # add the time-derivative row: dP0/dt = int of du/dt = -int(lam u)
            dP_dt = _p0_time_derivative(value_of(t), rho_v, p, n_gauss)
            g = out.g.copy()
            g[3] = g[3] + dP_dt.reshape(f0.shape) * t.g[3]
            out = Jet(out.val, g, out.lap)
        return out
    return f0


def _p0_time_derivative(t_v, rho_v, p, n_gauss):
    xs, ws = np.polynomial.legendre.leggauss(n_gauss)
    a = p.topo.rho0
    half = 0.5 * (rho_v - a)
    nodes = half[..., None] * xs + 0.5 * (rho_v + a)[..., None]
    t_b = np.broadcast_to(np.asarray(t_v, float), rho_v.shape)[..., None]
    lam = value_of(lambda_phi_safe(nodes, p))
    vals = -lam * value_of(u_theta_eps(t_b, nodes, p))
    return np.sum(ws * vals, axis=-1) * half


def pressure_p1_bot(t, rho, z, p: AnsatzParams):
    """Bottom-layer pressure corrector (the eps prefactor is not included).

    P1_bot = (sqrt(2 beta)/2) (phi'/(1+phi'^2)^(1/4)) u_eps chi(zeta2)
             e^zeta1 (sin zeta1 + cos zeta1);
    vanishes where phi' = 0 and cancels the order (1/eps) vertical momentum
    balance of the bottom layer exactly.
    """
    topo = p.topo
    phi = topo.depth.phi(rho)
    dphi = topo.depth.dphi(rho)
    q = (1.0 + dphi * dphi) ** 0.25
    delta = q**3
    zeta1 = -(z + phi) / (delta * p.sqrtE)
    zeta2 = (z + phi) / p.eps1ma
    S, C = _osc(zeta1)
    u = u_theta_eps(t, rho, p)
    return p.c0 * (dphi / q) * u * _chi(p, zeta2) * (S + C)


def pressure_p_app(t, rho, z, p: AnsatzParams):
    return pressure_p0(t, rho, p) + p.eps * pressure_p1_bot(t, rho, z, p)


def grad_pressure_components(t, rho, z, p: AnsatzParams):
    """(d_rho P_app, d_z P_app) on the value path.

    grad P0 = u_theta_eps grad rho exactly (geostrophic balance); the bottom
    corrector gradient is extracted with radial/vertical jet seeds.
    """
    u = value_of(u_theta_eps(t, rho, p))
    rj = Jet.variable(np.asarray(rho, dtype=float), 0)
    zj = Jet.variable(np.asarray(z, dtype=float), 2)
    p1_r = pressure_p1_bot(t, rj, np.asarray(z, float), p)
    p1_z = pressure_p1_bot(t, np.asarray(rho, float), zj, p)
    dP_rho = u + p.eps * p1_r.g[0]
    dP_z = p.eps * p1_z.g[2]
    return dP_rho, dP_z


# ---------------------------------------------------------------------------
# spec-level single point operations
# ---------------------------------------------------------------------------


def limit_profile(t, rho, p: AnsatzParams):
    """Limit swirl u0(rho) exp(-t lambda_phi): frame components (0, ., 0)."""
    topo = p.topo
    lam = lambda_phi_safe(rho, p)
    val = p.data.u0(rho, topo) * exp(-t * lam)
    return 0.0 * val, val, 0.0 * val


def surface_layer_matrix(zeta):
    """M_surf(zeta) = -e^zeta [[cos, -sin], [sin, cos]]; M(0) = -Id."""
    zeta = np.asarray(zeta, dtype=float)
    e = np.exp(zeta)
    return -np.stack(
        [
            np.stack([e * np.cos(zeta), -e * np.sin(zeta)], axis=-1),
            np.stack([e * np.sin(zeta), e * np.cos(zeta)], axis=-1),
        ],
        axis=-2,
    )


def _frame_at(x_h, topo: Topography):
    rho, n, nperp, lap = shore_distance(np.asarray(x_h, dtype=float), topo.shore)
    return rho, n, nperp, lap


def assemble_U_app(t, x, p: AnsatzParams, terms=TERM_IDS):
    """(velocity in Cartesian coordinates, pressure) at a single 3-D point.

    Raises :class:`GeometryDomainError` outside the closure of the ocean.
    """
    x = np.asarray(x, dtype=float)
    rho, n, nperp, lap = _frame_at(x[:2], p.topo)
    if rho < p.topo.rho0 - 1e-12:
        raise GeometryDomainError("horizontal point inside the thickened land")
    phi = float(value_of(p.topo.depth.phi(np.array([rho])))[0])
    if x[2] > 1e-12 or x[2] < -phi - 1e-12:
        raise GeometryDomainError("point outside the water column")
    comp = assemble_components(
        float(t), np.array([rho]), np.array([x[2]]), np.array([lap]), p, terms
    )
    fv = FrameVector(float(comp[0][0]), float(comp[1][0]), float(comp[2][0]))
    press = float(
        value_of(pressure_p_app(float(t), np.array([rho]), np.array([x[2]]), p))[0]
    )
    return fv.to_cartesian(n), press


def frame_sampler(p: AnsatzParams, terms=TERM_IDS):
    """Vectorized sampler(t, rho, z) -> frame components, disk shores only.

    Norm computations are axisymmetric in the frame sense, so the horizontal
    dependence reduces to rho; the disk supplies lap_rho = 1/(R + rho).
    """
    if p.topo.shore.kind != "disk":
        raise NotImplementedError("vectorized samplers require a disk shore")
    R = p.topo.shore.R

    def sampler(t, rho, z):
        lap = 1.0 / (R + rho)
        return assemble_components(t, rho, z, lap, p, terms)

    return sampler


def limit_sampler(p: AnsatzParams):
    def sampler(t, rho, z):
        return limit_profile(t, rho, p)

    return sampler


def difference_sampler(p: AnsatzParams, terms=TERM_IDS):
    """Sampler of U_app - limit profile (frame components)."""
    app = frame_sampler(p, terms)

    def sampler(t, rho, z):
        a = app(t, rho, z)
        b = limit_profile(t, rho, p)
        return tuple(x - y for x, y in zip(a, b))

    return sampler
