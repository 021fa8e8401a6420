"""Shore geometry, depth profiles, and the moving frame of the distance function.

The ocean floor is described by a convex island shore Gamma and a depth
profile phi of the shore distance rho(x_h) = dist(x_h, Gamma).  Because the
distance function to a convex set has a unit gradient, the triple

    ( grad rho,  perp(grad rho),  e_z )

is an orthonormal moving frame, and the isobaths are parallel to the shore.
The land is thickened to rho <= rho0 > 0 so that rho is smooth on the whole
ocean; evaluating the depth at rho < rho0 is a hard error rather than a clamp.

Key derived quantities:

* ``delta = (1 + phi'^2)^(3/4)`` -- the bottom layer thickening factor; the
  bottom Ekman layer has thickness delta * sqrt(E).
* ``lambda_phi = sqrt(2 beta)/phi * (1 + (1+phi'^2)^(1/4)) / 2`` -- the
  topography-modulated pumping rate; it reduces to sqrt(2 beta)/H over a flat
  bottom of depth H and satisfies lambda_phi >= sqrt(2 beta)/H everywhere.

Everything is vectorized and can be evaluated on :class:`~ekmantopo.dual.Jet`
inputs, which is how the rest of the package obtains exact derivatives of the
frame and of the depth profile to any order it needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from .dual import Jet, exp, tanh, value_of, where

__all__ = [
    "GeometryDomainError",
    "ProjectionError",
    "ConvexShore",
    "DepthProfile",
    "Topography",
    "shore_distance",
    "frame_bundle",
    "lambda_phi",
    "delta_eff",
    "domain_probe",
]


class GeometryDomainError(ValueError):
    """Point outside the admissible region of a geometric operation."""


class ProjectionError(RuntimeError):
    """Newton projection onto the shore failed to converge."""


# ---------------------------------------------------------------------------
# shores
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ConvexShore:
    """Convex island boundary, either a disk or a sampled smooth curve.

    For the smooth kind, ``gamma``/``tangent``/``kappa`` hold samples on a
    uniform arclength grid (unit-speed parametrization) and are interpolated
    with periodic cubic splines.  Invariants: |tangent| = 1 at the samples,
    kappa >= 0 (convexity), and gamma(omega + L) = gamma(omega).
    """

    kind: str
    R: float = 0.0
    L: float = 0.0
    omega: np.ndarray | None = None
    gamma: np.ndarray | None = None
    tangent: np.ndarray | None = None
    kappa: np.ndarray | None = None
    _splines: dict = field(default_factory=dict, repr=False, compare=False)

    @staticmethod
    def disk(R: float) -> "ConvexShore":
        if R <= 0:
            raise ValueError("disk radius must be positive")
        return ConvexShore(kind="disk", R=float(R), L=2.0 * np.pi * R)

    @staticmethod
    def from_support(h, dh, d2h, n: int = 2048) -> "ConvexShore":
        """Smooth convex shore from a support function h(theta).

        The boundary point at normal angle theta is
        ``gamma = h*(cos,sin) + h'*(-sin,cos)``; the curvature radius is
        ``h + h''`` which must stay positive (strict convexity).
        """
        theta_f = np.linspace(0.0, 2.0 * np.pi, 16 * n + 1)
        speed = h(theta_f) + d2h(theta_f)
        if np.any(speed <= 0):
            raise ValueError("support function is not strictly convex")
        # arclength by composite Simpson on the fine grid
        s_f = np.concatenate(
            [[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(theta_f))]
        )
        L = float(s_f[-1])
        s_grid = np.linspace(0.0, L, n + 1)[:-1]
        theta = np.interp(s_grid, s_f, theta_f)
        # two Newton polish iterations on s(theta) = target
        for _ in range(2):
            resid = np.interp(theta, theta_f, s_f) - s_grid
            theta = theta - resid / (h(theta) + d2h(theta))
        ct, st = np.cos(theta), np.sin(theta)
        gam = np.stack([h(theta) * ct - dh(theta) * st, h(theta) * st + dh(theta) * ct], 1)
        tang = np.stack([-st, ct], 1)
        kap = 1.0 / (h(theta) + d2h(theta))
        shore = ConvexShore(
            kind="curve", L=L, omega=s_grid, gamma=gam, tangent=tang, kappa=kap
        )
        shore._build_splines()
        return shore

    def _build_splines(self):
        om = np.concatenate([self.omega, [self.L]])
        close = lambda a: np.concatenate([a, a[:1]], axis=0)
        self._splines["gx"] = CubicSpline(om, close(self.gamma[:, 0]), bc_type="periodic")
        self._splines["gy"] = CubicSpline(om, close(self.gamma[:, 1]), bc_type="periodic")
        self._splines["kappa"] = CubicSpline(om, close(self.kappa), bc_type="periodic")

    def point(self, om, nu=0):
        gx = self._splines["gx"](np.mod(om, self.L), nu)
        gy = self._splines["gy"](np.mod(om, self.L), nu)
        return np.stack([gx, gy], axis=-1)

    def curvature(self, om):
        return self._splines["kappa"](np.mod(om, self.L))


# ---------------------------------------------------------------------------
# depth profiles
# ---------------------------------------------------------------------------


def _smoothstep9(x, nu=0):
    """Value (nu=0) or nu-th derivative (nu<=4) of the 9th-order smoothstep."""
    powers = np.array([5, 6, 7, 8, 9], dtype=float)
    coeffs = np.array([126.0, -420.0, 540.0, -315.0, 70.0])
    for _ in range(nu):
        coeffs = coeffs * powers
        powers = powers - 1.0
    xv = value_of(x)
    lo = xv <= 0.0
    hi = xv >= 1.0
    mid = ~(lo | hi)
    xm = where(mid, x, 0.5) if isinstance(x, Jet) else np.where(mid, xv, 0.5)
    acc = 0.0
    for c, p in zip(coeffs, powers):
        acc = acc + c * xm ** int(p)
    hi_val = 1.0 if nu == 0 else 0.0
    return where(mid, acc, where(hi, hi_val, 0.0))


@dataclass(frozen=True)
class DepthProfile:
    """Depth as a function of shore distance; zero at rho0, bounded by H.

    Families:
      ``exp``      phi = H (1 - exp(-(rho-rho0)/ell))
      ``tanh``     phi = H tanh((rho-rho0)/ell)
      ``flatcap``  phi = H s9((rho-rho0)/ell), exactly H for rho >= rho0+ell,
                   with C^4 joins (9th-order polynomial smoothstep).

    The flat-cap family has an interior plateau where phi' = 0; it exists to
    validate the flat-bottom pumping coefficient and is flagged in run
    metadata because the variable-slope theory assumes {phi' = 0} negligible.
    """

    family: str
    rho0: float
    H: float
    ell: float

    def __post_init__(self):
        if self.rho0 <= 0 or self.H <= 0 or self.ell <= 0:
            raise ValueError("rho0, H, ell must all be positive")
        if self.family not in ("exp", "tanh", "flatcap"):
            raise ValueError(f"unknown depth family {self.family!r}")

    def _check(self, rho):
        if np.any(value_of(rho) < self.rho0 - 1e-12):
            raise GeometryDomainError("depth profile evaluated at rho < rho0")

    def _x(self, rho):
        return (rho - self.rho0) / self.ell

    def phi(self, rho):
        self._check(rho)
        x = self._x(rho)
        if self.family == "exp":
            return self.H * (1.0 - exp(-x))
        if self.family == "tanh":
            return self.H * tanh(x)
        return self.H * _smoothstep9(x)

    def dphi(self, rho):
        self._check(rho)
        x = self._x(rho)
        if self.family == "exp":
            return self.H / self.ell * exp(-x)
        if self.family == "tanh":
            th = tanh(x)
            return self.H / self.ell * (1.0 - th * th)
        return self.H / self.ell * _smoothstep9(x, nu=1)

    def d2phi(self, rho):
        self._check(rho)
        x = self._x(rho)
        if self.family == "exp":
            return -self.H / self.ell**2 * exp(-x)
        if self.family == "tanh":
            th = tanh(x)
            return -2.0 * self.H / self.ell**2 * th * (1.0 - th * th)
        return self.H / self.ell**2 * _smoothstep9(x, nu=2)


# ---------------------------------------------------------------------------
# topography
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Topography:
    """Shore + depth profile + dimensionless viscosity constant beta."""

    shore: ConvexShore
    depth: DepthProfile
    beta: float
    flat_cap_assumption_violation: bool = field(init=False, default=False)

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        object.__setattr__(
            self, "flat_cap_assumption_violation", self.depth.family == "flatcap"
        )

    @property
    def rho0(self):
        return self.depth.rho0

    @property
    def H(self):
        return self.depth.H

    def phi(self, rho):
        return self.depth.phi(rho)

    def dphi(self, rho):
        return self.depth.dphi(rho)


def delta_eff(rho, topo: Topography):
    """Bottom-layer thickening factor delta = (1 + phi'^2)^(3/4) >= 1."""
    dphi = topo.depth.dphi(rho)
    return (1.0 + dphi * dphi) ** 0.75


def lambda_phi(rho, topo: Topography):
    """Pumping rate sqrt(2 beta)/phi * (1 + (1 + phi'^2)^(1/4)) / 2.

    Positive wherever phi > 0; errors out on the shore circle phi = 0.
    """
    phi = topo.depth.phi(rho)
    if np.any(value_of(phi) <= 0.0):
        raise GeometryDomainError("lambda_phi is singular where phi = 0")
    dphi = topo.depth.dphi(rho)
    q = (1.0 + dphi * dphi) ** 0.25
    return np.sqrt(2.0 * topo.beta) / phi * (1.0 + q) * 0.5


def dlambda_phi(rho, topo: Topography):
    """d(lambda_phi)/drho, analytic (used by the order-one correctors)."""
    phi = topo.depth.phi(rho)
    dphi = topo.depth.dphi(rho)
    d2phi = topo.depth.d2phi(rho)
    c = 0.5 * np.sqrt(2.0 * topo.beta)
    q = (1.0 + dphi * dphi) ** 0.25
    dq = 0.5 * dphi * d2phi * (1.0 + dphi * dphi) ** (-0.75)
    return c * (dq * phi - (1.0 + q) * dphi) / (phi * phi)


# ---------------------------------------------------------------------------
# shore distance and moving frame
# ---------------------------------------------------------------------------


def _project_to_curve(shore: ConvexShore, pts: np.ndarray, max_iter: int = 50):
    """Foot point parameter omega* by Newton on (x - gamma(w)) . tangent(w) = 0."""
    gam = shore.gamma
    d2 = np.sum((pts[:, None, :] - gam[None, :, :]) ** 2, axis=2)
    om = shore.omega[np.argmin(d2, axis=1)].astype(float)
    for it in range(max_iter):
        g = shore.point(om)
        t = shore.point(om, nu=1)
        diff = pts - g
        f = np.sum(diff * t, axis=1)
        kap = shore.curvature(om)
        rho = np.sqrt(np.sum(diff * diff, axis=1))
        fp = -1.0 - rho * kap
        step = f / fp
        om = om - step
        if np.max(np.abs(step)) < 1e-13 * max(shore.L, 1.0):
            g = shore.point(om)
            resid = np.sum((pts - g) * shore.point(om, nu=1), axis=1)
            if np.max(np.abs(resid)) < 1e-9 * max(shore.L, 1.0):
                return np.mod(om, shore.L)
    raise ProjectionError(f"shore projection did not converge in {max_iter} iterations")


def shore_distance(x_h, shore: ConvexShore):
    """(rho, grad_rho, grad_perp_rho, lap_rho) at exterior points x_h.

    ``lap_rho = kappa/(1 + rho kappa)`` at the foot point -- the standard
    curvature formula for the Laplacian of a convex distance function (for
    the disk it reduces to 1/|x|).  Raises for points inside or on Gamma.
    """
    pts = np.atleast_2d(np.asarray(x_h, dtype=float))
    if shore.kind == "disk":
        r = np.hypot(pts[:, 0], pts[:, 1])
        if np.any(r <= shore.R * (1.0 + 1e-14)):
            raise GeometryDomainError("point inside or on the shore circle")
        rho = r - shore.R
        n = pts / r[:, None]
        lap = 1.0 / r
    else:
        om = _project_to_curve(shore, pts)
        g = shore.point(om)
        diff = pts - g
        rho = np.sqrt(np.sum(diff * diff, axis=1))
        if np.any(rho <= 1e-12):
            raise GeometryDomainError("point on the shore curve")
        # exterior test: outward means diff . outward_normal > 0
        tang = shore.point(om, nu=1)
        outward = np.stack([tang[:, 1], -tang[:, 0]], axis=1)
        side = np.sum(diff * outward, axis=1)
        if np.any(side <= 0):
            raise GeometryDomainError("point inside the shore curve")
        n = diff / rho[:, None]
        kap = shore.curvature(om)
        lap = kap / (1.0 + rho * kap)
    nperp = np.stack([-n[:, 1], n[:, 0]], axis=1)
    if np.ndim(x_h) == 1:
        return float(rho[0]), n[0], nperp[0], float(lap[0])
    return rho, n, nperp, lap


def frame_bundle(x, y, shore: ConvexShore):
    """rho, frame components and lap_rho in the arithmetic of the inputs.

    Accepts ndarrays (value path) or Jets (derivative path) for ``x, y`` and
    returns ``(rho, nx, ny, lap_rho)`` in the same arithmetic, where
    ``(nx, ny)`` is grad rho.  For sampled curves the foot-point parameter is
    itself propagated as a jet by Newton iteration on the jet algebra.
    """
    if shore.kind == "disk":
        r = (x * x + y * y) ** 0.5
        rho = r - shore.R
        return rho, x / r, y / r, 1.0 / r
    # smooth curve: float foot point first, then jet Newton polish
    xv, yv = value_of(x), value_of(y)
    pts = np.stack([np.ravel(xv), np.ravel(yv)], axis=1)
    om0 = _project_to_curve(shore, pts).reshape(np.shape(xv))
    if not isinstance(x, Jet):
        g = shore.point(om0)
        dx = xv - g[..., 0]
        dy = yv - g[..., 1]
        rho = np.sqrt(dx * dx + dy * dy)
        kap = shore.curvature(om0)
        return rho, dx / rho, dy / rho, kap / (1.0 + rho * kap)
    om = Jet.constant(om0)
    for _ in range(3):  # quadratic jet convergence: 2 suffice, 1 spare
        gx = _spline_jet(shore._splines["gx"], om, shore.L)
        gy = _spline_jet(shore._splines["gy"], om, shore.L)
        tx = _spline_jet(shore._splines["gx"], om, shore.L, nu=1)
        ty = _spline_jet(shore._splines["gy"], om, shore.L, nu=1)
        dx = x - gx
        dy = y - gy
        f = dx * tx + dy * ty
        kap = _spline_jet(shore._splines["kappa"], om, shore.L)
        rho = (dx * dx + dy * dy) ** 0.5
        om = om - f / (-1.0 - rho * kap)
    gx = _spline_jet(shore._splines["gx"], om, shore.L)
    gy = _spline_jet(shore._splines["gy"], om, shore.L)
    dx = x - gx
    dy = y - gy
    rho = (dx * dx + dy * dy) ** 0.5
    kap = _spline_jet(shore._splines["kappa"], om, shore.L)
    lap = kap / (1.0 + rho * kap)
    return rho, dx / rho, dy / rho, lap


def _spline_jet(spl, om, L, nu=0):
    if not isinstance(om, Jet):
        return spl(np.mod(om, L), nu)
    w = np.mod(om.val, L)
    return om._compose(spl(w, nu), spl(w, nu + 1), spl(w, nu + 2))


# ---------------------------------------------------------------------------
# domain membership
# ---------------------------------------------------------------------------


def domain_probe(x, topo: Topography):
    """(inside, d_phi) for a 3-D point; d_phi = min(-z, phi + z), 0 outside.

    ``inside`` means rho(x_h) > rho0 and -phi(rho) < z < 0; the boundary
    distance d_phi is the smaller of the distances to the rigid lid and to
    the bottom, reported as 0 on the boundary itself.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    rho, _, _, _ = shore_distance(pts[:, :2], topo.shore)
    rho = np.atleast_1d(rho)
    z = pts[:, 2]
    inside = rho > topo.rho0
    dphi = np.zeros(len(pts))
    if np.any(inside):
        phi = value_of(topo.depth.phi(np.where(inside, rho, topo.rho0)))
        water = inside & (z < 0) & (z > -phi)
        inside = water
        dphi = np.where(water, np.minimum(-z, phi + z), 0.0)
    if single:
        return bool(inside[0]), float(dphi[0])
    return inside, dphi
