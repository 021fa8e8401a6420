"""Exact differentiation of ansatz terms and the differential operators.

Everything here runs on the jet machinery of :mod:`ekmantopo.dual`: one
evaluation of a field on seeded jets produces its value, full first spatial
derivatives, componentwise Laplacians, and the time derivative, all exact for
the implemented composition (no finite differences; those are kept as a test
oracle only).  The fast layer scales sqrt(E) and eps^(1-a) flow through the
chain rule like any other factor, which is why the jets stay accurate where
naive differencing would lose digits.

The main consumers are

* :func:`stokes_coriolis_residual` -- the defect
  dU/dt - eps beta Lap U + (1/eps) e_z ^ U + (1/eps) grad P
  of the assembled approximate solution;
* :func:`nonlinear_structure_error` -- the distance of the self-advection
  U.grad U from its limit -(u_bar^theta)^2 Lap(rho) grad(rho);
* the divergence/no-slip exactness checks of :mod:`ekmantopo.verify`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dual import Jet, seed_point, value_of
from .geometry import frame_bundle
from .profiles import (
    TERM_IDS,
    AnsatzParams,
    FrameVector,
    assemble_components,
    evaluate_term,
    limit_profile,
    pressure_p_app,
    u_theta_eps,
)

__all__ = [
    "FrameJet",
    "field_jets",
    "jet_of",
    "divergence",
    "coriolis",
    "advect",
    "laplacian",
    "stokes_coriolis_residual",
    "nonlinear_structure_error",
    "residual_sampler",
    "nonlinear_error_sampler",
    "gradient_sup_sampler",
]


@dataclass
class FrameJet:
    """Value and exact derivatives of a vector (or scalar) field at points.

    ``value`` holds frame components; the derivative blocks are Cartesian:
    ``d_space[i, j] = d U_i / d x_j`` with x = (x, y, z), ``d2_trace`` the
    Laplacian of each Cartesian component, ``d_t`` its time derivative.
    Batched over a trailing axis.
    """

    value: tuple
    cart: np.ndarray  # (3, ...) Cartesian components
    d_space: np.ndarray  # (3, 3, ...)
    d2_trace: np.ndarray  # (3, ...)
    d_t: np.ndarray  # (3, ...)

    def frame_vector(self, i=0):
        return FrameVector(
            float(np.ravel(self.value[0])[i]),
            float(np.ravel(self.value[1])[i]),
            float(np.ravel(self.value[2])[i]),
        )


def _cartesian_jets_from_components(comp, nx, ny):
    vr, vth, vz = comp
    return vr * nx - vth * ny, vr * ny + vth * nx, vz


def _pack(ux, uy, uz, vr, vth, vz):
    cart = np.stack([ux.val, uy.val, uz.val])
    d_space = np.stack([c.g[:3] for c in (ux, uy, uz)])
    d2 = np.stack([c.lap for c in (ux, uy, uz)])
    d_t = np.stack([c.d_t for c in (ux, uy, uz)])
    return FrameJet(
        value=(value_of(vr), value_of(vth), value_of(vz)),
        cart=cart,
        d_space=d_space,
        d2_trace=d2,
        d_t=d_t,
    )


def field_jets(t, x, y, z, p: AnsatzParams, terms=TERM_IDS):
    """Exact jets of the assembled velocity at a batch of points."""
    xj, yj, zj, tj = seed_point(x, y, z, t)
    rho, nx, ny, lap = frame_bundle(xj, yj, p.topo.shore)
    comp = assemble_components(tj, rho, zj, lap, p, terms)
    ux, uy, uz = _cartesian_jets_from_components(comp, nx, ny)
    return _pack(ux, uy, uz, *comp)


def term_jets(term, t, x, y, z, p: AnsatzParams):
    xj, yj, zj, tj = seed_point(x, y, z, t)
    rho, nx, ny, lap = frame_bundle(xj, yj, p.topo.shore)
    if term == "limit":
        comp = limit_profile(tj, rho, p)
    else:
        comp = evaluate_term(term, tj, rho, zj, lap, p)
    ux, uy, uz = _cartesian_jets_from_components(comp, nx, ny)
    return _pack(ux, uy, uz, *comp)


def jet_of(term, t, x, p: AnsatzParams):
    """FrameJet of a single term (or "limit") at one space-time point."""
    if term not in TERM_IDS and term != "limit":
        raise ValueError(f"unknown term id {term!r}")
    x = np.asarray(x, dtype=float)
    return term_jets(
        term, np.array([t]), np.array([x[0]]), np.array([x[1]]), np.array([x[2]]), p
    )


def pressure_jet(t, x, y, z, p: AnsatzParams, pressure="full"):
    """Jet of the assembled pressure; .g[:3] is grad P.

    ``pressure`` selects the full P0 + eps P1_bot ("full") or P0 alone
    ("p0", used when testing the interior balance in isolation).
    """
    from .profiles import pressure_p0, pressure_p1_bot

    xj, yj, zj, tj = seed_point(x, y, z, t)
    rho, nx, ny, lap = frame_bundle(xj, yj, p.topo.shore)
    # only grad P enters any balance; t stays a plain value here
    t_v = np.asarray(t, dtype=float)
    P0 = pressure_p0(t_v, rho, p, with_value=False)
    if pressure == "p0":
        return P0, nx, ny
    return P0 + p.eps * pressure_p1_bot(t_v, rho, zj, p), nx, ny


# ---------------------------------------------------------------------------
# pointwise differential operators on FrameJets
# ---------------------------------------------------------------------------


def divergence(jet: FrameJet):
    return jet.d_space[0, 0] + jet.d_space[1, 1] + jet.d_space[2, 2]


def coriolis(v):
    """e_z ^ v for a Cartesian vector (3, ...) array."""
    v = np.asarray(v, dtype=float)
    return np.stack([-v[1], v[0], np.zeros_like(v[0])])


def advect(jet: FrameJet):
    """(U . grad) U from the packed derivatives, Cartesian (3, ...)."""
    return np.einsum("ij...,j...->i...", jet.d_space, jet.cart)


def laplacian(jet: FrameJet):
    return jet.d2_trace


def gradient_frobenius_sq(jet: FrameJet):
    return np.einsum("ij...,ij...->...", jet.d_space, jet.d_space)


# ---------------------------------------------------------------------------
# residuals of the rotating Stokes system and of the nonlinear structure
# ---------------------------------------------------------------------------


def stokes_coriolis_residual_batch(
    t, x, y, z, p: AnsatzParams, terms=TERM_IDS, pressure="full"
):
    """E(t,x) = dU/dt - eps beta Lap U + (1/eps)(e_z ^ U + grad P), Cartesian."""
    jet = field_jets(t, x, y, z, p, terms)
    P, _, _ = pressure_jet(t, x, y, z, p, pressure)
    gradP = P.g[:3]
    resid = (
        jet.d_t
        - p.eps * p.topo.beta * jet.d2_trace
        + (coriolis(jet.cart) + gradP) / p.eps
    )
    return resid


def stokes_coriolis_residual(t, x, p: AnsatzParams, terms=TERM_IDS, pressure="full"):
    """Single-point residual vector (3,)."""
    x = np.asarray(x, dtype=float)
    r = stokes_coriolis_residual_batch(
        np.array([t]),
        np.array([x[0]]),
        np.array([x[1]]),
        np.array([x[2]]),
        p,
        terms,
        pressure,
    )
    return r[:, 0]


def nonlinear_structure_error_batch(t, x, y, z, p: AnsatzParams, terms=TERM_IDS):
    """advect(U_app) + (u_bar^theta)^2 Lap(rho) grad(rho), Cartesian (3,...)."""
    jet = field_jets(t, x, y, z, p, terms)
    xj = np.asarray(x, dtype=float)
    yj = np.asarray(y, dtype=float)
    rho, nx, ny, lap = frame_bundle(xj, yj, p.topo.shore)
    _, ubar, _ = limit_profile(np.asarray(t, dtype=float), rho, p)
    ubar = value_of(ubar)
    target = np.stack([ubar**2 * lap * nx, ubar**2 * lap * ny, np.zeros_like(ubar)])
    return advect(jet) + target


def nonlinear_structure_error(t, x, p: AnsatzParams, terms=TERM_IDS):
    x = np.asarray(x, dtype=float)
    r = nonlinear_structure_error_batch(
        np.array([t]), np.array([x[0]]), np.array([x[1]]), np.array([x[2]]), p, terms
    )
    return r[:, 0]


# ---------------------------------------------------------------------------
# samplers consumed by the quadrature norms (disk shores)
# ---------------------------------------------------------------------------


def _axis_points(rho, z):
    """Place the batch on the positive-x axis ray; norms are axisymmetric."""
    return rho, np.zeros_like(rho), z


def residual_sampler(p: AnsatzParams, terms=TERM_IDS):
    if p.topo.shore.kind != "disk":
        raise NotImplementedError("samplers require a disk shore")
    R = p.topo.shore.R

    def sampler(t, rho, z):
        x, y, zz = R + rho, np.zeros_like(rho), z
        t_b = np.broadcast_to(np.asarray(t, float), rho.shape)
        r = stokes_coriolis_residual_batch(t_b, x, y, zz, p, terms)
        return (r[0], r[1], r[2])

    return sampler


def nonlinear_error_sampler(p: AnsatzParams, terms=TERM_IDS):
    if p.topo.shore.kind != "disk":
        raise NotImplementedError("samplers require a disk shore")
    R = p.topo.shore.R

    def sampler(t, rho, z):
        x, y, zz = R + rho, np.zeros_like(rho), z
        t_b = np.broadcast_to(np.asarray(t, float), rho.shape)
        r = nonlinear_error_sampler_batch(t_b, x, y, zz, p, terms)
        return (r[0], r[1], r[2])

    return sampler


def nonlinear_error_sampler_batch(t, x, y, z, p, terms):
    return nonlinear_structure_error_batch(t, x, y, z, p, terms)


def gradient_sup_sampler(p: AnsatzParams, terms):
    """sup-norm sampler of |grad U| (Frobenius) over given points."""
    if p.topo.shore.kind != "disk":
        raise NotImplementedError("samplers require a disk shore")
    R = p.topo.shore.R

    def sup(t, rho, z):
        x, y, zz = R + rho, np.zeros_like(rho), z
        t_b = np.broadcast_to(np.asarray(t, float), rho.shape)
        jet = field_jets(t_b, x, y, zz, p, terms)
        return float(np.sqrt(np.max(gradient_frobenius_sq(jet))))

    return sup
