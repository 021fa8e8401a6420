import numpy as np
import pytest
from dataclasses import replace

from ekmantopo.dual import Jet, seed_point, value_of
from ekmantopo.geometry import (
    ConvexShore,
    DepthProfile,
    GeometryDomainError,
    Topography,
    frame_bundle,
    lambda_phi,
)
from ekmantopo.profiles import (
    BOTTOM_TERMS,
    SURFACE_TERMS,
    AnsatzParams,
    InitialSwirl,
    assemble_U_app,
    assemble_components,
    evaluate_term,
    limit_profile,
    pressure_p0,
    pressure_p1_bot,
    surface_layer_matrix,
    u_theta_eps,
)


def _deep_rho(params, n, rng):
    d = params.data
    return rng.uniform(d.center - 1.5 * d.width, d.center + 1.5 * d.width, n)


def test_u_theta_eps_branches(params):
    p = params
    topo = p.topo
    # chi argument >= 1: equals exp(-t lam) u0 exactly
    rho = np.array([3.4])
    t = 0.7
    lam = value_of(lambda_phi(rho, topo))
    expected = np.exp(-t * lam) * value_of(p.data.u0(rho, topo))
    assert np.allclose(value_of(u_theta_eps(t, rho, p)), expected, rtol=1e-14)
    # phi <= eps^(1-a)/2: identically zero
    target = 0.4 * p.eps1ma
    rho_shallow = topo.rho0 + np.array([1e-3, 2e-3])
    phi = value_of(topo.depth.phi(rho_shallow))
    assert np.all(phi < 0.5 * p.eps1ma)
    assert np.all(value_of(u_theta_eps(t, rho_shallow, p)) == 0.0)
    # t = 0 deep interior: u0 itself
    assert np.allclose(
        value_of(u_theta_eps(0.0, rho, p)), value_of(p.data.u0(rho, topo)), rtol=1e-14
    )


def test_u_theta_eps_damping_ode(params):
    """d/dt u_eps + lambda_phi u_eps = 0 at machine precision (jet in t)."""
    rng = np.random.default_rng(0)
    rho = _deep_rho(params, 50, rng)
    t = rng.uniform(0, 2, 50)
    x, y, z, tj = seed_point(1.0 + rho, 0 * rho, 0 * rho, t)
    rj, _, _, _ = frame_bundle(x, y, params.topo.shore)
    u = u_theta_eps(tj, rj, params)
    lam = value_of(lambda_phi(rho, params.topo))
    assert np.abs(u.d_t + lam * u.val).max() < 1e-12


def test_limit_profile(params):
    rho = np.array([3.4])
    vr, vth, vz = limit_profile(0.0, rho, params)
    assert value_of(vr)[0] == 0.0 and value_of(vz)[0] == 0.0
    assert value_of(vth)[0] == pytest.approx(
        value_of(params.data.u0(rho, params.topo))[0]
    )
    # positive damping: vanishes at large time
    _, vth_late, _ = limit_profile(200.0, rho, params)
    assert abs(value_of(vth_late)[0]) < 1e-30


def test_limit_profile_flat_plateau_rate():
    """beta = 1/2, phi = 1, phi' = 0 plateau: u_bar(1) = u0 / e."""
    depth = DepthProfile("flatcap", 0.2, 1.0, 0.5)
    topo = Topography(ConvexShore.disk(1.0), depth, 0.5)
    data = InitialSwirl("gaussian", 1.0, 2.0, 0.4)
    p = AnsatzParams(topo=topo, eps=0.05, a=0.75, data=data)
    rho = np.array([2.0])
    _, v1, _ = limit_profile(1.0, rho, p)
    _, v0, _ = limit_profile(0.0, rho, p)
    assert value_of(v1)[0] == pytest.approx(value_of(v0)[0] * np.exp(-1.0), rel=1e-12)


def test_surface_layer_matrix_boundary_conditions():
    M0 = surface_layer_matrix(0.0)
    assert np.allclose(M0, -np.eye(2), atol=1e-15)
    Mfar = surface_layer_matrix(-40.0)
    assert np.abs(Mfar).max() < 1e-15


def test_surface_layer_value_at_minus_pi(params):
    """z = -pi sqrt(E): surface term equals (0, u_eps e^-pi, 0).

    Needs pi sqrt(E) inside the chi = 1 plateau, which holds for eps = 0.05.
    """
    p = params.with_eps(0.05)
    rho = np.array([3.4])
    z = np.array([-np.pi * p.sqrtE])
    assert -z[0] < 0.5 * p.eps1ma  # chi = 1 there
    lap = 1.0 / (1.0 + rho)
    vr, vth, vz = evaluate_term("u0_surf", 0.3, rho, z, lap, p)
    u = value_of(u_theta_eps(0.3, rho, p))[0]
    assert value_of(vr)[0] == pytest.approx(0.0, abs=1e-16)
    assert value_of(vth)[0] == pytest.approx(u * np.exp(-np.pi), rel=1e-12)
    assert np.exp(-np.pi) == pytest.approx(0.0432139, abs=5e-8)
    assert value_of(vz)[0] == 0.0


def test_u0int_is_azimuthal_and_z_free(params):
    rho = np.array([3.0])
    for z in (np.array([-0.3]), np.array([-0.9])):
        vr, vth, vz = evaluate_term("u0_int", 0.5, rho, z, 1.0 / (1 + rho), params)
        assert value_of(vr)[0] == 0.0 and value_of(vz)[0] == 0.0
    a = evaluate_term("u0_int", 0.5, rho, np.array([-0.2]), 1.0 / (1 + rho), params)
    b = evaluate_term("u0_int", 0.5, rho, np.array([-1.2]), 1.0 / (1 + rho), params)
    assert value_of(a[1])[0] == value_of(b[1])[0]


def test_geostrophic_balance(params):
    """rho- and z-components of e_z ^ U0 + grad P0 vanish pointwise."""
    rng = np.random.default_rng(4)
    rho = _deep_rho(params, 40, rng)
    t = rng.uniform(0, 1, 40)
    rj = Jet.variable(rho, 0)
    P = pressure_p0(t, rj, params)
    u = value_of(u_theta_eps(t, rho, params))
    # frame components: e_z ^ (u perp) = -u grad_rho; grad P0 = dP/drho grad_rho
    resid_rho = -u + P.g[0]
    assert np.abs(resid_rho).max() < 1e-9
    # z-component of both is identically zero
    zj = Jet.variable(np.full(40, -0.5), 2)
    Pz = pressure_p0(t, rho, params)
    assert np.ndim(Pz) == 1  # no z dependence at all


def test_bottom_layer_impermeability(params):
    """U^z + phi' U^rho = 0 for the order-0 and order-a bottom terms."""
    rng = np.random.default_rng(5)
    rho = _deep_rho(params, 60, rng)
    phi = value_of(params.topo.depth.phi(rho))
    dphi = value_of(params.topo.depth.dphi(rho))
    z = -phi + rng.uniform(0.01, 2.0, 60) * params.sqrtE
    for term in ("u0_bot", "ua_bot"):
        vr, vth, vz = evaluate_term(term, 0.2, rho, z, 1.0 / (1 + rho), params)
        assert np.abs(value_of(vz) + dphi * value_of(vr)).max() < 1e-14


def test_ua_terms_vanish_at_boundary(params):
    rho = _deep_rho(params, 20, np.random.default_rng(6))
    phi = value_of(params.topo.depth.phi(rho))
    lap = 1.0 / (1 + rho)
    vr, _, _ = evaluate_term("ua_surf", 0.0, rho, np.zeros_like(rho), lap, params)
    assert np.abs(value_of(vr)).max() == 0.0  # chi'(0) = 0
    vr, _, vz = evaluate_term("ua_bot", 0.0, rho, -phi, lap, params)
    assert np.abs(value_of(vr)).max() == 0.0


def test_ua_exponentially_small(params):
    """|Ua_surf| <= C exp(-(sqrt(2 beta)/2) eps^-a) envelope."""
    rng = np.random.default_rng(7)
    rho = _deep_rho(params, 200, rng)
    phi = value_of(params.topo.depth.phi(rho))
    z = -rng.uniform(0.0, 1.0, 200) * phi
    vr, vth, vz = evaluate_term("ua_surf", 0.0, rho, z, 1.0 / (1 + rho), params)
    env = np.exp(-0.5 * np.sqrt(2 * params.topo.beta) * params.eps ** (-params.a))
    amp = params.data.sup_abs(params.topo)
    assert np.abs(value_of(vr)).max() <= 20.0 * amp * env


def test_u1_int_structure(params):
    """theta = 0, rho-component lambda u (z-free), z = 0 trace matches."""
    rng = np.random.default_rng(8)
    rho = _deep_rho(params, 30, rng)
    lap = 1.0 / (1 + rho)
    t = 0.4
    vr1, vth1, vz1 = evaluate_term("u1_int", t, rho, np.full(30, -0.3), lap, params)
    vr2, _, _ = evaluate_term("u1_int", t, rho, np.full(30, -1.0), lap, params)
    assert np.abs(value_of(vth1)).max() == 0.0
    assert np.allclose(value_of(vr1), value_of(vr2), rtol=1e-14)
    lam = value_of(lambda_phi(rho, params.topo))
    u = value_of(u_theta_eps(t, rho, params))
    assert np.allclose(value_of(vr1), lam * u, rtol=1e-12)
    # dt u_eps + U1_int^rho = 0
    x, y, z, tj = seed_point(1 + rho, 0 * rho, np.full(30, -0.3), np.full(30, t))
    rj, _, _, _ = frame_bundle(x, y, params.topo.shore)
    uj = u_theta_eps(tj, rj, params)
    assert np.abs(uj.d_t + value_of(vr1)).max() < 1e-10


def test_u1_surf_trace_cancels_u1_int(params):
    rho = _deep_rho(params, 25, np.random.default_rng(9))
    lap = 1.0 / (1 + rho)
    z0 = np.zeros_like(rho)
    vr_s, _, vz_s = evaluate_term("u1_surf", 0.6, rho, z0, lap, params)
    vr_i, _, vz_i = evaluate_term("u1_int", 0.6, rho, z0, lap, params)
    assert np.abs(value_of(vr_s) + value_of(vr_i)).max() < 1e-14
    assert np.abs(value_of(vz_s) + value_of(vz_i)).max() < 1e-14


def test_u1_surf_vanishes_below_k_support(params):
    rho = _deep_rho(params, 10, np.random.default_rng(10))
    z = np.full(10, -2.5 * params.sqrtE)
    vr, _, _ = evaluate_term("u1_surf", 0.1, rho, z, 1.0 / (1 + rho), params)
    assert np.abs(value_of(vr)).max() == 0.0


def test_u2_terms_vanish_at_ends(params):
    rho = _deep_rho(params, 15, np.random.default_rng(11))
    phi = value_of(params.topo.depth.phi(rho))
    lap = 1.0 / (1 + rho)
    for z in (np.zeros_like(rho), -2.0 * params.sqrtE * np.ones_like(rho)):
        _, _, vz = evaluate_term("u2_surf", 0.0, rho, z, lap, params)
        assert np.abs(value_of(vz)).max() < 1e-10
    _, _, vz = evaluate_term("u2_bot", 0.0, rho, -phi, lap, params)
    assert np.abs(value_of(vz)).max() < 1e-10


def test_u2_bot_flat_profile_drops_k1_term():
    depth = DepthProfile("flatcap", 0.2, 1.5, 0.5)
    topo = Topography(ConvexShore.disk(1.0), depth, 0.5)
    data = InitialSwirl("gaussian", 1.0, 2.4, 0.4)
    p = AnsatzParams(topo=topo, eps=0.1, a=0.75, data=data)
    rho = np.array([2.4])  # plateau: delta' = 0
    phi = value_of(depth.phi(rho))
    z = -phi + 1.5 * p.sqrtE
    _, _, vz = evaluate_term("u2_bot", 0.0, rho, z, 1.0 / (1 + rho), p)
    # only the K_surf part survives; check by comparing against the formula
    lam = value_of(lambda_phi(rho, topo))
    u = value_of(u_theta_eps(0.0, rho, p))
    rng_term = value_of(vz)[0]
    from ekmantopo.profiles import du_theta_eps

    G = value_of(du_theta_eps(0.0, rho, p)) * lam + u * (
        value_of(lambda_phi(rho, topo)) / (1 + rho)
    )
    # delta = 1 on the plateau
    zeta1 = -(z + phi) / p.sqrtE
    from ekmantopo.geometry import dlambda_phi

    G_full = (value_of(dlambda_phi(rho, topo)) * u
              + lam * value_of(du_theta_eps(0.0, rho, p))
              + lam * u / (1 + rho))
    expected = np.sqrt(2 * topo.beta) * G_full * p.k.K_surf(zeta1)
    assert rng_term == pytest.approx(float(expected[0]), rel=1e-12)


def test_p1_bot_vanishes_for_flat_bottom():
    depth = DepthProfile("flatcap", 0.2, 1.5, 0.5)
    topo = Topography(ConvexShore.disk(1.0), depth, 0.5)
    data = InitialSwirl("gaussian", 1.0, 2.4, 0.4)
    p = AnsatzParams(topo=topo, eps=0.1, a=0.75, data=data)
    rho = np.array([2.4])
    phi = value_of(depth.phi(rho))
    assert value_of(pressure_p1_bot(0.0, rho, -phi + p.sqrtE, p))[0] == 0.0


def test_p1_bot_wall_value_and_decay(params):
    """At z = -phi: P1 = +(sqrt(2 beta)/2) phi'/(1+phi'^2)^(1/4) u_eps.

    The sign is plus: it is the unique choice cancelling the order (1/eps)
    vertical momentum balance of the bottom layer (asserted in
    test_calculus.test_bottom_layer_momentum_cancellation).
    """
    rho = np.array([3.4])
    topo = params.topo
    phi = value_of(topo.depth.phi(rho))
    dphi = value_of(topo.depth.dphi(rho))
    u = value_of(u_theta_eps(0.3, rho, params))
    got = value_of(pressure_p1_bot(0.3, rho, -phi, params))[0]
    expected = (
        0.5 * np.sqrt(2 * topo.beta) * dphi[0] / (1 + dphi[0] ** 2) ** 0.25 * u[0]
    )
    assert got == pytest.approx(expected, rel=1e-13)
    # exponential envelope in the layer variable
    delta = (1 + dphi[0] ** 2) ** 0.75
    zs = -phi[0] + np.linspace(0.5, 6.0, 12) * delta * params.sqrtE
    vals = np.abs(
        value_of(pressure_p1_bot(0.3, np.full(12, rho[0]), zs, params))
    )
    env = (np.sqrt(2.0) * abs(expected)) * np.exp(
        -(zs + phi[0]) / (delta * params.sqrtE)
    )
    assert np.all(vals <= env * (1 + 1e-12))


def test_order0_layer_odes_untruncated(params):
    """-1/2 U'' -/+ rotation terms vanish exactly for untruncated profiles.

    Surface: -(1/2) d2_z1 U^rho - U^theta = 0 and -(1/2) d2 U^theta + U^rho = 0;
    bottom carries the (1+phi'^2)^2/(2 delta^2) and (1+phi'^2)/(2 delta^2)
    coefficients.
    """
    pu = params.untruncated()
    rho = np.array([1.1])  # steep slope region
    topo = pu.topo
    phi = value_of(topo.depth.phi(rho))[0]
    dphi = value_of(topo.depth.dphi(rho))[0]
    delta = (1 + dphi**2) ** 0.75
    one_p = 1 + dphi**2
    for zeta in np.linspace(-3.0, -0.1, 11):
        # surface profile in its own layer variable
        zj = Jet.variable(np.array([zeta * params.sqrtE]), 2)
        vr, vth, vz = evaluate_term("u0_surf", 0.2, rho, zj, 1.0 / (1 + rho), pu)
        d2r = vr.lap * pu.sqrtE**2  # second derivative in zeta
        d2t = vth.lap * pu.sqrtE**2
        assert abs(-0.5 * d2r[0] - value_of(vth)[0]) < 1e-12
        assert abs(-0.5 * d2t[0] + value_of(vr)[0]) < 1e-12
        # bottom
        zb = Jet.variable(np.array([-phi - zeta * delta * pu.sqrtE]), 2)
        vr, vth, vz = evaluate_term("u0_bot", 0.2, rho, zb, 1.0 / (1 + rho), pu)
        scale = (delta * pu.sqrtE) ** 2
        d2r = vr.lap * scale
        d2t = vth.lap * scale
        assert abs(-(one_p**2 / (2 * delta**2)) * d2r[0] - value_of(vth)[0]) < 1e-11
        assert abs(-(one_p / (2 * delta**2)) * d2t[0] + value_of(vr)[0]) < 1e-11


def test_disjoint_supports_on_truncated_ocean(params):
    """Surface and bottom truncated terms never overlap where phi >= 2 eps^(1-a)."""
    rng = np.random.default_rng(12)
    topo = params.topo
    rho = rng.uniform(0.2 + 1e-6, 8.0, 4000)
    phi = value_of(topo.depth.phi(rho))
    keep = phi >= 2.0 * params.eps1ma
    rho, phi = rho[keep], phi[keep]
    z = -rng.uniform(0, 1, len(rho)) * phi
    lap = 1.0 / (1 + rho)
    for ts in SURFACE_TERMS:
        s = evaluate_term(ts, 0.1, rho, z, lap, params)
        mag_s = sum(np.abs(value_of(c)) for c in s)
        for tb in BOTTOM_TERMS:
            b = evaluate_term(tb, 0.1, rho, z, lap, params)
            mag_b = sum(np.abs(value_of(c)) for c in b)
            assert np.max(mag_s * mag_b) == 0.0


def test_assemble_boundary_trace_and_outside_error(params):
    rng = np.random.default_rng(13)
    amp = params.data.sup_abs(params.topo)
    for _ in range(40):
        rho = rng.uniform(2.0, 5.0, 1)[0]
        th = rng.uniform(0, 2 * np.pi)
        phi = value_of(params.topo.depth.phi(np.array([rho])))[0]
        xh = (1 + rho) * np.array([np.cos(th), np.sin(th)])
        for z in (0.0, -phi):
            vel, press = assemble_U_app(0.3, np.array([*xh, z]), params)
            assert np.linalg.norm(vel) <= 1e-12 * amp
    with pytest.raises(GeometryDomainError):
        assemble_U_app(0.0, np.array([4.4, 0.0, 0.5]), params)
    with pytest.raises(GeometryDomainError):
        assemble_U_app(0.0, np.array([1.05, 0.0, -0.01]), params)


def test_assemble_tends_to_limit(params):
    """eps -> 0 at a fixed deep interior point: velocity -> limit profile."""
    x = np.array([4.4, 0.0, -0.7])
    rho = np.array([3.4])
    _, ub, _ = limit_profile(0.5, rho, params)
    ub = value_of(ub)[0]
    errs = []
    for eps in (0.1, 0.05, 0.025):
        p = params.with_eps(eps)
        vel, _ = assemble_U_app(0.5, x, p)
        errs.append(np.linalg.norm(vel - np.array([0.0, ub, 0.0])))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 0.02 * abs(ub)
    # t=0 deep interior: within O(eps) of u0 perp
    vel, _ = assemble_U_app(0.0, x, params)
    u0 = value_of(params.data.u0(rho, params.topo))[0]
    assert np.linalg.norm(vel - [0, u0, 0]) < 2.0 * params.eps * abs(u0)


def test_weighted_layer_smallness(params):
    """|sqrt(d_phi) U_BL| in L^inf_h L^2_v is O(eps |u0|): constants stable."""
    from ekmantopo.profiles import LAYER_TERMS, frame_sampler
    from ekmantopo.quadrature import Quadrature

    amp = params.data.sup_abs(params.topo)
    consts = []
    for eps in (0.2, 0.1, 0.05):
        p = params.with_eps(eps)
        quad = Quadrature(p.topo, p.sqrtE, 2.0, 5.0, n_rho=48, n_z_interior=12,
                          n_z_layer=24, eps1ma=p.eps1ma)
        val = quad.norm_linfh_l2v(frame_sampler(p, LAYER_TERMS), 0.0,
                                  weight_dphi=True)
        consts.append(val / (eps * amp))
    assert max(consts) / min(consts) < 1.6
