import mpmath as mp
import numpy as np
import pytest

from ekmantopo.dual import seed_point, value_of
from ekmantopo.geometry import (
    ConvexShore,
    DepthProfile,
    GeometryDomainError,
    Topography,
    delta_eff,
    domain_probe,
    frame_bundle,
    lambda_phi,
    shore_distance,
)


def test_disk_distance_basics():
    shore = ConvexShore.disk(1.0)
    rho, n, nperp, lap = shore_distance(np.array([2.0, 0.0]), shore)
    assert rho == pytest.approx(1.0)
    assert np.allclose(n, [1.0, 0.0])
    assert lap == pytest.approx(0.5)
    rho, n, nperp, lap = shore_distance(np.array([0.0, 3.0]), shore)
    assert rho == pytest.approx(2.0)
    assert np.allclose(n, [0.0, 1.0])
    assert np.allclose(nperp, [-1.0, 0.0])


def test_inside_point_rejected():
    shore = ConvexShore.disk(1.0)
    with pytest.raises(GeometryDomainError):
        shore_distance(np.array([0.5, 0.0]), shore)


def test_curve_projection_residual_and_unit_gradient(curve_shore):
    rng = np.random.default_rng(0)
    th = rng.uniform(0, 2 * np.pi, 500)
    rad = rng.uniform(1.6, 3.2, 500)
    pts = np.stack([rad * np.cos(th), rad * np.sin(th)], 1)
    rho, n, _, lap = shore_distance(pts, curve_shore)
    # projection residual: (x - gamma(w)) . gamma'(w) = 0
    from ekmantopo.geometry import _project_to_curve

    om = _project_to_curve(curve_shore, pts)
    resid = np.abs(
        np.sum((pts - curve_shore.point(om)) * curve_shore.point(om, nu=1), axis=1)
    )
    assert resid.max() < 1e-10
    # |grad rho| = 1 by central differences
    h = 1e-6
    rx1, _, _, _ = shore_distance(pts + [h, 0], curve_shore)
    rx2, _, _, _ = shore_distance(pts - [h, 0], curve_shore)
    ry1, _, _, _ = shore_distance(pts + [0, h], curve_shore)
    ry2, _, _, _ = shore_distance(pts - [0, h], curve_shore)
    grad = np.stack([(rx1 - rx2) / (2 * h), (ry1 - ry2) / (2 * h)], 1)
    assert np.abs(np.linalg.norm(grad, axis=1) - 1.0).max() < 1e-8


def test_unit_gradient_disk_finite_difference():
    shore = ConvexShore.disk(1.0)
    rng = np.random.default_rng(1)
    th = rng.uniform(0, 2 * np.pi, 1000)
    rad = rng.uniform(1.2, 6.0, 1000)
    pts = np.stack([rad * np.cos(th), rad * np.sin(th)], 1)
    h = 1e-6
    rx1, _, _, _ = shore_distance(pts + [h, 0], shore)
    rx2, _, _, _ = shore_distance(pts - [h, 0], shore)
    ry1, _, _, _ = shore_distance(pts + [0, h], shore)
    ry2, _, _, _ = shore_distance(pts - [0, h], shore)
    grad = np.stack([(rx1 - rx2) / (2 * h), (ry1 - ry2) / (2 * h)], 1)
    assert np.abs(np.linalg.norm(grad, axis=1) - 1.0).max() < 1e-8


def test_frame_identities(disk_topo, curve_shore):
    from ekmantopo.verify import check_frame_identities

    rep = check_frame_identities(disk_topo, 1000, seed=0)
    assert rep["passed"], rep
    curve_topo = Topography(curve_shore, disk_topo.depth, 0.5)
    rep = check_frame_identities(curve_topo, 1000, seed=1)
    assert rep["passed"], rep


def test_euler_stationary_identity():
    """perp-grad advection identity for generic scalars theta."""
    rng = np.random.default_rng(2)
    for _ in range(5):
        a, b, c = rng.uniform(0.3, 1.5, 3)

        def theta(x, y):
            return (a * x * x + b * y).sin() + (c * x * y).cos() if hasattr(
                x, "val"
            ) else np.sin(a * x * x + b * y) + np.cos(c * x * y)

        pts = rng.uniform(-1.5, 1.5, (200, 2))
        x, y, z, t = seed_point(pts[:, 0], pts[:, 1], 0 * pts[:, 0], 0 * pts[:, 0])
        th = theta(x, y)
        gx, gy = th.g[0], th.g[1]
        lap = th.lap
        h = 1e-6

        def grad_at(p):
            x1, y1, _, _ = seed_point(p[:, 0], p[:, 1], 0 * p[:, 0], 0 * p[:, 0])
            t1 = theta(x1, y1)
            return np.stack([t1.g[0], t1.g[1]], 1)

        # Hessian by central differences of the exact jet gradient
        gpx = (grad_at(pts + [h, 0]) - grad_at(pts - [h, 0])) / (2 * h)
        gpy = (grad_at(pts + [0, h]) - grad_at(pts - [0, h])) / (2 * h)
        hess = np.stack([gpx, gpy], 2)  # hess[:, i, j] = d_j (d_i theta)
        perp = np.stack([-gy, gx], 1)
        # lhs_i = perp . grad (perp_i): perp_1 = -d2 theta, perp_2 = d1 theta
        lhs = np.stack(
            [
                -(perp[:, 0] * hess[:, 1, 0] + perp[:, 1] * hess[:, 1, 1]),
                perp[:, 0] * hess[:, 0, 0] + perp[:, 1] * hess[:, 0, 1],
            ],
            1,
        )
        grad = np.stack([gx, gy], 1)
        grad_sq_x = (
            np.sum(grad_at(pts + [h, 0]) ** 2, 1) - np.sum(grad_at(pts - [h, 0]) ** 2, 1)
        ) / (2 * h)
        grad_sq_y = (
            np.sum(grad_at(pts + [0, h]) ** 2, 1) - np.sum(grad_at(pts - [0, h]) ** 2, 1)
        ) / (2 * h)
        rhs = 0.5 * np.stack([grad_sq_x, grad_sq_y], 1) - lap[:, None] * grad
        assert np.abs(lhs - rhs).max() < 1e-8


def test_depth_profile_invariants(disk_topo):
    depth = disk_topo.depth
    rho = np.linspace(0.2, 40.0, 4000)
    phi = value_of(depth.phi(rho))
    assert phi[0] == pytest.approx(0.0, abs=1e-12)
    assert np.all((phi >= -1e-12) & (phi <= 1.5 + 1e-12))
    assert np.all(np.isfinite(value_of(depth.dphi(rho))))
    assert np.all(np.isfinite(value_of(depth.d2phi(rho))))
    with pytest.raises(GeometryDomainError):
        depth.phi(np.array([0.19]))


def test_flatcap_profile_joins():
    depth = DepthProfile("flatcap", 0.2, 2.0, 0.8)
    rho = np.array([0.2, 0.6, 1.0, 1.5])
    phi = value_of(depth.phi(rho))
    assert phi[0] == pytest.approx(0.0, abs=1e-14)
    assert phi[2] == pytest.approx(2.0)
    assert phi[3] == pytest.approx(2.0)
    assert value_of(depth.dphi(np.array([1.2])))[0] == 0.0


def test_delta_and_lambda_against_arbitrary_precision(disk_topo):
    mp.mp.dps = 40
    # delta = (1 + phi'^2)^(3/4)
    for dphi in (0.0, 1.0, np.sqrt(3.0)):
        expected = float(mp.power(1 + mp.mpf(float(dphi)) ** 2, mp.mpf(3) / 4))
        got = (1.0 + dphi * dphi) ** 0.75
        assert got == pytest.approx(expected, abs=1e-12)
    assert (1.0 + 1.0) ** 0.75 == pytest.approx(2.0 ** 0.75, abs=0)
    # lambda for beta=1/2, phi=1, phi'=sqrt(3): (1 + sqrt 2)/2
    beta, phi, dphi = mp.mpf(1) / 2, mp.mpf(1), mp.sqrt(3)
    lam = mp.sqrt(2 * beta) / phi * (1 + mp.power(1 + dphi**2, mp.mpf(1) / 4)) / 2
    assert float(lam) == pytest.approx((1 + np.sqrt(2)) / 2, abs=1e-12)
    got = np.sqrt(2 * 0.5) / 1.0 * (1 + (1 + 3.0) ** 0.25) * 0.5
    assert got == pytest.approx(float(lam), abs=1e-12)


def test_lambda_phi_flat_and_lower_bound(disk_topo, tanh_topo):
    # flat case reduces to sqrt(2 beta)/phi
    depth = DepthProfile("flatcap", 0.2, 1.0, 0.5)
    topo = Topography(ConvexShore.disk(1.0), depth, 0.5)
    lam = value_of(lambda_phi(np.array([2.0]), topo))[0]
    assert lam == pytest.approx(1.0, abs=1e-14)
    # lower bound sqrt(2 beta)/H everywhere
    for topo2 in (disk_topo, tanh_topo):
        rho = np.linspace(0.21, 12.0, 2000)
        lam = value_of(lambda_phi(rho, topo2))
        assert np.all(lam >= np.sqrt(2 * topo2.beta) / topo2.H - 1e-13)
    with pytest.raises(GeometryDomainError):
        lambda_phi(np.array([0.2]), disk_topo)


def test_delta_lambda_monotone_in_slope():
    dphi = np.linspace(0.0, 3.0, 50)
    delta = (1 + dphi**2) ** 0.75
    assert np.all(np.diff(delta) > 0)
    assert np.all(delta >= 1.0)
    # even in phi': delta(|s|) == delta(-|s|)
    assert np.allclose((1 + (-dphi) ** 2) ** 0.75, delta)


def test_domain_probe(disk_topo):
    # phi = 1 at this rho for the exp profile: rho s.t. 1.5(1-e^-) = 1
    rho1 = 0.2 + 0.8 * np.log(3.0)
    x = 1.0 + rho1
    inside, d = domain_probe(np.array([x, 0.0, -0.25]), disk_topo)
    assert inside and d == pytest.approx(0.25, abs=1e-9)
    inside, d = domain_probe(np.array([x, 0.0, 0.0]), disk_topo)
    assert not inside and d == 0.0
    inside, d = domain_probe(np.array([x, 0.0, -0.5]), disk_topo)
    assert inside and d == pytest.approx(0.5, abs=1e-9)
    inside, _ = domain_probe(np.array([1.1, 0.0, -0.1]), disk_topo)
    assert not inside  # rho < rho0: thickened land


def test_curve_total_curvature(curve_shore):
    """Closed convex curve: the curvature integrates to 2 pi (this is what
    makes the radial quadrature Jacobian L + 2 pi rho exact)."""
    total = np.trapezoid(
        np.concatenate([curve_shore.kappa, curve_shore.kappa[:1]]),
        np.concatenate([curve_shore.omega, [curve_shore.L]]),
    )
    assert total == pytest.approx(2 * np.pi, rel=1e-8)


def test_frame_bundle_jets_match_shore_distance(curve_shore):
    rng = np.random.default_rng(5)
    th = rng.uniform(0, 2 * np.pi, 50)
    rad = rng.uniform(1.7, 2.8, 50)
    X, Y = rad * np.cos(th), rad * np.sin(th)
    rho, n, _, lap = shore_distance(np.stack([X, Y], 1), curve_shore)
    x, y, z, t = seed_point(X, Y, 0 * X, 0 * X)
    rj, nx, ny, lapj = frame_bundle(x, y, curve_shore)
    assert np.abs(rj.val - rho).max() < 1e-12
    assert np.abs(rj.g[0] - n[:, 0]).max() < 1e-10
    assert np.abs(value_of(lapj) - lap).max() < 1e-6
