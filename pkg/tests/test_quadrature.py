import numpy as np
import pytest

from ekmantopo.dual import value_of
from ekmantopo.profiles import frame_sampler, limit_sampler
from ekmantopo.quadrature import Quadrature, time_grid, time_l1


def _quad(params, **kw):
    kw.setdefault("n_rho", 96)
    return Quadrature(params.topo, params.sqrtE, 1.4, 6.4, eps1ma=params.eps1ma, **kw)


def test_volume_matches_radial_oracle(params):
    quad = _quad(params)
    # analytic volume by a fine 1-D rule: 2 pi (R + rho) phi(rho)
    rho = np.linspace(1.4, 6.4, 200001)
    phi = value_of(params.topo.depth.phi(rho))
    vol = np.trapezoid(2 * np.pi * (1.0 + rho) * phi, rho)
    assert quad.volume() == pytest.approx(vol, rel=1e-8)
    # integrating the constant 1 over the columns gives the same volume
    rho_f, z_f, w_f = quad.points()
    assert np.sum(w_f) == pytest.approx(vol, rel=1e-8)


def test_norm_of_limit_profile_matches_separable_oracle(params):
    quad = _quad(params)
    got = quad.norm_l2(limit_sampler(params), 0.0)
    rho = np.linspace(1.4, 6.4, 400001)
    topo = params.topo
    u0 = value_of(params.data.u0(rho, topo))
    phi = value_of(topo.depth.phi(rho))
    expected = np.sqrt(np.trapezoid(2 * np.pi * (1 + rho) * phi * u0**2, rho))
    assert got == pytest.approx(expected, rel=1e-8)


def test_pure_layer_profile_vertical_integral(params):
    """A surface-layer exponential integrates to the sqrt(E)/2 e-folding."""
    quad = _quad(params)

    def sampler(t, rho, z):
        return (np.exp(z / params.sqrtE), 0.0 * z, 0.0 * z)

    got = quad.norm_l2(sampler, 0.0)
    rho = np.linspace(1.4, 6.4, 200001)
    phi = value_of(params.topo.depth.phi(rho))
    col = 0.5 * params.sqrtE * (1.0 - np.exp(-2 * phi / params.sqrtE))
    expected = np.sqrt(np.trapezoid(2 * np.pi * (1 + rho) * col, rho))
    assert got == pytest.approx(expected, rel=1e-9)


def test_quadrature_node_refinement_stability(params):
    """Doubling node counts moves the assembled-field norm by < 0.1%."""
    coarse = _quad(params)
    fine = _quad(params, n_rho=192, n_z_interior=48, n_z_layer=96)
    s = frame_sampler(params)
    for t in (0.0, 1.0):
        a = coarse.norm_l2(s, t)
        b = fine.norm_l2(s, t)
        assert abs(a - b) / b < 1e-3


def test_linfh_l2v_norm(params):
    quad = _quad(params)

    def sampler(t, rho, z):
        return (np.zeros_like(z), rho * 0 + 1.0, np.zeros_like(z))

    got = quad.norm_linfh_l2v(sampler, 0.0)
    # sup over columns of sqrt(phi): deepest column in range
    phi_max = value_of(params.topo.depth.phi(np.array([6.4])))[0]
    phi_deepest = value_of(params.topo.depth.phi(quad.rho)).max()
    assert got == pytest.approx(np.sqrt(phi_deepest), rel=1e-10)


def test_time_grid_and_l1_tail():
    lam = 0.5
    ts = time_grid(lam, n=24)
    assert ts[0] == 0.0
    assert ts[-1] == pytest.approx(8.0 / lam)
    assert len(ts) == 24
    vals = np.exp(-lam * ts)
    core, tail = time_l1(ts, vals, lam)
    total = core + tail
    assert total == pytest.approx(1.0 / lam, rel=2e-2)
    assert tail == pytest.approx(np.exp(-8.0) / lam, rel=0.2)
