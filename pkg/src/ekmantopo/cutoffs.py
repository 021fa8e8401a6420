"""Smooth cut-off functions for the shore truncation and the layer correctors.

Two families are provided:

* :class:`CutoffChi` -- the C-infinity step ``chi`` on [0, inf) with
  ``chi = 1`` on [0, 1/2], ``chi = 0`` on [1, inf), built from the classical
  ``exp(-1/s)`` mollifier.  It truncates boundary layers away from their wall
  and switches the azimuthal profile off near the shore.

* :class:`CutoffK` -- the plateau function ``k`` on (-inf, 0] with
  ``k = 1`` on [-1, 0], support in (-2, 0], and the two vanishing moments

      integral k = 0     and     integral s k'(s) ds = 0,

  achieved by adding a compensating bump of the opposite sign on
  (-1.9, -1.7).  The moments make the antiderivatives

      K_surf(s) = int_s^0 k,        K1_bot(s) = int_s^0 sigma k'(sigma) dsigma

  vanish at both ends of the support, which is what lets the second-order
  vertical correctors satisfy the no-slip condition while absorbing the
  first-order divergence residue.

Every callable accepts plain ndarrays or :class:`~ekmantopo.dual.Jet` inputs;
the flat branches propagate exactly zero derivatives.
"""

from __future__ import annotations

import numpy as np
from scipy.interpolate import PchipInterpolator

from .dual import Jet, where, value_of

__all__ = ["CutoffChi", "CutoffK", "smooth_step"]


def _mollifier_ratio(x):
    """C-infinity step on [0,1]: 0 at 0, 1 at 1, all derivatives flat at ends.

    psi(x) = f(x) / (f(x) + f(1-x)) with f(s) = exp(-1/s) on s > 0.
    Inputs are assumed clipped to the open interval (0, 1).
    """
    from .dual import exp

    f = exp(-1.0 / x)
    g = exp(-1.0 / (1.0 - x))
    return f / (f + g)


def smooth_step(x):
    """psi(x): 0 for x <= 0, 1 for x >= 1, smooth monotone in between."""
    xv = value_of(x)
    lo = xv <= 1e-12
    hi = xv >= 1.0 - 1e-12
    mid = ~(lo | hi)
    if isinstance(x, Jet):
        xs = Jet(np.where(mid, xv, 0.5), x.g, x.lap)
        with np.errstate(over="ignore", under="ignore"):
            core = _mollifier_ratio(xs)
        out = where(mid, core, where(hi, 1.0, 0.0))
        return out
    out = np.zeros_like(xv)
    out[hi] = 1.0
    if np.any(mid):
        with np.errstate(over="ignore", under="ignore"):
            out[mid] = value_of(_mollifier_ratio(xv[mid]))
    return out


class CutoffChi:
    """Smooth step chi on [0, inf): 1 on [0, 1/2], 0 on [1, inf)."""

    def __call__(self, s):
        # chi(s) = psi(2 - 2s): psi(1)=1 at s=1/2, psi(0)=0 at s=1.
        return smooth_step(2.0 - 2.0 * s)

    def deriv(self, s):
        """chi'(s), evaluated jet-natively (valid to the jet's own order)."""
        return -2.0 * _step_deriv(2.0 - 2.0 * s)

    def deriv2_values(self, s):
        """chi''(s) for plain array input (finite-difference-free)."""
        j = Jet.variable(np.asarray(s, dtype=float), 0)
        return self.deriv(j).g[0]


def _step_deriv(x):
    """psi'(x), jet-native, zero outside (0,1)."""
    from .dual import exp

    xv = value_of(x)
    mid = (xv > 1e-12) & (xv < 1.0 - 1e-12)
    if isinstance(x, Jet):
        xs = Jet(np.where(mid, xv, 0.5), x.g, x.lap)
        with np.errstate(over="ignore", under="ignore"):
            f = exp(-1.0 / xs)
            g = exp(-1.0 / (1.0 - xs))
            s = f + g
            # psi' = (f' g - f g')/s^2 with f' = f/x^2, g' = -g/(1-x)^2
            fp = f / (xs * xs)
            gp = -g / ((1.0 - xs) * (1.0 - xs))
            core = (fp * g - f * gp) / (s * s)
        return where(mid, core, 0.0)
    out = np.zeros_like(xv)
    if np.any(mid):
        xm = xv[mid]
        with np.errstate(over="ignore", under="ignore"):
            f = np.exp(-1.0 / xm)
            g = np.exp(-1.0 / (1.0 - xm))
            s = f + g
            fp = f / (xm * xm)
            gp = -g / ((1.0 - xm) ** 2)
            out[mid] = (fp * g - f * gp) / (s * s)
    return out


class CutoffK:
    """Plateau k on (-inf, 0] with vanishing zeroth and first moments.

    k = plateau + c * bump, where the plateau is 1 on [-1, 0] with a smooth
    drop to 0 on [-1.6, -1], the bump sits on (-1.9, -1.7), and c < 0 is
    fixed so that the integral of k over the support vanishes.  Then

        int s k'(s) ds = [s k]_{-2}^{0} - int k = 0

    holds automatically.  The antiderivatives K_surf and K1_bot are
    tabulated on a fine grid by high-order panelwise Gauss quadrature and
    interpolated with a monotone cubic; their first and second derivatives
    are evaluated analytically from k and k'.
    """

    PLATEAU_LO, PLATEAU_HI = -1.6, -1.0
    BUMP_LO, BUMP_HI = -1.9, -1.7
    SUPPORT = (-2.0, 0.0)

    def __init__(self, n_table: int = 8001):
        self._c = -self._plateau_integral() / self._bump_integral()
        self._build_tables(n_table)

    # plateau and bump pieces --------------------------------------------

    def _plateau(self, s):
        # 1 on [-1,0], smooth drop to 0 across [-1.6,-1]
        lo, hi = self.PLATEAU_LO, self.PLATEAU_HI
        return smooth_step((s - lo) / (hi - lo))

    def _bump(self, s):
        from .dual import exp

        lo, hi = self.BUMP_LO, self.BUMP_HI
        x = (s - 0.5 * (lo + hi)) / (0.5 * (hi - lo))
        xv = value_of(x)
        mid = np.abs(xv) < 1.0 - 1e-12
        if isinstance(x, Jet):
            xs = Jet(np.where(mid, xv, 0.0), x.g, x.lap)
            with np.errstate(over="ignore", under="ignore"):
                core = exp(-1.0 / (1.0 - xs * xs))
            return where(mid, core, 0.0)
        out = np.zeros_like(xv)
        if np.any(mid):
            out[mid] = np.exp(-1.0 / (1.0 - xv[mid] ** 2))
        return out

    def _plateau_integral(self):
        # 1 on [-1,0] plus the transition ramp; psi(u) + psi(1-u) = 1 makes
        # the ramp integral exactly half its width.
        return 1.0 + 0.5 * (self.PLATEAU_HI - self.PLATEAU_LO)

    def _bump_integral(self):
        xs, ws = np.polynomial.legendre.leggauss(200)
        a, b = self.BUMP_LO, self.BUMP_HI
        s = 0.5 * (b - a) * xs + 0.5 * (a + b)
        return 0.5 * (b - a) * np.sum(ws * self._bump(s))

    # the function and its derivative ------------------------------------

    def __call__(self, s):
        return self._plateau(s) + self._c * self._bump(s)

    def deriv(self, s):
        lo, hi = self.PLATEAU_LO, self.PLATEAU_HI
        dp = _step_deriv((s - lo) / (hi - lo)) * (1.0 / (hi - lo))
        # bump derivative: d/ds exp(-1/(1-x^2)) = core * (-2x/(1-x^2)^2) / halfwidth
        blo, bhi = self.BUMP_LO, self.BUMP_HI
        half = 0.5 * (bhi - blo)
        x = (s - 0.5 * (blo + bhi)) / half
        xv = value_of(x)
        mid = np.abs(xv) < 1.0 - 1e-12
        if isinstance(x, Jet):
            xs = Jet(np.where(mid, xv, 0.0), x.g, x.lap)
            with np.errstate(over="ignore", under="ignore"):
                one = 1.0 - xs * xs
                core = (-1.0 / one).exp() * (-2.0 * xs / (one * one)) / half
            db = where(mid, core, 0.0)
        else:
            db = np.zeros_like(xv)
            if np.any(mid):
                xm = xv[mid]
                one = 1.0 - xm * xm
                db[mid] = np.exp(-1.0 / one) * (-2.0 * xm / one**2) / half
        return dp + self._c * db

    # antiderivative tables ------------------------------------------------

    def _build_tables(self, n):
        # union grid, densified across the bump and the plateau ramp where the
        # curvature of k is large (the 1e-10 tabulation budget needs it)
        coarse = np.linspace(self.SUPPORT[0], self.SUPPORT[1], n // 4)
        dense = np.linspace(-1.97, -0.93, 7 * n)
        grid = np.unique(np.concatenate([coarse, dense]))
        xs, ws = np.polynomial.legendre.leggauss(12)
        a = grid[:-1]
        b = grid[1:]
        mid = 0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * xs[None, :]
        wseg = 0.5 * (b - a)[:, None] * ws[None, :]
        k_cells = np.sum(wseg * self(mid), axis=1)
        # K_surf(s) = int_s^0 k ; cumulative from the right
        ksurf = np.concatenate([np.cumsum(k_cells[::-1])[::-1], [0.0]])
        self._grid = grid
        self._Ksurf = PchipInterpolator(grid, ksurf, extrapolate=False)
        # the vanishing moment makes K_surf identically zero left of the
        # support; the accumulated value differs from it only by quadrature
        # roundoff, so the outside branch is pinned to exact zero
        self._Ksurf_left = 0.0

    def _table_eval(self, table, left_value, s, d1, d2):
        """Evaluate an antiderivative table with analytic derivative lift."""
        sv = value_of(s)
        inside = (sv > self.SUPPORT[0]) & (sv < self.SUPPORT[1])
        sc = np.clip(sv, self.SUPPORT[0], self.SUPPORT[1])
        f0 = np.asarray(table(sc))
        f0 = np.where(sv <= self.SUPPORT[0], left_value, f0)
        f0 = np.where(sv >= self.SUPPORT[1], 0.0, f0)
        if isinstance(s, Jet):
            f1 = np.where(inside, d1(sc), 0.0)
            f2 = np.where(inside, d2(sc), 0.0)
            return s._compose(f0, f1, f2)
        return f0

    def K_surf(self, s):
        """K_surf(s) = int_s^0 k; zero at 0 and on (-inf, -2]."""
        return self._table_eval(
            self._Ksurf,
            self._Ksurf_left,
            s,
            d1=lambda x: -value_of(self(x)),
            d2=lambda x: -value_of(self.deriv(x)),
        )

    def K1_bot(self, s):
        """K1_bot(s) = int_s^0 sigma k'(sigma) dsigma; zero at 0 and on (-inf,-2].

        Uses the exact integration by parts K1 = -s k(s) - K_surf(s), which
        avoids tabulating the large oscillation of sigma k' across the bump
        (only the smooth antiderivative of k is interpolated).
        """
        return -s * self(s) - self.K_surf(s)

    # diagnostics ----------------------------------------------------------

    def moments(self):
        """(int k, int s k'(s) ds) over the support, by panelwise quadrature.

        Panels are split at the breakpoints of the piecewise definition so
        Gauss nodes never straddle a transition.
        """
        breaks = [self.SUPPORT[0], self.BUMP_LO, self.BUMP_HI, self.PLATEAU_LO,
                  self.PLATEAU_HI, self.SUPPORT[1]]
        xs, ws = np.polynomial.legendre.leggauss(80)
        m0 = m1 = 0.0
        for a, b in zip(breaks[:-1], breaks[1:]):
            s = 0.5 * (b - a) * xs + 0.5 * (a + b)
            w = 0.5 * (b - a) * ws
            m0 += np.sum(w * self(s))
            m1 += np.sum(w * s * self.deriv(s))
        return float(m0), float(m1)
