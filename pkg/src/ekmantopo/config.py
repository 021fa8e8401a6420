"""Flat `section.key = value` run configuration with strict validation.

The format is deliberately primitive: one assignment per line, `#` comments,
booleans `true/false`, lists comma-separated.  Unknown keys are rejected with
the offending line number, physical parameters must be positive, the shore
exponent must lie in (2/3, 1), and the eps list must be strictly decreasing
(slope studies additionally require at least four entries).

The resolved configuration is hashed into a digest that is invariant under
key reordering; every output artifact embeds it so results remain traceable
to the exact configuration that produced them.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .cutoffs import CutoffChi, CutoffK
from .geometry import ConvexShore, DepthProfile, Topography
from .profiles import AnsatzParams, InitialSwirl

__all__ = ["ConfigError", "RunConfig", "DEFAULTS"]


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "geometry.kind": "disk",
    "geometry.R": 1.0,
    "geometry.rho0": 0.2,
    "depth.family": "tanh",
    "depth.H": 1.5,
    "depth.ell": 0.8,
    "physics.beta": None,  # required
    "ansatz.a": 0.75,
    "ansatz.epsilons": [0.2, 0.1, 0.05, 0.025],
    "ansatz.mutation": "none",
    "data.family": "gaussian",
    "data.amplitude": 1.0,
    "data.center": 3.4,
    "data.width": 0.5,
    "data.max_amp_ratio": 4.0,
    "quad.n_rho": 128,
    "quad.n_z_interior": 24,
    "quad.n_z_layer": 48,
    "quad.t_star_factor": 8.0,
    "study.t_grid": 24,
    "study.n_sample_points": 500,
    "verify.n_boundary_points": 400,
    "verify.n_divergence_points": 800,
    "solver.nr": 192,
    "solver.nz": 160,
    "solver.dt": 0.0,  # 0 = min(0.1 eps, tmax/200)
    "solver.tmax": 8.0,
    "solver.nonlinear": False,
    "solver.rout": 0.0,  # 0 = data.center + 6 widths past the shore
    "output.dir": "out",
    "seed": 12345,
}

_BOOL_KEYS = {"solver.nonlinear"}
_INT_KEYS = {
    "quad.n_rho", "quad.n_z_interior", "quad.n_z_layer", "study.t_grid",
    "study.n_sample_points", "verify.n_boundary_points",
    "verify.n_divergence_points", "solver.nr", "solver.nz", "seed",
}
_LIST_KEYS = {"ansatz.epsilons"}
_STR_KEYS = {
    "geometry.kind", "depth.family", "ansatz.mutation", "data.family",
    "output.dir",
}
_POSITIVE_KEYS = {
    "geometry.R", "geometry.rho0", "depth.H", "depth.ell", "physics.beta",
    "data.amplitude", "data.width", "quad.t_star_factor", "solver.tmax",
}


def _parse_value(key, raw, line_no):
    raw = raw.strip()
    try:
        if key in _BOOL_KEYS:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError("expected true/false")
        if key in _INT_KEYS:
            return int(raw)
        if key in _LIST_KEYS:
            return [float(tok) for tok in raw.split(",") if tok.strip()]
        if key in _STR_KEYS:
            return raw
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"line {line_no}: bad value for {key!r}: {raw!r} ({exc})")


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    @staticmethod
    def parse(text: str, overrides: dict | None = None) -> "RunConfig":
        values = dict(DEFAULTS)
        seen = set()
        for line_no, line in enumerate(text.splitlines(), start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ConfigError(f"line {line_no}: expected 'key = value', got {body!r}")
            key, raw = body.split("=", 1)
            key = key.strip()
            if key not in DEFAULTS:
                raise ConfigError(f"line {line_no}: unknown key {key!r}")
            if key in seen:
                raise ConfigError(f"line {line_no}: duplicate key {key!r}")
            seen.add(key)
            values[key] = _parse_value(key, raw, line_no)
        for key, val in (overrides or {}).items():
            if key not in DEFAULTS:
                raise ConfigError(f"override: unknown key {key!r}")
            values[key] = val
        cfg = RunConfig(values)
        cfg.validate()
        return cfg

    @staticmethod
    def load(path, overrides=None) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return RunConfig.parse(fh.read(), overrides)

    def __getitem__(self, key):
        return self.values[key]

    # -- validation --------------------------------------------------------

    def validate(self):
        v = self.values
        if v["physics.beta"] is None:
            raise ConfigError("missing required key 'physics.beta'")
        for key in _POSITIVE_KEYS:
            if v[key] is not None and not (float(v[key]) > 0):
                raise ConfigError(f"{key} must be positive, got {v[key]}")
        if v["geometry.kind"] != "disk":
            raise ConfigError("run configurations support geometry.kind = disk only")
        if v["depth.family"] not in ("exp", "tanh", "flatcap"):
            raise ConfigError(f"unknown depth.family {v['depth.family']!r}")
        if not (2.0 / 3.0 < v["ansatz.a"] < 1.0):
            raise ConfigError("ansatz.a must lie in (2/3, 1)")
        eps = v["ansatz.epsilons"]
        if not eps or any(e <= 0 for e in eps):
            raise ConfigError("ansatz.epsilons must be positive")
        if any(b >= a for a, b in zip(eps[:-1], eps[1:])):
            raise ConfigError("ansatz.epsilons must be strictly decreasing")
        if v["ansatz.mutation"] not in ("none", "sign_flip", "cutoff_var"):
            raise ConfigError(f"unknown ansatz.mutation {v['ansatz.mutation']!r}")
        if v["data.family"] not in ("gaussian", "shore"):
            raise ConfigError(f"unknown data.family {v['data.family']!r}")
        for e in eps:
            if e ** (1.0 - v["ansatz.a"]) >= v["depth.H"] / 2.0:
                raise ConfigError(
                    f"eps={e}: eps^(1-a) must stay below depth.H/2 "
                    f"(got {e ** (1 - v['ansatz.a']):.3f} vs {v['depth.H'] / 2:.3f})"
                )

    def require_slope_grid(self):
        if len(self.values["ansatz.epsilons"]) < 4:
            raise ConfigError("slope studies need at least 4 eps values")

    # -- digest --------------------------------------------------------------

    def canonical_lines(self):
        out = []
        for key in sorted(self.values):
            val = self.values[key]
            if isinstance(val, list):
                rep = ",".join(repr(float(x)) for x in val)
            elif isinstance(val, bool):
                rep = "true" if val else "false"
            elif isinstance(val, float):
                rep = repr(val)
            else:
                rep = str(val)
            out.append(f"{key} = {rep}")
        return out

    def digest(self):
        payload = "\n".join(self.canonical_lines()).encode()
        return hashlib.sha256(payload).hexdigest()

    # -- object construction ---------------------------------------------------

    def topography(self) -> Topography:
        v = self.values
        shore = ConvexShore.disk(v["geometry.R"])
        depth = DepthProfile(v["depth.family"], v["geometry.rho0"], v["depth.H"],
                             v["depth.ell"])
        return Topography(shore, depth, v["physics.beta"])

    def initial_swirl(self) -> InitialSwirl:
        v = self.values
        return InitialSwirl(v["data.family"], v["data.amplitude"], v["data.center"],
                            v["data.width"])

    def ansatz_params(self, eps=None, chi=None, k=None) -> AnsatzParams:
        v = self.values
        eps = float(eps if eps is not None else v["ansatz.epsilons"][0])
        mutation = None if v["ansatz.mutation"] == "none" else v["ansatz.mutation"]
        return AnsatzParams(
            topo=self.topography(),
            eps=eps,
            a=v["ansatz.a"],
            chi=chi or CutoffChi(),
            k=k or CutoffK(),
            data=self.initial_swirl(),
            mutation=mutation,
        )

    def amplitude_warning(self):
        """Smallness advisory: the limit theory needs |u0| small against beta."""
        v = self.values
        data = self.initial_swirl()
        sup = data.sup_abs(self.topography())
        ratio = sup / v["physics.beta"]
        if ratio > v["data.max_amp_ratio"]:
            return (
                f"warning: sup|u0| / beta = {ratio:.2f} exceeds "
                f"data.max_amp_ratio = {v['data.max_amp_ratio']}; the asymptotic "
                f"regime assumes small data and the run may leave it"
            )
        return None

    def quad_options(self):
        v = self.values
        return {
            "n_rho": v["quad.n_rho"],
            "n_z_interior": v["quad.n_z_interior"],
            "n_z_layer": v["quad.n_z_layer"],
        }
