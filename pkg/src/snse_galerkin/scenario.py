"""A fully specified experiment: basis, data, noise and time stepping."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from typing import Any

import numpy as np

from .errors import ConfigurationError
from .integrator import IntegratorConfig
from .noise import NoiseKind, NoiseModel
from .nonlinear import BilinearWorkspace
from .spectral import DomainKind, DomainSpec, StokesBasis, cached_basis


def field_from_spec(spec: dict | None, eigenvalues: np.ndarray, nu: float, name: str) -> np.ndarray:
    """Coefficient vector from a ``u0``/``f`` block.

    Accepted forms::

        {"preset": "zero"}
        {"coeffs": [c1, c2, ...]}                         # missing entries are 0
        {"preset": "exp_spectrum", "amplitude": a, "beta": b}
            # c_k = a exp(-b (lam_k / lam_1 - 1)); depends only on eigenvalues,
            # so nearly degenerate modes get nearly equal weight on every grid
        {"preset": "steady_mode", "index": i, "amplitude": a}
            # single mode i with value a * nu * lam_i: the linear steady state is a e_i
    """
    lam = np.asarray(eigenvalues, dtype=float)
    out = np.zeros(lam.size)
    spec = dict(spec or {"preset": "zero"})
    if "coeffs" in spec:
        c = np.asarray(spec["coeffs"], dtype=float)
        if c.size > lam.size:
            raise ConfigurationError(f"{name}.coeffs has {c.size} entries, basis dim is {lam.size}")
        out[: c.size] = c
        return out
    preset = spec.get("preset", "zero")
    if preset == "zero":
        return out
    amp = float(spec.get("amplitude", 1.0))
    if preset == "exp_spectrum":
        beta = float(spec.get("beta", 1.0))
        return amp * np.exp(-beta * (lam / lam[0] - 1.0))
    if preset == "steady_mode":
        i = int(spec.get("index", 1))
        if not 1 <= i <= lam.size:
            raise ConfigurationError(f"{name}.index={i} outside [1, {lam.size}]")
        out[i - 1] = amp * nu * lam[i - 1]
        return out
    raise ConfigurationError(f"unknown {name} preset {preset!r}")


@dataclass(frozen=True, eq=False)
class Scenario:
    basis: StokesBasis
    workspace: BilinearWorkspace
    u0: np.ndarray
    f: np.ndarray
    noise: NoiseModel | None
    integrator: IntegratorConfig
    description: dict
    # drive levels below K with P_n g instead of rejecting them
    project_noise: bool = False

    @property
    def hash(self) -> str:
        return scenario_hash(self.description)

    def with_noise(self, noise: NoiseModel | None) -> "Scenario":
        return replace(self, noise=noise)

    def with_integrator(self, **changes) -> "Scenario":
        return replace(self, integrator=replace(self.integrator, **changes))


def scenario_hash(description: dict) -> str:
    blob = json.dumps(description, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def build_scenario(domain: dict, n_modes: int, physics: dict, noise: dict | None,
                   integrator: dict, cache_dir=None, basis: StokesBasis | None = None) -> Scenario:
    """Assemble a :class:`Scenario` from plain dictionaries (the config blocks)."""
    dom = DomainSpec(DomainKind(domain["kind"]), float(domain["side_length"]),
                     int(domain["grid_points"]))
    if basis is None:
        basis = cached_basis(dom, int(n_modes), cache_dir)
    nu = float(physics["viscosity"])
    lam = basis.eigenvalues
    u0 = field_from_spec(physics.get("u0"), lam, nu, "u0")
    f = field_from_spec(physics.get("f"), lam, nu, "f")
    model = None
    if noise is not None and noise.get("kind") not in (None, "none"):
        model = NoiseModel.decaying(NoiseKind(noise["kind"]), float(noise.get("sigma0", 1.0)),
                                    int(noise.get("K", 1)), lam, r=float(noise.get("r", 2.0)),
                                    cap=float(noise.get("cap", 1.0)),
                                    alpha=float(noise.get("alpha", 0.0)))
    cfg = IntegratorConfig(nu=nu, dt=float(integrator["dt"]), T=float(integrator["T"]),
                           record_coeffs=bool(integrator.get("record_coeffs", False)),
                           dealias=bool(integrator.get("dealias", True)),
                           nonlinear=bool(physics.get("nonlinear", True)))
    ws = BilinearWorkspace(basis, dealias=cfg.dealias)
    description: dict[str, Any] = {
        "domain": dom.to_dict(), "n_modes": int(n_modes), "physics": physics,
        "noise": noise, "integrator": integrator}
    project = bool(noise.get("project_to_level", False)) if noise else False
    return Scenario(basis, ws, u0, f, model, cfg, json.loads(json.dumps(description)), project)
