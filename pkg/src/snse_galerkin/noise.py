"""Truncated cylindrical Wiener process and the multiplicative noise families.

Noise acts diagonally on the first ``K`` eigenmodes: ``g_k(u)`` is a multiple
of ``e_k``.  Four families are provided:

* ``Additive``          ``g_k = s_k e_k``
* ``DiagonalLinear``    ``g_k = s_k <u, e_k> e_k``
* ``SaturatedDiagonal`` ``g_k = s_k clip(<u, e_k>, -cap, cap) e_k``  (bounded)
* ``AlphaGrowth``       ``g_k = s_k (1 + |u|_H^alpha) e_k``          (alpha < 1)

Amplitudes default to ``s_k = sigma0 * lam_k^(-r)`` with ``r = 2`` so the
Hilbert-Schmidt norm stays finite at the ``D(A)`` level.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError, ContractError
from .spectral import StokesBasis


class NoiseKind(str, enum.Enum):
    ADDITIVE = "Additive"
    DIAGONAL_LINEAR = "DiagonalLinear"
    SATURATED_DIAGONAL = "SaturatedDiagonal"
    ALPHA_GROWTH = "AlphaGrowth"


@dataclass(frozen=True, eq=False)
class NoiseModel:
    kind: NoiseKind
    sigma: np.ndarray
    cap: float = 1.0
    alpha: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        sigma = np.array(self.sigma, dtype=float).ravel()
        sigma.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)
        if sigma.size < 1:
            raise ConfigurationError("noise model needs at least one driven mode")
        if np.any(sigma < 0) or not np.all(np.isfinite(sigma)):
            raise ConfigurationError("noise amplitudes must be finite and nonnegative")
        if self.kind is NoiseKind.SATURATED_DIAGONAL and not self.cap > 0:
            raise ConfigurationError(f"cap must be positive, got {self.cap}")
        if self.kind is NoiseKind.ALPHA_GROWTH and not 0 <= self.alpha < 1:
            raise ConfigurationError(f"alpha must lie in [0,1), got {self.alpha}")

    @property
    def K(self) -> int:
        return self.sigma.size

    @classmethod
    def decaying(cls, kind, sigma0: float, K: int, eigenvalues, r: float = 2.0,
                 cap: float = 1.0, alpha: float = 0.0) -> "NoiseModel":
        """Amplitudes ``sigma0 * lam_k^(-r)`` over the first ``K`` eigenvalues."""
        lam = np.asarray(eigenvalues, dtype=float)
        if K < 1 or K > lam.size:
            raise ConfigurationError(f"K={K} must lie in [1, {lam.size}]")
        if r < 2:
            raise ConfigurationError(f"decay exponent r must be >= 2, got {r}")
        return cls(kind, sigma0 * lam[:K] ** (-r), cap=cap, alpha=alpha)

    def truncate(self, n: int) -> "NoiseModel":
        """``P_n g``: the model restricted to the first ``min(n, K)`` driven modes."""
        if n < 1:
            raise ContractError(f"cannot truncate noise to {n} modes")
        return self if n >= self.K else NoiseModel(self.kind, self.sigma[:n], self.cap, self.alpha)

    def amplitudes(self, u: np.ndarray) -> np.ndarray:
        """Per-mode factors ``a_k(u)`` with ``g_k(u) = a_k(u) e_k``; shape ``(..., K)``."""
        u = np.asarray(u, dtype=float)
        if u.shape[-1] < self.K:
            raise ContractError(f"noise drives K={self.K} modes but the field has dim {u.shape[-1]}")
        head = u[..., : self.K]
        if self.kind is NoiseKind.ADDITIVE:
            return np.broadcast_to(self.sigma, head.shape).copy()
        if self.kind is NoiseKind.DIAGONAL_LINEAR:
            return self.sigma * head
        if self.kind is NoiseKind.SATURATED_DIAGONAL:
            return self.sigma * np.clip(head, -self.cap, self.cap)
        growth = 1.0 + np.sqrt(np.sum(u * u, axis=-1)) ** self.alpha
        return self.sigma * growth[..., None]

    def increment(self, u: np.ndarray, dW: np.ndarray) -> np.ndarray:
        """``sum_k g_k(u) dW_k`` as a coefficient vector the size of ``u``."""
        out = np.zeros(np.shape(u))
        out[..., : self.K] = self.amplitudes(u) * dW
        return out

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "sigma": self.sigma.tolist(),
                "cap": float(self.cap), "alpha": float(self.alpha)}


def eval_g(model: NoiseModel, u) -> np.ndarray:
    """The ``K`` noise fields ``g_k(u)`` as rows of a ``(..., K, dim)`` array."""
    u = np.asarray(u, dtype=float)
    amps = model.amplitudes(u)
    out = np.zeros(u.shape[:-1] + (model.K, u.shape[-1]))
    idx = np.arange(model.K)
    out[..., idx, idx] = amps
    return out


def hs_norm(gfields, eigenvalues, level: int = 0) -> float:
    """Hilbert-Schmidt norm ``(sum_k |g_k|^2_{D(A^{j/2})})^{1/2}``."""
    if level not in (0, 1, 2):
        raise ContractError(f"level must be 0, 1 or 2, got {level}")
    g = np.asarray(gfields, dtype=float)
    if g.size == 0:
        return 0.0
    lam = np.asarray(eigenvalues, dtype=float)
    if g.shape[-1] != lam.size:
        raise ContractError(f"field dim {g.shape[-1]} does not match {lam.size} eigenvalues")
    return np.sqrt(np.sum(lam ** level * g * g, axis=(-2, -1)))


# --------------------------------------------------------------------------
# Wiener increments


@dataclass(frozen=True, eq=False)
class WienerIncrements:
    increments: np.ndarray
    dt: float
    seed: int
    stream_id: int

    @property
    def steps(self) -> int:
        return self.increments.shape[0]

    @property
    def K(self) -> int:
        return self.increments.shape[1]


def rng_for(seed: int, stream_id: int) -> np.random.Generator:
    """Counter-based Philox generator keyed by ``(seed, stream_id)``."""
    return np.random.Generator(np.random.Philox(key=np.array(
        [int(seed) & 0xFFFFFFFFFFFFFFFF, int(stream_id) & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)))


def sample_increments(K: int, steps: int, dt: float, seed: int, stream_id: int) -> WienerIncrements:
    if K < 1 or steps < 1:
        raise ConfigurationError(f"K and steps must be >= 1, got K={K}, steps={steps}")
    if not dt > 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    dw = rng_for(seed, stream_id).standard_normal((steps, K)) * np.sqrt(dt)
    dw.setflags(write=False)
    return WienerIncrements(dw, float(dt), int(seed), int(stream_id))


def ito_integral(G_path, dW: WienerIncrements) -> np.ndarray:
    """Left-point sum ``sum_i sum_k G_k(t_i) dW_{k,i}``; ``G_path`` is ``(steps, K, dim)``."""
    G = np.asarray(G_path, dtype=float)
    if G.ndim != 3 or G.shape[:2] != dW.increments.shape:
        raise ContractError(
            f"integrand shape {G.shape[:2]} does not match increments {dW.increments.shape}")
    return np.einsum("skn,sk->n", G, dW.increments)


# --------------------------------------------------------------------------
# empirical checks


class LipschitzReport(NamedTuple):
    sublinear: float
    lipschitz: float
    globally_valid: bool


def _random_fields(rng, n_samples, dim, weights, scale):
    """Random directions with ``D(A^{j/2})`` norms uniform in ``[0, scale]``."""
    x = rng.standard_normal((n_samples, dim))
    x /= np.sqrt(np.sum(weights * x * x, axis=-1))[:, None]
    return x * (scale * rng.uniform(size=n_samples))[:, None]


def verify_lipschitz(model: NoiseModel, basis: StokesBasis, j: int = 0, n_samples: int = 1000,
                     scale: float = 10.0, seed: int = 0) -> LipschitzReport:
    """Empirical sublinear and Lipschitz constants of ``g`` at regularity level ``j``.

    For ``AlphaGrowth`` the Lipschitz constant is only local (the norm factor
    is not globally Lipschitz near 0), flagged by ``globally_valid=False``.
    """
    if n_samples < 100:
        raise ContractError("verify_lipschitz needs at least 100 samples")
    lam = basis.eigenvalues
    w = lam ** j
    rng = np.random.default_rng([int(seed), 7919, j])
    x = _random_fields(rng, n_samples, basis.dim, w, scale)
    y = _random_fields(rng, n_samples, basis.dim, w, scale)
    gx, gy = eval_g(model, x), eval_g(model, y)
    xnorm = np.sqrt(np.sum(w * x * x, axis=-1))
    dnorm = np.sqrt(np.sum(w * (x - y) ** 2, axis=-1))
    sub = np.max(hs_norm(gx, lam, j) / (1.0 + xnorm))
    lip = np.max(hs_norm(gx - gy, lam, j) / dnorm)
    return LipschitzReport(float(sub), float(lip), model.kind is not NoiseKind.ALPHA_GROWTH)


class MartingaleStats(NamedTuple):
    sup_norm: np.ndarray      # per path: sup_t |M_t|_H
    terminal_sq: np.ndarray   # per path: |M_T|_H^2
    quad_var: np.ndarray      # per path: int_0^T |g|_{HS,0}^2 dt


def simulate_martingale(model: NoiseModel, x0, n_paths: int, steps: int, dt: float,
                        seed: int = 0) -> MartingaleStats:
    """Paths of ``dX = g(X) dW``, ``X_0 = x0``; statistics of ``M = X - x0``.

    Path ``i`` uses increment stream ``i``.
    """
    x0 = np.asarray(x0, dtype=float)
    dws = np.stack([sample_increments(model.K, steps, dt, seed, i).increments
                    for i in range(n_paths)], axis=1)
    x = np.broadcast_to(x0, (n_paths, x0.size)).copy()
    sup = np.zeros(n_paths)
    qv = np.zeros(n_paths)
    for s in range(steps):
        amps = model.amplitudes(x)
        qv += np.sum(amps * amps, axis=-1) * dt
        x[:, : model.K] += amps * dws[s]
        m = x - x0
        sup = np.maximum(sup, np.sqrt(np.sum(m * m, axis=-1)))
    m = x - x0
    return MartingaleStats(sup, np.sum(m * m, axis=-1), qv)


class IsometryReport(NamedTuple):
    lhs: float
    rhs: float
    rel_error: float
    ci: float


def ito_isometry_check(model: NoiseModel, x0, n_paths: int = 10_000, steps: int = 100,
                       dt: float = 0.01, seed: int = 0) -> IsometryReport:
    """Compare ``E|int g dW|^2`` with ``E int |g|_HS^2 dt``.

    ``ci`` is the 95% half-width of the difference, relative to the rhs.
    """
    st = simulate_martingale(model, x0, n_paths, steps, dt, seed)
    lhs, rhs = float(np.mean(st.terminal_sq)), float(np.mean(st.quad_var))
    diff = st.terminal_sq - st.quad_var
    ci = 1.96 * np.std(diff, ddof=1) / np.sqrt(n_paths) / rhs if rhs > 0 else float("nan")
    rel = abs(lhs - rhs) / rhs if rhs > 0 else float("nan")
    return IsometryReport(lhs, rhs, rel, ci)


class BDGReport(NamedTuple):
    lhs: float
    rhs: float
    ratio: float | None


def bdg_check(p: int, n_paths: int, steps: int, dt: float, model: NoiseModel,
              basis: StokesBasis, x0=None, seed: int = 0) -> BDGReport:
    """Empirical ``E sup_t |int g dW|^p`` against ``E (int |g|^2_HS dt)^{p/2}``.

    ``ratio`` is ``None`` when the right side vanishes (no noise).
    """
    if p not in (1, 2):
        raise ContractError(f"p must be 1 or 2, got {p}")
    if n_paths < 1000:
        raise ContractError("bdg_check needs at least 1000 paths")
    if x0 is None:
        x0 = np.zeros(basis.dim)
        x0[0] = 1.0
    st = simulate_martingale(model, x0, n_paths, steps, dt, seed)
    lhs = float(np.mean(st.sup_norm ** p))
    rhs = float(np.mean(st.quad_var ** (p / 2)))
    return BDGReport(lhs, rhs, lhs / rhs if rhs > 0 else None)
