"""Bilinear convection term ``B(u, v) = P_H (u . grad) v`` in mode coordinates.

Evaluation is pseudo-spectral: reconstruct ``u`` and ``grad v`` on a grid,
multiply pointwise, project back with the basis quadrature.  On the torus the
modes and their gradients are analytic and may be sampled on a 3/2-padded
grid, which makes every quadrature of a triple product exact.  On the square
gradients are central differences and quadrature is trapezoidal.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, ContractError
from .spectral import DomainKind, StokesBasis, _check_coeffs, torus_mode_gradients, torus_modes_on_grid


def _central_gradients(modes: np.ndarray, h: float) -> np.ndarray:
    """``(n, 2, 2, nx, ny)`` interior central differences; boundary rows left at 0.

    Boundary values never enter a projection because every mode vanishes there.
    """
    grads = np.zeros(modes.shape[:2] + (2,) + modes.shape[2:])
    grads[:, :, 0, 1:-1, 1:-1] = (modes[:, :, 2:, 1:-1] - modes[:, :, :-2, 1:-1]) / (2 * h)
    grads[:, :, 1, 1:-1, 1:-1] = (modes[:, :, 1:-1, 2:] - modes[:, :, 1:-1, :-2]) / (2 * h)
    return grads


class BilinearWorkspace:
    """Precomputed mode values and gradients on the evaluation grid (immutable)."""

    def __init__(self, basis: StokesBasis, dealias: bool = True):
        self.basis = basis
        self.dealias = bool(dealias)
        dom = basis.domain
        if dom.kind is DomainKind.PERIODIC_TORUS:
            npts = dom.grid_points
            if self.dealias:
                npts = 3 * npts // 2
                npts += npts % 2
            wv = basis.wavevectors
            if wv is None:
                raise ContractError("torus basis lacks wavevectors; cannot build workspace")
            modes = torus_modes_on_grid(wv, dom.side_length, npts)
            grads = torus_mode_gradients(wv, dom.side_length, npts)
            weights = np.full((npts, npts), (dom.side_length / npts) ** 2)
        else:
            modes = np.array(basis.modes)
            grads = _central_gradients(modes, dom.spacing)
            weights = np.array(basis.quadrature_weights)
        self.eval_points = modes.shape[-1]
        n = basis.dim
        self._modes = modes.reshape(n, 2, -1).reshape(n, -1)
        self._grads = grads.reshape(n, -1)
        self._wmodes = (modes * weights).reshape(n, -1)
        self.eigenvalues = basis.eigenvalues
        for arr in (self._modes, self._grads, self._wmodes):
            arr.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.basis.dim

    def truncate(self, n: int) -> "BilinearWorkspace":
        """Workspace restricted to the first ``n`` modes (shares no mutable state)."""
        if not 1 <= n <= self.dim:
            raise ContractError(f"level {n} outside [1, {self.dim}]")
        ws = object.__new__(BilinearWorkspace)
        ws.basis = self.basis.truncate(n)
        ws.dealias = self.dealias
        ws.eval_points = self.eval_points
        ws._modes = self._modes[:n]
        ws._grads = self._grads[:n]
        ws._wmodes = self._wmodes[:n]
        ws.eigenvalues = self.eigenvalues[:n]
        return ws

    def mode_gradients(self) -> np.ndarray:
        g = self.eval_points
        return self._grads.reshape(self.dim, 2, 2, g, g)

    def advection(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Grid values of ``(u . grad) v``, shape ``(..., 2, G)`` with ``G`` flattened points."""
        npts = self.eval_points ** 2
        uu = (u @ self._modes).reshape(u.shape[:-1] + (2, npts))
        gv = (v @ self._grads).reshape(v.shape[:-1] + (2, 2, npts))
        return uu[..., None, 0, :] * gv[..., :, 0, :] + uu[..., None, 1, :] * gv[..., :, 1, :]


def _coeffs(x, ws: BilinearWorkspace) -> np.ndarray:
    return _check_coeffs(x, ws.basis)


def bilinear_b(u, v, ws: BilinearWorkspace, n: int | None = None) -> np.ndarray:
    """Coefficients ``b_k = <(u . grad) v, e_k>`` for ``k <= n`` (zero above)."""
    u, v = _coeffs(u, ws), _coeffs(v, ws)
    n = ws.dim if n is None else n
    if not 0 <= n <= ws.dim:
        raise ContractError(f"level {n} exceeds workspace dim {ws.dim}")
    prod = ws.advection(u, v)
    flat = prod.reshape(prod.shape[:-2] + (-1,))
    out = np.zeros(np.broadcast_shapes(u.shape, v.shape))
    out[..., :n] = flat @ ws._wmodes[:n].T
    return out


def skew_pairing(u, v, ws: BilinearWorkspace) -> np.ndarray:
    """``<B(u, v), v>``; vanishes for divergence-free ``u`` up to quadrature error."""
    v = _coeffs(v, ws)
    return np.sum(bilinear_b(u, v, ws) * v, axis=-1)


def grad_pairing(u, ws: BilinearWorkspace) -> np.ndarray:
    """``<B(u, u), A u>``; zero on the torus, generically nonzero with no-slip walls."""
    u = _coeffs(u, ws)
    return np.sum(bilinear_b(u, u, ws) * ws.eigenvalues * u, axis=-1)


def ladyzhenskaya_ratio(u, ws: BilinearWorkspace) -> np.ndarray:
    """``|<B(u,u), Au>| / (|u|_H^{1/2} |u|_V |Au|_H^{3/2})``."""
    u = _coeffs(u, ws)
    lam = ws.eigenvalues
    h = np.sum(u * u, axis=-1)
    if np.any(h == 0):
        raise ContractError("ladyzhenskaya_ratio is undefined for the zero field")
    v = np.sum(lam * u * u, axis=-1)
    a = np.sum(lam * lam * u * u, axis=-1)
    denom = h ** 0.25 * np.sqrt(v) * a ** 0.75
    return np.abs(grad_pairing(u, ws)) / denom


def skew_ratio(u, v, ws: BilinearWorkspace) -> np.ndarray:
    """``|<B(u,v), v>|`` over its Ladyzhenskaya bound
    ``|u|_H^{1/2} |u|_V^{1/2} |v|_H^{1/2} |v|_V^{3/2}``."""
    u, v = _coeffs(u, ws), _coeffs(v, ws)
    lam = ws.eigenvalues
    hu, vu = np.sum(u * u, axis=-1), np.sum(lam * u * u, axis=-1)
    hv, vv = np.sum(v * v, axis=-1), np.sum(lam * v * v, axis=-1)
    denom = (hu * vu * hv) ** 0.25 * vv ** 0.75
    if np.any(denom == 0):
        raise ContractError("skew_ratio is undefined when either field vanishes")
    return np.abs(skew_pairing(u, v, ws)) / denom


def rhs_det(u, f, nu: float, ws: BilinearWorkspace, n: int | None = None,
            nonlinear: bool = True) -> np.ndarray:
    """Galerkin drift ``-nu A u - P_n B(u, u) + P_n f`` (zero above level ``n``)."""
    if not nu > 0:
        raise ConfigurationError(f"viscosity must be positive, got {nu}")
    u, f = _coeffs(u, ws), _coeffs(f, ws)
    n = ws.dim if n is None else n
    out = -nu * ws.eigenvalues * u + f
    if nonlinear:
        out = out - bilinear_b(u, u, ws, n)
    out[..., n:] = 0.0
    return out
