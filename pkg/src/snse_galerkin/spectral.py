"""Discrete Stokes eigenbases on the periodic torus and the no-slip square.

Fields are stored as coefficient vectors over a :class:`StokesBasis`; a grid
velocity field is an array of shape ``(2, nx, ny)`` indexed ``[component, x, y]``.
Coefficient arrays may carry leading batch axes, the mode axis is always last.
"""
from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import ConfigurationError, ContractError, NumericError

FORMAT_VERSION = 1
DEGENERACY_RTOL = 1e-8
MAX_DIRICHLET_GRID = 64


class DomainKind(str, enum.Enum):
    PERIODIC_TORUS = "PeriodicTorus"
    DIRICHLET_SQUARE = "DirichletSquare"


@dataclass(frozen=True)
class DomainSpec:
    kind: DomainKind
    side_length: float
    grid_points: int

    def __post_init__(self):
        object.__setattr__(self, "kind", DomainKind(self.kind))
        if not self.side_length > 0:
            raise ConfigurationError(f"side_length must be positive, got {self.side_length}")
        if self.grid_points < 8 or self.grid_points % 2:
            raise ConfigurationError(
                f"grid_points must be even and >= 8, got {self.grid_points}")

    @property
    def spacing(self) -> float:
        return self.side_length / self.grid_points

    def axis(self) -> np.ndarray:
        """Grid node coordinates along one axis."""
        n = self.grid_points
        if self.kind is DomainKind.PERIODIC_TORUS:
            return np.arange(n) * self.spacing
        return np.arange(n + 1) * self.spacing

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "side_length": float(self.side_length),
                "grid_points": int(self.grid_points)}


@dataclass(frozen=True, eq=False)
class StokesBasis:
    """Orthonormal divergence-free eigenmodes, ascending eigenvalues.

    ``modes`` has shape ``(dim, 2, nx, ny)`` and ``quadrature_weights`` shape
    ``(nx, ny)``.  For the torus, ``wavevectors`` holds ``(k1, k2, phase)`` rows
    (phase 0 = sine, 1 = cosine) so modes can be resampled on finer grids.
    """

    domain: DomainSpec
    eigenvalues: np.ndarray
    modes: np.ndarray
    quadrature_weights: np.ndarray
    wavevectors: np.ndarray | None = None

    def __post_init__(self):
        for name in ("eigenvalues", "modes", "quadrature_weights"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.eigenvalues.ndim != 1 or self.modes.shape[0] != self.eigenvalues.size:
            raise ContractError("eigenvalues and modes disagree on the basis dimension")
        if self.modes.shape[2:] != self.quadrature_weights.shape:
            raise ContractError("modes and quadrature weights disagree on the grid shape")
        # weighted, flattened modes: (dim, 2*nx*ny); projection is one matmul
        flat = self.modes.reshape(self.dim, -1)
        wflat = (self.modes * self.quadrature_weights).reshape(self.dim, -1)
        object.__setattr__(self, "_flat", flat)
        object.__setattr__(self, "_wflat", wflat)

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.quadrature_weights.shape

    def gram(self) -> np.ndarray:
        return self._wflat @ self._flat.T

    def inner(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Discrete H inner product of grid fields (leading batch axes allowed)."""
        return np.sum(a * b * self.quadrature_weights, axis=(-3, -2, -1))

    def truncate(self, n: int) -> "StokesBasis":
        _check_level(n, self.dim)
        wv = None if self.wavevectors is None else self.wavevectors[:n]
        return StokesBasis(self.domain, self.eigenvalues[:n], self.modes[:n],
                           self.quadrature_weights, wv)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(self.domain.to_dict(), sort_keys=True).encode())
        for arr in (self.eigenvalues, self.quadrature_weights, self.modes):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def _check_level(n, dim):
    if not 1 <= n <= dim:
        raise ContractError(f"level n={n} must lie in [1, {dim}]")


def _check_coeffs(coeffs, basis: StokesBasis) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float)
    if c.ndim == 0 or c.shape[-1] != basis.dim:
        raise ContractError(
            f"coefficient dimension {c.shape[-1] if c.ndim else 0} does not match basis dim {basis.dim}")
    return c


# --------------------------------------------------------------------------
# periodic torus


def _torus_wavevectors(n_modes: int) -> np.ndarray:
    """Lowest ``n_modes`` (k1, k2, phase) triples in the canonical order."""
    kmax = 1
    while True:
        ks = [(k1, k2) for k1 in range(0, kmax + 1) for k2 in range(-kmax, kmax + 1)
              if k1 > 0 or k2 > 0]
        # every mode with |k|^2 <= kmax^2 is present in the box
        ks = [k for k in ks if k[0] ** 2 + k[1] ** 2 <= kmax ** 2]
        if 2 * len(ks) >= n_modes:
            break
        kmax *= 2
    ks.sort(key=lambda k: (k[0] ** 2 + k[1] ** 2, k[0], k[1]))
    rows = [(k1, k2, phase) for k1, k2 in ks for phase in (0, 1)]
    return np.array(rows[:n_modes], dtype=int)


def torus_modes_on_grid(wavevectors: np.ndarray, side_length: float, npts: int) -> np.ndarray:
    """Evaluate analytic torus modes on an ``npts x npts`` periodic grid."""
    x = np.arange(npts) * side_length / npts
    X, Y = np.meshgrid(x, x, indexing="ij")
    out = np.empty((len(wavevectors), 2, npts, npts))
    amp = np.sqrt(2.0) / side_length
    for m, (k1, k2, phase) in enumerate(wavevectors):
        theta = 2 * np.pi / side_length * (k1 * X + k2 * Y)
        profile = amp * (np.sin(theta) if phase == 0 else np.cos(theta))
        norm = np.hypot(k1, k2)
        out[m, 0] = -k2 / norm * profile
        out[m, 1] = k1 / norm * profile
    return out


def torus_mode_gradients(wavevectors: np.ndarray, side_length: float, npts: int) -> np.ndarray:
    """Exact gradients ``d(e_m)_c / dx_d`` with shape ``(n, 2, 2, npts, npts)`` ([m, c, d])."""
    x = np.arange(npts) * side_length / npts
    X, Y = np.meshgrid(x, x, indexing="ij")
    out = np.empty((len(wavevectors), 2, 2, npts, npts))
    amp = np.sqrt(2.0) / side_length
    scale = 2 * np.pi / side_length
    for m, (k1, k2, phase) in enumerate(wavevectors):
        theta = scale * (k1 * X + k2 * Y)
        dprofile = amp * (np.cos(theta) if phase == 0 else -np.sin(theta))
        norm = np.hypot(k1, k2)
        direction = (-k2 / norm, k1 / norm)
        for c in range(2):
            for d, kd in enumerate((k1, k2)):
                out[m, c, d] = direction[c] * scale * kd * dprofile
    return out


def build_periodic_basis(side_length: float, n_modes: int, grid_points: int | None = None) -> StokesBasis:
    """The ``n_modes`` lowest divergence-free Fourier modes on ``[0, L]^2``.

    Modes are ``(k_perp/|k|) * sqrt(2)/L * sin|cos(2 pi k.x / L)`` over a half
    plane of wavevectors, ordered by ``|k|^2``, then lexicographically, then
    sine before cosine.  The default grid resolves the highest wavenumber
    (``grid_points > 2 kmax``) so that every quadrature below is exact.
    """
    if not isinstance(n_modes, (int, np.integer)) or n_modes < 1:
        raise ConfigurationError(f"n_modes must be a positive integer, got {n_modes!r}")
    if not side_length > 0:
        raise ConfigurationError(f"side_length must be positive, got {side_length}")
    wv = _torus_wavevectors(int(n_modes))
    kmax = int(np.abs(wv[:, :2]).max())
    needed = max(16, 2 * kmax + 2)
    needed += needed % 2
    if grid_points is None:
        grid_points = needed
    elif grid_points < 2 * kmax + 2:
        raise ConfigurationError(
            f"grid_points={grid_points} cannot resolve wavenumber {kmax}; need >= {2 * kmax + 2}")
    domain = DomainSpec(DomainKind.PERIODIC_TORUS, float(side_length), int(grid_points))
    modes = torus_modes_on_grid(wv, side_length, grid_points)
    lam = (2 * np.pi / side_length) ** 2 * (wv[:, 0] ** 2 + wv[:, 1] ** 2)
    weights = np.full((grid_points, grid_points), domain.spacing ** 2)
    return StokesBasis(domain, lam.astype(float), modes, weights, wv)


# --------------------------------------------------------------------------
# no-slip square


def _dirichlet_operators(m: int, h: float):
    """Five-point ``-Laplacian`` and clamped 13-point biharmonic on ``m x m`` interior nodes."""
    t = (2 * np.eye(m) - np.eye(m, k=1) - np.eye(m, k=-1)) / h ** 2
    eye = np.eye(m)
    lap = np.kron(t, eye) + np.kron(eye, t)
    # ghost reflection psi_{-1} = psi_1 adds 2/h^4 per boundary-adjacent side
    edge = np.zeros(m)
    edge[0] += 1
    edge[-1] += 1
    sides = (edge[:, None] + edge[None, :]).ravel()
    bih = lap @ lap + np.diag(2.0 * sides / h ** 4)
    return lap, bih


def dirichlet_laplacian_eigenvalues(side_length: float, grid_points: int, k: int = 1) -> np.ndarray:
    """Lowest ``k`` eigenvalues of the discrete scalar Dirichlet Laplacian (dense solve)."""
    m = grid_points - 1
    lap, _ = _dirichlet_operators(m, side_length / grid_points)
    return scipy.linalg.eigh(lap, eigvals_only=True, subset_by_index=[0, k - 1])


def _stream_to_velocity(psi: np.ndarray, h: float) -> np.ndarray:
    """``u = (d psi/dy, -d psi/dx)`` by central differences, zero on the boundary.

    ``psi`` has shape ``(n, N+1, N+1)`` with zero boundary values.  With the
    clamped ghost reflection the central differences vanish on the boundary
    exactly, so the velocity is zero there and discretely divergence-free.
    """
    u = np.zeros((psi.shape[0], 2) + psi.shape[1:])
    u[:, 0, 1:-1, 1:-1] = (psi[:, 1:-1, 2:] - psi[:, 1:-1, :-2]) / (2 * h)
    u[:, 1, 1:-1, 1:-1] = -(psi[:, 2:, 1:-1] - psi[:, :-2, 1:-1]) / (2 * h)
    return u


def discrete_divergence(fields: np.ndarray, domain: DomainSpec) -> np.ndarray:
    """Central-difference divergence (periodic wrap on the torus, interior nodes on the square)."""
    h = domain.spacing
    ux, uy = fields[..., 0, :, :], fields[..., 1, :, :]
    if domain.kind is DomainKind.PERIODIC_TORUS:
        # spectral derivative: exact for resolved trigonometric fields
        n = domain.grid_points
        k = 2 * np.pi * np.fft.fftfreq(n, d=h)
        k[n // 2] = 0.0
        return np.real(np.fft.ifft2(1j * k[:, None] * np.fft.fft2(ux)) +
                       np.fft.ifft2(1j * k[None, :] * np.fft.fft2(uy)))
    div = np.zeros_like(ux)
    div[..., 1:-1, 1:-1] = ((ux[..., 2:, 1:-1] - ux[..., :-2, 1:-1]) +
                            (uy[..., 1:-1, 2:] - uy[..., 1:-1, :-2])) / (2 * h)
    return div


def _transpose_field(u: np.ndarray) -> np.ndarray:
    """Reflection across the diagonal ``x <-> y``; maps divergence-free fields to themselves."""
    return np.stack([np.swapaxes(u[..., 1, :, :], -1, -2),
                     np.swapaxes(u[..., 0, :, :], -1, -2)], axis=-3)


def _sign_reference(domain: DomainSpec) -> np.ndarray:
    x = domain.axis() / domain.side_length
    X, Y = np.meshgrid(x, x, indexing="ij")
    return np.stack([np.cos(1.3 * X + 0.7 * Y + 0.4) + X * Y,
                     np.sin(0.9 * X - 1.7 * Y + 1.1) + X ** 2])


def build_dirichlet_basis(side_length: float, grid_points: int, n_modes: int) -> StokesBasis:
    """Stokes eigenmodes of the no-slip square via the clamped stream-function pencil.

    Solves ``Delta^2 psi = lam (-Delta psi)`` with ``psi = d psi/dn = 0`` on the
    boundary (dense generalized symmetric eigensolve), maps ``psi`` to
    ``u = curl psi`` and orthonormalizes in the trapezoidal H inner product.
    Numerically degenerate clusters are rotated into eigenvectors of the
    diagonal reflection and every mode gets a deterministic sign, so the same
    physical mode is picked on every grid.
    """
    domain = DomainSpec(DomainKind.DIRICHLET_SQUARE, float(side_length), int(grid_points))
    if grid_points > MAX_DIRICHLET_GRID:
        raise ConfigurationError(
            f"dense Dirichlet eigensolve is capped at grid {MAX_DIRICHLET_GRID}, got {grid_points}")
    m = grid_points - 1
    if not isinstance(n_modes, (int, np.integer)) or n_modes < 1:
        raise ConfigurationError(f"n_modes must be a positive integer, got {n_modes!r}")
    if n_modes > (m * m) // 4:
        raise ConfigurationError(
            f"n_modes={n_modes} exceeds a quarter of the {m * m} interior unknowns")
    h = domain.spacing
    lap, bih = _dirichlet_operators(m, h)
    # one extra eigenpair so a cluster straddling the cut is symmetry-adapted
    n_solve = min(n_modes + 1, m * m)
    try:
        lam, vecs = scipy.linalg.eigh(bih, lap, subset_by_index=[0, n_solve - 1])
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericError(f"Stokes eigensolve failed: {exc}") from exc
    if not np.all(np.isfinite(lam)) or lam[0] <= 0:
        raise NumericError("Stokes eigensolve returned non-positive or non-finite eigenvalues")
    order = np.argsort(lam, kind="stable")
    lam, vecs = lam[order], vecs[:, order]

    psi = np.zeros((n_solve, m + 2, m + 2))
    psi[:, 1:-1, 1:-1] = vecs.T.reshape(n_solve, m, m)
    modes = _stream_to_velocity(psi, h)
    weights = _trapezoid_weights(grid_points, h)

    def inner(a, b):
        return np.einsum("acij,bcij,ij->ab", a, b, weights)

    # symmetry-adapt numerically degenerate clusters
    start = 0
    while start < n_solve:
        stop = start + 1
        while stop < n_solve and lam[stop] - lam[stop - 1] < DEGENERACY_RTOL * lam[stop]:
            stop += 1
        if stop - start > 1:
            block = modes[start:stop]
            g = inner(block, block)
            s = inner(block, _transpose_field(block))
            # generalized problem: reflection operator in the (non-orthonormal) block
            _, rot = scipy.linalg.eigh(-0.5 * (s + s.T), g)
            modes[start:stop] = np.einsum("ab,bcij->acij", rot.T, block)
        start = stop
    # a cut through a cluster keeps the reflection-symmetric member first
    lam, modes = lam[:n_modes], modes[:n_modes]

    # Gram-Schmidt in ascending order (Cholesky of the Gram matrix)
    gram = inner(modes, modes)
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise NumericError("velocity modes are linearly dependent") from exc
    modes = np.einsum("ab,bcij->acij", np.linalg.inv(chol), modes)

    ref = _sign_reference(domain)
    signs = np.sign(np.einsum("acij,cij,ij->a", modes, ref, weights))
    signs[signs == 0] = 1.0
    modes *= signs[:, None, None, None]
    return StokesBasis(domain, lam, modes, weights)


def _trapezoid_weights(grid_points: int, h: float) -> np.ndarray:
    w1 = np.full(grid_points + 1, h)
    w1[[0, -1]] = h / 2
    return np.outer(w1, w1)


def build_basis(domain: DomainSpec, n_modes: int) -> StokesBasis:
    if domain.kind is DomainKind.PERIODIC_TORUS:
        return build_periodic_basis(domain.side_length, n_modes, domain.grid_points)
    return build_dirichlet_basis(domain.side_length, domain.grid_points, n_modes)


# --------------------------------------------------------------------------
# field operations


def norms(coeffs, basis: StokesBasis):
    """``(|u|_H^2, |u|_V^2, |Au|_H^2)`` as eigenvalue-weighted coefficient sums."""
    c = _check_coeffs(coeffs, basis)
    lam = basis.eigenvalues
    c2 = c * c
    return c2.sum(axis=-1), (lam * c2).sum(axis=-1), (lam * lam * c2).sum(axis=-1)


def project(grid_field, basis: StokesBasis, n: int | None = None) -> np.ndarray:
    """Coefficients ``<grid_field, e_k>`` for ``k <= n``, zero above ``n``.

    The returned vector always has length ``basis.dim``.
    """
    n = basis.dim if n is None else n
    if n > basis.dim or n < 0:
        raise ContractError(f"projection level {n} exceeds basis dim {basis.dim}")
    g = np.asarray(grid_field, dtype=float)
    if g.shape[-3:] != (2,) + basis.grid_shape:
        raise ContractError(f"grid field shape {g.shape} does not match basis grid {basis.grid_shape}")
    flat = g.reshape(g.shape[:-3] + (-1,))
    out = np.zeros(g.shape[:-3] + (basis.dim,))
    out[..., :n] = flat @ basis._wflat[:n].T
    return out


def reconstruct(coeffs, basis: StokesBasis) -> np.ndarray:
    """Grid field ``sum_k c_k e_k``."""
    c = _check_coeffs(coeffs, basis)
    flat = c @ basis._flat
    return flat.reshape(c.shape[:-1] + (2,) + basis.grid_shape)


# --------------------------------------------------------------------------
# persistence


def save_basis(basis: StokesBasis, path) -> Path:
    """Write a self-describing ``.npz`` (format version, domain, eigenpairs, weights)."""
    path = Path(path)
    meta = {"format_version": FORMAT_VERSION, "domain": basis.domain.to_dict()}
    arrays = dict(eigenvalues=basis.eigenvalues, modes=basis.modes,
                  quadrature_weights=basis.quadrature_weights,
                  meta=np.array(json.dumps(meta, sort_keys=True)))
    if basis.wavevectors is not None:
        arrays["wavevectors"] = basis.wavevectors
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_basis(path) -> StokesBasis:
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format_version") != FORMAT_VERSION:
            raise ConfigurationError(
                f"unsupported basis file version {meta.get('format_version')} in {path}")
        d = meta["domain"]
        domain = DomainSpec(DomainKind(d["kind"]), d["side_length"], d["grid_points"])
        wv = data["wavevectors"] if "wavevectors" in data.files else None
        return StokesBasis(domain, data["eigenvalues"], data["modes"],
                           data["quadrature_weights"], wv)


def cached_basis(domain: DomainSpec, n_modes: int, cache_dir=None) -> StokesBasis:
    """Build ``domain``'s basis, reusing ``cache_dir/<key>.npz`` when present."""
    if cache_dir is None:
        return build_basis(domain, n_modes)
    cache_dir = Path(cache_dir)
    key = f"{domain.kind.value}_L{domain.side_length!r}_N{domain.grid_points}_n{n_modes}.npz"
    path = cache_dir / key
    if path.exists():
        basis = load_basis(path)
        if basis.domain == domain and basis.dim == n_modes:
            return basis
    basis = build_basis(domain, n_modes)
    cache_dir.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    save_basis(basis, tmp)
    tmp.replace(path)
    return basis
