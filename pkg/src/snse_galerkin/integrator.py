"""Semi-implicit Euler-Maruyama for the Galerkin system, single and coupled levels.

One step of level ``n`` solves, coefficientwise for ``k <= n``::

    (1 + nu lam_k dt) c_k' = c_k + dt (f_k - b_k(c)) + sum_j g_{j,k}(c) dW_j

with the Stokes part implicit and the convection and noise terms evaluated at
the left endpoint.  Several levels driven by one increment matrix form a
coupled run; every path is keyed by ``(seed, stream)`` so results do not
depend on how paths are batched or scheduled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import BlowUpError, ConfigurationError, ContractError
from .noise import NoiseModel, WienerIncrements, sample_increments
from .nonlinear import BilinearWorkspace, bilinear_b
from .spectral import StokesBasis, project

OVERFLOW_GUARD = 1e12


@dataclass(frozen=True)
class IntegratorConfig:
    nu: float
    dt: float
    T: float
    record_coeffs: bool = False
    dealias: bool = True
    nonlinear: bool = True

    def __post_init__(self):
        if not self.nu > 0:
            raise ConfigurationError(f"viscosity nu must be positive, got {self.nu}")
        if not self.dt > 0 or not self.T > 0:
            raise ConfigurationError(f"dt and T must be positive, got dt={self.dt}, T={self.T}")
        if self.dt > self.T:
            raise ConfigurationError(f"dt={self.dt} exceeds the horizon T={self.T}")

    @property
    def steps(self) -> int:
        return max(1, math.ceil(self.T / self.dt - 1e-9))

    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt

    def check_resolution(self, lam_max: float) -> None:
        limit = 0.1 / math.sqrt(lam_max)
        if self.dt > limit * (1 + 1e-12):
            raise ConfigurationError(
                f"dt={self.dt} too large for lambda_max={lam_max:.4g}; need dt <= {limit:.4g}")


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    h_sq: np.ndarray
    v_sq: np.ndarray
    a_sq: np.ndarray
    dissipation: np.ndarray
    level: int
    seed: int
    stream: int
    coeffs: np.ndarray | None = None
    blowup_step: int | None = None
    diagnostic: str = ""

    @property
    def blew_up(self) -> bool:
        return self.blowup_step is not None

    def __len__(self):
        return self.times.size


@dataclass
class MultilevelRun:
    levels: list[int]
    n_ref: int
    records: dict[int, TrajectoryRecord]
    increments: WienerIncrements
    error_h: dict[int, np.ndarray] = field(default_factory=dict)
    error_v: dict[int, np.ndarray] = field(default_factory=dict)
    error_a: dict[int, np.ndarray] = field(default_factory=dict)
    eigenvalues: np.ndarray | None = None

    @property
    def blew_up(self) -> bool:
        return any(r.blew_up for r in self.records.values())


def _as_coeffs(x, basis: StokesBasis, name: str) -> np.ndarray:
    """Accept a coefficient vector or a grid field (projected onto the full basis)."""
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        if a.size > basis.dim:
            raise ContractError(f"{name} has {a.size} coefficients, basis dim is {basis.dim}")
        out = np.zeros(basis.dim)
        out[: a.size] = a
    elif a.shape == (2,) + basis.grid_shape:
        out = project(a, basis)
    else:
        raise ContractError(f"{name} with shape {a.shape} is neither coefficients nor a grid field")
    if not np.all(np.isfinite(out)):
        raise ContractError(f"{name} is not finite")
    return out


def _workspace(basis_or_ws, cfg: IntegratorConfig) -> BilinearWorkspace:
    if isinstance(basis_or_ws, BilinearWorkspace):
        return basis_or_ws
    return BilinearWorkspace(basis_or_ws, dealias=cfg.dealias)


def step(u, f, dW_row, model: NoiseModel | None, cfg: IntegratorConfig,
         ws: BilinearWorkspace, n: int | None = None) -> np.ndarray:
    """One semi-implicit Euler-Maruyama step of the level-``n`` system.

    Modes above ``n`` are returned as zero.  Raises ``BlowUpError`` on a
    non-finite result.
    """
    u = np.asarray(u, dtype=float)
    f = np.asarray(f, dtype=float)
    if u.shape[-1] != ws.dim or f.shape[-1] != ws.dim:
        raise ContractError(f"field dims {u.shape[-1]}, {f.shape[-1]} do not match workspace {ws.dim}")
    n = ws.dim if n is None else n
    if not 1 <= n <= ws.dim:
        raise ContractError(f"level {n} outside [1, {ws.dim}]")
    c = u[..., :n]
    sub = ws.truncate(n) if n < ws.dim else ws
    out = np.zeros(u.shape)
    out[..., :n] = _advance(c, f[:n], dW_row, model, cfg, sub)
    if not np.all(np.isfinite(out)):
        raise BlowUpError("non-finite state after one step")
    return out


def _advance(c, f, dw, model, cfg, ws):
    # overflow is detected by the caller and reported as blow-up
    with np.errstate(over="ignore", invalid="ignore"):
        rhs = c + cfg.dt * f
        if cfg.nonlinear:
            rhs = rhs - cfg.dt * bilinear_b(c, c, ws)
        if model is not None:
            rhs = rhs + model.increment(c, dw)
        return rhs / (1.0 + cfg.nu * cfg.dt * ws.eigenvalues)


def run_paths(u0, f, model: NoiseModel | None, cfg: IntegratorConfig, ws: BilinearWorkspace,
              levels: Sequence[int], seed: int, streams: Sequence[int],
              track_errors: bool = False, project_noise: bool = False):
    """Advance every level for a batch of paths (path ``i`` uses ``streams[i]``).

    By default every level must see all ``K`` driven modes.  With
    ``project_noise`` a level ``n < K`` is driven by ``P_n g`` instead, i.e. by
    the first ``n`` components of the same increments.

    Returns ``(records, errors, increments)``: ``records[i][level]`` are
    :class:`TrajectoryRecord` objects; with ``track_errors`` the norms of
    ``u^{N_ref} - u^n`` (``N_ref = max(levels)``) are accumulated per step as
    ``errors[i][level] = (h, v, a)``.
    """
    levels = [int(n) for n in levels]
    if not levels or any(b <= a for a, b in zip(levels, levels[1:])):
        raise ConfigurationError(f"levels must be a nonempty ascending list, got {levels}")
    n_top = levels[-1]
    if n_top > ws.dim:
        raise ConfigurationError(f"level {n_top} exceeds basis dim {ws.dim}")
    if model is not None and model.K > levels[0] and not project_noise:
        raise ConfigurationError(
            f"noise drives K={model.K} modes but the smallest level is {levels[0]}; "
            "every coupled level must see all driven modes")
    cfg.check_resolution(float(ws.eigenvalues[n_top - 1]))
    u0 = np.asarray(u0, dtype=float)
    f = np.asarray(f, dtype=float)
    P = len(streams)
    M = cfg.steps
    times = cfg.times()
    K = model.K if model is not None else 1
    incs = [sample_increments(K, M, cfg.dt, seed, s) for s in streams]
    dws = np.stack([w.increments for w in incs], axis=1)  # (M, P, K)

    subs = {n: (ws.truncate(n) if n < ws.dim else ws) for n in levels}
    models = {n: (model.truncate(n) if model is not None else None) for n in levels}
    kn = {n: min(n, K) for n in levels}
    lam = {n: subs[n].eigenvalues for n in levels}
    state = {n: np.broadcast_to(u0[:n], (P, n)).copy() for n in levels}
    hist = {n: np.zeros((3, M + 1, P)) for n in levels}
    errs = {n: np.zeros((3, M + 1, P)) for n in levels} if track_errors else None
    coeffs = {n: np.zeros((M + 1, P, n)) for n in levels} if cfg.record_coeffs else None
    blown = {n: np.full(P, -1) for n in levels}

    def record(m):
        for n in levels:
            c = state[n]
            c2 = c * c
            hist[n][0, m] = c2.sum(-1)
            hist[n][1, m] = (lam[n] * c2).sum(-1)
            hist[n][2, m] = (lam[n] ** 2 * c2).sum(-1)
            if coeffs is not None:
                coeffs[n][m] = c
        if errs is not None:
            ref = state[n_top]
            lr = lam[n_top]
            for n in levels:
                d = ref.copy()
                d[:, :n] -= state[n]
                d2 = d * d
                errs[n][0, m] = d2.sum(-1)
                errs[n][1, m] = (lr * d2).sum(-1)
                errs[n][2, m] = (lr ** 2 * d2).sum(-1)

    record(0)
    for n in levels:
        _flag_blowups(hist[n], blown[n], state[n], 0)
    for m in range(M):
        for n in levels:
            state[n] = _advance(state[n], f[:n], dws[m, :, :kn[n]], models[n], cfg, subs[n])
        record(m + 1)
        for n in levels:
            _flag_blowups(hist[n], blown[n], state[n], m + 1)

    records = []
    errors = []
    for i, s in enumerate(streams):
        per, per_err = {}, {}
        for n in levels:
            h, v, a = hist[n][:, :, i]
            stop = M + 1 if blown[n][i] < 0 else int(blown[n][i])
            diss = np.zeros(M + 1)
            diss[1:] = cfg.nu * np.cumsum(0.5 * (a[1:] + a[:-1]) * cfg.dt)
            rec = TrajectoryRecord(
                times[:stop].copy(), h[:stop].copy(), v[:stop].copy(), a[:stop].copy(),
                diss[:stop].copy(), n, int(seed), int(s),
                coeffs[n][:stop, i].copy() if coeffs is not None else None)
            if blown[n][i] >= 0:
                rec.blowup_step = int(blown[n][i])
                rec.diagnostic = (f"blow-up at step {rec.blowup_step} (t={times[rec.blowup_step]:.6g}); "
                                  f"norms exceeded {OVERFLOW_GUARD:g}, reduce dt")
            per[n] = rec
            if errs is not None:
                per_err[n] = tuple(e[:stop, i].copy() for e in errs[n])
        records.append(per)
        errors.append(per_err)
    return records, errors, incs


def _flag_blowups(hist, blown, state, m):
    bad = ~np.all(np.isfinite(state), axis=-1) | (hist[:, m].max(axis=0) > OVERFLOW_GUARD) \
        | ~np.all(np.isfinite(hist[:, m]), axis=0)
    new = bad & (blown < 0)
    blown[new] = m
    # frozen at zero so the batch stays finite; the record is cut at the flag
    state[bad] = 0.0
    hist[:, m][:, bad] = 0.0


def simulate(u0, f, model: NoiseModel | None, cfg: IntegratorConfig, basis, n: int,
             seed: int = 0, stream: int = 0) -> TrajectoryRecord:
    """One path of the level-``n`` Galerkin system; ``basis`` may be a workspace."""
    ws = _workspace(basis, cfg)
    u0c = _as_coeffs(u0, ws.basis, "u0")
    fc = _as_coeffs(f, ws.basis, "f")
    recs, _, _ = run_paths(u0c, fc, model, cfg, ws, [n], seed, [stream])
    return recs[0][n]


def simulate_coupled(u0, f, model: NoiseModel | None, cfg: IntegratorConfig, basis,
                     levels: Sequence[int], n_ref: int, seed: int = 0,
                     stream: int = 0) -> MultilevelRun:
    """All ``levels`` plus ``n_ref`` advanced on one shared increment path."""
    return simulate_coupled_batch(u0, f, model, cfg, basis, levels, n_ref, seed, [stream])[0]


def simulate_coupled_batch(u0, f, model, cfg, basis, levels, n_ref, seed, streams,
                           track_errors: bool = True, project_noise: bool = False) -> list[MultilevelRun]:
    ws = _workspace(basis, cfg)
    levels = sorted(set(int(n) for n in levels))
    if not levels or levels[-1] > n_ref:
        raise ConfigurationError(f"levels {levels} must not exceed N_ref={n_ref}")
    if n_ref > ws.dim:
        raise ConfigurationError(f"N_ref={n_ref} exceeds basis dim {ws.dim}")
    all_levels = levels if levels[-1] == n_ref else levels + [n_ref]
    u0c = _as_coeffs(u0, ws.basis, "u0")
    fc = _as_coeffs(f, ws.basis, "f")
    recs, errs, incs = run_paths(u0c, fc, model, cfg, ws, all_levels, seed, streams, track_errors,
                                 project_noise)
    runs = []
    for per, per_err, inc in zip(recs, errs, incs):
        run = MultilevelRun(all_levels, n_ref, per, inc, eigenvalues=ws.eigenvalues[:n_ref].copy())
        for n, (h, v, a) in per_err.items():
            run.error_h[n], run.error_v[n], run.error_a[n] = h, v, a
        runs.append(run)
    return runs


def stopping_time(record: TrajectoryRecord, M: float):
    """First grid time with ``max_{s<=t} |u|_V^2 + nu int_0^t |Au|^2 >= M``, else ``None``."""
    functional = np.maximum.accumulate(record.v_sq) + record.dissipation
    hit = np.nonzero(functional >= M)[0]
    return float(record.times[hit[0]]) if hit.size else None


def error_trajectory(run: MultilevelRun, n: int):
    """``(|u^{N_ref} - u^n|_H^2, |u^{N_ref} - u^n|_V^2)`` at every recorded time."""
    if n not in run.records:
        raise ContractError(f"level {n} not in run levels {run.levels}")
    ref, rec = run.records[run.n_ref], run.records[n]
    if ref.coeffs is None or rec.coeffs is None:
        raise ContractError("coefficients were not recorded; rerun with record_coeffs=True")
    length = min(len(ref), len(rec))
    diff = ref.coeffs[:length].copy()
    diff[:, :n] -= rec.coeffs[:length]
    d2 = diff * diff
    return d2.sum(-1), (run.eigenvalues[: run.n_ref] * d2).sum(-1)


# --------------------------------------------------------------------------
# scalar test equation


def scalar_strong_errors(dts: Sequence[float], n_paths: int = 2000, T: float = 1.0,
                         u0: float = 1.0, drift: float = -1.0, vol: float = 1.0,
                         seed: int = 0, stream_base: int = 0):
    """Strong errors ``E|u_M - u(T)|`` of the semi-implicit scheme for ``du = a u dt + b u dW``.

    The drift is implicit and the noise explicit, as in the Galerkin stepper.
    Coarse increments are sums of the finest Brownian increments so every
    resolution sees the same path; the exact solution is
    ``u0 exp((a - b^2/2) T + b W_T)``.
    """
    dts = sorted(float(d) for d in dts)
    fine = dts[0]
    n_fine = round(T / fine)
    ratios = [round(d / fine) for d in dts]
    if any(abs(r * fine - d) > 1e-12 for r, d in zip(ratios, dts)) or abs(n_fine * fine - T) > 1e-12:
        raise ConfigurationError("step sizes must be nested divisors of T")
    dw = np.stack([sample_increments(1, n_fine, fine, seed, stream_base + i).increments[:, 0]
                   for i in range(n_paths)])
    exact = u0 * np.exp((drift - 0.5 * vol ** 2) * T + vol * dw.sum(axis=1))
    errors = []
    for d, r in zip(dts, ratios):
        coarse = dw.reshape(n_paths, -1, r).sum(axis=2)
        u = np.full(n_paths, u0)
        for k in range(coarse.shape[1]):
            u = (u + vol * u * coarse[:, k]) / (1.0 - drift * d)
        errors.append(float(np.mean(np.abs(u - exact))))
    return np.array(dts), np.array(errors)


def strong_order(dts, errors) -> float:
    """Least-squares slope of ``log error`` against ``log dt``."""
    return float(np.polyfit(np.log(dts), np.log(errors), 1)[0])
