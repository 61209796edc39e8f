"""Moment functionals, Monte Carlo estimation and the convergence studies."""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import BlowUpError, ConfigurationError, ContractError, NumericError
from .integrator import MultilevelRun, TrajectoryRecord, simulate_coupled_batch
from .noise import NoiseKind
from .scenario import Scenario

Z95 = 1.96
# paths are simulated in fixed chunks; results never depend on the worker count
CHUNK = 25
PILOT_PATHS = 100
PILOT_STREAM_OFFSET = 1 << 40


class FunctionalKind(str, enum.Enum):
    LOG = "Log"
    LOG_LOG = "LogLog"
    LOG_POW = "LogPow"
    POLY_H = "PolyH"
    EXP_H = "ExpH"
    EXP_H_ALPHA = "ExpHAlpha"


class NormSelector(str, enum.Enum):
    V_SQ_OF_U = "V_sq_of_u"
    V_SQ_OF_ERROR = "V_sq_of_error"
    H_OF_U = "H_of_u"
    H_OF_ERROR = "H_of_error"


@dataclass(frozen=True)
class MomentFunctional:
    """A nondecreasing function of a squared norm.

    ``ExpH`` and ``ExpHAlpha`` take the squared H norm ``x`` and evaluate
    ``exp(sqrt(x)/K)`` and ``exp(x^(1-alpha)/K)`` respectively.
    """

    kind: FunctionalKind
    eps: float = 0.25
    k: int = 1
    K_scale: float = 1.0
    alpha: float = 0.0
    norm_selector: NormSelector = NormSelector.V_SQ_OF_U

    def __post_init__(self):
        object.__setattr__(self, "kind", FunctionalKind(self.kind))
        object.__setattr__(self, "norm_selector", NormSelector(self.norm_selector))
        if self.kind is FunctionalKind.LOG_POW and not 0 < self.eps < 1:
            raise ConfigurationError(f"eps must lie in (0,1), got {self.eps}")
        if self.kind is FunctionalKind.POLY_H and (int(self.k) != self.k or self.k < 1):
            raise ConfigurationError(f"k must be a positive integer, got {self.k}")
        if self.kind in (FunctionalKind.EXP_H, FunctionalKind.EXP_H_ALPHA) and not self.K_scale > 0:
            raise ConfigurationError(f"K_scale must be positive, got {self.K_scale}")
        if self.kind is FunctionalKind.EXP_H_ALPHA and not 0 <= self.alpha < 1:
            raise ConfigurationError(f"alpha must lie in [0,1), got {self.alpha}")


def eval_functional(fn: MomentFunctional, x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ContractError("moment functionals are defined for nonnegative arguments only")
    kind = fn.kind
    if kind is FunctionalKind.LOG:
        out = np.log1p(x)
    elif kind is FunctionalKind.LOG_LOG:
        out = np.log1p(np.log1p(x))
    elif kind is FunctionalKind.LOG_POW:
        out = np.log1p(x) ** (1.0 - fn.eps)
    elif kind is FunctionalKind.POLY_H:
        out = x ** int(fn.k)
    elif kind is FunctionalKind.EXP_H:
        out = np.exp(np.sqrt(x) / fn.K_scale)
    else:
        out = np.exp(x ** (1.0 - fn.alpha) / fn.K_scale)
    return out if out.ndim else float(out)


def pathwise_sup(source, fn: MomentFunctional) -> float:
    """``fn`` of the largest selected squared norm (all functionals are nondecreasing).

    ``source`` is a :class:`TrajectoryRecord`, an ``(h_sq, v_sq)`` pair as
    returned by ``error_trajectory``, or a plain history array.
    """
    if isinstance(source, TrajectoryRecord):
        if fn.norm_selector in (NormSelector.V_SQ_OF_ERROR, NormSelector.H_OF_ERROR):
            raise ContractError("error selectors need an error trajectory, not a record")
        hist = source.v_sq if fn.norm_selector is NormSelector.V_SQ_OF_U else source.h_sq
    elif isinstance(source, tuple):
        h, v = source
        hist = v if fn.norm_selector in (NormSelector.V_SQ_OF_ERROR, NormSelector.V_SQ_OF_U) else h
    else:
        hist = source
    hist = np.asarray(hist, dtype=float)
    if hist.size == 0:
        raise ContractError("empty history")
    return eval_functional(fn, float(np.max(hist)))


# --------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class EnsembleStats:
    n_samples: int
    mean: float
    variance: float
    ci: float
    min: float
    max: float
    excluded: int = 0

    @classmethod
    def from_samples(cls, values, excluded: int = 0) -> "EnsembleStats":
        v = np.asarray(values, dtype=float)
        n = v.size
        if n == 0:
            return cls(0, math.nan, math.nan, math.nan, math.nan, math.nan, excluded)
        mean = float(np.mean(v))
        var = float(np.var(v, ddof=1)) if n > 1 else 0.0
        # sums of identical values can round a hair outside [min, max]
        mean = min(max(mean, float(v.min())), float(v.max()))
        return cls(n, mean, var, Z95 * math.sqrt(var / n), float(v.min()), float(v.max()), excluded)


@dataclass(frozen=True)
class ProbabilityStats:
    n_samples: int
    frequency: float
    lower: float
    upper: float
    excluded: int = 0

    @property
    def mean(self) -> float:
        return self.frequency

    @property
    def ci(self) -> float:
        return 0.5 * (self.upper - self.lower)

    @classmethod
    def from_indicators(cls, hits, excluded: int = 0) -> "ProbabilityStats":
        hits = np.asarray(hits, dtype=bool)
        lo, hi = wilson_interval(int(hits.sum()), hits.size)
        return cls(hits.size, float(hits.mean()) if hits.size else math.nan, lo, hi, excluded)


def wilson_interval(successes: int, n: int, z: float = Z95) -> tuple[float, float]:
    if n == 0:
        return math.nan, math.nan
    p = successes / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def mc_expectation(closure: Callable[[int, int], float], n_samples: int, seed: int = 0,
                   jobs: int = 1) -> EnsembleStats:
    """Average ``closure(seed, stream)`` over streams ``0..n_samples-1``.

    Samples raising :class:`BlowUpError` or returning a non-finite value are
    excluded and counted; reduction is always in stream order.
    """
    if n_samples < 30:
        raise ContractError(f"n_samples must be >= 30, got {n_samples}")

    def one(stream):
        try:
            value = float(closure(seed, stream))
        except BlowUpError:
            return None
        return value if math.isfinite(value) else None

    values = _ordered_map(one, range(n_samples), jobs)
    kept = [v for v in values if v is not None]
    return EnsembleStats.from_samples(kept, excluded=n_samples - len(kept))


def _ordered_map(fn, items, jobs):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def coupled_samples(scenario: Scenario, levels: Sequence[int], n_ref: int, n_samples: int,
                    reducer: Callable[[MultilevelRun], object], seed: int = 0, jobs: int = 1,
                    stream_offset: int = 0):
    """``reducer`` applied to one coupled run per stream, in stream order.

    Returns ``(values, excluded)`` where blown-up runs are dropped.
    """
    streams = list(range(stream_offset, stream_offset + n_samples))
    chunks = [streams[i:i + CHUNK] for i in range(0, len(streams), CHUNK)]
    scen = scenario.with_integrator(record_coeffs=False)

    def work(chunk):
        runs = simulate_coupled_batch(scen.u0, scen.f, scen.noise, scen.integrator,
                                      scen.workspace, levels, n_ref, seed, chunk,
                                      project_noise=scen.project_noise)
        return [None if r.blew_up else reducer(r) for r in runs]

    values = [v for part in _ordered_map(work, chunks, jobs) for v in part]
    kept = [v for v in values if v is not None]
    return kept, len(values) - len(kept)


# --------------------------------------------------------------------------
# studies


@dataclass
class StudyRow:
    study: str
    level: int
    stats: EnsembleStats | ProbabilityStats
    T: float
    param: str = ""


@dataclass
class StudyTable:
    study: str
    scenario_hash: str
    rows: list[StudyRow] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def means(self, param: str | None = None, T: float | None = None) -> dict[int, float]:
        return {r.level: r.stats.mean for r in self.rows
                if (param is None or r.param == param) and (T is None or r.T == T)}

    def row(self, level: int, param: str | None = None, T: float | None = None) -> StudyRow:
        for r in self.rows:
            if r.level == level and (param is None or r.param == param) and (T is None or r.T == T):
                return r
        raise KeyError((level, param, T))

    @property
    def excluded(self) -> int:
        return max((r.stats.excluded for r in self.rows), default=0)


class StudyFailure(NumericError):
    pass


def _require_no_blowups(excluded: int, study: str):
    if excluded:
        raise StudyFailure(
            f"{study}: {excluded} sample path(s) blew up; the continuous solution is global, "
            "so reduce dt (or the noise amplitude) and rerun", )


def _check_coupling(scenario: Scenario, levels, n_ref):
    levels = sorted(set(int(n) for n in levels))
    if not levels:
        raise ConfigurationError("at least one level is required")
    if levels[-1] > n_ref:
        raise ConfigurationError(f"levels {levels} exceed N_ref={n_ref}")
    if n_ref > scenario.basis.dim:
        raise ConfigurationError(f"N_ref={n_ref} exceeds basis dim {scenario.basis.dim}")
    if scenario.noise is not None and scenario.noise.K > levels[0] and not scenario.project_noise:
        raise ConfigurationError(
            f"noise K={scenario.noise.K} exceeds the smallest level {levels[0]}; coupling would break")
    return levels


def _all_levels(levels, n_ref):
    return levels if levels[-1] == n_ref else levels + [n_ref]


def study_v_convergence(scenario: Scenario, levels, n_ref: int, eps: float = 0.25,
                        n_samples: int = 200, seed: int = 0, jobs: int = 1) -> StudyTable:
    """``E sup_t (log(1 + |u^{N_ref} - u^n|_V^2))^(1-eps)`` per level."""
    fn = MomentFunctional(FunctionalKind.LOG_POW, eps=eps, norm_selector=NormSelector.V_SQ_OF_ERROR)
    levels = _all_levels(_check_coupling(scenario, levels, n_ref), n_ref)

    def reduce(run):
        return [pathwise_sup(run.error_v[n], fn) for n in levels]

    values, excluded = coupled_samples(scenario, levels, n_ref, n_samples, reduce, seed, jobs)
    _require_no_blowups(excluded, "study-v")
    arr = np.array(values)
    table = StudyTable("study-v", scenario.hash)
    for j, n in enumerate(levels):
        table.rows.append(StudyRow("study-v", n, EnsembleStats.from_samples(arr[:, j], excluded),
                                   scenario.integrator.T, f"eps={eps:g}"))
    return table


def study_log_boundedness(scenario: Scenario, n_list, T_list, n_samples: int = 200,
                          seed: int = 0, jobs: int = 1) -> StudyTable:
    """``E sup_{t<=T} log(1 + |u^n|_V^2)`` for every ``(n, T)``; one run up to ``max(T_list)``."""
    n_list = _check_coupling(scenario, n_list, max(n_list))
    T_list = sorted(float(t) for t in T_list)
    scen = scenario.with_integrator(T=T_list[-1])
    dt = scen.integrator.dt
    cut = [int(round(t / dt)) + 1 for t in T_list]
    fn = MomentFunctional(FunctionalKind.LOG)

    def reduce(run):
        return [[pathwise_sup(run.records[n].v_sq[:c], fn) for c in cut] for n in n_list]

    values, excluded = coupled_samples(scen, n_list, n_list[-1], n_samples, reduce, seed, jobs)
    _require_no_blowups(excluded, "study-bound")
    arr = np.array(values)
    table = StudyTable("study-bound", scenario.hash)
    for i, n in enumerate(n_list):
        for j, t in enumerate(T_list):
            table.rows.append(StudyRow("study-bound", n,
                                       EnsembleStats.from_samples(arr[:, i, j], excluded), t))
    return table


def initial_projection_errors(scenario: Scenario, levels, n_ref: int) -> dict[int, float]:
    """``|(P_{N_ref} - P_n) u0|_V^2`` per level."""
    lam = scenario.basis.eigenvalues
    c = scenario.u0
    return {n: float(np.sum(lam[n:n_ref] * c[n:n_ref] ** 2)) for n in levels}


def study_probability_tail(scenario: Scenario, levels, n_ref: int, delta: float | None = None,
                           n_samples: int = 200, seed: int = 0, jobs: int = 1) -> StudyTable:
    """Empirical ``P(sup_t |u^{N_ref} - u^n|_V^2 >= delta)`` with Wilson intervals.

    ``delta=None`` uses the median over the requested levels of the initial
    projection error.
    """
    levels = _check_coupling(scenario, levels, n_ref)
    if delta is None:
        delta = float(np.median(list(initial_projection_errors(scenario, levels, n_ref).values())))
    if not delta > 0:
        raise ConfigurationError(f"delta must be positive, got {delta}")
    all_levels = _all_levels(levels, n_ref)

    def reduce(run):
        return [float(np.max(run.error_v[n])) >= delta for n in all_levels]

    values, excluded = coupled_samples(scenario, all_levels, n_ref, n_samples, reduce, seed, jobs)
    _require_no_blowups(excluded, "study-prob")
    arr = np.array(values, dtype=bool)
    table = StudyTable("study-prob", scenario.hash, extra={"delta": delta})
    for j, n in enumerate(all_levels):
        table.rows.append(StudyRow("study-prob", n, ProbabilityStats.from_indicators(arr[:, j], excluded),
                                   scenario.integrator.T, f"delta={delta:.6g}"))
    return table


def pilot_K_scale(scenario: Scenario, n_ref: int, seed: int = 0, jobs: int = 1) -> float:
    """Four times the largest ``sup_t |u^{N_ref}|_H`` seen over a pilot ensemble."""
    values, _ = coupled_samples(
        scenario, [n_ref], n_ref, PILOT_PATHS,
        lambda run: float(np.sqrt(np.max(run.records[n_ref].h_sq))), seed, jobs,
        stream_offset=PILOT_STREAM_OFFSET)
    peak = max(values) if values else 0.0
    return 4.0 * peak if peak > 0 else 1.0


def study_h_moments(scenario: Scenario, levels, n_ref: int, k_list=(1, 2), n_samples: int = 200,
                    variant: str = "poly", K_scale: float | None = None, seed: int = 0,
                    jobs: int = 1) -> StudyTable:
    """H-norm error moments.

    ``poly``: ``E sup |u^{N_ref} - u^n|_H^{2k}`` per ``k``;
    ``exp_bounded``: ``E sup exp(|err|_H / K)`` (needs SaturatedDiagonal noise);
    ``exp_alpha``: ``E sup exp(|err|_H^{2(1-alpha)} / K)`` (needs AlphaGrowth noise).
    """
    levels = _all_levels(_check_coupling(scenario, levels, n_ref), n_ref)
    noise = scenario.noise
    if variant == "poly":
        fns = {f"k={k}": MomentFunctional(FunctionalKind.POLY_H, k=int(k),
                                           norm_selector=NormSelector.H_OF_ERROR) for k in k_list}
    elif variant in ("exp_bounded", "exp_alpha"):
        need = NoiseKind.SATURATED_DIAGONAL if variant == "exp_bounded" else NoiseKind.ALPHA_GROWTH
        if noise is None or noise.kind is not need:
            raise ConfigurationError(f"variant {variant} requires {need.value} noise")
        if K_scale is None:
            K_scale = pilot_K_scale(scenario, n_ref, seed, jobs)
        if variant == "exp_bounded":
            fns = {f"K={K_scale:.6g}": MomentFunctional(FunctionalKind.EXP_H, K_scale=K_scale,
                                                         norm_selector=NormSelector.H_OF_ERROR)}
        else:
            fns = {f"alpha={noise.alpha:g},K={K_scale:.6g}": MomentFunctional(
                FunctionalKind.EXP_H_ALPHA, K_scale=K_scale, alpha=noise.alpha,
                norm_selector=NormSelector.H_OF_ERROR)}
    else:
        raise ConfigurationError(f"unknown variant {variant!r}")
    names = list(fns)

    def reduce(run):
        return [[pathwise_sup((run.error_h[n], run.error_v[n]), fns[p]) for p in names]
                for n in levels]

    values, excluded = coupled_samples(scenario, levels, n_ref, n_samples, reduce, seed, jobs)
    _require_no_blowups(excluded, "study-h")
    arr = np.array(values)
    table = StudyTable("study-h", scenario.hash, extra={"variant": variant, "K_scale": K_scale})
    for i, n in enumerate(levels):
        for j, p in enumerate(names):
            table.rows.append(StudyRow("study-h", n, EnsembleStats.from_samples(arr[:, i, j], excluded),
                                       scenario.integrator.T, p))
    return table


def _trapezoid(y, dt):
    return float(dt * (np.sum(y) - 0.5 * (y[0] + y[-1]))) if len(y) > 1 else 0.0


def study_breckner(scenario: Scenario, levels, n_ref: int, n_samples: int = 200, seed: int = 0,
                   jobs: int = 1) -> StudyTable:
    """``E[|err(T)|_H^2 + int_0^T |err|_V^2 dt]`` (param ``H+intV``) and the stronger
    ``E[sup_t |err|_V^2 + int_0^T |A err|_H^2 dt]`` (param ``supV+intA``)."""
    levels = _all_levels(_check_coupling(scenario, levels, n_ref), n_ref)
    dt = scenario.integrator.dt

    def reduce(run):
        return [[run.error_h[n][-1] + _trapezoid(run.error_v[n], dt),
                 float(np.max(run.error_v[n])) + _trapezoid(run.error_a[n], dt)] for n in levels]

    values, excluded = coupled_samples(scenario, levels, n_ref, n_samples, reduce, seed, jobs)
    _require_no_blowups(excluded, "study-breckner")
    arr = np.array(values)
    table = StudyTable("study-breckner", scenario.hash)
    for i, n in enumerate(levels):
        for j, p in enumerate(("H+intV", "supV+intA")):
            table.rows.append(StudyRow("study-breckner", n,
                                       EnsembleStats.from_samples(arr[:, i, j], excluded),
                                       scenario.integrator.T, p))
    return table


def nref_sensitivity(base: StudyTable, doubled: StudyTable, levels=None) -> float:
    """Largest relative change of a study mean between two reference levels."""
    a, b = base.means(), doubled.means()
    common = [n for n in (levels or a) if n in b]
    return max(abs(b[n] - a[n]) / abs(a[n]) for n in common if a[n] != 0)
