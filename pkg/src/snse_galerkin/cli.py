"""Command-line front end: ``snse <subcommand> --config cfg.yaml --out DIR``.

Every subcommand writes only inside ``--out`` and leaves a ``manifest.json``
there; ``snse rerun --manifest DIR/manifest.json --out OTHER`` replays it.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import io as sio
from .config import ExperimentConfig, parse_config, scenario_from_config, validate_config
from .errors import ConfigurationError, ContractError, NumericError, SNSEError
from .integrator import scalar_strong_errors, simulate, strong_order
from .moments import (study_breckner, study_h_moments, study_log_boundedness,
                      study_probability_tail, study_v_convergence)
from .noise import NoiseKind, bdg_check, ito_isometry_check, verify_lipschitz
from .nonlinear import grad_pairing, ladyzhenskaya_ratio, skew_ratio
from .spectral import DomainKind, discrete_divergence

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
MANIFEST = "manifest.json"
MANIFEST_VERSION = 1

SKEW_TOL_TORUS = 1e-10
GRAD_TOL_TORUS = 1e-8
# trapezoid quadrature on the square only cancels to discretization accuracy
SKEW_TOL_SQUARE = 1e-2
ORTHO_TOL = {DomainKind.PERIODIC_TORUS: 1e-10, DomainKind.DIRICHLET_SQUARE: 1e-6}
ISOMETRY_TOL = 0.05
BDG2_BOUND = 4.2
STRONG_ORDER = (0.5, 0.15)

STUDIES = ("study-v", "study-h", "study-bound", "study-prob", "study-breckner")
SUBCOMMANDS = ("basis-info", "check", "simulate") + STUDIES


def _say(msg: str) -> None:
    print(msg, flush=True)


class Outputs:
    """Collects artifacts for one run; refuses paths outside the output directory."""

    def __init__(self, out_dir):
        self.root = Path(out_dir).resolve()
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        p = (self.root / name).resolve()
        if self.root not in p.parents:
            raise ContractError(f"refusing to write {name} outside {self.root}")
        return p

    def text(self, name: str, content: str) -> Path:
        p = self.path(name)
        p.write_text(content)
        self.files.append(name)
        return p

    def json(self, name: str, obj) -> Path:
        return self.text(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# subcommands; each returns (exit status, summary dict for the manifest)


def cmd_basis_info(cfg: ExperimentConfig, scen, out: Outputs, fmt: str, jobs: int):
    basis = scen.basis
    gram_dev = float(np.max(np.abs(basis.gram() - np.eye(basis.dim))))
    div = float(np.max(np.abs(discrete_divergence(basis.modes, basis.domain))))
    rows = []
    for i, lam in enumerate(basis.eigenvalues):
        row = {"index": i + 1, "eigenvalue": float(lam)}
        if basis.wavevectors is not None:
            row["k1"], row["k2"], row["parity"] = (int(x) for x in basis.wavevectors[i])
        rows.append(row)
    if fmt == "json":
        out.json("basis-info.json", {"gram_deviation": gram_dev, "divergence": div, "modes": rows})
    else:
        cols = list(rows[0])
        lines = [",".join(cols)] + [",".join(repr(r[c]) for c in cols) for r in rows]
        out.text("basis-info.csv", "\n".join(lines) + "\n")
    _say(f"basis {basis.domain.kind.value} dim={basis.dim} grid={basis.domain.grid_points}")
    _say(f"gram deviation {gram_dev:.3e}  max divergence {div:.3e}")
    for r in rows[: min(10, len(rows))]:
        _say(f"  {r['index']:4d}  {r['eigenvalue']:.10g}")
    ok = gram_dev <= ORTHO_TOL[basis.domain.kind]
    return (EXIT_OK if ok else EXIT_FAIL), {"gram_deviation": gram_dev, "divergence": div}


def _suite_line(name: str, ok: bool, detail: str, lines: list):
    lines.append({"suite": name, "pass": bool(ok), "detail": detail})
    _say(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


def _lipschitz_bounds(model) -> tuple[float, float]:
    """Analytic (sublinear, Lipschitz) constants of the diagonal families at j = 0."""
    s = model.sigma
    l2, top = float(np.sqrt(np.sum(s * s))), float(np.max(s))
    return {
        NoiseKind.ADDITIVE: (l2, 0.0),
        NoiseKind.DIAGONAL_LINEAR: (top, top),
        NoiseKind.SATURATED_DIAGONAL: (min(top, model.cap * l2), top),
        NoiseKind.ALPHA_GROWTH: (2.0 * l2, float("inf")),
    }[model.kind]


def cmd_check(cfg: ExperimentConfig, scen, out: Outputs, fmt: str, jobs: int):
    lines: list[dict] = []
    ws, basis = scen.workspace, scen.basis
    chk = cfg.check
    rng = np.random.default_rng([cfg.seed, 17])
    u = rng.standard_normal((chk.random_pairs, basis.dim))
    v = rng.standard_normal((chk.random_pairs, basis.dim))

    skew = float(np.max(skew_ratio(u, v, ws)))
    grad = float(np.max(ladyzhenskaya_ratio(u, ws)))
    torus = basis.domain.kind is DomainKind.PERIODIC_TORUS
    if torus:
        tol = SKEW_TOL_TORUS if ws.dealias else SKEW_TOL_SQUARE
        _suite_line("cancellation.skew", skew <= tol, f"max ratio {skew:.3e} <= {tol:g}", lines)
        if ws.dealias:
            _suite_line("cancellation.grad", grad <= GRAD_TOL_TORUS,
                        f"max ratio {grad:.3e} <= {GRAD_TOL_TORUS:g}", lines)
    else:
        _suite_line("cancellation.skew", skew <= SKEW_TOL_SQUARE,
                    f"max ratio {skew:.3e} <= {SKEW_TOL_SQUARE:g}", lines)
        gp = np.abs(grad_pairing(u, ws))
        _suite_line("cancellation.grad", bool(np.all(np.isfinite(gp))),
                    f"no-slip walls: <B(u,u),Au> nonzero, max ratio {grad:.3e} (reported)", lines)

    model = scen.noise
    if model is None:
        _suite_line("noise", True, "no noise configured; isometry/BDG/Lipschitz skipped", lines)
    else:
        x0 = scen.u0 if np.any(scen.u0) else np.eye(basis.dim)[0]
        iso = ito_isometry_check(model, x0, chk.n_paths, chk.steps, chk.dt, cfg.seed)
        _suite_line("ito-isometry", iso.rel_error <= ISOMETRY_TOL,
                    f"lhs {iso.lhs:.6g} rhs {iso.rhs:.6g} rel {iso.rel_error:.3%}", lines)
        bdg = bdg_check(2, chk.n_paths, chk.steps, chk.dt, model, basis, x0, cfg.seed)
        ok = bdg.ratio is None or bdg.ratio <= BDG2_BOUND
        ratio = "n/a" if bdg.ratio is None else f"{bdg.ratio:.4f}"
        _suite_line("bdg.p2", ok, f"ratio {ratio} <= {BDG2_BOUND}", lines)
        rep = verify_lipschitz(model, basis, 0, chk.lipschitz_samples, seed=cfg.seed)
        sub_b, lip_b = _lipschitz_bounds(model)
        slack = 1 + 1e-9
        ok = rep.sublinear <= sub_b * slack and (not rep.globally_valid or rep.lipschitz <= lip_b * slack)
        _suite_line("lipschitz", ok, f"sublinear {rep.sublinear:.4g} (<= {sub_b:.4g}), "
                    f"lipschitz {rep.lipschitz:.4g} ({'global' if rep.globally_valid else 'local'})",
                    lines)

    dts = [2.0 ** -k for k in range(6, 11)]
    dts, errs = scalar_strong_errors(dts, n_paths=2000, seed=cfg.seed)
    slope = strong_order(dts, errs)
    lo, hi = STRONG_ORDER[0] - STRONG_ORDER[1], STRONG_ORDER[0] + STRONG_ORDER[1]
    _suite_line("strong-order", lo <= slope <= hi, f"slope {slope:.3f} in [{lo:g}, {hi:g}]", lines)

    if fmt == "json":
        out.json("check.json", lines)
    else:
        text = "suite,pass,detail\n" + "".join(
            f"{r['suite']},{int(r['pass'])},\"{r['detail']}\"\n" for r in lines)
        out.text("check.csv", text)
    ok = all(r["pass"] for r in lines)
    return (EXIT_OK if ok else EXIT_FAIL), {"passed": sum(r["pass"] for r in lines), "total": len(lines)}


def cmd_simulate(cfg: ExperimentConfig, scen, out: Outputs, fmt: str, jobs: int):
    level = cfg.levels()[-1]
    rec = simulate(scen.u0, scen.f, scen.noise, scen.integrator, scen.workspace, level,
                   seed=cfg.seed, stream=0)
    if fmt == "json":
        out.json("simulate.json", {c: (getattr(rec, c if c != "time" else "times").tolist()
                                       if c not in ("level", "seed", "stream") else getattr(rec, c))
                                   for c in sio.TRAJECTORY_COLUMNS})
    else:
        out.text("simulate.csv", sio.trajectory_csv(rec))
    if rec.coeffs is not None:
        p = out.path("simulate.coeffs.npy")
        np.save(p, rec.coeffs)
        out.files.append(p.name)
    _say(f"level {level}: {len(rec)} records, final |u|_H^2 = {rec.h_sq[-1]:.6g}")
    if rec.blew_up:
        raise NumericError(f"path blew up at step {rec.blowup_step}: {rec.diagnostic}")
    return EXIT_OK, {"level": level, "records": len(rec)}


def _run_study(name: str, cfg: ExperimentConfig, scen, jobs: int):
    st = cfg.study
    levels, n_ref, seed, n = cfg.levels(), cfg.n_ref, cfg.seed, st.n_samples
    if name == "study-v":
        return study_v_convergence(scen, levels, n_ref, st.eps, n, seed, jobs)
    if name == "study-h":
        return study_h_moments(scen, levels, n_ref, st.k, n, st.variant, st.K_scale, seed, jobs)
    if name == "study-bound":
        return study_log_boundedness(scen, levels, st.T_list or [cfg.integrator.T], n, seed, jobs)
    if name == "study-prob":
        return study_probability_tail(scen, levels, n_ref, st.delta, n, seed, jobs)
    return study_breckner(scen, levels, n_ref, n, seed, jobs)


def cmd_study(name: str):
    def run(cfg: ExperimentConfig, scen, out: Outputs, fmt: str, jobs: int):
        table = _run_study(name, cfg, scen, jobs)
        if fmt == "json":
            out.text(f"{name}.json", sio.study_json(table))
        else:
            out.text(f"{name}.csv", sio.study_csv(table))
        for r in table.rows:
            _say(f"{name} n={r.level:3d} T={r.T:g} {r.param:>12s} "
                 f"mean={r.stats.mean:.6g} ci={r.stats.ci:.3g}")
        return EXIT_OK, {"rows": len(table.rows), "extra": table.extra}
    return run


COMMANDS = {"basis-info": cmd_basis_info, "check": cmd_check, "simulate": cmd_simulate,
            **{s: cmd_study(s) for s in STUDIES}}


# --------------------------------------------------------------------------
# orchestration


def execute(subcommand: str, cfg: ExperimentConfig, out_dir, fmt: str = "csv",
            jobs: int | None = None) -> int:
    """Run one subcommand and write its outputs plus the manifest."""
    if subcommand not in COMMANDS:
        raise ConfigurationError(f"unknown subcommand {subcommand!r}")
    jobs = max(1, jobs or os.cpu_count() or 1)
    out = Outputs(out_dir)
    scen = scenario_from_config(cfg)
    status, summary = COMMANDS[subcommand](cfg, scen, out, fmt, jobs)
    # no timestamps and no worker count, so reruns reproduce the manifest too
    manifest = {
        "manifest_version": MANIFEST_VERSION, "subcommand": subcommand, "format": fmt,
        "seed": cfg.seed, "config": cfg.to_dict(), "basis_hash": scen.basis.content_hash(),
        "scenario_hash": scen.hash, "outputs": sorted(out.files), "summary": summary,
    }
    out.json(MANIFEST, json.loads(json.dumps(manifest, default=float)))
    return status


def load_manifest(path) -> tuple[str, ExperimentConfig, str]:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"manifest not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not valid JSON: {exc}") from None
    for key in ("subcommand", "config", "format"):
        if key not in data:
            raise ConfigurationError(f"{path}: manifest lacks {key!r}")
    return data["subcommand"], validate_config(data["config"]), data["format"]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML or JSON experiment config")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--jobs", type=int, default=None, help="worker threads (default: all cores)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    parser = argparse.ArgumentParser(prog="snse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    rr = sub.add_parser("rerun", parents=[common], help="replay a manifest")
    rr.add_argument("--manifest", type=Path, required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.subcommand == "rerun":
            subcommand, cfg, fmt = load_manifest(args.manifest)
        else:
            if args.config is None:
                raise ConfigurationError("--config is required")
            subcommand, cfg, fmt = args.subcommand, parse_config(args.config), args.format
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigurationError("--seed must be an unsigned 64-bit integer")
            cfg = cfg.model_copy(update={"seed": args.seed})
        return execute(subcommand, cfg, args.out, fmt, args.jobs)
    except (ConfigurationError, ContractError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SNSEError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
