"""Command line front end: ``ridgesolve <command> --config <path> [--key value ...]``.

Exit codes: 0 success, 1 failed verification or runtime error, 2 invalid
configuration, 3 solver divergence.  Every emitted file carries the hash of
the effective configuration, either in its JSON header or in a
``<name>.json`` sidecar.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__

COMMANDS = ("solve", "nterm", "localize", "sparsity", "frame-info", "verify")
SUITES = ("geometry", "windows", "frame", "operator", "solver", "reference", "calculus", "all")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "grid_size": {"type": "integer", "minimum": 4},
        "max_scale": {"type": "integer", "minimum": 0},
        "period": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "alpha_exponent": _pos,
        "variant": {"enum": ["shear", "rotational"]},
        "problem": {"enum": ["gaussian", "box_gaussian", "file"]},
        "source_file": {"type": ["string", "null"]},
        "direction": {"type": ["array", "null"], "items": _num, "minItems": 2, "maxItems": 2},
        "gamma": _pos,
        "eps": _pos,
        "theta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1.0 / 3.0},
        "inner_steps": {"type": ["integer", "null"], "minimum": 1},
        "projection": {"type": "boolean"},
        "probe_dim": {"type": "integer", "minimum": 16},
        "max_outer_iterations": {"type": "integer", "minimum": 1},
        "Ns": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2},
        "nterm_solver": {"type": "boolean"},
        "top_N": {"type": "integer", "minimum": 1},
        "near_cells": _pos,
        "near_min_scale": {"type": "integer", "minimum": 0},
        "p": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "suite": {"enum": list(SUITES)},
        "output_dir": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "timings": {"type": "boolean"},
    },
}

DEFAULTS = {
    "grid_size": 256,
    "max_scale": 5,
    "period": None,
    "alpha_exponent": 1.1,
    "variant": "shear",
    "problem": "gaussian",
    "source_file": None,
    "direction": None,
    "gamma": 8.0,
    "eps": 1e-4,
    "theta": 0.3,
    "inner_steps": None,
    "projection": True,
    "probe_dim": 40,
    "max_outer_iterations": 200,
    "Ns": [100, 200, 500, 1000, 2000, 5000, 10000],
    "nterm_solver": False,
    "top_N": 10000,
    "near_cells": 3.0,
    "near_min_scale": 7,
    "p": 0.8,
    "suite": "all",
    "output_dir": "ridgesolve-out",
    "seed": 0,
    "timings": False,
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path=None, overrides=None):
    """Defaults, then the JSON file, then flag overrides; validated against the schema."""
    cfg = dict(DEFAULTS)
    if path is not None:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        _validate(doc)
        cfg.update(doc)
    if overrides:
        _validate(overrides)
        cfg.update(overrides)
    _validate(cfg)
    return cfg


def _validate(doc):
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as e:
        where = "/".join(map(str, e.absolute_path)) or "<root>"
        raise ConfigError(f"config error at {where}: {e.message}") from None


def config_hash(cfg):
    """Hash of the effective configuration; the output location is not part of a run."""
    doc = {k: v for k, v in cfg.items() if k != "output_dir"}
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def build_spec(cfg):
    from .frame import FrameSpec

    try:
        return FrameSpec(cfg["grid_size"], cfg["max_scale"], cfg["period"], cfg["alpha_exponent"], cfg["variant"])
    except ValueError as e:
        raise ConfigError(str(e)) from None


def build_problem(cfg, spec):
    """(TransportProblem, GalleryProblem or None)."""
    from .operator import TransportProblem
    from .reference import gallery

    if cfg["problem"] == "file":
        if not cfg["source_file"]:
            raise ConfigError("problem 'file' needs source_file")
        f = read_grid(cfg["source_file"], spec.grid_size)
        s = cfg["direction"] or [1.0, 0.0]
        try:
            return TransportProblem(tuple(_unit(s)), cfg["gamma"], f=f, name="file"), None
        except ValueError as e:
            raise ConfigError(str(e)) from None
    g = gallery(cfg["problem"], spec, gamma=cfg["gamma"])
    if cfg["direction"] is not None:
        from dataclasses import replace

        g = replace(g, problem=replace(g.problem, s=tuple(_unit(cfg["direction"]))))
    return g.problem, g


def _unit(v):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if not n > 0:
        raise ConfigError("direction must be nonzero")
    return v / n


# ---------------------------------------------------------------------------
# files


def write_grid(path, u, spec, chash, extra=None):
    """Raw little-endian float64, row-major, plus a JSON sidecar."""
    u = np.asarray(u)
    if np.iscomplexobj(u):
        u = u.real
    path = Path(path)
    np.ascontiguousarray(u, dtype="<f8").tofile(path)
    side = {
        "file": path.name,
        "dtype": "float64",
        "byte_order": "little",
        "order": "row-major",
        "shape": list(u.shape),
        "domain": [[0.0, spec.period], [0.0, spec.period]],
        "config_hash": chash,
    }
    if extra:
        side.update(extra)
    write_json(path.with_name(path.name + ".json"), side)


def read_grid(path, N):
    try:
        a = np.fromfile(path, dtype="<f8")
    except OSError as e:
        raise ConfigError(f"cannot read grid {path}: {e}") from None
    if a.size != N * N:
        raise ConfigError(f"grid file {path} holds {a.size} values, expected {N * N}")
    return a.reshape(N, N)


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(path, header, rows, chash):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(x) for x in r])
    write_json(path.with_name(path.name + ".json"), {"file": path.name, "columns": list(header), "config_hash": chash})


def _cell(x):
    if isinstance(x, (bool, np.bool_)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.bool_, bool)):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, (float, np.floating)):
        x = float(o)
        return x if math.isfinite(x) else str(x)
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    return o


def _outdir(cfg):
    d = Path(cfg["output_dir"])
    d.mkdir(parents=True, exist_ok=True)
    return d


# ---------------------------------------------------------------------------
# commands


def cmd_solve(cfg):
    from .frame import l2_norm, write_coefficients
    from .operator import OperatorMatrix, coefficient_image
    from .reference import fourier_direct_solve
    from .solver import IterationLog, SolverConfig, SolverDivergence, estimate_spectrum, reconstruct_solution, solve

    spec = build_spec(cfg)
    problem, _ = build_problem(cfg, spec)
    out = _outdir(cfg)
    chash = config_hash(cfg)
    F = OperatorMatrix(spec, problem, "F")
    P = OperatorMatrix(spec, problem, "P")
    alpha, rho, norm_P, info = estimate_spectrum(F, P, cfg["probe_dim"], cfg["seed"])
    try:
        scfg = SolverConfig(
            eps=cfg["eps"],
            theta=cfg["theta"],
            inner_steps=cfg["inner_steps"],
            alpha=alpha,
            rho=rho,
            norm_P=norm_P,
            lambda_min=info["lambda_min"],
            projection=cfg["projection"],
            max_outer_iterations=cfg["max_outer_iterations"],
        )
    except ValueError as e:
        raise ConfigError(str(e)) from None
    oracle = fourier_direct_solve(problem, spec) if problem.constant else None
    ref = coefficient_image(spec, problem, oracle) if oracle is not None else None
    status, code = "converged", 0
    try:
        u, log = solve(problem, spec, scfg, F, P, reference=ref)
    except SolverDivergence as e:
        status, code = "diverged", 3
        log, u = e.log, None
    if not cfg["timings"]:
        log.seconds = [float("nan")] * len(log)
    log_rows = log.rows()
    write_csv(out / "log.csv", ["iteration", "eps_i", "support", "residual", "seconds", "projected", "error"], log_rows, chash)
    summary = {
        "command": "solve",
        "config_hash": chash,
        "status": status,
        "spectrum": {"alpha": alpha, "rho": rho, "norm_P": norm_P, **info},
        "inner_steps": scfg.inner_steps,
        "ratio": scfg.ratio,
        "outer_iterations": len(log),
        "projection": scfg.projection,
        "version": __version__,
    }
    errs = [e for e in log.error if np.isfinite(e)]
    if errs:
        # contraction of the coefficient error over the last three outer steps
        tail = errs[-4:]
        summary["non_contraction"] = bool(len(tail) > 1 and tail[-1] > 0.5 * tail[0])
        summary["best_coefficient_error"] = min(errs)
    if u is not None:
        grid = reconstruct_solution(spec, problem, u)
        write_grid(out / "solution.f64", grid, spec, chash)
        write_coefficients(out / "coefficients.txt", spec, u, problem.s, extra={"config_hash": chash})
        summary["support"] = u.nnz
        if oracle is not None:
            err = l2_norm(spec, grid - oracle)
            summary["error"] = err
            summary["within_eps"] = bool(err <= cfg["eps"])
            summary.setdefault("non_contraction", not summary["within_eps"])
    write_json(out / "summary.json", summary)
    return code


def cmd_nterm(cfg):
    from .operator import OperatorMatrix
    from .reference import fourier_direct_solve, fourier_nterm_curve, nterm_curve

    spec = build_spec(cfg)
    problem, _ = build_problem(cfg, spec)
    if not problem.constant:
        raise ConfigError("nterm needs constant absorption for the oracle solution")
    out = _outdir(cfg)
    chash = config_hash(cfg)
    target = fourier_direct_solve(problem, spec)
    rc = nterm_curve(spec, target, cfg["Ns"], problem)
    fc = fourier_nterm_curve(target, cfg["Ns"])
    cols = ["N", "ridgelet_error", "fourier_error"]
    data = [rc.N, rc.error, fc.error]
    summary = {"command": "nterm", "config_hash": chash, "notice": rc.notice, "metric": rc.metric}
    if cfg["nterm_solver"]:
        from .solver import SolverConfig, estimate_spectrum, reconstruct_solution, solve

        F = OperatorMatrix(spec, problem, "F")
        P = OperatorMatrix(spec, problem, "P")
        alpha, rho, nP, info = estimate_spectrum(F, P, cfg["probe_dim"], cfg["seed"])
        scfg = SolverConfig(
            eps=cfg["eps"], theta=cfg["theta"], alpha=alpha, rho=rho, norm_P=nP, lambda_min=info["lambda_min"]
        )
        u, _ = solve(problem, spec, scfg, F, P)
        sc = nterm_curve(spec, reconstruct_solution(spec, problem, u), cfg["Ns"], problem)
        cols.append("solver_error")
        data.append(sc.error)
        summary["solver_exponent"] = _safe_exponent(sc)
    summary["ridgelet_exponent"] = _safe_exponent(rc)
    summary["fourier_exponent"] = _safe_exponent(fc)
    write_csv(out / "nterm.csv", cols, zip(*data), chash)
    write_json(out / "nterm.json", summary)
    if rc.notice:
        print(f"notice: {rc.notice}", file=sys.stderr)
    return 0


def _safe_exponent(curve):
    try:
        return curve.fit_exponent()
    except ValueError:
        return None


def cmd_localize(cfg):
    from .frame import analyze_dense
    from .reference import fourier_direct_solve, localization_report, near_fraction

    spec = build_spec(cfg)
    problem, g = build_problem(cfg, spec)
    if g is None or not g.lines:
        raise ConfigError("localize needs a gallery problem with singular lines (box_gaussian)")
    out = _outdir(cfg)
    chash = config_hash(cfg)
    c = analyze_dense(spec, fourier_direct_solve(problem, spec))
    rep = localization_report(spec, c, cfg["top_N"], g.lines, cfg["near_cells"])
    cols = ["j", "count", "median_distance", "near", "reference_count"]
    write_csv(out / "localize.csv", cols, ([r[k] if r[k] is not None else "" for k in cols] for r in rep), chash)
    frac = near_fraction(rep, cfg["near_min_scale"])
    write_json(
        out / "localize.json",
        {"command": "localize", "config_hash": chash, "near_fraction": frac, "min_scale": cfg["near_min_scale"]},
    )
    return 0


def cmd_sparsity(cfg):
    from .operator import OperatorMatrix

    spec = build_spec(cfg)
    problem, _ = build_problem(cfg, spec)
    if not problem.constant:
        raise ConfigError("sparsity needs constant absorption")
    out = _outdir(cfg)
    chash = config_hash(cfg)
    F = OperatorMatrix(spec, problem, "F")
    rows = [(j, F.p_sparsity(cfg["p"], max_scale=j)) for j in range(spec.max_scale + 1)]
    write_csv(out / "sparsity.csv", ["max_scale", "p_sparsity"], rows, chash)
    write_json(out / "sparsity.json", {"command": "sparsity", "config_hash": chash, "p": cfg["p"], "norm_bound": F.norm_bound()})
    return 0


def cmd_frame_info(cfg):
    from .frame import frame_layout, partition_of_unity_error

    spec = build_spec(cfg)
    out = _outdir(cfg)
    chash = config_hash(cfg)
    lay = frame_layout(spec)
    per = np.bincount(lay.scale_of, minlength=spec.max_scale + 1)
    ntiles = np.bincount([td.tile.j for td in lay.tiles], minlength=spec.max_scale + 1)
    info = {
        "command": "frame-info",
        "config_hash": chash,
        "spec": spec.as_dict(),
        "tiles": len(lay.tiles),
        "coefficients": lay.total,
        "redundancy": lay.total / spec.grid_size**2,
        "per_scale": [{"j": j, "tiles": int(ntiles[j]), "coefficients": int(per[j])} for j in range(len(per))],
        "partition_of_unity_error": partition_of_unity_error(spec),
    }
    write_json(out / "frame_info.json", info)
    print(json.dumps(_jsonable({k: info[k] for k in ("tiles", "coefficients", "redundancy")})))
    return 0


# ---------------------------------------------------------------------------
# verify


def _check(fn):
    try:
        ok, detail = fn()
    except Exception as e:  # a crashing check is a failing check
        return False, f"{type(e).__name__}: {e}"
    return bool(ok), detail


def _geometry_checks(cfg):
    from . import geometry as G

    rng = np.random.default_rng(cfg["seed"])

    def metric():
        a = rng.standard_normal((2000, 3))
        b = rng.standard_normal((2000, 3))
        a /= np.linalg.norm(a, axis=1)[:, None]
        b /= np.linalg.norm(b, axis=1)[:, None]
        e = np.linalg.norm(a - b, axis=1)
        d = G.geodesic_distance(a, b)
        return bool(np.all(e <= d + 1e-12) and np.all(d <= np.pi / 2 * e + 1e-12)), ""

    def covering():
        worst = 0.0
        for d, alpha in ((2, np.pi / 2), (2, 2.0**-4), (3, 0.5)):
            cov = G.build_covering(d, alpha)
            x = rng.standard_normal((20000, d))
            x /= np.linalg.norm(x, axis=1)[:, None]
            gap = G.geodesic_distance(x[:, None, :], cov.array()[None]).min(1).max()
            sep = G.geodesic_distance(cov.array()[:, None, :], cov.array()[None])
            np.fill_diagonal(sep, np.inf)
            if not (gap < alpha and sep.min() >= 2 * alpha / 3):
                return False, f"d={d} alpha={alpha}"
            worst = max(worst, gap / alpha)
        return True, f"max gap/alpha {worst:.3f}"

    def intersections():
        cov = G.build_covering(2, 2.0**-3)
        for q in (1.0, 2.0, 3.0):
            cap = G.Cap((1.0, 0.0), q * 2.0**-3)
            if G.count_cap_intersections(cov, cap) > G.intersection_count_bound(cov, cap):
                return False, f"q={q}"
        return True, ""

    def cone_bound():
        vals = [G.cone_angle_with_margin(j, 0) / 2.0**-j for j in range(1, 16)]
        return max(vals) <= G.C_OMEGA + 1e-12, f"max ratio {max(vals):.4f}"

    def inverse_estimate():
        worst = 0.0
        for _ in range(200):
            j = int(rng.integers(0, 10))
            s = rng.standard_normal(2)
            s /= np.linalg.norm(s)
            U = G.u_matrix(j, s)
            worst = max(worst, np.linalg.norm(np.linalg.inv(U), 2) / 2.0**j)
        return worst <= 1.0 + 1e-12, f"max ||U^-1|| 2^-j {worst:.6f}"

    return [
        ("geometry: geodesic metric equivalence", metric),
        ("geometry: covering and 1/3-disjointness (Monte Carlo)", covering),
        ("geometry: cap intersection count bound", intersections),
        ("geometry: cone angle radius bound", cone_bound),
        ("geometry: inverse estimate for U", inverse_estimate),
    ]


def _windows_checks(cfg):
    from .windows import TransitionProfile, WindowFamily, radial_window, transition

    prof = TransitionProfile(cfg["alpha_exponent"])

    def tsym():
        x = np.linspace(0, 1, 1001)
        return float(np.max(np.abs(transition(prof, x) + transition(prof, 1 - x) - 1))) < 1e-14, ""

    def radial():
        x = np.linspace(2, 4, 1001)
        e = np.max(np.abs(radial_window(prof, x) ** 2 + radial_window(prof, x / 2) ** 2 - 1))
        return e < 1e-14, f"{e:.2e}"

    def pou():
        fam = WindowFamily(prof, 5)
        rng = np.random.default_rng(cfg["seed"])
        xi = rng.uniform(-40, 40, (3000, 2))
        tot = sum(fam.psi_hat(t, xi) ** 2 for t in fam.tiles())
        e = float(np.max(np.abs(tot - 1)))
        return e < 1e-10, f"{e:.2e}"

    return [
        ("windows: transition symmetry", tsym),
        ("windows: radial telescoping", radial),
        ("windows: partition of unity at random frequencies", pou),
    ]


def _frame_checks(cfg):
    from .frame import analyze_dense, l2_norm, partition_of_unity_error, synthesize

    spec = build_spec(cfg)

    def parseval():
        rng = np.random.default_rng(cfg["seed"])
        worst = 0.0
        for _ in range(3):
            f = rng.standard_normal((spec.grid_size,) * 2)
            c = analyze_dense(spec, f)
            n2 = l2_norm(spec, f) ** 2
            worst = max(worst, abs(np.vdot(c, c).real - n2) / n2, l2_norm(spec, synthesize(spec, c, real=True) - f) / math.sqrt(n2))
        return worst <= 1e-10, f"N={spec.grid_size} J={spec.max_scale} worst {worst:.2e}"

    def pou():
        e = partition_of_unity_error(spec)
        return e <= 1e-10, f"{e:.2e}"

    return [("frame: Parseval and roundtrip", parseval), ("frame: partition of unity on the grid", pou)]


def _small_problem():
    from .frame import FrameSpec
    from .operator import TransportProblem

    return FrameSpec(32, 2), TransportProblem((0.6, 0.8), 8.0)


def _operator_checks(cfg):
    from .operator import OperatorMatrix, zero_pattern

    spec, pr = _small_problem()

    def pattern():
        from .frame import FrameSpec

        small = FrameSpec(16, 3)
        pred, nz = zero_pattern(small, OperatorMatrix(small, pr, "F"))
        miss = int(np.sum(nz & ~pred))
        return miss == 0, f"predicted {int(pred.sum())}, nonzero {int(nz.sum())}"

    def projector():
        P = OperatorMatrix(spec, pr, "P")
        rng = np.random.default_rng(cfg["seed"])
        from .operator import coefficient_image

        v = coefficient_image(spec, pr, rng.standard_normal((spec.grid_size,) * 2))
        e = np.linalg.norm(P.matvec(v) - v) / np.linalg.norm(v)
        return e < 1e-9, f"{e:.2e}"

    def apply_bound():
        F = OperatorMatrix(spec, pr, "F")
        rng = np.random.default_rng(cfg["seed"])
        c = rng.standard_normal(F.size) * np.exp(-rng.uniform(0, 10, F.size))
        from .frame import CoeffVector

        worst = 0.0
        for eps in (1e-1, 1e-3, 1e-6):
            y = F.apply(CoeffVector.from_dense(c), eps, method="templates").dense()
            worst = max(worst, np.linalg.norm(y - F.matvec(c)) / eps)
        return worst <= 1.0, f"max error/eps {worst:.3f}"

    return [
        ("operator: zero pattern inside the geometry predicate (J=3 dense scan)", pattern),
        ("operator: P reproduces the range of W G", projector),
        ("operator: APPLY error within eps", apply_bound),
    ]


def _solver_checks(cfg):
    from .frame import l2_norm
    from .operator import OperatorMatrix
    from .reference import fourier_direct_solve
    from .solver import SolverConfig, estimate_spectrum, reconstruct_solution, solve

    spec, pr = _small_problem()

    def spectrum():
        F = OperatorMatrix(spec, pr, "F")
        _, _, _, info = estimate_spectrum(F, OperatorMatrix(spec, pr, "P"), 40, cfg["seed"])
        lam = F.symbol_spectrum()
        lam = lam[lam > 1e-12 * lam.max()]
        e = max(abs(info["lambda_min"] / lam.min() - 1), abs(info["lambda_max"] / lam.max() - 1))
        return e < 1e-3, f"relative error {e:.1e}"

    def solves():
        from dataclasses import replace

        from .reference import gallery

        g = gallery("gaussian", spec)
        prob = replace(g.problem, s=pr.s)
        F = OperatorMatrix(spec, prob, "F")
        P = OperatorMatrix(spec, prob, "P")
        scfg = SolverConfig.from_operators(F, P, 1e-5)
        u, _ = solve(prob, spec, scfg, F, P)
        err = l2_norm(spec, reconstruct_solution(spec, prob, u) - fourier_direct_solve(prob, spec))
        return err <= 1e-5, f"error {err:.2e}"

    return [("solver: spectrum estimate vs exact symbol", spectrum), ("solver: gaussian solve within eps", solves)]


def _reference_checks(cfg):
    from .frame import FrameSpec
    from .reference import characteristic_solve, fourier_direct_solve, gallery, grid_points

    def cross():
        spec = FrameSpec(128, 4)
        g = gallery("gaussian", spec)
        u = fourier_direct_solve(g.problem, spec)
        x = grid_points(spec)[::16, ::16]
        v = characteristic_solve(g.problem, x, g.source_physical)
        e = float(np.max(np.abs(v - u[::16, ::16])) / np.max(np.abs(u)))
        return e <= 1e-6, f"{e:.2e}"

    return [("reference: characteristic vs Fourier oracle", cross)]


def _calculus_checks(cfg):
    from . import calculus as C

    rng = np.random.default_rng(cfg["seed"])

    def c1():
        bad = 0
        for _ in range(50):
            d = int(rng.integers(1, 4))
            n = int(rng.integers(0, 4))
            f, g = C.MultiPoly.random(d, 3, rng), C.MultiPoly.random(d, 3, rng)
            bad += C.iterated_laplacian_product(f, g, n) != C.direct_laplacian_product(f, g, n)
        return bad == 0, f"{bad} mismatches"

    def trinomial():
        ok = all(a == b for a, b in (C.trinomial_factorial_identity(n) for n in range(9)))
        return ok and C.trinomial_pascal_holds(8), ""

    def cor():
        worst = 0.0
        for _ in range(10):
            f, g = C.MultiPoly.random(2, 3, rng), C.MultiPoly.random(2, 3, rng)
            ok, w = C.laplacian_product_bound_check(f, g, 2, rng.uniform(-1, 1, (20, 2)))
            if not ok:
                return False, f"ratio {w}"
            worst = max(worst, w)
        return True, f"worst ratio {worst:.3f}"

    def conv_bound():
        N = 256
        f, g = C.bump(N, (0.5, 0.5), 0.4), C.bump(N, (0.3, 0.6), 0.25)
        for U in (np.eye(2), C.shear_matrix(3, 2)):
            for a in ((0, 0), (1, 0), (0, 1), (1, 1), (2, 2)):
                ok, w, _ = C.conv_derivative_bound_check(f, g, U, a, samples=500, seed=cfg["seed"])
                if not ok:
                    return False, f"alpha={a} ratio {w}"
        return True, ""

    return [
        ("calculus: Laplacian product rule (exact)", c1),
        ("calculus: trinomial identities (exact)", trinomial),
        ("calculus: Laplacian product bound", cor),
        ("calculus: convolution derivative bound", conv_bound),
    ]


_SUITE_BUILDERS = {
    "geometry": _geometry_checks,
    "windows": _windows_checks,
    "frame": _frame_checks,
    "operator": _operator_checks,
    "solver": _solver_checks,
    "reference": _reference_checks,
    "calculus": _calculus_checks,
}


def cmd_verify(cfg, stream=None):
    stream = stream or sys.stdout
    names = list(_SUITE_BUILDERS) if cfg["suite"] == "all" else [cfg["suite"]]
    checks = [c for n in names for c in _SUITE_BUILDERS[n](cfg)]
    print(f"1..{len(checks)}", file=stream)
    failed = []
    for i, (name, fn) in enumerate(checks, 1):
        ok, detail = _check(fn)
        line = f"{'ok' if ok else 'not ok'} {i} - {name}"
        if detail:
            line += f" # {detail}"
        print(line, file=stream, flush=True)
        if not ok:
            failed.append(name)
    if failed:
        print(f"# failed: {', '.join(failed)}", file=stream)
    return 0 if not failed else 1


_HANDLERS = {
    "solve": cmd_solve,
    "nterm": cmd_nterm,
    "localize": cmd_localize,
    "sparsity": cmd_sparsity,
    "frame-info": cmd_frame_info,
    "verify": cmd_verify,
}


# ---------------------------------------------------------------------------
# entry point


def _parser():
    p = argparse.ArgumentParser(prog="ridgesolve", description="Ridgelet frame solver for s . grad u + kappa u = f")
    p.add_argument("--version", action="version", version=f"ridgesolve {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON run configuration")
    for key in CONFIG_SCHEMA["properties"]:
        flags = {f"--{key}", f"--{key.replace('_', '-')}"}
        p.add_argument(*sorted(flags), dest=key, metavar="VALUE", help=argparse.SUPPRESS)
    return p


def main(argv=None):
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code else 0
    overrides = {k: _parse_value(v) for k, v in vars(args).items() if k in CONFIG_SCHEMA["properties"] and v is not None}
    # path-like keys stay strings
    for k in ("output_dir", "source_file"):
        if k in overrides:
            overrides[k] = str(getattr(args, k))
    try:
        cfg = load_config(args.config, overrides)
        t0 = time.perf_counter()
        code = _HANDLERS[args.command](cfg)
    except ConfigError as e:
        print(f"ridgesolve: {e}", file=sys.stderr)
        return 2
    except MemoryError as e:
        print(f"ridgesolve: out of memory: {e}", file=sys.stderr)
        return 1
    if cfg["timings"]:
        print(f"# {args.command} finished in {time.perf_counter() - t0:.2f} s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
