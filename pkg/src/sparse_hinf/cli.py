"""Command-line front end: ``design``, ``verify`` and ``sweep``.

The run configuration is an INI document::

    [problem]
    kind = smd-structured        # structured | lft | smd-structured | smd-lft
    gamma = 1.0
    sweep = gamma                # sweep verb only: gamma | c0
    grid = 1.0, 0.75, 0.5, 0.25

    [smd]
    c0 = 0.01
    c1 = 0.02
    c2 = 0.03
    S_d = 1.0                    # scalar or three diagonal entries
    lft_split = output

    [options]                    # any DesignOptions field
    max_reweight_iters = 10

    [verify]
    n_samples = 200
    seed = 0

    [output]
    dir = out

    [matrix A]                   # structured / lft kinds, one section per matrix
    rows = 2
    cols = 2
    data = -1 0
           0 -2

Exit codes: 0 success, 1 usage or configuration error, 2 infeasible design,
3 certification failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import smd
from .analysis import certify
from .design import DesignError, DesignOptions, DesignResult, InfeasibleDesign, design_lft, design_structured
from .sdp import SolverSettings
from .system_model import (AffineUncertainty, DimensionError, LftPlant, ObserverGain, PrecisionVector,
                           StateSpaceModel)

log = logging.getLogger("sparse_hinf")

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_UNCERTIFIED = 0, 1, 2, 3
KINDS = ("structured", "lft", "smd-structured", "smd-lft")
STRUCTURED_MATRICES = ("A", "B_d", "C_y", "D_d", "C_z", "M1", "N1", "M2", "N2")
LFT_MATRICES = ("A", "B_delta", "B_d", "C_delta", "E_delta", "E_d", "C_y", "D_delta", "D_d", "C_z")
CSV_HEADER = ["sweep_param", "sweep_value", "sensor_index", "active", "beta", "certified", "worst_norm"]


class ConfigError(ValueError):
    pass


@dataclasses.dataclass
class RunConfig:
    kind: str
    gamma: float | None
    model: object = None
    uncertainty: AffineUncertainty | None = None
    smd: smd.SmdConfig | None = None
    lft_split: str = "output"
    sweep: str | None = None
    grid: tuple[float, ...] = ()
    options: DesignOptions = dataclasses.field(default_factory=DesignOptions)
    n_samples: int = 200
    seed: int = 0
    structure: str | None = None
    out_dir: Path = Path(".")

    @property
    def base_kind(self) -> str:
        return "structured" if self.kind.endswith("structured") else "lft"


# configuration parsing

def _float(section, key, raw) -> float:
    try:
        val = float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected a number, got {raw!r}") from None
    if not math.isfinite(val):
        raise ConfigError(f"[{section}] {key}: must be finite")
    return val


def _int(section, key, raw) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected an integer, got {raw!r}") from None


def _floats(section, key, raw) -> list[float]:
    return [_float(section, key, tok) for tok in raw.replace(",", " ").split()]


def _bool(section, key, raw) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"[{section}] {key}: expected a boolean, got {raw!r}")


def _matrix(cp: configparser.ConfigParser, name: str) -> np.ndarray:
    section = f"matrix {name}"
    if not cp.has_section(section):
        raise ConfigError(f"missing section [{section}]")
    sec = cp[section]
    for key in ("rows", "cols"):
        if key not in sec:
            raise ConfigError(f"[{section}] missing key {key!r}")
    rows, cols = _int(section, "rows", sec["rows"]), _int(section, "cols", sec["cols"])
    if rows < 0 or cols < 0:
        raise ConfigError(f"[{section}] dimensions must be nonnegative")
    data = _floats(section, "data", sec.get("data", ""))
    if len(data) != rows * cols:
        raise ConfigError(f"[{section}] data has {len(data)} entries, rows*cols = {rows * cols}")
    return np.array(data, dtype=float).reshape(rows, cols)


def _options(cp) -> DesignOptions:
    fields = {f.name: f for f in dataclasses.fields(DesignOptions)}
    kwargs = {}
    solver = {}
    if cp.has_section("options"):
        for key, raw in cp["options"].items():
            if key in ("abs_tol", "rel_tol", "feas_tol"):
                solver[key] = _float("options", key, raw)
            elif key == "max_iter":
                solver[key] = _int("options", key, raw)
            elif key == "frontier_bounds":
                vals = _floats("options", key, raw)
                if len(vals) != 2:
                    raise ConfigError("[options] frontier_bounds: expected two numbers")
                kwargs[key] = (vals[0], vals[1])
            elif key in ("max_reweight_iters", "rng_seed", "frontier_steps"):
                kwargs[key] = _int("options", key, raw)
            elif key == "bisect_frontier":
                kwargs[key] = _bool("options", key, raw)
            elif key in fields:
                kwargs[key] = _float("options", key, raw)
            else:
                raise ConfigError(f"[options] unknown key {key!r}")
    try:
        return DesignOptions(solver=SolverSettings(**solver), **kwargs)
    except ValueError as exc:
        raise ConfigError(f"[options] {exc}") from None


def load_config(text: str, source: str = "<config>") -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # matrix names and S_d are case sensitive
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    if not cp.has_section("problem"):
        raise ConfigError("missing section [problem]")
    prob = cp["problem"]
    kind = prob.get("kind", "").strip()
    if kind not in KINDS:
        raise ConfigError(f"[problem] kind: expected one of {', '.join(KINDS)}, got {kind!r}")
    gamma = _float("problem", "gamma", prob["gamma"]) if "gamma" in prob else None
    if gamma is not None and not gamma > 0:
        raise ConfigError("[problem] gamma: must be positive")
    cfg = RunConfig(kind, gamma, options=_options(cp))

    sweep = prob.get("sweep")
    if sweep is not None:
        if sweep not in ("gamma", "c0"):
            raise ConfigError(f"[problem] sweep: expected gamma or c0, got {sweep!r}")
        cfg.sweep = sweep
        cfg.grid = tuple(_floats("problem", "grid", prob.get("grid", "")))
        if not cfg.grid:
            raise ConfigError("[problem] grid: must list at least one value")
        if sweep == "c0" and not kind.startswith("smd"):
            raise ConfigError("[problem] sweep = c0 needs an smd-* kind")

    if kind.startswith("smd"):
        sec = cp["smd"] if cp.has_section("smd") else {}
        c = {k: _float("smd", k, sec.get(k, "0")) for k in ("c0", "c1", "c2")}
        S_d = _floats("smd", "S_d", sec.get("S_d", "1.0"))
        if len(S_d) not in (1, 3):
            raise ConfigError("[smd] S_d: expected one or three values")
        split = sec.get("lft_split", "output")
        if split not in smd.LFT_SPLITS:
            raise ConfigError(f"[smd] lft_split: expected one of {smd.LFT_SPLITS}")
        try:
            cfg.smd = smd.SmdConfig(c["c0"], c["c1"], c["c2"],
                                    S_d[0] if len(S_d) == 1 else tuple(S_d), gamma or 1.0)
        except ValueError as exc:
            raise ConfigError(f"[smd] {exc}") from None
        cfg.lft_split = split
    else:
        names = STRUCTURED_MATRICES if kind == "structured" else LFT_MATRICES
        mats = {name: _matrix(cp, name) for name in names}
        try:
            if kind == "structured":
                cfg.model = StateSpaceModel(*(mats[k] for k in STRUCTURED_MATRICES[:5]))
                cfg.uncertainty = AffineUncertainty(*(mats[k] for k in STRUCTURED_MATRICES[5:]))
                cfg.uncertainty.check(cfg.model)
            else:
                cfg.model = LftPlant(**mats, delta_structure=prob.get("delta_structure", "full"))
        except (DimensionError, ValueError) as exc:
            raise ConfigError(f"matrix data: {exc}") from None

    if cfg.sweep is None and gamma is None:
        raise ConfigError("[problem] gamma: required")

    if cp.has_section("verify"):
        ver = cp["verify"]
        cfg.n_samples = _int("verify", "n_samples", ver.get("n_samples", "200"))
        if "seed" not in ver:
            raise ConfigError("[verify] seed: required")
        cfg.seed = _int("verify", "seed", ver["seed"])
        cfg.structure = ver.get("structure")
        if cfg.structure not in (None, "full", "diagonal"):
            raise ConfigError("[verify] structure: expected full or diagonal")
    if cfg.n_samples < 0:
        raise ConfigError("[verify] n_samples: must be nonnegative")
    if cp.has_section("output"):
        cfg.out_dir = Path(cp["output"].get("dir", "."))
    return cfg


# problem construction

def problem_for(cfg: RunConfig, gamma: float | None = None, c0: float | None = None):
    """(model or plant, uncertainty or None, gamma) for one design."""
    gamma = cfg.gamma if gamma is None else gamma
    if cfg.kind.startswith("smd"):
        sc = cfg.smd if c0 is None else dataclasses.replace(cfg.smd, c0=c0)
        model, unc = smd.smd_problem(cfg.base_kind, sc, cfg.lft_split)
        return model, unc, gamma
    return cfg.model, cfg.uncertainty, gamma


def _design(cfg: RunConfig, model, unc, gamma) -> DesignResult:
    if cfg.base_kind == "structured":
        return design_structured(model, unc, gamma, cfg.options)
    return design_lft(model, gamma, cfg.options)


# result documents

def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else str(x)


def design_document(cfg: RunConfig, result: DesignResult, report, lmi, passed) -> dict:
    doc = {
        "kind": cfg.kind,
        "gamma": result.gamma,
        "n_sensors": int(result.precision.beta.size),
        "active_sensors": result.active,
        "beta": [float(b) for b in result.precision.beta],
        "active": [bool(a) for a in result.precision.active],
        "gain": result.gain.L.tolist(),
        "first_active_count": result.first_active_count,
        "restorations": result.restorations,
        "iterations": [
            {"iteration": h.iteration, "stage": h.stage, "status": h.status,
             "objective": _num(h.objective), "sensors": list(h.sensors),
             "beta": None if h.beta is None else [float(b) for b in h.beta]}
            for h in result.history],
        "solver_statuses": [h.status for h in result.history],
        "lmi_max_eigenvalues": result.lmi_max_eigenvalues,
        "lmi_margins": result.lmi_margins,
        "gain_residual": result.gain_residual,
        "certified": passed,
        "certification": report.summary() if report is not None else None,
    }
    if result.kind == "structured":
        doc["multipliers"] = {k: (np.asarray(v).tolist() if np.ndim(v) else float(v))
                              for k, v in result.solution.items() if k in ("X1", "X2", "delta1", "delta2")}
    if lmi is not None:
        doc["lmi_certificate"] = lmi.summary()
    return doc


def _write_json(path: Path, doc: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


class _LoadedDesign:
    """Duck-typed stand-in for DesignResult when verifying a saved design."""

    def __init__(self, doc: dict, n_x: int, n_y: int):
        L = np.asarray(doc["gain"], dtype=float)
        beta = np.asarray(doc["beta"], dtype=float)
        active = np.asarray(doc.get("active", [True] * beta.size), dtype=bool)
        if L.shape != (n_x, n_y) or beta.shape != (n_y,) or active.shape != (n_y,):
            raise DimensionError(f"design has gain {L.shape} and {beta.size} sensors; "
                                 f"plant needs gain ({n_x}, {n_y})")
        self.gain = ObserverGain(L)
        self.precision = PrecisionVector(beta, active)
        self.solution = {k: (np.asarray(v, dtype=float) if isinstance(v, list) else float(v))
                         for k, v in doc.get("multipliers", {}).items()}


# verbs

def cmd_design(cfg: RunConfig) -> int:
    model, unc, gamma = problem_for(cfg)
    t0 = time.perf_counter()
    out = cfg.out_dir / "design.json"
    try:
        result = _design(cfg, model, unc, gamma)
    except InfeasibleDesign as exc:
        _write_json(out, {"kind": cfg.kind, "gamma": gamma, "status": exc.status,
                          "message": str(exc), "frontier": exc.frontier,
                          "timing": {"seconds": time.perf_counter() - t0}})
        log.warning("infeasible at gamma=%g; smallest feasible gamma found: %s", gamma, exc.frontier)
        return EXIT_INFEASIBLE
    except DesignError as exc:
        _write_json(out, {"kind": cfg.kind, "gamma": gamma, "status": "DesignError", "message": str(exc),
                          "timing": {"seconds": time.perf_counter() - t0}})
        log.warning("design failed: %s", exc)
        return EXIT_INFEASIBLE
    t1 = time.perf_counter()
    report, lmi, passed = certify(cfg.base_kind, model, unc, result, gamma, cfg.n_samples, cfg.seed,
                                  cfg.structure, cfg.options.solver)
    doc = design_document(cfg, result, report, lmi, passed)
    doc["status"] = "Optimal"
    doc["timing"] = {"design_seconds": t1 - t0, "verify_seconds": time.perf_counter() - t1}
    _write_json(out, doc)
    log.info("active sensors %s, certified=%s, worst norm %.6g", result.active, passed, report.worst_norm)
    return EXIT_OK if passed else EXIT_UNCERTIFIED


def cmd_verify(cfg: RunConfig, design_path: Path) -> int:
    try:
        doc = json.loads(design_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        log.error("cannot read design file %s: %s", design_path, exc)
        return EXIT_USAGE
    if "gain" not in doc:
        log.error("design file %s holds no gain (status %s)", design_path, doc.get("status"))
        return EXIT_USAGE
    model, unc, gamma = problem_for(cfg)
    gamma = float(doc.get("gamma", gamma))
    try:
        loaded = _LoadedDesign(doc, model.n_x, model.n_y)
    except (DimensionError, ValueError, KeyError) as exc:
        log.error("design does not match the plant: %s", exc)
        return EXIT_USAGE
    t0 = time.perf_counter()
    report, lmi, passed = certify(cfg.base_kind, model, unc, loaded, gamma, cfg.n_samples, cfg.seed,
                                  cfg.structure, cfg.options.solver)
    out = report.summary()
    out["certified"] = passed
    if lmi is not None:
        out["lmi_certificate"] = lmi.summary()
    out["timing"] = {"seconds": time.perf_counter() - t0}
    _write_json(cfg.out_dir / "verify.json", out)
    log.info("certified=%s, worst norm %.6g (sample %d)", passed, report.worst_norm, report.worst_sample_id)
    return EXIT_OK if passed else EXIT_UNCERTIFIED


def sweep_rows(points) -> list[dict]:
    """CSV rows, sorted by sweep value then sensor index."""
    rows = []
    for p in points:
        n_y = p["n_sensors"]
        for i in range(n_y):
            if p["feasible"]:
                rows.append({"sweep_param": p["sweep_param"], "sweep_value": p["sweep_value"],
                             "sensor_index": i, "active": int(p["active"][i]), "beta": p["beta"][i],
                             "certified": int(bool(p["certified"])), "worst_norm": p["worst_norm"]})
            else:
                rows.append({"sweep_param": p["sweep_param"], "sweep_value": p["sweep_value"],
                             "sensor_index": i, "active": "NA", "beta": "NA", "certified": "NA",
                             "worst_norm": "NA"})
    rows.sort(key=lambda r: (r["sweep_value"], r["sensor_index"]))
    return rows


def write_sweep_csv(path: Path, rows: list[dict]):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_HEADER, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def read_sweep_csv(path: Path) -> list[dict]:
    def parse(key, raw):
        if raw == "NA" or key == "sweep_param":
            return raw
        if key in ("sensor_index", "active", "certified"):
            return int(raw)
        return float(raw)

    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        return [{k: parse(k, v) for k, v in row.items()} for row in reader]


def cmd_sweep(cfg: RunConfig) -> int:
    if cfg.sweep is None:
        raise ConfigError("[problem] sweep: required for the sweep verb")
    t0 = time.perf_counter()
    points = []
    for value in cfg.grid:
        if cfg.sweep == "gamma":
            model, unc, gamma = problem_for(cfg, gamma=value)
        else:
            model, unc, gamma = problem_for(cfg, c0=value)
        entry = {"sweep_param": cfg.sweep, "sweep_value": value, "gamma": gamma,
                 "n_sensors": model.n_y, "feasible": False}
        if cfg.kind.startswith("smd"):
            entry.update(c0=value if cfg.sweep == "c0" else cfg.smd.c0, c1=cfg.smd.c1, c2=cfg.smd.c2)
        try:
            result = _design(cfg, model, unc, gamma)
        except DesignError as exc:
            entry.update(status=getattr(exc, "status", "DesignError"), message=str(exc),
                         frontier=getattr(exc, "frontier", None))
            log.info("%s=%g: %s", cfg.sweep, value, exc)
            points.append(entry)
            continue
        report, lmi, passed = certify(cfg.base_kind, model, unc, result, gamma, cfg.n_samples,
                                      cfg.seed, cfg.structure, cfg.options.solver)
        entry.update(status="Optimal", feasible=True, active=[bool(a) for a in result.precision.active],
                     active_sensors=result.active, beta=[float(b) for b in result.precision.beta],
                     certified=passed, worst_norm=report.worst_norm,
                     certification=report.summary(),
                     lmi_certificate=lmi.summary() if lmi is not None else None)
        log.info("%s=%g: active %s certified=%s", cfg.sweep, value, result.active, passed)
        points.append(entry)
    write_sweep_csv(cfg.out_dir / "sweep.csv", sweep_rows(points))
    doc = {"kind": cfg.kind, "sweep_param": cfg.sweep,
           "points": [{k: (_num(v) if k == "worst_norm" else v) for k, v in p.items()} for p in points],
           "timing": {"seconds": time.perf_counter() - t0}}
    _write_json(cfg.out_dir / "sweep.json", doc)
    if any(p["feasible"] and not p["certified"] for p in points):
        return EXIT_UNCERTIFIED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sparse-hinf",
                                 description="Sparse robust H-infinity observer design.")
    ap.add_argument("verb", choices=("design", "verify", "sweep"))
    ap.add_argument("--config", required=True, type=Path)
    ap.add_argument("--out", type=Path, help="output directory (overrides [output] dir)")
    ap.add_argument("--seed", type=int, help="verification seed (overrides [verify] seed)")
    ap.add_argument("--samples", type=int, help="number of verification samples")
    ap.add_argument("--design", type=Path, help="design file for verify (default: <out>/design.json)")
    ap.add_argument("--quiet", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config.read_text(), str(args.config))
        if args.out is not None:
            cfg.out_dir = args.out
        if args.seed is not None:
            cfg.seed = args.seed
        if args.samples is not None:
            if args.samples < 0:
                raise ConfigError("--samples must be nonnegative")
            cfg.n_samples = args.samples
        if args.verb == "design":
            return cmd_design(cfg)
        if args.verb == "verify":
            return cmd_verify(cfg, args.design or cfg.out_dir / "design.json")
        return cmd_sweep(cfg)
    except (ConfigError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
