"""Command line driver: forward simulation, reconstruction, sampling and the shape library.

Exit codes: 0 success, 2 configuration error, 3 solver non-convergence
(partial outputs written), 4 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
import warnings
from contextlib import nullcontext
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from . import io as fio
from .errors import ConfigError, ElasticaError
from .geometry import (
    Box,
    diameter,
    hausdorff_distance,
    is_simple,
    reconstruct_polygon,
    turning_number,
)
from .optimize import (
    ConvergenceWarning,
    SolverSettings,
    TikhonovProblem,
    add_noise,
    discrepancy_continuation,
)
from .sampling import (
    FarFieldOperator,
    Indicator,
    half_max_level,
    indicator_field,
    initial_circle,
    level_line_fit,
    otsu_level,
    quarter_inverse,
)
from .scatter import ScatterConfig, ScatteringOperator, equidistant_directions, far_field_map
from .shapes import SHAPE_NAMES, _OUTLINES, _PARAMETRIC, shape_library
from .svg import heatmap_svg, overlay_svg

logger = logging.getLogger("elastica_scatter")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGED = 3
EXIT_IO = 4

DEFAULTS = {
    "scatter": {"n_incident": 20, "n_measurement": 40, "nystrom_points": 256, "modes": 64},
    "shape": {"params": {}, "n": 100},
    "initial": {"name": "circle", "params": {"radius": 1.0}},
    "noise": {"level": 0.05, "seed": 0},
    "solver": {"penalty": "bending", "length_bounds": [1e-6, 1e6], "base_box": [-1e6, 1e6, -1e6, 1e6]},
    "sampling": {
        "box": [-2.0, 2.0, -2.0, 2.0],
        "resolution": 100,
        "cutoff": 1e-3,
        "level": "otsu",
        "tolerance": 1e-3,
    },
    "output": {"directory": "out", "snapshots": False},
}

_SOLVER_FIELDS = {f.name for f in fields(SolverSettings)}


class InputError(Exception):
    """Missing or malformed input file."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Schema-validated experiment document with defaults filled in."""

    scatter: dict
    shape: dict
    initial: dict
    noise: dict
    solver: dict
    sampling: dict
    output: dict
    sha256: str

    def truth(self):
        return shape_library(self.shape["name"], self.shape["n"], **self.shape["params"])

    def scatter_config(self) -> ScatterConfig:
        s = self.scatter
        if "k" in s:
            k = float(s["k"])
        else:
            diam = diameter(reconstruct_polygon(self.truth()))
            k = 2 * np.pi / (s["wavelength_to_diameter"] * diam)
        return ScatterConfig(
            k,
            equidistant_directions(s["n_incident"]),
            equidistant_directions(s["n_measurement"]),
            nystrom_points=s["nystrom_points"],
            modes=s["modes"],
        )

    def solver_settings(self) -> SolverSettings:
        kw = {k: v for k, v in self.solver.items() if k in _SOLVER_FIELDS}
        return SolverSettings(**kw)

    def box(self) -> Box:
        lo, hi = self.solver["length_bounds"]
        bx = self.solver["base_box"]
        return Box(lo, hi, (bx[0], bx[2]), (bx[1], bx[3]))


def _schema() -> dict:
    text = resources.files("elastica_scatter").joinpath("config_schema.json").read_text()
    return json.loads(text)


def parse_config(text: str) -> ExperimentConfig:
    """Validate a JSON experiment document and fill defaults.

    Raises ``ConfigError`` with the offending line or field path.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}")
    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"config field {where}: {err.message}")
    merged = {}
    for section, defaults in DEFAULTS.items():
        merged[section] = {**defaults, **doc.get(section, {})}
    merged["shape"] = {**DEFAULTS["shape"], **doc["shape"]}
    merged["scatter"] = {**DEFAULTS["scatter"], **doc["scatter"]}
    merged["initial"].setdefault("n", merged["shape"]["n"])
    merged["sampling"].setdefault("n", merged["shape"]["n"])
    lo, hi = merged["solver"]["length_bounds"]
    if lo > hi:
        raise ConfigError("config field solver/length_bounds: lower bound exceeds upper bound")
    for name in ("shape", "initial"):
        try:
            shape_library(merged[name]["name"], 8, **merged[name]["params"])
        except TypeError as exc:
            raise ConfigError(f"config field {name}/params: {exc}") from exc
    sha = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return ExperimentConfig(sha256=sha, **merged)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text)


# --------------------------------------------------------------------------
# Output bookkeeping
# --------------------------------------------------------------------------


class Outputs:
    """Tracks written files for the manifest."""

    def __init__(self, directory):
        self.dir = Path(directory)
        self.files = []

    def path(self, name) -> Path:
        self.files.append(name)
        return self.dir / name

    def manifest(self, command, config: ExperimentConfig | None, inputs: dict, status):
        """Record this command in ``manifest.json``, keeping entries of earlier commands."""
        path = self.dir / "manifest.json"
        doc = {}
        if path.exists():
            try:
                doc = json.loads(path.read_text(encoding="utf-8"))
            except json.JSONDecodeError:
                doc = {}
        runs = doc.get("runs", {}) if doc.get("version") == __version__ else {}
        runs[command] = {
            "config_sha256": config.sha256 if config else None,
            "inputs": {
                role: {"name": Path(p).name, "sha256": fio.file_sha256(p)}
                for role, p in inputs.items()
            },
            "outputs": sorted(self.files),
            "status": status,
        }
        fio.write_json(path, {"tool": "elastica-scatter", "version": __version__, "runs": runs})


def _read_shape(path):
    try:
        return fio.read_shape(path)
    except OSError as exc:
        raise InputError(f"cannot read shape {path}: {exc.strerror}") from exc
    except ValueError as exc:
        raise InputError(f"malformed shape file {path}: {exc}") from exc


def _read_far_field(path):
    try:
        return fio.read_far_field(path)
    except OSError as exc:
        raise InputError(f"cannot read far field {path}: {exc.strerror}") from exc
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise InputError(f"malformed far-field file {path}: {exc}") from exc


def _check_grid(ff, config: ScatterConfig):
    if ff.values.shape != config.data_shape:
        raise ConfigError(
            f"data has shape {ff.values.shape}, config expects {config.data_shape} "
            "(measurement x incident)"
        )
    if not (
        np.allclose(ff.measurement_dirs, config.measurement_dirs, atol=1e-12)
        and np.allclose(ff.incident_dirs, config.incident_dirs, atol=1e-12)
    ):
        raise ConfigError("data direction grids differ from the configured grids")


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def cmd_forward(config: ExperimentConfig, args) -> int:
    seed = args.seed if args.seed is not None else config.noise["seed"]
    truth = config.truth()
    scfg = config.scatter_config()
    start = time.perf_counter()
    clean = far_field_map(truth, scfg)
    noisy, delta = add_noise(clean, config.noise["level"], seed)
    out = Outputs(args.out or config.output["directory"])
    meta = {"k": scfg.k, "nystrom_points": scfg.nystrom_points, "modes": scfg.modes}
    fio.write_shape(out.path("truth_shape.csv"), truth)
    fio.write_polygon(out.path("truth_polygon.csv"), reconstruct_polygon(truth))
    fio.write_far_field(out.path("far_field_clean.csv"), clean, {**meta, "noise_level": 0.0})
    out.files.append("far_field_clean.json")
    fio.write_far_field(
        out.path("far_field_noisy.csv"),
        noisy,
        {**meta, "noise_level": delta, "relative_level": config.noise["level"], "seed": seed},
    )
    out.files.append("far_field_noisy.json")
    if args.diagnostics:
        fio.write_json(
            out.path("diagnostics.json"), {"forward_seconds": time.perf_counter() - start}
        )
    out.manifest("forward", config, {"config": args.config}, "ok")
    logger.info("wrote forward data to %s (delta = %.6g)", out.dir, delta)
    return EXIT_OK


def _initial_guess(config: ExperimentConfig, args):
    if args.initial:
        return _read_shape(args.initial)
    ini = config.initial
    return shape_library(ini["name"], ini["n"], **ini["params"])


def cmd_reconstruct(config: ExperimentConfig, args) -> int:
    scfg = config.scatter_config()
    out_dir = Path(args.out or config.output["directory"])
    data_path = Path(args.data) if args.data else out_dir / "far_field_noisy.csv"
    inputs = {"config": args.config, "data": data_path}
    if args.initial:
        inputs["initial"] = args.initial
    data, meta = _read_far_field(data_path)
    _check_grid(data, scfg)
    m0 = _initial_guess(config, args)
    delta = float(meta.get("noise_level", 0.0))

    problem = TikhonovProblem(
        ScatteringOperator(scfg), data, delta, m0, config.solver["penalty"], config.box()
    )
    start = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        m, alpha, trace = discrepancy_continuation(problem, m0, config.solver_settings())
    elapsed = time.perf_counter() - start

    out = Outputs(out_dir)
    fio.write_shape(out.path("reconstruction_shape.csv"), m)
    poly = reconstruct_polygon(m)
    fio.write_polygon(out.path("reconstruction_polygon.csv"), poly)
    fio.write_text(out.path("trace.jsonl"), trace.to_jsonl())
    truth_poly = reconstruct_polygon(config.truth())
    curves = {"truth": truth_poly, "initial": reconstruct_polygon(m0), "reconstruction": poly}
    fio.write_text(out.path("overlay.svg"), overlay_svg(curves))
    if args.snapshots or config.output["snapshots"]:
        for rec in trace.alphas:
            fio.write_shape(
                out.path(f"snapshots/alpha_{rec.snapshot:03d}.csv"), trace.snapshots[rec.snapshot]
            )
    residual = problem.data_norm(problem.residual(m))
    summary = {
        "status": trace.status,
        "alpha": alpha,
        "residual": residual,
        "noise_level": delta,
        "discrepancy_target": config.solver_settings().discrepancy_factor * delta,
        "iterations": len(trace.iterations),
        "alpha_steps": len(trace.alphas),
        "simple": bool(is_simple(poly)),
        "turning_number": turning_number(m.theta),
        "hausdorff_to_truth": hausdorff_distance(poly, truth_poly),
        "truth_diameter": diameter(truth_poly),
    }
    fio.write_json(out.path("summary.json"), summary)
    if args.diagnostics:
        fio.write_json(out.path("diagnostics.json"), {"reconstruct_seconds": elapsed})
    out.manifest("reconstruct", config, inputs, trace.status)
    logger.info(
        "reconstruction %s: alpha=%.4g residual=%.4g (delta=%.4g)", trace.status, alpha, residual, delta
    )
    return EXIT_OK if trace.converged else EXIT_NONCONVERGED


def cmd_sample(config: ExperimentConfig, args) -> int:
    scfg = config.scatter_config()
    out_dir = Path(args.out or config.output["directory"])
    data_path = Path(args.data) if args.data else out_dir / "far_field_noisy.csv"
    data, _ = _read_far_field(data_path)
    U = FarFieldOperator.from_far_field(data)
    _check_grid(data, scfg)
    samp = config.sampling
    A = quarter_inverse(U, samp["cutoff"])
    field = indicator_field(A, samp["box"], samp["resolution"], scfg.k, U.grid)
    level = samp["level"]
    if level == "otsu":
        beta = otsu_level(field.reciprocal)
    elif level == "half_max":
        beta = half_max_level(field)
    else:
        beta = float(level)
    m0 = initial_circle(field, beta, samp["n"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        result = level_line_fit(Indicator(A, U.grid, scfg.k), beta, m0, tolerance=samp["tolerance"])

    out = Outputs(out_dir)
    fio.write_text(out.path("indicator.csv"), fio.indicator_to_csv(field))
    poly = reconstruct_polygon(result.shape)
    fio.write_shape(out.path("level_line_shape.csv"), result.shape)
    fio.write_polygon(out.path("level_line_polygon.csv"), poly)
    fio.write_text(out.path("level_line_trace.jsonl"), result.trace.to_jsonl())
    fio.write_text(
        out.path("indicator.svg"),
        heatmap_svg(field, {"truth": reconstruct_polygon(config.truth()), "level_line": poly}),
    )
    fio.write_json(
        out.path("sample_summary.json"),
        {
            "level": beta,
            "level_rule": level if isinstance(level, str) else "fixed",
            "retained_modes": int(len(A.singular_values)),
            "status": result.trace.status,
            "simple": result.simple,
        },
    )
    out.manifest("sample", config, {"config": args.config, "data": data_path}, result.trace.status)
    return EXIT_NONCONVERGED if result.flagged else EXIT_OK


def cmd_shapes(config: ExperimentConfig | None, args) -> int:
    if config is None:
        for name in SHAPE_NAMES:
            fn = _PARAMETRIC.get(name) or _OUTLINES.get(name)
            doc = (fn.__doc__ or "").strip().splitlines()
            print(f"{name}" + (f"  {doc[0]}" if doc else ""))
        return EXIT_OK
    truth = config.truth()
    out = Outputs(args.out or config.output["directory"])
    fio.write_shape(out.path("shape.csv"), truth)
    fio.write_polygon(out.path("shape_polygon.csv"), reconstruct_polygon(truth))
    fio.write_text(out.path("shape.svg"), overlay_svg({"truth": reconstruct_polygon(truth)}))
    out.manifest("shapes", config, {"config": args.config}, "ok")
    return EXIT_OK


COMMANDS = {
    "forward": cmd_forward,
    "reconstruct": cmd_reconstruct,
    "sample": cmd_sample,
    "shapes": cmd_shapes,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="elastica-scatter",
        description="Shape reconstruction of sound-soft scatterers from far-field data.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="JSON experiment configuration")
    parser.add_argument("--initial", help="initial guess shape CSV (reconstruct)")
    parser.add_argument("--data", help="far-field CSV (default: <out>/far_field_noisy.csv)")
    parser.add_argument("--out", help="output directory (overrides output.directory)")
    parser.add_argument("--snapshots", action="store_true", help="write the shape at every alpha")
    parser.add_argument("--diagnostics", action="store_true", help="debug logging and timings")
    parser.add_argument("--seed", type=int, help="noise seed (overrides noise.seed)")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def _thread_limit():
    value = os.environ.get("ELASTICA_THREADS")
    if not value:
        return nullcontext()
    try:
        limit = int(value)
    except ValueError:
        raise ConfigError(f"ELASTICA_THREADS must be an integer, got {value!r}")
    if limit < 1:
        raise ConfigError("ELASTICA_THREADS must be positive")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=limit)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.diagnostics else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.config is None and args.command != "shapes":
            raise ConfigError(f"{args.command} requires --config")
        config = load_config(args.config) if args.config else None
        with _thread_limit():
            return COMMANDS[args.command](config, args)
    except (ConfigError, jsonschema.SchemaError) as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except InputError as exc:
        logger.error("%s", exc)
        return EXIT_IO
    except OSError as exc:
        logger.error("I/O error: %s", exc)
        return EXIT_IO
    except ElasticaError as exc:
        logger.error("solver failure: %s", exc)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
