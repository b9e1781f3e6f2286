"""Command-line front end: one JSON scenario per run, artifacts into a directory.

    latticewave run <config.json> [--out DIR] [--workers N] [--verbose]
    latticewave render <field.csv> <out.pgm>

Exit status: 0 success, 2 configuration error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import export
from .analysis import (
    GraphField,
    compare_fields,
    convergence_study,
    nodal_domains,
    square_lattice_family,
)
from .billiard import BilliardError, BilliardGeometry, continuum_current, flux_balance, solve_open_field
from .edges import ResidualError, SingularMomentumError, continuity_errors, kirchhoff_residuals, reconstruct
from .graph import (
    GraphError,
    MetricGraph,
    attach_lead,
    build_chain,
    build_sinai_graph,
    build_square_lattice,
    build_triangular_lattice,
    graph_to_json,
    validate,
)
from .scattering import (
    ScatteringError,
    admissible_momenta,
    lead_derivatives,
    solve_scattering,
    transmission_sweep,
)
from .spectral import (
    NotLatticeError,
    adjacency_eigen_path,
    bloch_dispersion,
    bloch_secular,
    eigenstates,
    secular_scan,
)

log = logging.getLogger("latticewave")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

# Fig. 1 does not state the obstacle; this disc reproduces its look on the 97-point lattice.
DEFAULT_DISC = {"center": [8.0, 7.4], "radius": 2.7}
PAPER_GEOMETRY = {
    "lattice": "sinai",
    "n": 97,
    "spacing": 0.15,
    "disc": DEFAULT_DISC,
    "leads": [{"at": [14, 40], "direction": "incoming"}, {"at": [59, 80], "direction": "outgoing"}],
}


class ConfigError(ValueError):
    pass


class NumericFailure(RuntimeError):
    pass


# -- schema ---------------------------------------------------------------------------

_POS = {"type": "number", "exclusiveMinimum": 0}
_POINT = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

GEOMETRY_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["lattice", "spacing"],
    "properties": {
        "lattice": {"enum": ["square", "sinai", "triangular", "chain"]},
        "n": {"type": "integer", "minimum": 2},
        "n_cols": {"type": "integer", "minimum": 2},
        "side": _POS,
        "spacing": _POS,
        "disc": {
            "type": "object",
            "additionalProperties": False,
            "required": ["center", "radius"],
            "properties": {"center": _POINT, "radius": _POS},
        },
        "leads": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["at", "direction"],
                "properties": {
                    "at": {"type": "array", "items": {"type": "integer"}, "minItems": 1, "maxItems": 3},
                    "direction": {"enum": ["incoming", "outgoing"]},
                },
            },
        },
    },
}


def _params(required, **props):
    return {"type": "object", "additionalProperties": False, "required": list(required), "properties": props}


_COUNT = {"type": "integer", "minimum": 1}
_SAMPLES = {"type": "integer", "minimum": 2}

PARAM_SCHEMAS = {
    "eigen": _params(
        [],
        count=_COUNT,
        method={"enum": ["auto", "adjacency", "scan"]},
        k_max=_POS,
        samples=_SAMPLES,
    ),
    "nodal": _params([], count=_COUNT, method={"enum": ["auto", "adjacency", "scan"]}, k_max=_POS, samples=_SAMPLES),
    "scatter": _params(["k"], k=_POS),
    "sweep": _params(["k_min", "k_max", "samples"], k_min=_POS, k_max=_POS, samples=_SAMPLES),
    "compare": _params(
        ["k", "h"],
        k=_POS,
        h=_POS,
        energy_factor=_POS,
        control_factor=_POS,
        lead_radius=_POS,
        exclude_radius={"type": "number", "minimum": 0},
    ),
    "converge": _params(
        ["spacings", "reference"],
        family={"enum": ["square", "triangular", "triangle"]},
        side=_POS,
        spacings={"type": "array", "items": _POS, "minItems": 3},
        reference=_POS,
        mode={"type": "integer", "minimum": 0},
    ),
    "dispersion": _params(
        ["spacing"],
        spacing=_POS,
        thetas={"type": "array", "items": _POINT, "minItems": 1},
        random=_params(["count"], count=_COUNT, seed={"type": "integer", "minimum": 0}),
    ),
    "paper": _params(
        [],
        k=_POS,
        h=_POS,
        lead_radius=_POS,
        energy_factor=_POS,
        control_factor=_POS,
        exclude_radius={"type": "number", "minimum": 0},
        eigen_count=_COUNT,
        nodal_mode={"type": "integer", "minimum": 0},
    ),
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["task"],
    "properties": {
        "task": {"enum": sorted(PARAM_SCHEMAS)},
        "out": {"type": "string", "minLength": 1},
        "workers": {"type": "integer", "minimum": 1},
        "geometry": GEOMETRY_SCHEMA,
        "params": {"type": "object"},
    },
}

NEEDS_GEOMETRY = {"eigen", "nodal", "scatter", "sweep", "compare"}


def _schema_error(exc: jsonschema.ValidationError, prefix: str) -> ConfigError:
    where = "/".join(str(p) for p in exc.absolute_path)
    return ConfigError(f"{prefix}{'/' + where if where else ''}: {exc.message}")


def load_config(data: dict) -> dict:
    """Validate a scenario and fill defaults; raises ConfigError."""
    try:
        jsonschema.validate(data, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise _schema_error(exc, "config") from None
    cfg = copy.deepcopy(data)
    task = cfg["task"]
    params = cfg.setdefault("params", {})
    try:
        jsonschema.validate(params, PARAM_SCHEMAS[task])
    except jsonschema.ValidationError as exc:
        raise _schema_error(exc, f"params[{task}]") from None
    if task == "paper":
        cfg.setdefault("geometry", copy.deepcopy(PAPER_GEOMETRY))
        if cfg["geometry"]["lattice"] != "sinai":
            raise ConfigError("the paper pipeline runs on a sinai geometry")
    if task in NEEDS_GEOMETRY and "geometry" not in cfg:
        raise ConfigError(f"task {task!r} needs a geometry")
    if task not in NEEDS_GEOMETRY | {"paper"} and "geometry" in cfg:
        raise ConfigError(f"task {task!r} takes no geometry")
    geo = cfg.get("geometry")
    if geo is not None:
        kind = geo["lattice"]
        need = {"square": ["n"], "sinai": ["n"], "triangular": ["side"], "chain": ["n"]}[kind]
        if kind == "sinai":
            geo.setdefault("disc", copy.deepcopy(DEFAULT_DISC))
        missing = [key for key in need if key not in geo]
        if missing:
            raise ConfigError(f"geometry/{kind}: missing {', '.join(missing)}")
        extra = {"square": {"side", "disc"}, "sinai": {"side", "n_cols"}, "triangular": {"n", "n_cols", "disc"}, "chain": {"side", "disc", "n_cols"}}[kind]
        bad = sorted(extra & set(geo))
        if bad:
            raise ConfigError(f"geometry/{kind}: keys {bad} do not apply")
    if task in ("scatter", "sweep", "compare", "paper"):
        leads = (geo or {}).get("leads", [])
        if sum(lead["direction"] == "incoming" for lead in leads) != 1:
            raise ConfigError(f"task {task!r} needs exactly one incoming lead")
    if task == "sweep" and not params["k_min"] < params["k_max"]:
        raise ConfigError("params/sweep: k_min must be below k_max")
    if task == "compare" and geo["lattice"] != "sinai" and geo["lattice"] != "square":
        raise ConfigError("compare needs a planar square-lattice geometry")
    if task == "converge":
        sp = params["spacings"]
        if any(b >= a for a, b in zip(sp, sp[1:])):
            raise ConfigError("params/converge: spacings must decrease strictly")
    if task == "dispersion" and ("thetas" in params) == ("random" in params):
        raise ConfigError("params/dispersion: give exactly one of thetas or random")
    return cfg


# -- geometry -------------------------------------------------------------------------


def build_graph(geo: dict) -> MetricGraph:
    kind = geo["lattice"]
    ell = float(geo["spacing"])
    if kind == "square":
        graph = build_square_lattice(geo["n"], geo.get("n_cols", geo["n"]), ell)
    elif kind == "sinai":
        graph = build_sinai_graph(geo["n"], ell, geo["disc"]["center"], geo["disc"]["radius"])
    elif kind == "triangular":
        side = float(geo["side"])
        graph = build_triangular_lattice(((0.0, 0.0), (side, side)), ell)
    else:
        graph = build_chain(geo["n"], ell)
    for lead in geo.get("leads", []):
        graph = attach_lead(graph, tuple(lead["at"]), lead["direction"])
    report = validate(graph)
    if not report.admissible:
        raise GraphError("; ".join(report.violations))
    for flag in graph.flags:
        log.warning("geometry: %s", flag)
    return graph


def billiard_geometry(geo: dict, lead_radius: float) -> BilliardGeometry:
    if geo["lattice"] == "sinai":
        center, radius = geo["disc"]["center"], geo["disc"]["radius"]
        n = geo["n"]
    else:
        if geo.get("n_cols", geo["n"]) != geo["n"]:
            raise ConfigError("billiard comparison needs a square box")
        center = radius = None
        n = geo["n"]
    leads = [(tuple(lead["at"]), lead["direction"]) for lead in geo.get("leads", [])]
    return BilliardGeometry.from_lattice(n, geo["spacing"], center, radius, leads, lead_radius)


# -- tasks ----------------------------------------------------------------------------


def _eigen_results(graph: MetricGraph, params: dict, workers: int):
    count = params.get("count", 6)
    method = params.get("method", "auto")
    if method == "adjacency":
        return adjacency_eigen_path(graph, count)
    if method == "scan":
        ell0 = min(e.length for e in graph.edges)
        k_max = params.get("k_max", math.pi / ell0)
        samples = params.get("samples", max(400, 20 * graph.n_interior))
        return secular_scan(graph, 0.0, k_max, samples, workers=workers).roots[:count]
    return eigenstates(graph, count, k_max=params.get("k_max"), samples=params.get("samples"))


def _eigen_summary(graph: MetricGraph, results) -> list[dict]:
    out = []
    for res in results:
        entry = res.to_dict()
        if res.vertex_vector is not None:
            values = np.asarray(res.vertex_vector)
            waves = reconstruct(graph, res.k, values, residual_tol=math.inf)
            scale = max(float(np.max(np.abs(values))) * res.k, 1e-300)
            entry["continuity_error"] = float(np.max(continuity_errors(graph, waves, values), initial=0.0))
            kir = kirchhoff_residuals(graph, waves, values)
            entry["kirchhoff_error"] = float(np.max(np.abs(kir), initial=0.0)) / scale
        out.append(entry)
    return out


def task_eigen(cfg: dict, out: Path, workers: int) -> list[Path]:
    graph = build_graph(cfg["geometry"])
    results = _eigen_results(graph, cfg["params"], workers)
    report = validate(graph)
    files = [
        export.write_json(
            out / "eigen.json",
            {
                "graph": {"vertices": len(graph.vertices), "interior": graph.n_interior, "edges": len(graph.edges), "N0": report.N0},
                "eigenvalues": _eigen_summary(graph, results),
            },
        ),
        export.write_vertex_vectors(out / "vectors.csv", graph, [r.vertex_vector for r in results]),
    ]
    return files


def task_nodal(cfg: dict, out: Path, workers: int) -> list[Path]:
    graph = build_graph(cfg["geometry"])
    results = _eigen_results(graph, cfg["params"], workers)
    parts = [nodal_domains(graph, np.real(r.vertex_vector)) for r in results]
    summary = [
        {"mode": i, "k": r.k, "multiplicity": r.multiplicity, "domains": p.count}
        for i, (r, p) in enumerate(zip(results, parts))
    ]
    return [
        export.write_json(out / "nodal.json", {"modes": summary}),
        export.write_nodal(out / "nodal.csv", graph, parts),
    ]


def _scatter_artifacts(graph: MetricGraph, k: float, out: Path, prefix: str = "") -> tuple[object, list[Path]]:
    sol = solve_scattering(graph, k)
    values = sol.vertex_values
    kir = kirchhoff_residuals(graph, sol.edge_waves, values, lead_derivatives(sol))
    scale = max(float(np.max(np.abs(values))) * k, 1e-300)
    summary = sol.to_dict()
    summary.update(
        reflection=sol.reflection,
        transmission=sol.transmission,
        kirchhoff_error=float(np.max(np.abs(kir))) / scale,
        continuity_error=float(np.max(continuity_errors(graph, sol.edge_waves, values), initial=0.0)),
        leads=[
            {"vertex": s.vertex, "direction": s.direction, "in": [s.amplitude_in.real, s.amplitude_in.imag], "out": [s.amplitude_out.real, s.amplitude_out.imag]}
            for s in sol.leads
        ],
    )
    files = [
        export.write_json(out / f"{prefix}scatter.json", summary),
        export.write_vertex_field(out / f"{prefix}vertices.csv", sol),
        export.write_edge_currents(out / f"{prefix}edges.csv", sol),
    ]
    if graph.dimension == 2 and graph.spacing is not None:
        files.append(export.write_lattice_grid(out / f"{prefix}density_grid.csv", graph, np.abs(sol.full_values()) ** 2))
    return sol, files


def task_scatter(cfg: dict, out: Path, workers: int) -> list[Path]:
    graph = build_graph(cfg["geometry"])
    return _scatter_artifacts(graph, cfg["params"]["k"], out)[1]


def task_sweep(cfg: dict, out: Path, workers: int) -> list[Path]:
    graph = build_graph(cfg["geometry"])
    p = cfg["params"]
    momenta = admissible_momenta(graph, p["k_min"], p["k_max"], p["samples"])
    rows = transmission_sweep(graph, momenta, workers=workers)
    if not rows:
        raise NumericFailure("no admissible momentum in the sweep range")
    flux = [abs(1 - r - t) for _, r, t in rows]
    return [
        export.write_csv(out / "sweep.csv", ["k", "r2", "t2"], rows),
        export.write_json(out / "sweep.json", {"points": len(rows), "skipped": p["samples"] - len(rows), "max_flux_error": max(flux)}),
    ]


def _comparison(cfg: dict, sol, out: Path, k: float, h: float, p: dict) -> list[Path]:
    geo = cfg["geometry"]
    bgeo = billiard_geometry(geo, p.get("lead_radius", 0.01))
    gf = GraphField.from_scattering(sol)
    ell = geo["spacing"]
    exclude = [tuple(c * ell for c in lead["at"]) for lead in geo["leads"]]
    radius = p.get("exclude_radius", 0.0)
    summary = {"k": k, "h": h}
    files = []
    for name, factor in (("main", p.get("energy_factor", 2.0)), ("control", p.get("control_factor", 3.7))):
        energy = factor * k * k
        grid = solve_open_field(bgeo, energy, h)
        cur = continuum_current(grid)
        rep = compare_fields(gf, grid, exclude=exclude, exclude_radius=radius)
        summary[name] = {"energy": energy, "flux": flux_balance(grid), **rep.to_dict()}
        files.append(export.write_billiard_field(out / f"billiard_{name}.csv", grid, cur))
        density = np.where(grid.domain, np.abs(grid.values) ** 2, 0.0)
        files.append(export.write_billiard_grid(out / f"billiard_{name}_density_grid.csv", density))
    m, c = summary["main"], summary["control"]
    summary["correlation_factor"] = m["correlation"] / abs(c["correlation"]) if c["correlation"] else math.inf
    summary["alignment_factor"] = m["current_alignment"] / abs(c["current_alignment"]) if c["current_alignment"] else math.inf
    files.insert(0, export.write_json(out / "compare.json", summary))
    return files


def task_compare(cfg: dict, out: Path, workers: int) -> list[Path]:
    graph = build_graph(cfg["geometry"])
    p = cfg["params"]
    sol, files = _scatter_artifacts(graph, p["k"], out, prefix="graph_")
    return files + _comparison(cfg, sol, out, p["k"], p["h"], p)


def _family(params: dict):
    family = params.get("family", "square")
    side = params.get("side", 1.0)
    if family == "square":
        return square_lattice_family(side)
    if family == "triangular":
        return lambda ell: build_triangular_lattice(((0.0, 0.0), (side, side)), side / round(side / ell))
    s3 = math.sqrt(3.0)

    def inside(p):
        x, y = p[0], p[1]
        return y >= -1e-12 and s3 * x - y >= -1e-12 and s3 * (side - x) - y >= -1e-12

    return lambda ell: build_triangular_lattice(((0.0, 0.0), (side, side)), side / round(side / ell), indicator=inside)


def task_converge(cfg: dict, out: Path, workers: int) -> list[Path]:
    p = cfg["params"]
    report = convergence_study(_family(p), p["spacings"], p["reference"], mode=p.get("mode", 0))
    data = report.to_dict()
    data["family"] = p.get("family", "square")
    return [export.write_json(out / "converge.json", data)]


def task_dispersion(cfg: dict, out: Path, workers: int) -> list[Path]:
    p = cfg["params"]
    ell = p["spacing"]
    if "thetas" in p:
        thetas = np.asarray(p["thetas"], dtype=float)
    else:
        rng = np.random.default_rng(p["random"].get("seed", 0))
        thetas = rng.uniform(-math.pi / ell, math.pi / ell, size=(p["random"]["count"], 2))
    rows = []
    for th in thetas:
        k = bloch_dispersion(th, ell)
        k_sec = bloch_secular(th, ell)
        residual = abs(float(np.sum(np.cos(th * ell))) - 2 * math.cos(k * ell))
        rows.append((th[0], th[1], k, k_sec, residual, abs(2 * k * k - float(th @ th))))
    return [export.write_csv(out / "dispersion.csv", ["theta1", "theta2", "k", "k_secular", "cos_residual", "energy_gap"], rows)]


def task_paper(cfg: dict, out: Path, workers: int) -> list[Path]:
    p = cfg["params"]
    k = p.get("k", 1.65)
    h = p.get("h", 0.075)
    geo = cfg["geometry"]
    graph = build_graph(geo)
    closed = build_graph({key: v for key, v in geo.items() if key != "leads"})
    (out / "graph.json").write_text(graph_to_json(graph) + "\n")
    files = [out / "graph.json"]

    # nodal pattern of one closed-graph eigenfunction
    count = p.get("eigen_count", 12)
    mode = p.get("nodal_mode", count - 1)
    if mode >= count:
        raise ConfigError("params/paper: nodal_mode must be below eigen_count")
    results = adjacency_eigen_path(closed, count)
    files.append(export.write_json(out / "eigen.json", {"eigenvalues": [r.to_dict() for r in results]}))
    res = results[min(mode, len(results) - 1)]
    part = nodal_domains(closed, res.vertex_vector)
    files.append(export.write_json(out / "nodal.json", {"mode": mode, "k": res.k, "multiplicity": res.multiplicity, "domains": part.count}))
    files.append(export.write_nodal(out / "nodal.csv", closed, [part]))
    files.append(export.write_lattice_grid(out / "nodal_grid.csv", closed, part.sign_map.astype(float)))

    sol, scat = _scatter_artifacts(graph, k, out, prefix="graph_")
    files += scat
    files += _comparison(cfg, sol, out, k, h, p)
    return files


TASKS = {
    "eigen": task_eigen,
    "nodal": task_nodal,
    "scatter": task_scatter,
    "sweep": task_sweep,
    "compare": task_compare,
    "converge": task_converge,
    "dispersion": task_dispersion,
    "paper": task_paper,
}

NUMERIC_ERRORS = (
    NumericFailure,
    SingularMomentumError,
    ResidualError,
    ScatteringError,
    BilliardError,
    NotLatticeError,
    np.linalg.LinAlgError,
    ArithmeticError,
    RuntimeError,
)


def run(config_path: str | Path, out: str | Path | None = None, workers: int | None = None) -> int:
    try:
        data = json.loads(Path(config_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        log.error("cannot read config: %s", exc)
        return EXIT_CONFIG
    try:
        cfg = load_config(data)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    out_dir = Path(out or cfg.get("out", "out"))
    workers = workers or cfg.get("workers", 1)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        files = TASKS[cfg["task"]](cfg, out_dir, workers)
    except (GraphError, ConfigError) as exc:
        log.error("invalid scenario: %s", exc)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    export.write_json(out_dir / "run.json", {"config": cfg, "artifacts": sorted(f.name for f in files)})
    for f in files:
        log.info("wrote %s", f)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="latticewave", description="Quantum lattice graphs and billiard comparisons.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a JSON scenario")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output directory (overrides the config)")
    p_run.add_argument("--workers", type=int, default=None, help="cap on parallel workers")
    p_run.add_argument("--verbose", action="store_true")
    p_render = sub.add_parser("render", help="field CSV to an 8-bit PGM heatmap")
    p_render.add_argument("field")
    p_render.add_argument("image")
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    if args.command == "render":
        try:
            export.render_heatmap(args.field, args.image)
        except OSError as exc:
            log.error("%s", exc)
            return EXIT_CONFIG
        except export.RenderError as exc:
            log.error("cannot render: %s", exc)
            return EXIT_CONFIG
        return EXIT_OK
    if args.workers is not None and args.workers < 1:
        log.error("--workers must be positive")
        return EXIT_CONFIG
    return run(args.config, args.out, args.workers)


if __name__ == "__main__":
    sys.exit(main())
