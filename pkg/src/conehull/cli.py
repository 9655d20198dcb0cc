"""Command-line entry point: one task per run, reproducible artifacts.

Usage: conehull <task> --config <file> [--out <dir>] [--threads N] [--verbose]

The config is a single JSON document (see config.validate for the
schema).  Every run writes report.json plus task-specific CSV tables and
a PNG figure into the output directory.  Reports embed the resolved
config, all normalization constants, convention notes, library versions,
and the wall time; rerunning the same config reproduces every byte
except the wall-time field.

Exit codes: 0 success, 2 config violation, 3 numerical failure (gap
closure, lost localization), 4 resource bound exceeded.

Heavy imports happen inside main() so that --threads can pin the BLAS
thread pools before numpy first loads.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "BLIS_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)

SCHEMA_VERSION = 1


def _apply_thread_cap(threads):
    if threads is None:
        return
    for var in _THREAD_VARS:
        os.environ[var] = str(int(threads))


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="conehull",
        description="cone-lattice geometry, hull classification, and index pairings",
    )
    p.add_argument(
        "task",
        choices=[
            "hull", "classify", "count", "trace",
            "chern-bulk", "chern-edge", "bulk-edge", "validate",
        ],
        help="task to run ('validate' only checks the config)",
    )
    p.add_argument("--config", required=True, help="path to the JSON config document")
    p.add_argument("--out", default=None, help="output directory (default: config 'output' or 'conehull-out')")
    p.add_argument("--threads", type=int, default=None, help="cap BLAS/OpenMP thread pools")
    p.add_argument("--verbose", action="store_true", help="progress notes on stderr")
    return p


def _note(verbose: bool, msg: str):
    if verbose:
        print(msg, file=sys.stderr)


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
    return str(path)


def _fmt(x):
    """Canonical scalar formatting for CSV cells (shortest round-trip)."""
    if isinstance(x, float):
        return repr(x)
    return x


# --------------------------------------------------------------------------
# task runners (heavy imports are local: see module docstring)

def _boundary_function(fn_doc: dict):
    kind = fn_doc["kind"]
    if kind == "indicator":
        lo = float(fn_doc.get("lo", 0.0))
        hi = float(fn_doc["hi"])

        def f(x):
            return 1.0 if all(lo - 1e-12 <= c <= hi + 1e-12 for c in x) else 0.0

        return f
    if kind == "gaussian":
        import math

        center = float(fn_doc["center"])
        width = float(fn_doc["width"])

        def f(x):
            return math.exp(-sum((c - center) ** 2 for c in x) / (2.0 * width**2))

        return f
    raise ValueError(f"unknown boundary function kind {kind!r}")


def _pattern_from_config(cfg):
    from .fell import AnalyticPattern, FinitePattern, orbit_point

    block = cfg.doc["pattern"]
    kind = block["kind"]
    if kind == "orbit":
        return orbit_point(cfg.spec, block["n"], float(block["radius"]))
    if kind == "finite":
        import numpy as np

        return FinitePattern(
            np.asarray(block["points"], dtype=np.int64), float(block["radius"])
        )
    return AnalyticPattern(
        cfg.spec,
        tuple(block.get("I", ())),
        tuple(block.get("J", ())),
        tuple(block.get("x", ())),
    )


def _run_hull(cfg, outdir, verbose):
    from . import figures
    from .fell import ascii_grid, hull_point
    from .strata import classify

    block = cfg.doc["hull"]
    mode = block.get("mode", "analytic")
    pat = hull_point(
        cfg.spec,
        block["I"],
        block.get("J", ()),
        block["x"],
        mode=mode,
        radius=block.get("radius"),
        strict_tol=cfg.precision["strict_tol"],
        search_radius=block.get("search_radius", 50.0),
    )
    fig_radius = float(block.get("figure_radius", block.get("radius") or 10.0))
    label = classify(pat, cfg.spec, escape_threshold=cfg.precision["escape_threshold"])
    result = {
        "pattern": pat.to_dict(),
        "label": label.to_dict(),
    }
    files = {}
    pts = pat.truncation(fig_radius)
    files["points_csv"] = _write_csv(
        outdir / "points.csv",
        [f"n{i + 1}" for i in range(cfg.spec.D)],
        [[int(v) for v in p] for p in pts],
    )
    if cfg.spec.D == 2:
        result["ascii"] = ascii_grid(pat, min(fig_radius, 12.0))
        from .fell import ball_points

        files["figure"] = figures.pattern_figure(
            pts, fig_radius, outdir / "pattern.png",
            members_of=ball_points(2, fig_radius),
            title="hull point truncation",
        )
    return result, files, {}, []


def _run_classify(cfg, outdir, verbose):
    from . import figures
    from .strata import classify

    pat = _pattern_from_config(cfg)
    label = classify(
        pat,
        cfg.spec,
        escape_threshold=cfg.precision["escape_threshold"],
        strict_tol=cfg.precision["strict_tol"],
    )
    doc = label.to_dict()
    if label.x_exact is not None:
        doc["x_exact"] = [str(f) for f in label.x_exact]
    result = {"label": doc, "pattern_kind": type(pat).__name__}
    files = {}
    import math

    radius = pat.available_radius
    if not math.isfinite(radius):
        radius = 10.0
    pts = pat.truncation(radius)
    files["points_csv"] = _write_csv(
        outdir / "points.csv",
        [f"n{i + 1}" for i in range(cfg.spec.D)],
        [[int(v) for v in p] for p in pts],
    )
    if cfg.spec.D == 2:
        from .fell import ball_points

        files["figure"] = figures.pattern_figure(
            pts, radius, outdir / "pattern.png",
            members_of=ball_points(2, radius),
            title="classified pattern",
        )
    return result, files, {}, []


def _run_count(cfg, outdir, verbose):
    from . import figures
    from .cone_lattice import count_scaling_study, covolume_facets

    block = cfg.doc["count"]
    rows = count_scaling_study(cfg.spec, float(block["L"]), block["t_values"])
    _note(verbose, f"counted {len(rows)} transverse radii")
    files = {
        "counts_csv": _write_csv(
            outdir / "counts.csv",
            ["t", "count", "predicted", "relative_error"],
            [[_fmt(float(r.t)), r.count, _fmt(r.predicted), _fmt(r.relative_error)] for r in rows],
        ),
        "figure": figures.count_figure(rows, outdir / "count_error.png"),
    }
    result = {
        "rows": [
            {
                "t": float(r.t),
                "count": int(r.count),
                "predicted": float(r.predicted),
                "relative_error": float(r.relative_error),
            }
            for r in rows
        ],
    }
    constants = {"covolume_facets": covolume_facets(cfg.spec)}
    return result, files, constants, []


def _run_trace(cfg, outdir, verbose):
    from . import figures
    from .algebra import cone_window, diagonal_operator
    from .cone_lattice import SlabWindow
    from .invariants import TraceSpec, stratum_integral, trace_estimate

    block = cfg.doc["trace"]
    f = _boundary_function(block["function"])
    geo = cfg.geometry
    t_values = [float(t) for t in block.get("t_values", [geo.t / 4.0, geo.t / 2.0, geo.t])]
    t_max = max(t_values)
    window = cone_window(cfg.spec, SlabWindow(geo.L, t_max, geo.core_margin), bands=1)
    _note(verbose, f"window holds {window.n_sites} sites")
    dots = cfg.spec.dots(window.sites)
    diag = [f(tuple(row)) for row in dots]
    a = diagonal_operator(window, diag)

    values = []
    errors = []
    for t in t_values:
        ts = TraceSpec.hypersurface(cfg.spec, SlabWindow(geo.L, t, geo.core_margin))
        val = trace_estimate(a, ts)
        half = trace_estimate(a, ts.with_transverse(t / 2.0))
        values.append(float(val))
        errors.append(abs(float(val) - float(half)))

    ts_full = TraceSpec.hypersurface(cfg.spec, SlabWindow(geo.L, t_max, geo.core_margin))
    I = tuple(range(1, cfg.spec.d + 1))
    box = [(0.0, geo.L)] * len(I)
    ref, ref_err = stratum_integral(
        f, I, ts_full, h=float(block.get("h", 0.01)), box=box
    )
    files = {
        "convergence_csv": _write_csv(
            outdir / "convergence.csv",
            ["t", "value", "est_error"],
            [[_fmt(t), _fmt(v), _fmt(e)] for t, v, e in zip(t_values, values, errors)],
        ),
        "figure": figures.trace_figure(t_values, values, ref, outdir / "trace_convergence.png"),
    }
    result = {
        "estimator": [
            {"t": t, "value": v, "est_error": e}
            for t, v, e in zip(t_values, values, errors)
        ],
        "measure_side": {"value": ref, "est_error": ref_err},
        "difference": abs(values[-1] - ref),
    }
    return result, files, dict(ts_full.normalization), []


def _run_chern_bulk(cfg, outdir, verbose):
    from . import figures
    from .algebra import SpectralSpec, build_model, spectral_function, torus_window
    from .invariants import GapClosureError, TraceSpec, bz_chern_oracle, pair_even, _bulk_gap

    block = cfg.doc.get("chern_bulk", {})
    sides = int(block.get("sides", 32))
    fermi = float(block.get("fermi", 0.0))
    import numpy as np

    ladder_rows = []
    results = {}
    notes = []
    for s in sorted({max(sides // 2, 4), sides}):
        win = torus_window((s, s), bands=2)
        h = build_model(win, cfg.model)
        gap = _bulk_gap(h, fermi)
        if gap < cfg.precision["min_gap"]:
            raise GapClosureError(f"bulk gap {gap:.4f} below {cfg.precision['min_gap']}")
        p = spectral_function(h, SpectralSpec(kind="fermi_step", fermi=fermi))
        pairing = pair_even(p, (np.array([1.0, 0.0]), np.array([0.0, 1.0])), TraceSpec.volume())
        ladder_rows.append((s, float(pairing.value.real), pairing.est_error))
        results[s] = pairing
        _note(verbose, f"torus {s}x{s}: pairing {pairing.value.real:+.6f}")
    final = results[sides]
    oracle = bz_chern_oracle(cfg.model, grid=int(block.get("oracle_grid", 32)))
    notes.append(final.convention_note)
    files = {
        "convergence_csv": _write_csv(
            outdir / "convergence.csv",
            ["t", "value", "est_error"],
            [[s, _fmt(v), _fmt(e)] for s, v, e in ladder_rows],
        ),
        "figure": figures.pairing_figure(
            [f"{s}x{s}" for s, _, _ in ladder_rows],
            [v for _, v, _ in ladder_rows],
            oracle,
            outdir / "pairing.png",
            title="bulk even pairing vs momentum-space oracle",
        ),
    }
    result = {
        "value": float(final.value.real),
        "value_im": float(final.value.imag),
        "est_error": final.est_error,
        "oracle_chern": oracle,
        "sides": sides,
        "fermi": fermi,
    }
    return result, files, {}, notes


def _edge_pipeline(cfg, fermi, delta, verbose):
    from .algebra import SpectralSpec, build_model, cone_window, spectral_function, torus_window
    from .cone_lattice import ResourceLimitExceeded
    from .invariants import GapClosureError, _bulk_gap

    if delta is None:
        probe = torus_window((16, 16), bands=2)
        gap = _bulk_gap(build_model(probe, cfg.model), fermi)
        if gap < cfg.precision["min_gap"]:
            raise GapClosureError(f"bulk gap {gap:.4f} below {cfg.precision['min_gap']}")
        delta = 0.9 * gap
    win = cone_window(cfg.spec, cfg.geometry, bands=2)
    if win.dim > cfg.precision["max_operator_dim"]:
        raise ResourceLimitExceeded(
            f"edge window needs a dimension-{win.dim} operator; the configured "
            f"bound is {int(cfg.precision['max_operator_dim'])}"
        )
    _note(verbose, f"edge window: {win.n_sites} sites, dimension {win.dim}")
    h = build_model(win, cfg.model)
    u = spectral_function(h, SpectralSpec(kind="exp_edge", fermi=fermi, delta=delta))
    del h
    return u, delta


def _run_chern_edge(cfg, outdir, verbose):
    from . import figures
    import numpy as np
    from .invariants import TraceSpec, pair_odd

    block = cfg.doc.get("chern_edge", {})
    fermi = float(block.get("fermi", 0.0))
    u, delta = _edge_pipeline(cfg, fermi, block.get("delta"), verbose)
    v = cfg.spec.matrix[0].astype(float)
    w = np.array([v[1], -v[0]])
    ts = TraceSpec.hypersurface(cfg.spec, cfg.geometry)
    pairing = pair_odd(u, w, ts, localization_tol=cfg.precision["localization_tol"])
    half = pair_odd(
        u, w, ts.with_transverse(cfg.geometry.t / 2.0),
        localization_tol=cfg.precision["localization_tol"],
    )
    ladder = [
        (cfg.geometry.t / 2.0, float(half.value.real), half.est_error),
        (cfg.geometry.t, float(pairing.value.real), pairing.est_error),
    ]
    files = {
        "convergence_csv": _write_csv(
            outdir / "convergence.csv",
            ["t", "value", "est_error"],
            [[_fmt(t), _fmt(vv), _fmt(e)] for t, vv, e in ladder],
        ),
        "figure": figures.pairing_figure(
            [f"t={t:g}" for t, _, _ in ladder],
            [vv for _, vv, _ in ladder],
            None,
            outdir / "pairing.png",
            title="edge odd pairing",
        ),
    }
    result = {
        "value": float(pairing.value.real),
        "value_im": float(pairing.value.imag),
        "est_error": pairing.est_error,
        "delta": delta,
        "fermi": fermi,
        "direction_w": [float(x) for x in w],
    }
    return result, files, dict(ts.normalization), [pairing.convention_note]


def _run_bulk_edge(cfg, outdir, verbose):
    from . import figures
    from .invariants import bulk_edge_check

    block = cfg.doc.get("bulk_edge", {})
    report = bulk_edge_check(
        cfg.model,
        cfg.spec,
        cfg.geometry,
        fermi=float(block.get("fermi", 0.0)),
        delta=block.get("delta"),
        bulk_sides=int(block.get("bulk_sides", 32)),
        min_gap=cfg.precision["min_gap"],
        localization_tol=cfg.precision["localization_tol"],
    )
    _note(verbose, f"bulk {report['bulk']['value']:+.4f}, edge {report['edge']['value']:+.4f}")
    ladder = report["ladder"]
    files = {
        "convergence_csv": _write_csv(
            outdir / "convergence.csv",
            ["t", "value", "est_error"],
            [[_fmt(float(row["t"])), _fmt(row["value"]), _fmt(report["edge"]["est_error"])] for row in ladder],
        ),
        "figure": figures.duality_figure(ladder, report["bulk"]["value"], outdir / "duality.png"),
    }
    notes = [report["bulk"]["convention_note"], report["edge"]["convention_note"]]
    constants = dict(report.get("normalization", {}))
    return report, files, constants, notes


_RUNNERS = {
    "hull": _run_hull,
    "classify": _run_classify,
    "count": _run_count,
    "trace": _run_trace,
    "chern-bulk": _run_chern_bulk,
    "chern-edge": _run_chern_edge,
    "bulk-edge": _run_bulk_edge,
}


def run(config_doc: dict, outdir, verbose: bool = False) -> dict:
    """Execute one validated config document; returns the report dict.

    Raises ValueError for config problems, NumericalFailure subclasses
    for gap/localization failures, ResourceLimitExceeded for budget hits.
    The CLI maps these to exit codes 2/3/4.
    """
    from pathlib import Path

    from . import __version__
    from .config import ExperimentConfig

    cfg = ExperimentConfig.resolve(config_doc)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    result, files, constants, notes = _RUNNERS[cfg.task](cfg, outdir, verbose)
    wall = time.perf_counter() - started

    import matplotlib
    import numpy
    import scipy

    report = {
        "schema_version": SCHEMA_VERSION,
        "task": cfg.task,
        "config": cfg.doc,
        "result": result,
        "files": {k: os.path.basename(v) for k, v in files.items()},
        "constants": constants,
        "convention_notes": notes,
        "versions": {
            "conehull": __version__,
            "numpy": numpy.__version__,
            "scipy": scipy.__version__,
            "matplotlib": matplotlib.__version__,
        },
        "wall_time_s": wall,
    }
    with open(outdir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return report


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    _apply_thread_cap(args.threads)

    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        print(f"config error at /: cannot read {args.config}: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"config error at /: invalid JSON: {exc}", file=sys.stderr)
        return 2

    if isinstance(doc, dict):
        if args.task != "validate":
            stated = doc.get("task")
            if stated is None:
                doc["task"] = args.task
            elif stated != args.task:
                print(
                    f"config error at /task: config says {stated!r} but the "
                    f"command line says {args.task!r}",
                    file=sys.stderr,
                )
                return 2

    from .config import validate

    problems = validate(doc if args.task != "validate" else doc)
    if args.task == "validate":
        for p in problems:
            print(f"config error at {p['path']}: {p['message']}")
        return 2 if problems else 0
    if problems:
        for p in problems:
            print(f"config error at {p['path']}: {p['message']}", file=sys.stderr)
        return 2

    outdir = args.out or doc.get("output") or "conehull-out"

    from .cone_lattice import ResourceLimitExceeded
    from .invariants import NumericalFailure

    try:
        run(doc, outdir, verbose=args.verbose)
    except ResourceLimitExceeded as exc:
        print(f"resource bound exceeded: {exc}", file=sys.stderr)
        return 4
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"config error at /: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
