"""Experiment configuration: one self-describing JSON document per run.

validate() returns diagnostics (never raises) so callers can report every
problem at once; each diagnostic carries a JSON-pointer-style path into
the document.  ExperimentConfig.resolve() turns a validated document into
domain objects and fills in the published defaults, so the resolved form
embedded in reports is complete and reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

TASKS = ("hull", "classify", "count", "trace", "chern-bulk", "chern-edge", "bulk-edge")

TASKS_NEEDING_CONE = ("hull", "classify", "count", "trace", "chern-edge", "bulk-edge")
TASKS_NEEDING_GEOMETRY = ("trace", "chern-edge", "bulk-edge")
TASKS_NEEDING_MODEL = ("chern-bulk", "chern-edge", "bulk-edge")

PRECISION_DEFAULTS = {
    "tie_tol": 1e-12,
    "strict_tol": 1e-9,
    "escape_threshold": 0.5,
    "dense_threshold": 6000,
    "localization_tol": 1e-3,
    "min_gap": 0.1,
    "max_window_sites": 20_000_000,
    "max_operator_dim": 9000,
}

_TRACE_FUNCTIONS = ("indicator", "gaussian")


def _diag(path: str, message: str) -> dict:
    return {"path": path, "message": message}


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _check_cone(doc, out):
    cone = doc.get("cone")
    if not isinstance(cone, dict):
        out.append(_diag("/cone", "cone document must be a mapping"))
        return
    D = cone.get("D")
    if not isinstance(D, int) or D < 1:
        out.append(_diag("/cone/D", "D must be a positive integer"))
    vectors = cone.get("vectors")
    if not isinstance(vectors, list) or not vectors:
        out.append(_diag("/cone/vectors", "at least one facet normal is required"))
        return
    for i, vec in enumerate(vectors):
        if not isinstance(vec, list) or (isinstance(D, int) and len(vec) != D):
            out.append(_diag(f"/cone/vectors/{i}", f"vector must be a list of {D} components"))
            continue
        for j, comp in enumerate(vec):
            if isinstance(comp, float):
                out.append(
                    _diag(
                        f"/cone/vectors/{i}/{j}",
                        "components must be decimal strings or integers, not floats",
                    )
                )
            elif not isinstance(comp, (str, int)):
                out.append(_diag(f"/cone/vectors/{i}/{j}", "unreadable component"))
    rat = cone.get("rationality", {})
    if not isinstance(rat, dict):
        out.append(_diag("/cone/rationality", "rationality must map subset keys to R or CI"))
    else:
        d = len(vectors)
        for key, val in rat.items():
            parts = str(key).split(",")
            try:
                ints = [int(p) for p in parts]
            except ValueError:
                out.append(_diag(f"/cone/rationality/{key}", "key must be comma-joined indices"))
                continue
            if ints != sorted(set(ints)):
                out.append(
                    _diag(f"/cone/rationality/{key}", "subset key must be sorted and duplicate-free")
                )
            elif any(i < 1 or i > d for i in ints):
                out.append(_diag(f"/cone/rationality/{key}", f"indices must lie in 1..{d}"))
            if val not in ("R", "CI"):
                out.append(_diag(f"/cone/rationality/{key}", "class must be 'R' or 'CI'"))
    exact = cone.get("exact")
    if exact is not None and (
        not isinstance(exact, list) or len(exact) != len(vectors)
        or not all(isinstance(e, bool) for e in exact)
    ):
        out.append(_diag("/cone/exact", "exact must be a list of booleans, one per vector"))


def _check_geometry(doc, out):
    geo = doc.get("geometry")
    if not isinstance(geo, dict):
        out.append(_diag("/geometry", "geometry must be a mapping with L, t, core_margin"))
        return
    for key, lo in (("L", 0.0), ("t", 0.0)):
        val = geo.get(key)
        if not _is_num(val) or val <= lo:
            out.append(_diag(f"/geometry/{key}", f"{key} must be a positive number"))
    margin = geo.get("core_margin", 15.0)
    if not _is_num(margin) or margin < 0:
        out.append(_diag("/geometry/core_margin", "core_margin must be nonnegative"))


def _check_model(doc, out):
    model = doc.get("model")
    if not isinstance(model, dict):
        out.append(_diag("/model", "model must be a mapping with a 'name'"))
        return
    if model.get("name") != "two_band_chern":
        out.append(_diag("/model/name", "the shipped model is 'two_band_chern'"))
    m = model.get("m")
    if m is not None and not _is_num(m):
        out.append(_diag("/model/m", "m must be a number"))


def _check_task_block(doc, out):
    task = doc.get("task")
    if task == "hull":
        block = doc.get("hull")
        if not isinstance(block, dict):
            out.append(_diag("/hull", "hull task needs a block with I, J, x"))
            return
        for key in ("I", "x"):
            if not isinstance(block.get(key), list):
                out.append(_diag(f"/hull/{key}", f"{key} must be a list"))
        if "J" in block and not isinstance(block["J"], list):
            out.append(_diag("/hull/J", "J must be a list"))
        mode = block.get("mode", "analytic")
        if mode not in ("analytic", "finite"):
            out.append(_diag("/hull/mode", "mode must be 'analytic' or 'finite'"))
        if mode == "finite" and not _is_num(block.get("radius")):
            out.append(_diag("/hull/radius", "finite mode needs a positive radius"))
    elif task == "classify":
        block = doc.get("pattern")
        if not isinstance(block, dict):
            out.append(_diag("/pattern", "classify task needs a pattern document"))
            return
        kind = block.get("kind")
        if kind not in ("finite", "analytic", "orbit"):
            out.append(_diag("/pattern/kind", "kind must be 'finite', 'analytic' or 'orbit'"))
        elif kind == "orbit":
            if not isinstance(block.get("n"), list):
                out.append(_diag("/pattern/n", "orbit patterns need the shift vector n"))
            if not _is_num(block.get("radius")) or block.get("radius", 0) <= 0:
                out.append(_diag("/pattern/radius", "orbit patterns need a positive radius"))
        elif kind == "finite":
            if not isinstance(block.get("points"), list):
                out.append(_diag("/pattern/points", "finite patterns need a point list"))
            if not _is_num(block.get("radius")) or block.get("radius", 0) <= 0:
                out.append(_diag("/pattern/radius", "finite patterns need a positive radius"))
    elif task == "count":
        block = doc.get("count")
        if not isinstance(block, dict):
            out.append(_diag("/count", "count task needs a block with L and t_values"))
            return
        if not _is_num(block.get("L")) or block.get("L", 0) <= 0:
            out.append(_diag("/count/L", "L must be a positive number"))
        ts = block.get("t_values")
        if not isinstance(ts, list) or not ts or not all(_is_num(t) and t > 0 for t in ts):
            out.append(_diag("/count/t_values", "t_values must be a nonempty list of positive numbers"))
        elif sorted(ts) != ts:
            out.append(_diag("/count/t_values", "t_values must be ascending"))
    elif task == "trace":
        block = doc.get("trace")
        if not isinstance(block, dict):
            out.append(_diag("/trace", "trace task needs a block with a boundary function"))
            return
        fn = block.get("function")
        if not isinstance(fn, dict) or fn.get("kind") not in _TRACE_FUNCTIONS:
            out.append(
                _diag("/trace/function", f"function kind must be one of {_TRACE_FUNCTIONS}")
            )
        else:
            if fn["kind"] == "indicator":
                if not _is_num(fn.get("hi")):
                    out.append(_diag("/trace/function/hi", "indicator needs an upper bound"))
            if fn["kind"] == "gaussian":
                for key in ("center", "width"):
                    if not _is_num(fn.get(key)):
                        out.append(_diag(f"/trace/function/{key}", f"gaussian needs {key}"))
        tv = block.get("t_values")
        if tv is not None and (
            not isinstance(tv, list) or not all(_is_num(t) and t > 0 for t in tv)
        ):
            out.append(_diag("/trace/t_values", "t_values must be positive numbers"))
    elif task == "chern-bulk":
        block = doc.get("chern_bulk", {})
        if not isinstance(block, dict):
            out.append(_diag("/chern_bulk", "must be a mapping"))
            return
        sides = block.get("sides", 32)
        if not isinstance(sides, int) or sides < 4:
            out.append(_diag("/chern_bulk/sides", "sides must be an integer >= 4"))
    elif task in ("chern-edge", "bulk-edge"):
        key = task.replace("-", "_")
        block = doc.get(key, {})
        if not isinstance(block, dict):
            out.append(_diag(f"/{key}", "must be a mapping"))
            return
        for name in ("fermi", "delta"):
            val = block.get(name)
            if val is not None and not _is_num(val):
                out.append(_diag(f"/{key}/{name}", f"{name} must be a number"))
        if block.get("delta") is not None and block["delta"] <= 0:
            out.append(_diag(f"/{key}/delta", "delta must be positive"))


def validate(doc) -> list:
    """Structural and semantic diagnostics for a config document.

    Returns a list of {path, message} dicts; empty list means run() would
    pass its schema checks.  Never raises.
    """
    out = []
    if not isinstance(doc, dict):
        return [_diag("", "config must be a JSON object")]
    task = doc.get("task")
    if task not in TASKS:
        out.append(_diag("/task", f"task must be one of {', '.join(TASKS)}"))
        return out
    if task in TASKS_NEEDING_CONE:
        if "cone" not in doc:
            out.append(_diag("/cone", "this task needs a cone document"))
        else:
            _check_cone(doc, out)
    if task in TASKS_NEEDING_GEOMETRY:
        if "geometry" not in doc:
            out.append(_diag("/geometry", "this task needs a geometry block"))
        else:
            _check_geometry(doc, out)
    if task in TASKS_NEEDING_MODEL:
        if "model" not in doc:
            out.append(_diag("/model", "this task needs a model block"))
        else:
            _check_model(doc, out)
    _check_task_block(doc, out)

    prec = doc.get("precision", {})
    if not isinstance(prec, dict):
        out.append(_diag("/precision", "precision must be a mapping"))
    else:
        for key, val in prec.items():
            if key not in PRECISION_DEFAULTS:
                out.append(_diag(f"/precision/{key}", "unknown precision knob"))
            elif not _is_num(val) or val <= 0:
                out.append(_diag(f"/precision/{key}", "precision knobs must be positive numbers"))
    if "output" in doc and not isinstance(doc["output"], str):
        out.append(_diag("/output", "output must be a directory path string"))

    if not out and task in TASKS_NEEDING_CONE:
        # deep semantic checks via actual construction
        from .cone_lattice import ConeSpec

        try:
            ConeSpec.from_dict(doc["cone"])
        except (ValueError, TypeError) as exc:
            out.append(_diag("/cone", str(exc)))
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated config document plus the resolved domain objects."""

    doc: dict
    task: str
    spec: object = None
    geometry: object = None
    model: object = None
    precision: dict = None

    @classmethod
    def resolve(cls, doc: dict) -> "ExperimentConfig":
        problems = validate(doc)
        if problems:
            raise ValueError(
                "; ".join(f"{p['path']}: {p['message']}" for p in problems)
            )
        from .algebra import ModelSpec
        from .cone_lattice import ConeSpec, SlabWindow

        task = doc["task"]
        spec = ConeSpec.from_dict(doc["cone"]) if task in TASKS_NEEDING_CONE else None
        geometry = None
        if task in TASKS_NEEDING_GEOMETRY:
            g = doc["geometry"]
            geometry = SlabWindow(
                L=float(g["L"]), t=float(g["t"]), core_margin=float(g.get("core_margin", 15.0))
            )
        model = ModelSpec.from_dict(doc["model"]) if task in TASKS_NEEDING_MODEL else None
        precision = dict(PRECISION_DEFAULTS)
        precision.update(doc.get("precision", {}))
        resolved = dict(doc)
        resolved["precision"] = precision
        if geometry is not None:
            resolved["geometry"] = {
                "L": geometry.L, "t": geometry.t, "core_margin": geometry.core_margin,
            }
        return cls(
            doc=resolved, task=task, spec=spec, geometry=geometry,
            model=model, precision=precision,
        )
