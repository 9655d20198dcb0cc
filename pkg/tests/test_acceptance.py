"""End-to-end acceptance gate: one test family per shipped guarantee.

Each criterion has its own quantitative tolerance and, where stated, a
wall-clock budget.  The summary hook in conftest prints one PASS/FAIL
line per criterion number after the run.
"""

import json
import math
import subprocess
import sys
import time
from fractions import Fraction

import numpy as np
import pytest

from conehull import (
    ConeSpec,
    ModelSpec,
    SlabWindow,
    SpectralSpec,
    TraceSpec,
    TruncatedOperator,
    build_model,
    bulk_edge_check,
    bz_chern_oracle,
    chern_cocycle,
    classify,
    cone_window,
    count_scaling_study,
    covolume_facets,
    diagonal_operator,
    gamma,
    hull_point,
    identity_operator,
    kernel_lattice,
    orbit_point,
    pair_even,
    sequence_limit,
    spectral_function,
    stratum_integral,
    torus_window,
    trace_estimate,
)

from conftest import GOLDEN

pytestmark = pytest.mark.filterwarnings(
    "ignore::conehull.cone_lattice.NearTieWarning"
)


def random_operator(window, rng, scale=0.2):
    m = scale * (
        rng.standard_normal((window.dim, window.dim))
        + 1j * rng.standard_normal((window.dim, window.dim))
    )
    return TruncatedOperator(window, m)


def fermi_projection(model_m, sides):
    w = torus_window((sides, sides), bands=2)
    h = build_model(w, ModelSpec("two_band_chern", {"m": model_m}))
    return spectral_function(h, SpectralSpec(kind="fermi_step", fermi=0.0))


# ---------------------------------------------------------------------------
# 1. trace per unit length of the slab indicator


def test_criterion_01_slab_indicator_trace(golden_spec):
    t0 = time.perf_counter()
    geo = SlabWindow(L=5.0, t=2000.0, core_margin=2.0)
    w = cone_window(golden_spec, geo)
    ts = TraceSpec.hypersurface(golden_spec, geo)
    value = trace_estimate(identity_operator(w), ts)
    wall = time.perf_counter() - t0
    assert abs(value - 5.0) <= 0.05
    assert wall <= 5.0


# ---------------------------------------------------------------------------
# 2. lattice-count error decays between t=250 and t=4000


def test_criterion_02_count_error_decay(golden_spec):
    t0 = time.perf_counter()
    t_values = [248.0, 249.0, 250.0, 251.0, 252.0,
                3998.0, 3999.0, 4000.0, 4001.0, 4002.0]
    rows = count_scaling_study(golden_spec, 5.0, t_values)
    errs = [r.relative_error for r in rows]
    early = sum(errs[:5]) / 5.0
    late = sum(errs[5:]) / 5.0
    wall = time.perf_counter() - t0
    assert late <= 0.02
    assert late < early
    assert wall <= 10.0


# ---------------------------------------------------------------------------
# 3. covolume identities


def test_criterion_03_covolume_identities(golden_spec, rational_spec, axis_spec):
    t0 = time.perf_counter()
    assert abs(covolume_facets(golden_spec) - 1.0) <= 1e-10
    assert abs(covolume_facets(rational_spec) - 1.0) <= 1e-10
    orth = ConeSpec(D=2, vectors=[["1", "0"], ["0", "1"]])
    assert abs(covolume_facets(orth) - 1.0) <= 1e-10
    oblique = ConeSpec(D=2, vectors=[["1", "0"], ["3/5", "4/5"]])
    assert abs(covolume_facets(oblique) - 0.8) <= 1e-10

    kl = kernel_lattice(rational_spec)
    assert kl.covolume == 5.0
    assert kl.covolume_sq == 25
    assert kl.basis.shape == (1, 2)
    assert 3 * int(kl.basis[0, 0]) + 4 * int(kl.basis[0, 1]) == 0

    ka = kernel_lattice(axis_spec)
    assert ka.covolume == 1.0 and ka.basis.tolist() == [[1, 0]]
    ko = kernel_lattice(orth)
    assert ko.covolume == 1.0 and ko.basis.size == 0
    assert time.perf_counter() - t0 <= 1.0


# ---------------------------------------------------------------------------
# 4. rational cone: estimator trace agrees with the atom-measure route


def test_criterion_04_two_route_rational_trace(rational_spec, rng):
    geo = SlabWindow(L=2.0, t=2000.0, core_margin=2.0)
    w = cone_window(rational_spec, geo)
    ts = TraceSpec.hypersurface(rational_spec, geo)
    dots = rational_spec.dots(w.sites)[:, 0]
    worst = 0.0
    for _ in range(10):
        a = rng.uniform(0.5, 2.0, size=3)
        mu = rng.uniform(0.0, 2.0, size=3)
        sig = rng.uniform(0.3, 1.0, size=3)

        def f(x, a=a, mu=mu, sig=sig):
            v = x[0] if isinstance(x, tuple) else x
            return float(np.sum(a * np.exp(-((v - mu) ** 2) / (2 * sig**2))))

        est = trace_estimate(diagonal_operator(w, [f((d,)) for d in dots]), ts)
        ref, _ = stratum_integral(f, (1,), ts, box=[(0.0, geo.L)])
        worst = max(worst, abs(est - ref) / abs(ref))
    assert worst <= 0.02


# ---------------------------------------------------------------------------
# 5. limit-pattern certificates and the hull round trip


def test_criterion_05_limit_certificates_and_round_trip(golden_spec, rng):
    for _ in range(100):
        x = float(rng.uniform(0.2, 3.0))
        g = float(rng.uniform(0.3, 1.2))
        offsets = [[x - g * 4.0 ** (-j)] for j in range(11)]
        certs = []
        for k in range(2, 12):
            lim = sequence_limit(golden_spec, offsets[:k], ("increasing",),
                                 limits={1: x})
            certs.append(lim.certificate.value)
        assert all(b <= a + 1e-15 for a, b in zip(certs, certs[1:]))
        # the tail pattern agrees with the limit out to the full scan
        # radius, so the certificate bottoms out at 1/(radius + 1)
        assert abs(certs[-1] - 1.0 / 9.0) <= 1e-15
        assert not lim.certificate.exact
        assert lim.I == (1,) and lim.J == (1,)

        strict = (1,) if rng.random() < 0.5 else ()
        label = classify(hull_point(golden_spec, (1,), strict, (x,)), golden_spec)
        assert label.I == (1,)
        assert tuple(label.J) == strict
        assert abs(label.x[0] - x) <= 1e-9


# ---------------------------------------------------------------------------
# 6. rational specs: every orbit point up to radius 50 classifies exactly


@pytest.mark.parametrize("vectors,n_orbit", [
    ([["0", "1"]], 5151),
    ([["3/5", "4/5"]], 5113),
])
def test_criterion_06_rational_orbit_offsets(vectors, n_orbit):
    spec = ConeSpec(D=2, vectors=vectors)
    seen = 0
    for n1 in range(-50, 51):
        for n2 in range(-50, 51):
            n = (n1, n2)
            if spec.dot_fraction(1, n) < 0:
                continue
            seen += 1
            # quantized radii keep the truncation-ball cache small
            radius = 8.0 * math.ceil((2.0 * math.hypot(n1, n2) + 1.0) / 8.0)
            label = classify(orbit_point(spec, n, radius), spec)
            assert label.I == (1,)
            assert label.escaped == ()
            assert label.x_error == 0.0
            assert label.x_exact[0] == spec.dot_fraction(1, n)
            assert label.x[0] == float(label.x_exact[0])
    assert seen == n_orbit


# ---------------------------------------------------------------------------
# 7. offset map is equivariant under lattice translations


def test_criterion_07_offset_equivariance(golden_spec, rational_spec, rng):
    for spec in (golden_spec, rational_spec):
        v = spec.matrix[0]
        for trial in range(100):
            x = float(rng.uniform(0.1, 2.0))
            strict = (1,) if trial % 3 == 0 else ()
            p = hull_point(spec, (1,), strict, (x,))
            m = rng.integers(-6, 7, size=2)
            if float(v @ m) + x < 0:
                m = -m
            got, err = gamma(p.translate(m), (1,), spec)
            assert err == 0.0
            assert abs(got[0] - (x + float(v @ m))) <= 1e-12


# ---------------------------------------------------------------------------
# 8. cocycle algebra on 200-dimensional operators


def test_criterion_08_cocycle_algebra(rng):
    w = torus_window((10, 10), bands=2)
    ts = TraceSpec.volume()
    ops = [random_operator(w, rng) for _ in range(4)]
    e1, e2 = (1.0, 0.0), (0.0, 1.0)

    ab = chern_cocycle(ops[:3], (e1, e2), ts)
    ba = chern_cocycle(ops[:3], (e2, e1), ts)
    assert abs(ab + ba) <= 1e-12
    assert abs(chern_cocycle(ops[:3], (e1, e1), ts)) <= 1e-12

    extra = random_operator(w, rng)
    summed = chern_cocycle([ops[0], ops[1] + extra, ops[2]], (e1, e2), ts)
    split = ab + chern_cocycle([ops[0], extra, ops[2]], (e1, e2), ts)
    assert abs(summed - split) <= 1e-12
    scaled = chern_cocycle([ops[0], 2.5 * ops[1], ops[2]], (e1, e2), ts)
    assert abs(scaled - 2.5 * ab) <= 1e-12

    M = np.array([[2.0, 1.0], [1.0, 1.0]])
    sheared = chern_cocycle(ops[:3], (M[0], M[1]), ts)
    assert abs(sheared - np.linalg.det(M) * ab) <= 1e-12


# ---------------------------------------------------------------------------
# 9. torus even pairing lands on the momentum-space integers


def test_criterion_09_bulk_integrality_oracle():
    t0 = time.perf_counter()
    for m, chern in ((-1.0, 1), (1.0, -1), (4.0, 0)):
        oracle = bz_chern_oracle(ModelSpec("two_band_chern", {"m": m}))
        assert oracle == chern
        res = pair_even(fermi_projection(m, 32), ((1.0, 0.0), (0.0, 1.0)),
                        TraceSpec.volume())
        assert abs(res.value - oracle) <= 1e-2
    assert time.perf_counter() - t0 <= 60.0


# ---------------------------------------------------------------------------
# 10. bulk-edge duality on the golden and rational edges


def test_criterion_10_duality_golden_edge(golden_spec):
    t0 = time.perf_counter()
    rep = bulk_edge_check(
        ModelSpec("two_band_chern", {"m": 1.0}),
        golden_spec,
        SlabWindow(L=20.0, t=40.0, core_margin=15.0),
        bulk_sides=32,
    )
    wall = time.perf_counter() - t0
    assert rep["oracle_chern"] == -1
    assert round(rep["bulk"]["value"]) == -1
    assert abs(rep["edge"]["value"] - (-1.0)) <= 0.1
    assert wall <= 300.0


def test_criterion_10_duality_rational_edge(axis_spec):
    t0 = time.perf_counter()
    rep = bulk_edge_check(
        ModelSpec("two_band_chern", {"m": 1.0}),
        axis_spec,
        SlabWindow(L=20.0, t=40.0, core_margin=15.0),
        bulk_sides=32,
    )
    wall = time.perf_counter() - t0
    assert rep["oracle_chern"] == -1
    assert round(rep["bulk"]["value"]) == -1
    assert abs(rep["edge"]["value"] - (-1.0)) <= 0.05
    assert wall <= 300.0


# ---------------------------------------------------------------------------
# 11. reruns byte-identical, results thread-count independent


def _cli(task, cfgfile, outdir, *extra):
    cmd = [sys.executable, "-m", "conehull.cli", task,
           "--config", str(cfgfile), "--out", str(outdir), *extra]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stdout + proc.stderr
    with open(outdir / "report.json", "r", encoding="utf-8") as fh:
        return json.load(fh)


def test_criterion_11_determinism_and_threads(tmp_path):
    count_cfg = tmp_path / "count.json"
    count_cfg.write_text(json.dumps({
        "task": "count",
        "cone": {"D": 2, "vectors": [list(GOLDEN)], "exact": [False]},
        "count": {"L": 2.0, "t_values": [50.0, 100.0, 200.0]},
    }))
    reports = []
    for name in ("run1", "run2"):
        outdir = tmp_path / name
        reports.append(_cli("count", count_cfg, outdir))
    walls = [r.pop("wall_time_s") for r in reports]
    assert all(isinstance(w, float) for w in walls)
    assert reports[0] == reports[1]
    for fname in sorted(p.name for p in (tmp_path / "run1").iterdir()):
        if fname == "report.json":
            continue
        first = (tmp_path / "run1" / fname).read_bytes()
        second = (tmp_path / "run2" / fname).read_bytes()
        assert first == second, f"{fname} differs between reruns"

    bulk_cfg = tmp_path / "bulk.json"
    bulk_cfg.write_text(json.dumps({
        "task": "chern-bulk",
        "model": {"name": "two_band_chern", "m": 1.0},
        "chern_bulk": {"sides": 8},
    }))
    values = []
    for threads in ("1", "2"):
        rep = _cli("chern-bulk", bulk_cfg, tmp_path / f"threads{threads}",
                   "--threads", threads)
        values.append(rep["result"]["value"])
    assert abs(values[0] - values[1]) <= 1e-12
