"""Traces, Chern cocycles, index pairings, and the bulk-edge comparison.

Two trace normalizations coexist.  On a periodic window the trace is
per unit volume (1/#sites).  On a cone window it is per unit boundary
hypersurface: the diagonal is summed over the core slab of depth L and
transverse radius t and divided by t^{D-d} Vol(B_{D-d}), which converges
to the boundary-density trace as t grows.  The measure-side counterpart
(stratum_integral) is normalized so the two routes agree, with no free
constant left.

Pairings return PairingResult carrying the numerical value, an error
estimate, and a note recording how the scalar prefactor and sign were
fixed against the independent momentum-space oracle.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse

from .cone_lattice import (
    TIE_TOL,
    ConeSpec,
    Region,
    SlabWindow,
    _normalize_subset,
    _region_mask,
    covolume_facets,
    enumerate_region,
    image_lattice,
    kernel_lattice,
    unit_ball_volume,
)
from .algebra import (
    ModelSpec,
    SiteWindow,
    SpectralSpec,
    TruncatedOperator,
    build_model,
    cone_window,
    position_derivation,
    spectral_function,
    torus_window,
    two_band_symbol,
)

__all__ = [
    "GapClosureError",
    "LocalizationError",
    "NumericalFailure",
    "PairingResult",
    "TraceSpec",
    "bulk_edge_check",
    "bz_chern_oracle",
    "chern_cocycle",
    "pair_even",
    "pair_odd",
    "stratum_integral",
    "trace_estimate",
]


class NumericalFailure(RuntimeError):
    """A numerical precondition failed (gap closure, lost localization)."""


class GapClosureError(NumericalFailure):
    pass


class LocalizationError(NumericalFailure):
    pass


# Scalar prefactors of the index pairings.  The magnitudes normalize the
# antisymmetrized cocycles to integers; the signs are empirically pinned
# against bz_chern_oracle on the shipped two-band model (see the
# convention notes attached to every PairingResult).
EVEN_COEFF = 2j * math.pi
ODD_COEFF = -1j

EVEN_NOTE = (
    "value = (2*pi*i) * sum_{perm} sgn(perm) T(p grad_1 p grad_2 p); "
    "sign convention fixed so the torus value of the shipped two-band model "
    "matches the momentum-space plaquette oracle."
)
ODD_NOTE = (
    "value = (-i) * T((u* - 1) grad_w (u - 1)); sign convention fixed so the "
    "half-plane edge value matches the torus bulk value of the shipped "
    "two-band model."
)


# --------------------------------------------------------------------------
# trace specifications and estimators

@dataclass(frozen=True, eq=False)
class TraceSpec:
    """How to turn a core diagonal sum into a trace.

    mode "volume": per-site average on a periodic window (geometry unused).
    mode "hypersurface": core slab Λ_{L,t} with 1/(t^{D-d} Vol(B_{D-d}))
    normalization.  The normalization dict records the geometric constants
    (facet covolume; kernel and offset-lattice covolumes in the rational
    case) for the report trail.
    """

    mode: str
    spec: ConeSpec | None = None
    I: tuple = ()
    geometry: SlabWindow | None = None
    normalization: dict = None

    def __post_init__(self):
        if self.mode not in ("volume", "hypersurface"):
            raise ValueError(f"unknown trace mode {self.mode!r}")
        if self.mode == "hypersurface":
            if self.spec is None or self.geometry is None:
                raise ValueError("hypersurface traces need a cone spec and a geometry")
            I = _normalize_subset(self.I) if self.I else tuple(range(1, self.spec.d + 1))
            object.__setattr__(self, "I", I)
        if self.normalization is None:
            object.__setattr__(self, "normalization", {})

    @classmethod
    def volume(cls) -> "TraceSpec":
        return cls(mode="volume")

    @classmethod
    def hypersurface(cls, spec: ConeSpec, geometry: SlabWindow, I=None) -> "TraceSpec":
        I = tuple(range(1, spec.d + 1)) if I is None else _normalize_subset(I)
        norm = {"covolume_facets": covolume_facets(spec, I)}
        if spec.rationality_class(I) == "R":
            norm["kernel_covolume"] = kernel_lattice(spec, I).covolume
            norm["image_covolume"] = float(image_lattice(spec, I).covolume)
        return cls(mode="hypersurface", spec=spec, I=I, geometry=geometry, normalization=norm)

    def with_transverse(self, t: float) -> "TraceSpec":
        g = self.geometry
        return TraceSpec(
            mode=self.mode,
            spec=self.spec,
            I=self.I,
            geometry=SlabWindow(L=g.L, t=t, core_margin=g.core_margin),
            normalization=dict(self.normalization),
        )

    def _core_region(self) -> Region:
        g = self.geometry
        slab = tuple((0.0, g.L) for _ in self.I)
        window = g.t if len(self.I) < self.spec.D else None
        return Region(slab=slab, window=window)

    @property
    def core_count(self) -> int:
        """Number of lattice points in the core slab (cached)."""
        cached = self.__dict__.get("_core_count_cache")
        if cached is None:
            cached = len(enumerate_region(self.spec, self._core_region()))
            self.__dict__["_core_count_cache"] = cached
        return cached

    def core_site_mask(self, window: SiteWindow) -> np.ndarray:
        """Mask of the core sites inside an operator window, with a
        containment check: the window must hold the whole core, and the
        core must sit inside the window's buffer-protected region."""
        if window.torus is not None:
            raise ValueError("hypersurface traces need an open cone window")
        mask = _region_mask(self.spec, self._core_region(), window.sites, TIE_TOL)
        found = int(mask.sum())
        if found != self.core_count:
            raise ValueError(
                f"trace core has {self.core_count} sites but the window contains "
                f"{found}; enlarge the window or shrink the core"
            )
        if not bool(np.all(window.core_mask[mask])):
            raise ValueError("trace core reaches into the window's buffer zone")
        return mask

    def hypersurface_norm(self) -> float:
        codim = self.spec.D - len(self.I)
        return self.geometry.t**codim * unit_ball_volume(codim)


def _site_diag(a: TruncatedOperator) -> np.ndarray:
    """Band-traced diagonal, one complex entry per site, lex site order."""
    d = a.diagonal()
    return d.reshape(a.window.n_sites, a.window.bands).sum(axis=1)


def trace_estimate(a: TruncatedOperator, ts: TraceSpec):
    """Core diagonal sum with the normalization fixed by ts.

    Summation follows the lex site order, so results are independent of
    thread count and repeatable bit-for-bit.
    """
    site_diag = _site_diag(a)
    if ts.mode == "volume":
        if a.window.torus is None:
            raise ValueError("volume traces are defined on periodic windows")
        value = site_diag.sum() / a.window.n_sites
    else:
        mask = ts.core_site_mask(a.window)
        value = site_diag[mask].sum() / ts.hypersurface_norm()
    if a.hermitian:
        return float(value.real)
    return complex(value)


def stratum_integral(f, I, ts: TraceSpec, h: float = 0.1, box=None):
    """Measure-side integral of f over the offset chart of stratum I.

    Returns (value, est_error).  For an irrational (CI) stratum this is
    midpoint quadrature of f against Lebesgue measure divided by the
    facet covolume, with a step-halving error estimate.  For a rational
    (R) stratum the measure is atomic: the attainable offsets in the box
    are enumerated exactly and weighted by 1/kernel covolume (est_error 0).
    The chart lives in the nonnegative orthant, so box floors clamp at 0.
    """
    spec = ts.spec
    if spec is None:
        raise ValueError("stratum integrals need a cone spec on the trace spec")
    I = _normalize_subset(I) if I else tuple(range(1, spec.d + 1))
    if box is None:
        raise ValueError("an explicit bounding box is required")
    box = [(float(lo), float(hi)) for lo, hi in box]
    if len(box) != len(I):
        raise ValueError(f"box must have one (lo, hi) pair per direction in I={I}")
    if any(not (math.isfinite(lo) and math.isfinite(hi)) for lo, hi in box):
        raise ValueError("box bounds must be finite")
    box = [(max(lo, 0.0), hi) for lo, hi in box]
    if any(hi <= lo for lo, hi in box):
        return 0.0, 0.0

    if spec.rationality_class(I) == "R":
        img = image_lattice(spec, I)
        kcov = kernel_lattice(spec, I).covolume
        B = np.asarray(img.basis_num, dtype=float) / float(img.scale)
        Binv = np.linalg.inv(B)
        corners = np.array(list(itertools.product(*box)))
        z_corners = corners @ Binv.T
        zlo = np.floor(z_corners.min(axis=0)).astype(int) - 1
        zhi = np.ceil(z_corners.max(axis=0)).astype(int) + 1
        axes = [np.arange(a, b + 1) for a, b in zip(zlo, zhi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        zs = np.stack([g.ravel() for g in mesh], axis=1)
        xs = zs @ B.T
        keep = np.ones(len(xs), dtype=bool)
        for j, (lo, hi) in enumerate(box):
            keep &= (xs[:, j] >= lo - 1e-12) & (xs[:, j] <= hi + 1e-12)
        total = sum(f(tuple(x)) for x in xs[keep])
        return total / kcov, 0.0

    cov = covolume_facets(spec, I)

    def midpoint(step):
        grids = [np.arange(lo + step / 2.0, hi, step) for lo, hi in box]
        mesh = np.meshgrid(*grids, indexing="ij")
        pts = np.stack([g.ravel() for g in mesh], axis=1)
        return step ** len(I) * sum(f(tuple(x)) for x in pts) / cov

    coarse = midpoint(h)
    fine = midpoint(h / 2.0)
    return fine, abs(fine - coarse)


# --------------------------------------------------------------------------
# cocycles and pairings

@dataclass(frozen=True, eq=False)
class PairingResult:
    """Numerical index pairing with an error bar and a convention record."""

    value: complex
    m: int
    directions: tuple
    truncation: SlabWindow | None
    est_error: float
    convention_note: str

    def __post_init__(self):
        if self.est_error < 0:
            raise ValueError("est_error must be nonnegative")
        if len(self.directions) != self.m:
            raise ValueError("need one direction per cocycle degree")

    def to_dict(self) -> dict:
        return {
            "value_re": float(self.value.real),
            "value_im": float(self.value.imag),
            "m": self.m,
            "directions": [list(map(float, w)) for w in self.directions],
            "est_error": self.est_error,
            "convention_note": self.convention_note,
        }


def chern_cocycle(fs, directions, ts: TraceSpec) -> complex:
    """Antisymmetrized cocycle sum_{perm} sgn T(f0 grad f1 ... grad fm).

    fs has m+1 operators on one window and directions has m vectors;
    m <= 3.  Derivations are exact entrywise commutators with the
    position observables, traces go through trace_estimate.
    """
    fs = list(fs)
    directions = [np.asarray(w, dtype=float) for w in directions]
    m = len(directions)
    if len(fs) != m + 1:
        raise ValueError(f"need m+1 = {m + 1} operators for {m} directions, got {len(fs)}")
    if m > 3:
        raise ValueError("cocycle degree is capped at 3")
    if m == 0:
        return complex(trace_estimate(fs[0], ts))
    win = fs[0].window
    for g in fs[1:]:
        if not win.compatible(g.window):
            raise ValueError("cocycle operators live on different windows")
    derivs = [[position_derivation(fs[i + 1], w) for w in directions] for i in range(m)]
    total = 0.0 + 0.0j
    for perm in itertools.permutations(range(m)):
        sign = _parity(perm)
        prod = fs[0]
        for i in range(m):
            prod = prod @ derivs[i][perm[i]]
        total += sign * complex(trace_estimate(prod, ts))
    return total


def _parity(perm) -> int:
    seen = [False] * len(perm)
    sign = 1
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def _projection_deviation(p: TruncatedOperator) -> float:
    d = p.matrix @ p.matrix - p.matrix
    if p.is_sparse:
        return float(np.abs(d.data).max()) if d.nnz else 0.0
    return float(np.abs(d).max())


def pair_even(p: TruncatedOperator, directions, ts: TraceSpec) -> PairingResult:
    """Even pairing of a projection with the degree-2 cocycle.

    On a periodic window the error bar is the imaginary residue (the
    limit is a real integer); on a cone window it is the change under
    halving the transverse core radius.
    """
    directions = tuple(np.asarray(w, dtype=float) for w in directions)
    if len(directions) != 2:
        raise ValueError("the even pairing shipped here is degree 2: two directions")
    dev = _projection_deviation(p)
    if dev > 1e-8:
        raise ValueError(f"input is not a projection: ||p^2 - p|| = {dev:.3e}")
    value = EVEN_COEFF * chern_cocycle([p, p, p], directions, ts)
    if ts.mode == "volume":
        err = abs(value.imag)
    else:
        half = EVEN_COEFF * chern_cocycle(
            [p, p, p], directions, ts.with_transverse(ts.geometry.t / 2.0)
        )
        err = abs(value - half)
    return PairingResult(
        value=complex(value),
        m=2,
        directions=directions,
        truncation=ts.geometry,
        est_error=float(err),
        convention_note=EVEN_NOTE,
    )


def _unitary_deviation(u: TruncatedOperator, rng_seed: int = 7) -> float:
    """||u* u - 1|| probe: exact max entry on small windows, randomized
    matvec residuals on large ones."""
    dim = u.dim
    if dim <= 3000:
        d = (u.adjoint() @ u).dense() - np.eye(dim)
        return float(np.abs(d).max())
    rng = np.random.default_rng(rng_seed)
    worst = 0.0
    mat = u.matrix
    for _ in range(4):
        x = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        x /= np.linalg.norm(x)
        r = mat.conj().T @ (mat @ x) - x
        worst = max(worst, float(np.linalg.norm(r)))
    return worst


def _edge_layer_mask(window: SiteWindow, depth: float = 1.5) -> np.ndarray:
    """Sites within ``depth`` of an artificial cut of a cone window."""
    spec = window.spec
    dots = spec.dots(window.sites)
    cut_hi = dots.max(axis=0)
    mask = np.zeros(window.n_sites, dtype=bool)
    for k in range(dots.shape[1]):
        mask |= dots[:, k] >= cut_hi[k] - depth
    if spec.d < spec.D:
        tr = np.sqrt(np.maximum(spec.transverse_sq(window.sites), 0.0))
        mask |= tr >= tr.max() - depth
    return mask


def _dof_expand(window: SiteWindow, site_mask: np.ndarray) -> np.ndarray:
    return np.repeat(site_mask, window.bands)


def _odd_core_sums(u: TruncatedOperator, w, masks, chunk: int = 256):
    """For each core mask, sum_{n in core} sum_m (w.(site_m - site_n))
    |(u-1)_{mn}|^2, via column slices of u (no derivation matrix is formed).

    Open windows only: displacements are plain differences.
    """
    win = u.window
    a_site = win.sites.astype(float) @ np.asarray(w, dtype=float)
    a_dof = np.repeat(a_site, win.bands)
    mat = u.dense()
    sums = [0.0] * len(masks)
    dof_masks = [_dof_expand(win, m) for m in masks]
    union = np.nonzero(np.logical_or.reduce(dof_masks))[0]
    for start in range(0, len(union), chunk):
        cols = union[start : start + chunk]
        block = mat[:, cols].copy()
        block[cols, np.arange(len(cols))] -= 1.0
        abs2 = block.real**2 + block.imag**2
        s0 = abs2.sum(axis=0)
        s1 = a_dof @ abs2
        contrib = s1 - a_dof[cols] * s0
        for i, dm in enumerate(dof_masks):
            sel = dm[cols]
            if np.any(sel):
                sums[i] += float(contrib[sel].sum())
    return sums


def pair_odd(
    u: TruncatedOperator,
    direction,
    ts: TraceSpec,
    localization_tol: float = 1e-3,
) -> PairingResult:
    """Odd pairing of a unitary with the degree-1 cocycle along ``direction``.

    On a cone window the value is evaluated at transverse core radii t
    and t/2; the difference is the error bar.  Requires u - 1 to have
    decayed below localization_tol before the window's artificial cuts,
    otherwise the core sum is contaminated and LocalizationError is
    raised.
    """
    w = np.asarray(direction, dtype=float)
    dev = _unitary_deviation(u)
    if dev > 1e-8:
        raise ValueError(f"input is not unitary: ||u*u - 1|| = {dev:.3e}")

    if ts.mode == "volume":
        one = TruncatedOperator(
            u.window, scipy.sparse.identity(u.dim, dtype=np.complex128, format="csr")
        )
        ch = chern_cocycle([u.adjoint() - one, u - one], [w], ts)
        value = ODD_COEFF * ch
        return PairingResult(
            value=complex(value),
            m=1,
            directions=(w,),
            truncation=None,
            est_error=abs(value.imag),
            convention_note=ODD_NOTE,
        )

    core_full = ts.core_site_mask(u.window)
    ts_half = ts.with_transverse(ts.geometry.t / 2.0)
    core_half = ts_half.core_site_mask(u.window)

    layer = _dof_expand(u.window, _edge_layer_mask(u.window))
    core_dof = _dof_expand(u.window, core_full)
    sub = u.dense()[np.ix_(layer, core_dof)].copy()
    rows = np.nonzero(layer)[0]
    cols = np.nonzero(core_dof)[0]
    shared_r = {r: i for i, r in enumerate(rows)}
    for j, c in enumerate(cols):
        i = shared_r.get(c)
        if i is not None:
            sub[i, j] -= 1.0
    leak = float(np.abs(sub).max()) if sub.size else 0.0
    if leak > localization_tol:
        raise LocalizationError(
            f"u - 1 reaches {leak:.3e} at the artificial cuts (tolerance "
            f"{localization_tol:.1e}); enlarge the window buffer"
        )

    s_full, s_half = _odd_core_sums(u, w, [core_full, core_half])
    value = ODD_COEFF * 1j * s_full / ts.hypersurface_norm()
    half = ODD_COEFF * 1j * s_half / ts_half.hypersurface_norm()
    return PairingResult(
        value=complex(value),
        m=1,
        directions=(w,),
        truncation=ts.geometry,
        est_error=abs(value - half),
        convention_note=ODD_NOTE,
    )


# --------------------------------------------------------------------------
# momentum-space oracle and the duality check

def bz_chern_oracle(model: ModelSpec, grid: int = 32) -> int:
    """Chern number of the lower band from the plaquette field strength.

    Works on the analytic momentum-space symbol, independent of every
    real-space code path.  The plaquette product is gauge invariant and
    lands on an exact integer for any grid fine enough; self-consistency
    across grids is part of the test suite.  Orientation is fixed here
    once: the shipped model at m = 1 returns -1.
    """
    if model.name != "two_band_chern":
        raise ValueError(f"no momentum-space oracle for model {model.name!r}")
    mpar = float(model.params.get("m", 0.0))
    ks = 2.0 * math.pi * np.arange(grid) / grid
    hs = np.empty((grid, grid, 2, 2), dtype=np.complex128)
    for i, k1 in enumerate(ks):
        for j, k2 in enumerate(ks):
            hs[i, j] = two_band_symbol(mpar, (k1, k2))
    evals, evecs = np.linalg.eigh(hs)
    gap = float(np.min(evals[..., 1] - evals[..., 0]))
    if gap < 1e-6:
        raise GapClosureError(f"spectral gap closes on the momentum grid (width {gap:.3e})")
    lower = evecs[..., :, 0]
    u1 = np.einsum("ijk,ijk->ij", lower.conj(), np.roll(lower, -1, axis=0))
    u2 = np.einsum("ijk,ijk->ij", lower.conj(), np.roll(lower, -1, axis=1))
    # plaquette traversed k2-first: the orientation that sends m = 1 to -1
    plaq = u2 * np.roll(u1, -1, axis=1) * np.conj(np.roll(u2, -1, axis=0)) * np.conj(u1)
    flux = np.angle(plaq)
    total = flux.sum() / (2.0 * math.pi)
    nearest = round(total)
    if abs(total - nearest) > 1e-6:
        raise NumericalFailure(
            f"plaquette flux sum {total!r} is not an integer; refine the grid"
        )
    return int(nearest)


def _bulk_gap(h: TruncatedOperator, fermi: float) -> float:
    evals = np.linalg.eigvalsh(h.dense())
    below = evals[evals <= fermi]
    above = evals[evals > fermi]
    if len(below) == 0 or len(above) == 0:
        raise GapClosureError("the Fermi level sits outside the spectrum")
    return float(above.min() - below.max())


def bulk_edge_check(
    model: ModelSpec,
    spec: ConeSpec,
    geometry: SlabWindow,
    fermi: float = 0.0,
    delta: float | None = None,
    bulk_sides: int = 32,
    min_gap: float = 0.1,
    localization_tol: float = 1e-3,
) -> dict:
    """Numerical duality check: bulk even pairing vs edge odd pairing.

    The bulk Fermi projection is paired on a periodic window with the
    direction pair (w, v), where v is the single facet normal and
    w = (v2, -v1) runs along the edge; the edge unitary exp(2 pi i g(H))
    is paired with w on the half-plane cone window.  Returns a report
    dict with both values, the absolute difference, the truncation
    ladder, and every normalization constant used.
    """
    if spec.d != 1 or spec.D != 2:
        raise ValueError("the duality check needs a single facet in the plane")
    v = spec.matrix[0].astype(float)
    w = np.array([v[1], -v[0]])

    bulk_win = torus_window((bulk_sides, bulk_sides), bands=2)
    h_bulk = build_model(bulk_win, model)
    gap = _bulk_gap(h_bulk, fermi)
    if gap < min_gap:
        raise GapClosureError(
            f"bulk spectral gap {gap:.4f} at the Fermi level is below {min_gap}"
        )
    if delta is None:
        delta = 0.9 * gap
    p = spectral_function(h_bulk, SpectralSpec(kind="fermi_step", fermi=fermi))
    ts_vol = TraceSpec.volume()
    bulk = pair_even(p, (w, v), ts_vol)
    oracle = bz_chern_oracle(model, grid=32)
    del p, h_bulk

    edge_win = cone_window(spec, geometry, bands=2)
    h_edge = build_model(edge_win, model)
    u = spectral_function(
        h_edge, SpectralSpec(kind="exp_edge", fermi=fermi, delta=delta)
    )
    del h_edge
    ts_hyp = TraceSpec.hypersurface(spec, geometry)
    edge = pair_odd(u, w, ts_hyp, localization_tol=localization_tol)
    half = ts_hyp.with_transverse(geometry.t / 2.0)
    edge_half = pair_odd(u, w, half, localization_tol=localization_tol)
    ladder = [
        {"t": half.geometry.t, "value": float(edge_half.value.real)},
        {"t": geometry.t, "value": float(edge.value.real)},
    ]
    del u

    report = {
        "model": model.to_dict(),
        "fermi": fermi,
        "delta": delta,
        "bulk_gap": gap,
        "directions": {"w": [float(x) for x in w], "v": [float(x) for x in v]},
        "bulk": {
            "value": float(bulk.value.real),
            "est_error": bulk.est_error,
            "window": f"torus {bulk_sides}x{bulk_sides}",
            "convention_note": bulk.convention_note,
        },
        "edge": {
            "value": float(edge.value.real),
            "est_error": edge.est_error,
            "geometry": {"L": geometry.L, "t": geometry.t, "core_margin": geometry.core_margin},
            "convention_note": edge.convention_note,
        },
        "difference": abs(float(bulk.value.real) - float(edge.value.real)),
        "oracle_chern": oracle,
        "normalization": ts_hyp.normalization,
        "ladder": ladder,
    }
    return report
