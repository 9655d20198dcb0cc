"""Finite truncations of lattice operators on a window of sites.

A SiteWindow fixes an ordered list of lattice sites (a cone window with
an artificial outer cut, or a periodic torus), a number of internal
bands, and a core mask marking the sites far enough from the artificial
cuts for traces to be trustworthy.  TruncatedOperator wraps a matrix on
the window; translations, position derivations, the site-diagonal
conditional expectation, a two-band model Hamiltonian, and spectral
functions of Hermitian operators are built on top.

Index layout is site-major: degree of freedom = site_index * bands + band.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .cone_lattice import ConeSpec, Region, SlabWindow, cone_membership, enumerate_region

__all__ = [
    "DENSE_EIG_THRESHOLD",
    "ModelSpec",
    "SiteWindow",
    "SpectralSpec",
    "TruncatedOperator",
    "build_model",
    "conditional_expectation",
    "cone_window",
    "diagonal_operator",
    "identity_operator",
    "position_derivation",
    "spectral_function",
    "torus_window",
    "translation",
    "two_band_symbol",
]

DENSE_EIG_THRESHOLD = 6000
HERMITIAN_TOL = 1e-12


# --------------------------------------------------------------------------
# windows

@dataclass(frozen=True, eq=False)
class SiteWindow:
    """Ordered sites with band multiplicity and a trace-core mask.

    torus is None for open windows and the tuple of side lengths for
    periodic ones; periodic windows have no artificial cuts, so every
    site is core.
    """

    spec: ConeSpec | None
    sites: np.ndarray
    bands: int
    core_mask: np.ndarray
    torus: tuple | None = None

    def __post_init__(self):
        sites = np.asarray(self.sites, dtype=np.int64)
        if sites.ndim != 2:
            raise ValueError("sites must be a (count, D) array")
        core = np.asarray(self.core_mask, dtype=bool)
        if core.shape != (len(sites),):
            raise ValueError("core_mask must align with sites")
        if int(self.bands) < 1:
            raise ValueError("bands must be a positive integer")
        sites.setflags(write=False)
        core.setflags(write=False)
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "core_mask", core)
        object.__setattr__(self, "bands", int(self.bands))
        if self.torus is not None:
            object.__setattr__(self, "torus", tuple(int(s) for s in self.torus))

    @property
    def D(self) -> int:
        return self.sites.shape[1]

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def dim(self) -> int:
        return self.n_sites * self.bands

    @property
    def _index(self) -> dict:
        cached = self.__dict__.get("_index_cache")
        if cached is None:
            cached = {tuple(int(v) for v in s): i for i, s in enumerate(self.sites)}
            self.__dict__["_index_cache"] = cached
        return cached

    @property
    def core_site_indices(self) -> np.ndarray:
        return np.nonzero(self.core_mask)[0]

    @property
    def core_dof(self) -> np.ndarray:
        """Flattened degree-of-freedom indices of the core sites."""
        si = self.core_site_indices
        return (si[:, None] * self.bands + np.arange(self.bands)[None, :]).ravel()

    def compatible(self, other: "SiteWindow") -> bool:
        if self is other:
            return True
        return (
            self.bands == other.bands
            and self.torus == other.torus
            and np.array_equal(self.sites, other.sites)
        )

    def site_displacements(self, w) -> np.ndarray:
        """Matrix of w . (n - m) over site pairs (row site n, column site m).

        On a torus each coordinate difference is reduced to its minimal
        image, matching the periodic hopping geometry.
        """
        w = np.asarray(w, dtype=float)
        if w.shape != (self.D,):
            raise ValueError(f"direction must have shape ({self.D},)")
        out = np.zeros((self.n_sites, self.n_sites))
        for i in range(self.D):
            d = self.sites[:, i][:, None] - self.sites[:, i][None, :]
            if self.torus is not None:
                s = self.torus[i]
                d = (d + s // 2) % s - s // 2
            out += w[i] * d
        return out

    def translate_indices(self, l) -> tuple:
        """Pairs (row, col) with site(col) = site(row) + l inside the window.

        On a torus the shift wraps and every site has a partner.
        """
        l = np.asarray(l, dtype=np.int64)
        shifted = self.sites + l
        if self.torus is not None:
            shifted = shifted % np.asarray(self.torus, dtype=np.int64)
        rows, cols = [], []
        index = self._index
        for i, s in enumerate(shifted):
            j = index.get(tuple(int(v) for v in s))
            if j is not None:
                rows.append(i)
                cols.append(j)
        return np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64)


def cone_window(spec: ConeSpec, geometry: SlabWindow, bands: int = 1) -> SiteWindow:
    """Window for a cone with core Λ_{L,t} and a buffer of width core_margin.

    The slab direction(s) run over [0, L + margin]; the transverse radius
    extends to t + margin.  Core sites satisfy the unpadded bounds: the
    cut at 0 is the physical cone boundary and needs no buffer.
    """
    m = geometry.core_margin
    slab = tuple((0.0, geometry.L + m) for _ in range(spec.d))
    window = (geometry.t + m) if spec.d < spec.D else None
    sites = enumerate_region(spec, Region(slab=slab, window=window))
    dots = spec.dots(sites)
    core = np.all(dots <= geometry.L + 1e-9, axis=1)
    if spec.d < spec.D:
        core &= spec.transverse_sq(sites) <= geometry.t**2 + 1e-9 * max(1.0, geometry.t)
    return SiteWindow(spec=spec, sites=sites, bands=bands, core_mask=core)


def torus_window(sides, bands: int = 1) -> SiteWindow:
    """Periodic window over Z_{s_1} x ... x Z_{s_D}; every site is core."""
    sides = tuple(int(s) for s in sides)
    if any(s < 1 for s in sides):
        raise ValueError("torus sides must be positive")
    axes = [np.arange(s, dtype=np.int64) for s in sides]
    mesh = np.meshgrid(*axes, indexing="ij")
    sites = np.stack([g.ravel() for g in mesh], axis=1)
    return SiteWindow(
        spec=None,
        sites=sites,
        bands=bands,
        core_mask=np.ones(len(sites), dtype=bool),
        torus=sides,
    )


# --------------------------------------------------------------------------
# operators

def _is_sparse(m) -> bool:
    return scipy.sparse.issparse(m)


@dataclass(frozen=True, eq=False)
class TruncatedOperator:
    """A matrix on a site window, dense or sparse (CSR)."""

    window: SiteWindow
    matrix: object
    hermitian: bool = False

    def __post_init__(self):
        m = self.matrix
        if _is_sparse(m):
            m = scipy.sparse.csr_matrix(m).astype(np.complex128)
        else:
            m = np.asarray(m, dtype=np.complex128)
            if m.ndim != 2:
                raise ValueError("matrix must be two-dimensional")
        if m.shape != (self.window.dim, self.window.dim):
            raise ValueError(
                f"matrix shape {m.shape} does not match window dimension {self.window.dim}"
            )
        object.__setattr__(self, "matrix", m)
        if self.hermitian:
            dev = self._adjoint_deviation()
            if dev > HERMITIAN_TOL:
                raise ValueError(f"hermitian flag set but ||A - A*|| = {dev:.3e}")

    def _adjoint_deviation(self) -> float:
        if self.is_sparse:
            d = self.matrix - self.matrix.conjugate().transpose()
            return float(np.abs(d.data).max()) if d.nnz else 0.0
        d = self.matrix - self.matrix.conj().T
        return float(np.abs(d).max()) if d.size else 0.0

    @property
    def is_sparse(self) -> bool:
        return _is_sparse(self.matrix)

    @property
    def dim(self) -> int:
        return self.window.dim

    def dense(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else self.matrix

    def diagonal(self) -> np.ndarray:
        return np.asarray(self.matrix.diagonal())

    def adjoint(self) -> "TruncatedOperator":
        if self.is_sparse:
            m = self.matrix.conjugate().transpose().tocsr()
        else:
            m = self.matrix.conj().T.copy()
        return TruncatedOperator(self.window, m, hermitian=self.hermitian)

    def _check(self, other: "TruncatedOperator"):
        if not isinstance(other, TruncatedOperator):
            raise TypeError(f"expected a TruncatedOperator, got {type(other).__name__}")
        if not self.window.compatible(other.window):
            raise ValueError("operators live on different windows")

    def _aligned(self, other):
        if self.is_sparse == other.is_sparse:
            return self.matrix, other.matrix
        return self.dense(), other.dense()

    def __add__(self, other):
        self._check(other)
        a, b = self._aligned(other)
        return TruncatedOperator(self.window, a + b)

    def __sub__(self, other):
        self._check(other)
        a, b = self._aligned(other)
        return TruncatedOperator(self.window, a - b)

    def __neg__(self):
        return TruncatedOperator(self.window, -self.matrix)

    def __mul__(self, scalar):
        if isinstance(scalar, TruncatedOperator):
            raise TypeError("use @ for operator products")
        return TruncatedOperator(self.window, self.matrix * complex(scalar))

    __rmul__ = __mul__

    def __matmul__(self, other):
        self._check(other)
        if self.is_sparse != other.is_sparse:
            return TruncatedOperator(self.window, self.dense() @ other.dense())
        return TruncatedOperator(self.window, self.matrix @ other.matrix)

    def norm_max_entry(self) -> float:
        if self.is_sparse:
            return float(np.abs(self.matrix.data).max()) if self.matrix.nnz else 0.0
        return float(np.abs(self.matrix).max()) if self.matrix.size else 0.0

    def to_triplets(self) -> np.ndarray:
        """(row, col, re, im) rows of the nonzero entries, row-major order."""
        if self.is_sparse:
            coo = self.matrix.tocoo()
            order = np.lexsort((coo.col, coo.row))
            r, c, v = coo.row[order], coo.col[order], coo.data[order]
        else:
            r, c = np.nonzero(self.matrix)
            v = self.matrix[r, c]
        return np.stack([r.astype(float), c.astype(float), v.real, v.imag], axis=1)


def identity_operator(window: SiteWindow) -> TruncatedOperator:
    return TruncatedOperator(
        window, scipy.sparse.identity(window.dim, dtype=np.complex128, format="csr"),
        hermitian=True,
    )


def diagonal_operator(window: SiteWindow, values) -> TruncatedOperator:
    """Diagonal operator from per-site values (broadcast over bands) or
    per-degree-of-freedom values."""
    vals = np.asarray(values, dtype=np.complex128).ravel()
    if vals.shape == (window.n_sites,):
        vals = np.repeat(vals, window.bands)
    if vals.shape != (window.dim,):
        raise ValueError(
            f"need {window.n_sites} per-site or {window.dim} per-dof values, got {vals.shape}"
        )
    m = scipy.sparse.diags(vals, format="csr")
    herm = bool(np.abs(vals.imag).max() <= HERMITIAN_TOL) if vals.size else True
    return TruncatedOperator(window, m, hermitian=herm)


def translation(window: SiteWindow, l) -> TruncatedOperator:
    """Truncated shift V_l: <n|V_l|m> = delta_{m, n+l}, band identity.

    On cone windows only pairs with both endpoints inside survive, so
    V_l is a partial isometry; on a torus the shift wraps and V_l is
    unitary.  l must lie in the cone semigroup for cone windows.
    """
    l = np.asarray([int(v) for v in l], dtype=np.int64)
    if window.torus is None:
        if window.spec is None:
            raise ValueError("open windows need a cone spec")
        if not cone_membership(window.spec, l):
            raise ValueError(f"{tuple(int(v) for v in l)} is not in the cone semigroup")
    rows, cols = window.translate_indices(l)
    N = window.bands
    band = np.arange(N, dtype=np.int64)
    r = (rows[:, None] * N + band[None, :]).ravel()
    c = (cols[:, None] * N + band[None, :]).ravel()
    m = scipy.sparse.csr_matrix(
        (np.ones(len(r), dtype=np.complex128), (r, c)),
        shape=(window.dim, window.dim),
    )
    herm = bool(np.all(l == 0))
    return TruncatedOperator(window, m, hermitian=herm)


def position_derivation(a: TruncatedOperator, w) -> TruncatedOperator:
    """Commutator with the position observable along w.

    Entrywise i (w . (n - m)) a_{nm}; an exact derivation of the matrix
    algebra.  Torus windows use minimal-image displacements.
    """
    win = a.window
    w = np.asarray(w, dtype=float)
    N = win.bands
    if a.is_sparse:
        coo = a.matrix.tocoo()
        d = win.sites[coo.row // N].astype(float) - win.sites[coo.col // N].astype(float)
        if win.torus is not None:
            s = np.asarray(win.torus, dtype=float)
            d = (d + s // 2) % s - s // 2
        data = coo.data * (1j * (d @ w))
        m = scipy.sparse.csr_matrix((data, (coo.row, coo.col)), shape=a.matrix.shape)
        return TruncatedOperator(win, m)
    phase = 1j * win.site_displacements(w)
    S = win.n_sites
    m = (a.matrix.reshape(S, N, S, N) * phase[:, None, :, None]).reshape(win.dim, win.dim)
    return TruncatedOperator(win, m)


def conditional_expectation(a: TruncatedOperator) -> TruncatedOperator:
    """Keep the band block at each site, zero all site-off-diagonal entries."""
    win = a.window
    N = win.bands
    if a.is_sparse:
        coo = a.matrix.tocoo()
        keep = (coo.row // N) == (coo.col // N)
        m = scipy.sparse.csr_matrix(
            (coo.data[keep], (coo.row[keep], coo.col[keep])), shape=a.matrix.shape
        )
        return TruncatedOperator(win, m, hermitian=a.hermitian)
    S = win.n_sites
    out = np.zeros_like(a.matrix)
    idx = np.arange(S)
    blocks = a.matrix.reshape(S, N, S, N)[idx, :, idx, :]
    out.reshape(S, N, S, N)[idx, :, idx, :] = blocks
    return TruncatedOperator(win, out, hermitian=a.hermitian)


# --------------------------------------------------------------------------
# model Hamiltonians

_SIGMA = (
    np.array([[0, 1], [1, 0]], dtype=np.complex128),
    np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    np.array([[1, 0], [0, -1]], dtype=np.complex128),
)


@dataclass(frozen=True)
class ModelSpec:
    """Named model with parameters, e.g. ModelSpec("two_band_chern", {"m": 1.0})."""

    name: str
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelSpec":
        doc = dict(doc)
        name = doc.pop("name", None)
        if not name:
            raise ValueError("model document needs a 'name'")
        return cls(name=str(name), params=doc)

    def to_dict(self) -> dict:
        return {"name": self.name, **self.params}


def two_band_symbol(m: float, k) -> np.ndarray:
    """Momentum-space symbol h(k) of the shipped two-band model."""
    k1, k2 = float(k[0]), float(k[1])
    return (
        math.sin(k1) * _SIGMA[0]
        + math.sin(k2) * _SIGMA[1]
        + (m + math.cos(k1) + math.cos(k2)) * _SIGMA[2]
    )


def _two_band_hoppings(m: float):
    onsite = m * _SIGMA[2]
    hops = {}
    for j in range(2):
        # coefficient of the shift by +e_j, so that the torus symbol
        # sum_d H_{n,n+d} exp(i k.d) reproduces two_band_symbol
        hops[j] = 0.5 * (_SIGMA[2] - 1j * _SIGMA[j])
    return onsite, hops


def build_model(window: SiteWindow, model: ModelSpec) -> TruncatedOperator:
    """Real-space Hamiltonian of a named model on the window.

    Ships "two_band_chern" (D = 2, two bands): nearest-neighbor
    realization of h(k) = sin k1 s1 + sin k2 s2 + (m + cos k1 + cos k2) s3,
    with open (Dirichlet) cuts on cone windows and wrapping on tori.
    """
    if model.name != "two_band_chern":
        raise ValueError(f"unknown model {model.name!r}")
    if window.D != 2 or window.bands != 2:
        raise ValueError("two_band_chern needs a D=2 window with 2 bands")
    mpar = float(model.params.get("m", 0.0))
    onsite, hops = _two_band_hoppings(mpar)
    dim = window.dim
    H = np.zeros((dim, dim), dtype=np.complex128)
    idx = np.arange(window.n_sites, dtype=np.int64)
    for a in range(2):
        for b in range(2):
            if onsite[a, b] != 0:
                H[idx * 2 + a, idx * 2 + b] += onsite[a, b]
    for j, T in hops.items():
        e = np.zeros(2, dtype=np.int64)
        e[j] = 1
        rows, cols = window.translate_indices(e)
        for a in range(2):
            for b in range(2):
                if T[a, b] != 0:
                    H[rows * 2 + a, cols * 2 + b] += T[a, b]
                    H[cols * 2 + b, rows * 2 + a] += np.conj(T[a, b])
    return TruncatedOperator(window, H, hermitian=True)


# --------------------------------------------------------------------------
# spectral functions

def _smoothstep(x: np.ndarray) -> np.ndarray:
    y = np.clip(x, 0.0, 1.0)
    return y * y * (3.0 - 2.0 * y)


def _tanh_profile(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(8.0 * (x - 0.5)))


@dataclass(frozen=True)
class SpectralSpec:
    """Scalar function to apply to a Hermitian operator.

    kind "fermi_step": indicator of energies <= fermi (Fermi projection).
    kind "smooth_switch": 0-to-1 switch across [fermi - delta/2, fermi + delta/2].
    kind "exp_edge": exp(2 pi i switch(E)); equals 1 exactly off the
    switch window for the default profile, so the result minus the
    identity has rank bounded by the number of eigenvalues inside.
    """

    kind: str
    fermi: float = 0.0
    delta: float | None = None
    profile: str = "smoothstep"

    def __post_init__(self):
        if self.kind not in ("fermi_step", "smooth_switch", "exp_edge"):
            raise ValueError(f"unknown spectral function kind {self.kind!r}")
        if self.kind in ("smooth_switch", "exp_edge"):
            if self.delta is None or self.delta <= 0:
                raise ValueError(f"{self.kind} needs a positive switch width delta")
        if self.profile not in ("smoothstep", "tanh"):
            raise ValueError(f"unknown profile {self.profile!r}")

    def switch(self, energies: np.ndarray) -> np.ndarray:
        x = (np.asarray(energies, dtype=float) - self.fermi + self.delta / 2.0) / self.delta
        if self.profile == "tanh":
            return _tanh_profile(x)
        return _smoothstep(x)

    def evaluate(self, energies: np.ndarray) -> np.ndarray:
        e = np.asarray(energies, dtype=float)
        if self.kind == "fermi_step":
            return (e <= self.fermi).astype(np.complex128)
        if self.kind == "smooth_switch":
            return self.switch(e).astype(np.complex128)
        return np.exp(2j * np.pi * self.switch(e))


def _extremal_estimate(mat: np.ndarray) -> tuple:
    """Cheap bounds on the extreme eigenvalues (iterative, low accuracy)."""
    dim = mat.shape[0]
    if dim <= 2:
        ev = np.linalg.eigvalsh(mat)
        return float(ev[0]), float(ev[-1])
    op = scipy.sparse.linalg.aslinearoperator(mat)
    lo = scipy.sparse.linalg.eigsh(op, k=1, which="SA", tol=1e-4, return_eigenvectors=False)
    hi = scipy.sparse.linalg.eigsh(op, k=1, which="LA", tol=1e-4, return_eigenvectors=False)
    return float(lo[0]), float(hi[0])


def _chebyshev_matrix_function(mat: np.ndarray, fn, interval, degree: int) -> np.ndarray:
    a, b = float(interval[0]), float(interval[1])
    center, half = (a + b) / 2.0, (b - a) / 2.0
    M = max(2 * (degree + 1), 64)
    theta = (np.arange(M) + 0.5) * np.pi / M
    nodes = np.cos(theta)
    g = np.asarray(fn(center + half * nodes), dtype=np.complex128)
    ks = np.arange(degree + 1)
    coeff = (2.0 / M) * (g[None, :] * np.cos(ks[:, None] * theta[None, :])).sum(axis=1)
    coeff[0] *= 0.5
    dim = mat.shape[0]
    X = (mat - center * np.eye(dim)) / half
    Tprev = np.eye(dim, dtype=np.complex128)
    Tcur = X.astype(np.complex128)
    acc = coeff[0] * Tprev + (coeff[1] * Tcur if degree >= 1 else 0.0)
    for k in range(2, degree + 1):
        Tnext = 2.0 * (X @ Tcur) - Tprev
        acc += coeff[k] * Tnext
        Tprev, Tcur = Tcur, Tnext
    return acc


def spectral_function(
    h: TruncatedOperator,
    g: SpectralSpec,
    interval=None,
    degree: int | None = None,
    method: str | None = None,
) -> TruncatedOperator:
    """Apply the scalar function g to a Hermitian truncated operator.

    Routes: dense eigendecomposition up to DENSE_EIG_THRESHOLD; above it,
    "exp_edge" solves only the eigenpairs inside the switch window (the
    function is 1 elsewhere, so this path stays exact), while the smooth
    kinds use a Chebyshev expansion and require an enclosing spectral
    interval.  Pass method="dense"/"chebyshev" to force a route.

    Fermi-step results are validated as projections (||P^2 - P|| <= 1e-10).
    """
    if not h.hermitian:
        raise ValueError("spectral functions need the hermitian flag set")
    mat = h.dense()
    dim = mat.shape[0]
    if method is None:
        if dim <= DENSE_EIG_THRESHOLD or g.kind == "exp_edge":
            method = "dense"
        else:
            method = "chebyshev"

    if method == "dense":
        if g.kind == "exp_edge" and dim > DENSE_EIG_THRESHOLD:
            pad = 1e-9 * max(1.0, abs(g.fermi) + g.delta)
            lo, hi = g.fermi - g.delta / 2.0 - pad, g.fermi + g.delta / 2.0 + pad
            lam, psi = scipy.linalg.eigh(mat, subset_by_value=(lo, hi), driver="evr")
            phi = np.exp(2j * np.pi * g.switch(lam)) - 1.0
            out = (psi * phi[None, :]) @ psi.conj().T
            out[np.diag_indices(dim)] += 1.0
        else:
            lam, U = scipy.linalg.eigh(mat)
            out = (U * g.evaluate(lam)[None, :]) @ U.conj().T
    elif method == "chebyshev":
        if g.kind == "exp_edge":
            raise ValueError("the edge unitary uses the exact dense route, not Chebyshev")
        if interval is None:
            raise ValueError("Chebyshev evaluation needs an enclosing spectral interval")
        a, b = float(interval[0]), float(interval[1])
        lo, hi = _extremal_estimate(mat)
        slack = 1e-6 * max(1.0, abs(lo), abs(hi))
        if lo < a - slack or hi > b + slack:
            raise ValueError(
                f"spectral interval [{a}, {b}] violated: spectrum reaches [{lo:.6g}, {hi:.6g}]"
            )
        if degree is None:
            gap = g.delta if g.delta else 0.5
            degree = int(math.ceil(2.0 / gap * ((b - a) / 2.0) * math.log(1e8)))
        out = _chebyshev_matrix_function(mat, g.evaluate, (a, b), degree)
    else:
        raise ValueError(f"unknown method {method!r}")

    if g.kind == "fermi_step" and method == "dense":
        dev = np.abs(out @ out - out).max()
        if dev > 1e-10:
            raise ValueError(f"Fermi projection failed the idempotency check: {dev:.3e}")
    herm = g.kind in ("fermi_step", "smooth_switch") and method == "dense"
    if herm:
        out = 0.5 * (out + out.conj().T)
    return TruncatedOperator(h.window, out, hermitian=herm)
