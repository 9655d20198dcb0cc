"""Cone-lattice geometry on Z^D.

A cone specification holds d linearly independent unit vectors
v_1, ..., v_d in R^D (the facet normals).  The associated semigroup is

    L_v = { n in Z^D : v_k . n >= 0 for every k },

and the facet map A_v : R^D -> R^d has the v_k as rows.  Everything in
this module is about deciding membership robustly, enumerating bounded
slices of the lattice, and computing the exact lattice constants
(facet-map covolume, kernel-lattice covolume, image-lattice covolume)
that normalize traces downstream.

Numbers enter as decimal or fraction strings and are stored as exact
``fractions.Fraction`` values.  A component tagged exact-rational is the
true vector; a real-tagged component is a rational approximation with at
least 18 significant digits (>= 60 bits), and every tie decision is made
on the stored value with a 1e-12 tolerance plus a :class:`NearTieWarning`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np

__all__ = [
    "ConeSpec",
    "CountRow",
    "KernelLattice",
    "ImageLattice",
    "NearTieWarning",
    "Region",
    "ResourceLimitExceeded",
    "SlabWindow",
    "cone_membership",
    "count_scaling_study",
    "covolume_facets",
    "enumerate_region",
    "find_escape_vector",
    "kernel_lattice",
    "image_lattice",
    "rational_unit",
    "unit_ball_volume",
]

TIE_TOL = 1e-12
# float prefilter band; anything this close to a constraint boundary gets an
# exact rational recheck before it is accepted or rejected
EXACT_BAND = 1e-9


class NearTieWarning(UserWarning):
    """A membership decision fell within the tie tolerance of a boundary."""


class ResourceLimitExceeded(RuntimeError):
    """An enumeration or matrix build would exceed the configured budget."""


def _parse_component(text) -> Fraction:
    if isinstance(text, Fraction):
        return text
    if isinstance(text, int):
        return Fraction(text)
    if isinstance(text, float):
        raise TypeError(
            "vector components must be decimal strings, fraction strings, "
            "ints or Fractions; floats lose the precision contract"
        )
    return Fraction(str(text).strip())


def _looks_rational(text) -> bool:
    """Default exactness tag for a component when none is given."""
    if isinstance(text, (int, Fraction)):
        return True
    if isinstance(text, str):
        s = text.strip()
        return "/" in s or s.lstrip("+-").isdigit()
    return False


def _recover_rational(f: Fraction, max_den: int = 10**9) -> Fraction:
    """Minimal-denominator rational reproducing a decimal reading.

    Exact-rational components may arrive as rounded decimal strings
    (e.g. "0.384615384615384615385" for 5/13).  The continued-fraction
    convergent with denominator <= max_den recovers the intended value
    whenever the string carries enough digits.
    """
    cand = f.limit_denominator(max_den)
    return cand


def rational_unit(direction) -> tuple[str, ...]:
    """Unit vector along an integer direction, as exact fraction strings.

    Raises ValueError unless the squared norm is a perfect square, since
    only then is the normalized vector rational.
    """
    d = [int(c) for c in direction]
    s2 = sum(c * c for c in d)
    s = math.isqrt(s2)
    if s * s != s2:
        raise ValueError(f"|{tuple(d)}|^2 = {s2} is not a perfect square")
    return tuple(str(Fraction(c, s)) for c in d)


def unit_ball_volume(k: int) -> float:
    """Volume of the k-dimensional Euclidean unit ball."""
    return math.pi ** (k / 2.0) / math.gamma(k / 2.0 + 1.0)


def _ratio_looks_rational(f: float, max_den: int = 10**6, tol: float = 1e-14) -> bool:
    # every irrational admits convergents with error ~ 1/q^2, so the cut
    # must sit below 1/max_den^2 ~ 1e-12; genuinely rational ratios land
    # at float rounding level ~ 1e-16
    if not math.isfinite(f):
        return False
    cand = Fraction(f).limit_denominator(max_den)
    return abs(float(cand) - f) <= tol * max(1.0, abs(f))


def _normalize_subset(key) -> tuple[int, ...]:
    if isinstance(key, str):
        parts = tuple(int(p) for p in key.split(",") if p.strip())
    else:
        parts = tuple(int(p) for p in key)
    out = tuple(sorted(set(parts)))
    if out != parts:
        raise ValueError(f"subset key {key!r} must be sorted and duplicate-free")
    return out


@dataclass(frozen=True, eq=False)
class ConeSpec:
    """Facet normals of a lattice cone, with exactness and rationality tags.

    Parameters
    ----------
    D : int
        Ambient dimension.
    vectors : sequence of sequences
        d rows of D components each; strings ("0.6", "3/5"), ints or
        Fractions.  Each row must have unit Euclidean norm within 1e-12.
    exact : sequence of bool, optional
        Per-row tag.  True marks the row as exactly rational; plain decimal
        strings on exact rows are recovered to the minimal rational with
        denominator <= 1e9 and the unit norm is then verified exactly.
        When omitted, a row is tagged exact iff every component is an
        integer or an explicit fraction such as "3/5"; decimal strings
        default to the real (inexact) path.
    rationality : mapping, optional
        Rationality class per direction subset, keys like "1" or "1,2"
        (1-based) or tuples, values "R" or "CI".  Subsets not listed
        default to "R" when all their rows are exact and "CI" otherwise.
    """

    D: int
    vectors: tuple
    exact: tuple
    rationality: dict = field(default_factory=dict)

    def __init__(self, D, vectors, exact=None, rationality=None):
        object.__setattr__(self, "D", int(D))
        rows = []
        source = []
        if exact is None:
            exact = tuple(all(_looks_rational(c) for c in row) for row in vectors)
        else:
            exact = tuple(bool(e) for e in exact)
        if len(exact) != len(vectors):
            raise ValueError("exact tags must match the number of vectors")
        for i, row in enumerate(vectors):
            comps = [_parse_component(c) for c in row]
            if len(comps) != self.D:
                raise ValueError(f"vector {i + 1} has {len(comps)} components, expected D={D}")
            if exact[i]:
                comps = [_recover_rational(c) for c in comps]
            rows.append(tuple(comps))
            source.append(tuple(str(c) for c in row))
        object.__setattr__(self, "vectors", tuple(rows))
        object.__setattr__(self, "exact", exact)
        object.__setattr__(self, "_source", tuple(source))
        if len(rows) == 0 or len(rows) > self.D:
            raise ValueError(f"need 1 <= d <= D facet normals, got d={len(rows)}")

        norm_keys = {}
        for key, val in (rationality or {}).items():
            sub = _normalize_subset(key)
            if not sub or any(k < 1 or k > self.d for k in sub):
                raise ValueError(f"rationality subset {key!r} out of range 1..{self.d}")
            if val not in ("R", "CI"):
                raise ValueError(f"rationality class {val!r} must be 'R' or 'CI'")
            norm_keys[sub] = val
        object.__setattr__(self, "rationality", norm_keys)
        self._validate()

    @property
    def d(self) -> int:
        return len(self.vectors)

    def _validate(self) -> None:
        for i, row in enumerate(self.vectors):
            s2 = sum(c * c for c in row)
            if self.exact[i]:
                if s2 != 1:
                    raise ValueError(
                        f"exact-rational vector {i + 1} is not a unit vector: |v|^2 = {s2}"
                    )
            elif abs(float(s2) - 1.0) > 2.5e-12:
                raise ValueError(
                    f"vector {i + 1} is not unit within 1e-12: |v|^2 = {float(s2)!r}"
                )
        m = self.matrix
        if np.linalg.matrix_rank(m, tol=1e-9) < self.d:
            raise ValueError("facet normals must be linearly independent")
        for sub, val in self.rationality.items():
            if all(self.exact[k - 1] for k in sub) and val == "CI":
                raise ValueError(
                    f"subset {sub} has all exact-rational rows; its facet image is "
                    "discrete, declaring CI is inconsistent"
                )
        # heuristic plausibility check on declared classes for real-tagged rows
        for sub, val in self.rationality.items():
            rows = [k for k in sub if not self.exact[k - 1]]
            if not rows:
                continue
            ratios = []
            for k in rows:
                v = self.matrix[k - 1]
                big = np.argmax(np.abs(v))
                for j in range(self.D):
                    if j != big and abs(v[j]) > 1e-14:
                        ratios.append(v[j] / v[big])
            if not ratios:
                continue
            look_rat = all(_ratio_looks_rational(r) for r in ratios)
            if val == "CI" and look_rat:
                warnings.warn(
                    f"subset {sub} declared CI but component ratios have small-"
                    "denominator convergents; the vectors may actually be rational",
                    stacklevel=3,
                )
            if val == "R" and not look_rat:
                warnings.warn(
                    f"subset {sub} declared R but component ratios look irrational",
                    stacklevel=3,
                )

    @cached_property
    def matrix(self) -> np.ndarray:
        """Facet map A_v as a float (d, D) array."""
        return np.array([[float(c) for c in row] for row in self.vectors], dtype=float)

    @cached_property
    def sigma_min(self) -> float:
        return float(np.linalg.svd(self.matrix, compute_uv=False)[-1])

    @cached_property
    def gram_inv(self) -> np.ndarray:
        g = self.matrix @ self.matrix.T
        return np.linalg.inv(g)

    @cached_property
    def int_rows(self) -> tuple:
        """Per-row (p, s): integer vector p and scale s with v = p/s, or None."""
        out = []
        for i, row in enumerate(self.vectors):
            if not self.exact[i]:
                out.append(None)
                continue
            den = math.lcm(*(c.denominator for c in row))
            p = [int(c * den) for c in row]
            g = math.gcd(den, *(abs(q) for q in p))
            out.append((tuple(q // g for q in p), den // g))
        return tuple(out)

    def rationality_class(self, I) -> str:
        sub = _normalize_subset(I)
        if sub in self.rationality:
            return self.rationality[sub]
        return "R" if all(self.exact[k - 1] for k in sub) else "CI"

    def dot_fraction(self, k: int, n) -> Fraction:
        """Exact v_k . n on the stored components (1-based k)."""
        row = self.vectors[k - 1]
        return sum((c * int(x) for c, x in zip(row, n)), Fraction(0))

    def dots(self, pts: np.ndarray) -> np.ndarray:
        """A_v applied to integer points, float64; pts has shape (..., D)."""
        return np.asarray(pts, dtype=float) @ self.matrix.T

    def transverse_sq(self, pts: np.ndarray) -> np.ndarray:
        """Squared norm of the component orthogonal to span(v_1..v_d).

        Computed as |n|^2 - (A n)^T G^{-1} (A n) with the exact integer
        |n|^2, which is far better conditioned inside slabs than the
        projector quadratic form.
        """
        pts = np.asarray(pts)
        nn = (pts.astype(float) ** 2).sum(axis=-1)
        an = self.dots(pts)
        quad = np.einsum("...i,ij,...j->...", an, self.gram_inv, an)
        return nn - quad

    def to_dict(self) -> dict:
        rat = {",".join(str(k) for k in sub): val for sub, val in sorted(self.rationality.items())}
        return {
            "D": self.D,
            "vectors": [list(src) for src in self._source],
            "exact": list(self.exact),
            "rationality": rat,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ConeSpec":
        return cls(doc["D"], doc["vectors"], doc.get("exact"), doc.get("rationality"))


@dataclass(frozen=True)
class SlabWindow:
    """Trace geometry: slab depth L per facet direction, transverse window
    radius t, and the buffer separating the trace core from artificial cuts."""

    L: float
    t: float
    core_margin: float = 15.0

    def __post_init__(self):
        if self.L <= 0 or self.t <= 0 or self.core_margin < 0:
            raise ValueError(f"invalid slab window {self}")


@dataclass(frozen=True)
class Region:
    """Bounded lattice region: per-direction slab bounds on v_k . n plus an
    optional transverse window radius."""

    slab: tuple
    window: float | None = None

    def __post_init__(self):
        slab = tuple((float(lo), float(hi)) for lo, hi in self.slab)
        object.__setattr__(self, "slab", slab)
        for lo, hi in slab:
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                raise ValueError(f"slab bounds ({lo}, {hi}) must be finite with lo <= hi")
        if self.window is not None:
            object.__setattr__(self, "window", float(self.window))
            if not (self.window >= 0 and math.isfinite(self.window)):
                raise ValueError("window radius must be finite and nonnegative")


def cone_membership(spec: ConeSpec, n, tie_tol: float = TIE_TOL) -> bool:
    """Whether the integer point n lies in the cone semigroup.

    Exact-rational rows are decided by integer arithmetic.  Real rows use
    the stored high-precision value; a result within tie_tol of zero counts
    as inside and raises :class:`NearTieWarning`.
    """
    n = tuple(int(x) for x in n)
    if len(n) != spec.D:
        raise ValueError(f"point has dimension {len(n)}, expected {spec.D}")
    for k in range(1, spec.d + 1):
        ir = spec.int_rows[k - 1]
        if ir is not None:
            p, _ = ir
            if sum(pi * xi for pi, xi in zip(p, n)) < 0:
                return False
            continue
        val = float(spec.matrix[k - 1] @ np.asarray(n, dtype=float))
        if abs(val) <= tie_tol:
            exact = spec.dot_fraction(k, n)
            warnings.warn(
                f"membership of {n} decided within {tie_tol} of facet {k} "
                f"(stored-value sign {1 if exact > 0 else (-1 if exact < 0 else 0)})",
                NearTieWarning,
                stacklevel=2,
            )
            if exact < -Fraction(tie_tol):
                return False
            continue
        if val < 0:
            return False
    return True


def membership_mask(spec: ConeSpec, pts: np.ndarray, tie_tol: float = TIE_TOL) -> np.ndarray:
    """Vectorized cone membership for an (N, D) array of integer points.

    Same semantics as :func:`cone_membership`: exact integer arithmetic on
    exact-rational rows, tie tolerance plus exact recheck of the stored
    value on real rows.
    """
    pts = np.asarray(pts, dtype=np.int64)
    if pts.size == 0:
        return np.zeros(0, dtype=bool)
    ok = np.ones(len(pts), dtype=bool)
    near_ties = 0
    for k in range(1, spec.d + 1):
        ir = spec.int_rows[k - 1]
        if ir is not None:
            p, _ = ir
            ok &= (pts @ np.asarray(p, dtype=np.int64)) >= 0
            continue
        col = pts.astype(float) @ spec.matrix[k - 1]
        soft = col >= -tie_tol
        band = np.abs(col) <= EXACT_BAND
        tol = Fraction(tie_tol)
        for i in np.nonzero(band)[0]:
            soft[i] = spec.dot_fraction(k, pts[i]) >= -tol
            near_ties += 1
        ok &= soft
    if near_ties:
        warnings.warn(
            f"{near_ties} cone membership decisions within {EXACT_BAND} of the "
            "boundary were resolved on the stored rational values",
            NearTieWarning,
            stacklevel=3,
        )
    return ok


def _region_mask(spec: ConeSpec, region: Region, pts: np.ndarray, tie_tol: float) -> np.ndarray:
    """Exact-semantics membership mask for candidate points."""
    if pts.size == 0:
        return np.zeros(0, dtype=bool)
    vals = spec.dots(pts)
    ok = np.ones(len(pts), dtype=bool)
    near_ties = 0
    for k in range(1, spec.d + 1):
        lo, hi = region.slab[k - 1]
        col = vals[:, k - 1]
        ir = spec.int_rows[k - 1]
        if ir is not None:
            p, s = ir
            ip = pts @ np.asarray(p, dtype=np.int64)
            # v.n >= lo  <=>  p.n >= lo*s, decided against exact Fractions
            flo, fhi = Fraction(lo) * s, Fraction(hi) * s
            ok &= ip >= math.ceil(flo) if flo.denominator > 1 else ip >= int(flo)
            ok &= ip <= math.floor(fhi) if fhi.denominator > 1 else ip <= int(fhi)
            continue
        soft = (col >= lo - tie_tol) & (col <= hi + tie_tol)
        band = soft & (
            (np.abs(col - lo) <= EXACT_BAND) | (np.abs(col - hi) <= EXACT_BAND)
        )
        idx = np.nonzero(band)[0]
        tol = Fraction(tie_tol)
        for i in idx:
            ex = spec.dot_fraction(k, pts[i])
            soft[i] = (ex >= Fraction(lo) - tol) and (ex <= Fraction(hi) + tol)
            near_ties += 1
        ok &= soft
    if region.window is not None:
        t = region.window
        r2 = spec.transverse_sq(pts)
        ok &= r2 <= t * t + 1e-9 * max(1.0, t)
    if near_ties:
        warnings.warn(
            f"{near_ties} membership decisions within {EXACT_BAND} of a slab "
            "boundary were resolved on the stored rational values",
            NearTieWarning,
            stacklevel=3,
        )
    return ok


def _enclosing_radius(spec: ConeSpec, region: Region) -> float:
    bound = math.sqrt(sum(max(lo * lo, hi * hi) for lo, hi in region.slab))
    rho = bound / spec.sigma_min
    if region.window is None:
        if spec.d < spec.D:
            raise ValueError(
                "region without a transverse window is unbounded when d < D"
            )
        return rho + 1e-9
    return rho + region.window + 1e-9


def enumerate_region(
    spec: ConeSpec,
    region: Region,
    tie_tol: float = TIE_TOL,
    max_points: int = 20_000_000,
) -> np.ndarray:
    """All integer points satisfying the region predicate, in lexicographic
    order.

    The slab bounds are lo <= v_k . n <= hi per direction and the optional
    window is ||n_transverse|| <= t.  The enclosing box is derived from the
    window radius plus the slab bound vector divided by the smallest
    singular value of the facet map; candidates are generated column-wise
    (feasible interval of the last coordinate solved per outer point) and
    then pass through the exact membership mask.

    Returns an int64 array of shape (N, D).
    """
    D, d = spec.D, spec.d
    A = spec.matrix
    rho = _enclosing_radius(spec, region)
    B = int(math.floor(rho))
    if (2 * B + 1) ** max(D - 1, 0) > max_points:
        raise ResourceLimitExceeded(
            f"enclosing box with side {2 * B + 1} exceeds max_points={max_points}"
        )

    if D == 1:
        outer = np.zeros((1, 0), dtype=np.int64)
    else:
        axes = [np.arange(-B, B + 1, dtype=np.int64)] * (D - 1)
        mesh = np.meshgrid(*axes, indexing="ij")
        outer = np.stack([m.ravel() for m in mesh], axis=1)
        # prune outer rows outside the ball of radius rho
        keep = (outer.astype(float) ** 2).sum(axis=1) <= rho * rho
        outer = outer[keep]

    K = len(outer)
    zlo = np.full(K, -rho)
    zhi = np.full(K, rho)
    feasible = np.ones(K, dtype=bool)
    slack = 1e-7

    c_part = outer.astype(float) @ A[:, : D - 1].T if D > 1 else np.zeros((K, d))
    for k in range(d):
        a = A[k, D - 1]
        lo, hi = region.slab[k]
        lo, hi = lo - slack, hi + slack
        if abs(a) < 1e-15:
            feasible &= (c_part[:, k] >= lo) & (c_part[:, k] <= hi)
            continue
        b1 = (lo - c_part[:, k]) / a
        b2 = (hi - c_part[:, k]) / a
        zlo = np.maximum(zlo, np.minimum(b1, b2))
        zhi = np.minimum(zhi, np.maximum(b1, b2))

    if region.window is not None:
        t = region.window + slack
        # quadratic in the last coordinate: q2 z^2 + q1 z + q0 <= t^2 where
        # q comes from the transverse projector I - A^T G^{-1} A
        Q = np.eye(D) - A.T @ spec.gram_inv @ A
        q2 = Q[D - 1, D - 1]
        if D > 1:
            q1 = 2.0 * (outer.astype(float) @ Q[D - 1, : D - 1])
            q0 = np.einsum(
                "ni,ij,nj->n", outer.astype(float), Q[: D - 1, : D - 1], outer.astype(float)
            )
        else:
            q1 = np.zeros(K)
            q0 = np.zeros(K)
        if q2 > 1e-12:
            disc = q1 * q1 - 4.0 * q2 * (q0 - t * t)
            feasible &= disc >= 0
            sq = np.sqrt(np.maximum(disc, 0.0))
            zlo = np.maximum(zlo, (-q1 - sq) / (2.0 * q2))
            zhi = np.minimum(zhi, (-q1 + sq) / (2.0 * q2))
        else:
            feasible &= q0 <= t * t

    starts = np.ceil(zlo).astype(np.int64)
    stops = np.floor(zhi).astype(np.int64)
    counts = np.where(feasible, np.maximum(stops - starts + 1, 0), 0)
    total = int(counts.sum())
    if total > max_points:
        raise ResourceLimitExceeded(
            f"region would emit {total} candidates > max_points={max_points}"
        )
    if total == 0:
        return np.zeros((0, D), dtype=np.int64)

    rows = np.repeat(np.arange(K), counts)
    within = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    z = starts[rows] + within
    pts = np.empty((total, D), dtype=np.int64)
    if D > 1:
        pts[:, : D - 1] = outer[rows]
    pts[:, D - 1] = z

    mask = _region_mask(spec, region, pts, tie_tol)
    return pts[mask]


# ---------------------------------------------------------------------------
# exact integer lattice algebra


def _int_diagonalize(M):
    """Diagonalize an integer matrix by unimodular row/column operations.

    Returns (S, Uinv, V) with S diagonal (as a list of lists), where the
    input satisfies M = Uinv @ S @ Vinv for unimodular transforms; V is
    tracked directly so kernel vectors can be read off its columns, and
    Uinv so image-lattice basis vectors can be read off too.
    """
    S = [[int(x) for x in row] for row in M]
    r, c = len(S), len(S[0]) if S else 0
    V = [[1 if i == j else 0 for j in range(c)] for i in range(c)]
    Uinv = [[1 if i == j else 0 for j in range(r)] for i in range(r)]

    def swap_rows(i, j):
        S[i], S[j] = S[j], S[i]
        for row in Uinv:
            row[i], row[j] = row[j], row[i]

    def swap_cols(i, j):
        for row in S:
            row[i], row[j] = row[j], row[i]
        for row in V:
            row[i], row[j] = row[j], row[i]

    def add_row(dst, src, q):
        # row_dst += q * row_src on S corresponds to col_src -= q * col_dst on Uinv
        for j in range(c):
            S[dst][j] += q * S[src][j]
        for row in Uinv:
            row[src] -= q * row[dst]

    def add_col(dst, src, q):
        for row in S:
            row[dst] += q * row[src]
        for row in V:
            row[dst] += q * row[src]

    t = 0
    while t < min(r, c):
        pivot = None
        best = None
        for i in range(t, r):
            for j in range(t, c):
                if S[i][j] != 0 and (best is None or abs(S[i][j]) < best):
                    best = abs(S[i][j])
                    pivot = (i, j)
        if pivot is None:
            break
        i, j = pivot
        if i != t:
            swap_rows(t, i)
        if j != t:
            swap_cols(t, j)
        dirty = False
        for i in range(t + 1, r):
            if S[i][t] != 0:
                q = S[i][t] // S[t][t]
                add_row(i, t, -q)
                dirty = dirty or S[i][t] != 0
        for j in range(t + 1, c):
            if S[t][j] != 0:
                q = S[t][j] // S[t][t]
                add_col(j, t, -q)
                dirty = dirty or S[t][j] != 0
        if not dirty:
            t += 1
    return S, Uinv, V


def _scaled_int_rows(spec: ConeSpec, I=None):
    idx = range(1, spec.d + 1) if I is None else _normalize_subset(I)
    rows, scales = [], []
    for k in idx:
        ir = spec.int_rows[k - 1]
        if ir is None:
            raise ValueError(
                f"direction {k} is not exact-rational; integer lattice data undefined"
            )
        rows.append(list(ir[0]))
        scales.append(ir[1])
    return rows, scales, list(idx)


def _gram_det_int(basis) -> int:
    k = len(basis)
    if k == 0:
        return 1
    G = [[sum(a * b for a, b in zip(basis[i], basis[j])) for j in range(k)] for i in range(k)]
    S, _, _ = _int_diagonalize(G)
    det = 1
    for i in range(k):
        det *= S[i][i]
    return abs(det)


@dataclass(frozen=True)
class KernelLattice:
    """Integer basis of ker(A_v) in Z^D and its covolume."""

    basis: np.ndarray
    covolume: float
    covolume_sq: int

    @property
    def rank(self) -> int:
        return len(self.basis)


@dataclass(frozen=True)
class ImageLattice:
    """The lattice A_{v_I}(Z^D) in R^I: numerators over a common scale."""

    basis_num: np.ndarray
    scale: int
    covolume: Fraction


def kernel_lattice(spec: ConeSpec, I=None) -> KernelLattice:
    """Basis and covolume of the sublattice of Z^D annihilated by A_{v_I}.

    All rows are used when I is omitted.  Requires every selected row
    exact-rational.  The basis is primitive (it spans the full
    intersection of the kernel with Z^D); the covolume is sqrt(det Gram),
    exact when the determinant is a perfect square.
    """
    rows, _, _ = _scaled_int_rows(spec, I)
    S, _, V = _int_diagonalize(rows)
    rank = sum(1 for i in range(min(len(S), spec.D)) if S[i][i] != 0)
    basis = []
    for j in range(rank, spec.D):
        col = [V[i][j] for i in range(spec.D)]
        basis.append(col)
    for b in basis:
        for row in rows:
            assert sum(x * y for x, y in zip(row, b)) == 0
    g2 = _gram_det_int(basis)
    s = math.isqrt(g2)
    cov = float(s) if s * s == g2 else math.sqrt(g2)
    arr = np.array(basis, dtype=np.int64).reshape(len(basis), spec.D)
    return KernelLattice(basis=arr, covolume=cov, covolume_sq=g2)


def image_lattice(spec: ConeSpec, I=None) -> ImageLattice:
    """The lattice A_{v_I}(Z^D) subset of R^{|I|}, for exact-rational rows.

    Column vectors are basis_num[:, j] / scale.  The covolume is exact.
    """
    rows, scales, idx = _scaled_int_rows(spec, I)
    m = len(rows)
    scaled = [[rows[i][j] for j in range(spec.D)] for i in range(m)]
    S, Uinv, _ = _int_diagonalize(scaled)
    rank = sum(1 for i in range(min(m, spec.D)) if S[i][i] != 0)
    if rank < m:
        raise ValueError("facet rows are dependent over Q; image lattice is degenerate")
    lcm = math.lcm(*scales)
    # image of the scaled matrix is spanned by Uinv columns times the diagonal;
    # undo each row's own scale via the common denominator lcm
    cols = []
    for j in range(rank):
        col = [Uinv[i][j] * S[j][j] * (lcm // scales[i]) for i in range(m)]
        cols.append(col)
    basis_num = np.array(cols, dtype=object).T
    det = 1
    for j in range(rank):
        det *= S[j][j]
    cov = Fraction(abs(det))
    for s in scales:
        cov /= s
    return ImageLattice(basis_num=basis_num, scale=lcm, covolume=cov)


def covolume_facets(spec: ConeSpec, I=None) -> float:
    """sqrt(det(A A^T)) for the selected facet rows (all rows by default).

    Exact when every selected row is exact-rational and the Gram
    determinant is a perfect square of a rational.
    """
    idx = list(range(1, spec.d + 1)) if I is None else list(_normalize_subset(I))
    if all(spec.exact[k - 1] for k in idx):
        rows = [spec.vectors[k - 1] for k in idx]
        G = [
            [sum(a * b for a, b in zip(rows[i], rows[j])) for j in range(len(rows))]
            for i in range(len(rows))
        ]
        det = _frac_det(G)
        num, den = det.numerator, det.denominator
        sn, sd = math.isqrt(num), math.isqrt(den)
        if sn * sn == num and sd * sd == den:
            return float(Fraction(sn, sd))
        return math.sqrt(float(det))
    sub = spec.matrix[[k - 1 for k in idx]]
    g = sub @ sub.T
    return float(math.sqrt(max(np.linalg.det(g), 0.0)))


def _frac_det(G) -> Fraction:
    n = len(G)
    M = [[Fraction(x) for x in row] for row in G]
    det = Fraction(1)
    for c in range(n):
        piv = None
        for r in range(c, n):
            if M[r][c] != 0:
                piv = r
                break
        if piv is None:
            return Fraction(0)
        if piv != c:
            M[c], M[piv] = M[piv], M[c]
            det = -det
        det *= M[c][c]
        inv = 1 / M[c][c]
        for r in range(c + 1, n):
            f = M[r][c] * inv
            if f:
                for j in range(c, n):
                    M[r][j] -= f * M[c][j]
    return det


# ---------------------------------------------------------------------------
# point-count scaling


@dataclass(frozen=True)
class CountRow:
    t: float
    count: int
    predicted: float
    relative_error: float


def count_scaling_study(spec: ConeSpec, L: float, t_values) -> list:
    """Lattice point counts in the slab-window against the volume law.

    The region is 0 <= v_k . n <= L per direction with transverse radius t.
    The prediction is (L^d / covolume_facets) * Vol(B_{D-d}) * t^{D-d}.
    """
    if spec.d >= spec.D:
        raise ValueError("count scaling needs a transverse direction (d < D)")
    full = tuple(range(1, spec.d + 1))
    if spec.rationality_class(full) != "CI":
        raise ValueError(
            "the volume law holds for CI cones only; this spec is rational "
            "on the full index set"
        )
    ts = [float(t) for t in t_values]
    if any(t <= 0 for t in ts):
        raise ValueError("transverse radii must be positive")
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise ValueError("t_values must be strictly increasing")
    cov = covolume_facets(spec)
    vb = unit_ball_volume(spec.D - spec.d)
    rows = []
    for t in ts:
        region = Region(slab=tuple((0.0, float(L)) for _ in range(spec.d)), window=float(t))
        pts = enumerate_region(spec, region)
        predicted = (float(L) ** spec.d / cov) * vb * float(t) ** (spec.D - spec.d)
        rel = abs(len(pts) - predicted) / predicted if predicted else math.inf
        rows.append(CountRow(t=float(t), count=int(len(pts)), predicted=predicted, relative_error=rel))
    return rows


# ---------------------------------------------------------------------------
# escape vectors


def find_escape_vector(spec: ConeSpec, i: int, M: float, eps: float, search_radius: int):
    """First lattice point (lexicographic order) with v_i . n > M and
    0 < v_k . n < eps for every other direction, within the max-norm ball.

    Returns an int tuple, or None when no point in the search box
    satisfies the strict inequalities.  Candidates flagged by the float
    prefilter are verified exactly on the stored rational components.
    """
    if not 1 <= i <= spec.d:
        raise ValueError(f"direction index {i} out of range 1..{spec.d}")
    if spec.d == spec.D and all(spec.exact):
        warnings.warn(
            "all facet normals are exact-rational with d = D; escape vectors "
            "typically do not exist in this regime",
            stacklevel=2,
        )
    R = int(search_radius)
    A = spec.matrix
    D = spec.D
    others = [k for k in range(1, spec.d + 1) if k != i]

    fM, feps = Fraction(M), Fraction(eps)

    def exact_ok(n) -> bool:
        if spec.dot_fraction(i, n) <= fM:
            return False
        for k in others:
            v = spec.dot_fraction(k, n)
            if not (0 < v < feps):
                return False
        return True

    if D == 1:
        rest = np.zeros((1, 0), dtype=np.int64)
    else:
        axes = [np.arange(-R, R + 1, dtype=np.int64)] * (D - 1)
        mesh = np.meshgrid(*axes, indexing="ij")
        rest = np.stack([m.ravel() for m in mesh], axis=1)

    band = TIE_TOL
    for n1 in range(-R, R + 1):
        pts = np.empty((len(rest), D), dtype=np.int64)
        pts[:, 0] = n1
        if D > 1:
            pts[:, 1:] = rest
        vals = pts.astype(float) @ A.T
        mask = vals[:, i - 1] > M - band
        for k in others:
            col = vals[:, k - 1]
            mask &= (col > -band) & (col < eps + band)
        for idx in np.nonzero(mask)[0]:
            n = tuple(int(x) for x in pts[idx])
            if exact_ok(n):
                return n
    return None
