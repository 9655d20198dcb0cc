"""Patterns in Z^D and the truncation metric between them.

Two representations coexist.  An analytic pattern is given by a rule:
directions I with boundary offsets x and a strict subset J,

    n belongs  iff  v_k . n + x_k > 0 for k in J,
                    v_k . n + x_k >= 0 for k in I \\ J,

with directions outside I unconstrained.  A finite pattern is an explicit
point list valid inside an open ball around the origin.  The metric
between two patterns compares truncations: the distance is 1/(r*+1)
where r* is the largest radius at which the truncations agree.  Since a
truncation only changes when the radius crosses a lattice-point norm, r*
is located exactly at the norm of the first disagreement point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .cone_lattice import (
    TIE_TOL,
    ConeSpec,
    cone_membership,
    membership_mask,
)

__all__ = [
    "AnalyticPattern",
    "FellDistance",
    "FinitePattern",
    "ascii_grid",
    "ball_points",
    "fell_distance",
    "hull_point",
    "orbit_point",
    "sequence_limit",
]

TAG_NONINCREASING = "nonincreasing"
TAG_INCREASING = "increasing"
TAG_DIVERGENT = "divergent"
_TAGS = (TAG_NONINCREASING, TAG_INCREASING, TAG_DIVERGENT)


@lru_cache(maxsize=64)
def _ball_cached(D: int, r: float):
    B = int(math.ceil(r))
    axes = [np.arange(-B, B + 1, dtype=np.int64)] * D
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    nn = (pts.astype(float) ** 2).sum(axis=1)
    pts = pts[nn < r * r - 1e-9]
    pts.setflags(write=False)
    return pts


def ball_points(D: int, r: float) -> np.ndarray:
    """Integer points in the open Euclidean ball of radius r, lex order."""
    if r <= 0:
        return np.zeros((0, D), dtype=np.int64)
    return _ball_cached(int(D), float(r))


def _norms(pts: np.ndarray) -> np.ndarray:
    return np.sqrt((pts.astype(float) ** 2).sum(axis=1))


@dataclass(frozen=True, eq=False)
class FellDistance:
    """Distance report: value = 1/(agreement_radius + 1).

    exact is True when a disagreement point witnesses the radius; False
    means the truncations agreed through the whole scanned range and the
    value is only an upper bound.
    """

    value: float
    agreement_radius: float
    exact: bool
    witness: tuple | None = None

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "agreement_radius": self.agreement_radius,
            "status": "exact" if self.exact else "upper_bound_only",
            "witness": list(self.witness) if self.witness is not None else None,
        }


@dataclass(frozen=True, eq=False)
class AnalyticPattern:
    """Rule-defined pattern over a cone spec.

    I and J are sorted 1-based direction tuples, x the offsets aligned
    with I.  The pattern extends to arbitrary radius.
    """

    spec: ConeSpec
    I: tuple
    J: tuple
    x: tuple
    warnings: tuple = ()
    certificate: FellDistance | None = None

    def __post_init__(self):
        I = tuple(sorted(int(k) for k in self.I))
        J = tuple(sorted(int(k) for k in self.J))
        x = tuple(float(v) for v in self.x)
        object.__setattr__(self, "I", I)
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "x", x)
        if len(set(I)) != len(I) or any(k < 1 or k > self.spec.d for k in I):
            raise ValueError(f"I={I} must be a subset of 1..{self.spec.d}")
        if not set(J) <= set(I):
            raise ValueError(f"J={J} must be contained in I={I}")
        if len(x) != len(I):
            raise ValueError(f"got {len(x)} offsets for {len(I)} directions")
        if any(v < -TIE_TOL for v in x):
            raise ValueError(f"offsets must be nonnegative, got {x}")

    @property
    def D(self) -> int:
        return self.spec.D

    @property
    def available_radius(self) -> float:
        return math.inf

    def offset(self, k: int) -> float:
        return self.x[self.I.index(k)]

    def member_mask(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.int64)
        if pts.size == 0:
            return np.zeros(0, dtype=bool)
        ok = np.ones(len(pts), dtype=bool)
        for pos, k in enumerate(self.I):
            val = pts.astype(float) @ self.spec.matrix[k - 1] + self.x[pos]
            if k in self.J:
                ok &= val > TIE_TOL
            else:
                ok &= val >= -TIE_TOL
        return ok

    def membership(self, n) -> bool:
        return bool(self.member_mask(np.asarray([n], dtype=np.int64))[0])

    def truncation(self, r: float) -> np.ndarray:
        pts = ball_points(self.D, r)
        return pts[self.member_mask(pts)]

    def translate(self, n) -> "AnalyticPattern":
        """The shifted pattern S - n (membership of m tests m + n in S)."""
        n = np.asarray(n, dtype=np.int64)
        shift = self.spec.matrix[[k - 1 for k in self.I]] @ n.astype(float)
        x = tuple(xi + si for xi, si in zip(self.x, shift))
        if any(v < -TIE_TOL for v in x):
            raise ValueError(f"translate by {tuple(int(v) for v in n)} leaves the hull chart: offsets {x}")
        return AnalyticPattern(self.spec, self.I, self.J, x, warnings=self.warnings)

    def to_dict(self) -> dict:
        return {
            "kind": "analytic",
            "I": list(self.I),
            "J": list(self.J),
            "x": list(self.x),
            "radius": None,
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True, eq=False)
class FinitePattern:
    """Explicit pattern truncation, exact inside the open ball of radius
    ``radius`` around the origin."""

    points: np.ndarray
    radius: float
    warnings: tuple = ()

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.int64)
        if pts.ndim != 2:
            pts = pts.reshape(len(pts), -1)
        order = np.lexsort(pts.T[::-1])
        pts = pts[order]
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius <= 0:
            raise ValueError("truncation radius must be positive")
        if len(pts) and _norms(pts).max() >= self.radius:
            raise ValueError("points extend beyond the stated truncation radius")

    @property
    def D(self) -> int:
        return self.points.shape[1]

    @property
    def available_radius(self) -> float:
        return self.radius

    @property
    def _point_set(self):
        cached = self.__dict__.get("_point_set_cache")
        if cached is None:
            cached = {tuple(int(v) for v in p) for p in self.points}
            self.__dict__["_point_set_cache"] = cached
        return cached

    def membership(self, n) -> bool:
        n = tuple(int(v) for v in n)
        if math.sqrt(sum(v * v for v in n)) >= self.radius:
            raise ValueError(
                f"{n} lies at or beyond the truncation radius {self.radius}; "
                "membership there is not represented"
            )
        return n in self._point_set

    def truncation(self, r: float) -> np.ndarray:
        if r > self.radius + 1e-12:
            raise ValueError(f"truncation radius exceeded: requested {r}, available {self.radius}")
        return self.points[_norms(self.points) < r - 1e-9]

    def translate(self, n) -> "FinitePattern":
        n = np.asarray(n, dtype=np.int64)
        r = self.radius - math.sqrt(float((n.astype(float) ** 2).sum()))
        if r <= 0:
            raise ValueError("translation eats the whole truncation radius")
        shifted = self.points - n
        keep = _norms(shifted) < r - 1e-9
        return FinitePattern(shifted[keep], r, warnings=self.warnings)

    def to_dict(self) -> dict:
        return {
            "kind": "finite",
            "points": [[int(v) for v in p] for p in self.points],
            "radius": self.radius,
            "warnings": list(self.warnings),
        }


def pattern_from_dict(doc: dict, spec: ConeSpec | None = None):
    kind = doc.get("kind")
    if kind == "analytic":
        if spec is None:
            raise ValueError("analytic patterns need a cone spec")
        return AnalyticPattern(spec, tuple(doc["I"]), tuple(doc["J"]), tuple(doc["x"]))
    if kind == "finite":
        return FinitePattern(np.asarray(doc["points"], dtype=np.int64), float(doc["radius"]))
    raise ValueError(f"unknown pattern kind {kind!r}")


def orbit_point(spec: ConeSpec, n, radius: float) -> FinitePattern:
    """Truncation of the shifted semigroup L_v - n for n in L_v.

    The result contains exactly the m with ||m|| < radius and m + n in
    L_v; in particular it contains the origin.
    """
    n = np.asarray([int(v) for v in n], dtype=np.int64)
    if not cone_membership(spec, n):
        raise ValueError(f"{tuple(int(v) for v in n)} is not in the cone semigroup")
    pts = ball_points(spec.D, radius)
    keep = membership_mask(spec, pts + n)
    return FinitePattern(pts[keep], radius)


def hull_point(
    spec: ConeSpec,
    I,
    J,
    x,
    mode: str = "analytic",
    radius: float | None = None,
    strict_tol: float = 1e-9,
    search_radius: float = 50.0,
):
    """Pattern with constrained directions I, strict subset J, offsets x.

    For every k in J the offset must be realized by some lattice point
    (|v_k . m - x_k| <= strict_tol within the search ball) and be nonzero;
    otherwise the strict constraint cannot differ from the non-strict one
    at this resolution and a warning is attached to the pattern.
    """
    I = tuple(sorted(int(k) for k in I))
    J = tuple(sorted(int(k) for k in J))
    x = tuple(float(v) for v in x)
    warns = []
    if J:
        pts = ball_points(spec.D, float(search_radius))
        for k in J:
            xk = x[I.index(k)]
            vals = pts.astype(float) @ spec.matrix[k - 1]
            attained = bool(np.any(np.abs(vals - xk) <= strict_tol))
            if xk <= strict_tol or not attained:
                warns.append(
                    f"direction {k}: offset {xk!r} is not attained by any lattice "
                    f"point within radius {search_radius}; the strict and non-strict "
                    "patterns are indistinguishable here"
                )
    pat = AnalyticPattern(spec, I, J, x, warnings=tuple(warns))
    if mode == "analytic":
        return pat
    if mode == "finite":
        if radius is None:
            raise ValueError("finite mode needs a truncation radius")
        return FinitePattern(pat.truncation(radius), radius, warnings=tuple(warns))
    raise ValueError(f"unknown mode {mode!r}")


def fell_distance(p, q, max_radius: float | None = None) -> FellDistance:
    """Truncation distance between two patterns.

    Scans the common available radius (or max_radius if given, which must
    not exceed what either pattern can represent).  If a disagreement
    point exists, the distance is exactly 1/(1 + ||first disagreement||);
    otherwise 1/(1 + R) is reported as an upper bound.
    """
    if p.D != q.D:
        raise ValueError("patterns live in different dimensions")
    avail = min(p.available_radius, q.available_radius)
    if max_radius is None:
        R = avail
        if not math.isfinite(R):
            raise ValueError("two analytic patterns need an explicit max_radius")
    else:
        R = float(max_radius)
        if R > avail + 1e-12:
            raise ValueError(f"truncation radius exceeded: requested {R}, available {avail}")
    tp = {tuple(int(v) for v in row) for row in p.truncation(R)}
    tq = {tuple(int(v) for v in row) for row in q.truncation(R)}
    diff = tp ^ tq
    if not diff:
        return FellDistance(value=1.0 / (R + 1.0), agreement_radius=R, exact=False)
    best = min(diff, key=lambda m: (sum(v * v for v in m), m))
    rho = math.sqrt(sum(v * v for v in best))
    return FellDistance(value=1.0 / (rho + 1.0), agreement_radius=rho, exact=True, witness=best)


def sequence_limit(
    spec: ConeSpec,
    offsets,
    tags,
    limits=None,
    certificate_radius: float = 8.0,
) -> AnalyticPattern:
    """Limit pattern of a sequence of full-offset patterns.

    offsets is an (n_steps, d) array; tags gives one of "nonincreasing",
    "increasing", "divergent" per direction.  Directions with finite tags
    survive into I, with the strictly increasing ones forming J (their
    limit offset is approached from below and never attained).  Divergent
    directions drop out entirely.  Finite limits may be supplied as a
    mapping {direction: value}; by default the tail value is used.

    A certificate is attached: the distance between the full-offset
    pattern at the last sequence element and the limit pattern, scanned
    up to certificate_radius.
    """
    arr = np.asarray(offsets, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != spec.d:
        raise ValueError(f"offsets must be (steps, d={spec.d}), got {arr.shape}")
    if arr.shape[0] < 2:
        raise ValueError("need at least two sequence elements")
    tags = tuple(tags)
    if len(tags) != spec.d or any(t not in _TAGS for t in tags):
        raise ValueError(f"tags must be one of {_TAGS} per direction, got {tags}")

    for k in range(1, spec.d + 1):
        col = arr[:, k - 1]
        diffs = np.diff(col)
        tag = tags[k - 1]
        if tag == TAG_NONINCREASING and np.any(diffs > TIE_TOL):
            raise ValueError(f"direction {k} tagged {tag} but the offsets increase")
        if tag == TAG_INCREASING and np.any(diffs <= 0):
            raise ValueError(f"direction {k} tagged {tag} but the offsets are not strictly increasing")
        if tag == TAG_DIVERGENT and np.any(diffs < -TIE_TOL):
            raise ValueError(f"direction {k} tagged {tag} but the offsets decrease")

    limits = dict(limits or {})
    I, J, x = [], [], []
    for k in range(1, spec.d + 1):
        tag = tags[k - 1]
        if tag == TAG_DIVERGENT:
            if k in limits:
                raise ValueError(f"direction {k} is divergent; a finite limit is inconsistent")
            continue
        last = float(arr[-1, k - 1])
        lim = float(limits.get(k, last))
        if tag == TAG_INCREASING:
            if lim < last - TIE_TOL:
                raise ValueError(f"direction {k}: limit {lim} below the last offset {last}")
            J.append(k)
        else:
            if lim > last + TIE_TOL:
                raise ValueError(f"direction {k}: limit {lim} above the last offset {last}")
        I.append(k)
        x.append(max(lim, 0.0))

    limit_pattern = AnalyticPattern(spec, tuple(I), tuple(J), tuple(x))
    last_pattern = AnalyticPattern(
        spec, tuple(range(1, spec.d + 1)), (), tuple(max(v, 0.0) for v in arr[-1])
    )
    cert = fell_distance(last_pattern, limit_pattern, max_radius=certificate_radius)
    return replace(limit_pattern, certificate=cert)


def ascii_grid(pattern, r: float | None = None) -> str:
    """Text rendering of a two-dimensional pattern truncation.

    '#' marks members, '.' non-members inside the ball, ' ' outside;
    the origin renders as '@' when it is a member and 'o' otherwise.
    """
    if pattern.D != 2:
        raise ValueError("ascii grids are only drawn for D = 2")
    if r is None:
        r = pattern.available_radius
        if not math.isfinite(r):
            r = 10.0
    pts = pattern.truncation(r)
    members = {tuple(int(v) for v in p) for p in pts}
    B = int(math.ceil(r)) - 1
    lines = []
    for y in range(B, -B - 1, -1):
        row = []
        for xx in range(-B, B + 1):
            if xx * xx + y * y >= r * r - 1e-9:
                row.append(" ")
            elif (xx, y) == (0, 0):
                row.append("@" if (0, 0) in members else "o")
            else:
                row.append("#" if (xx, y) in members else ".")
        lines.append("".join(row).rstrip())
    return "\n".join(lines)
