"""Classification of patterns into boundary strata.

A pattern lying over the stratum with constrained directions I carries
an offset vector x indexed by I, recovered from a truncation as

    x_k = -min over available points of v_k . n,  clamped at 0.

Directions whose estimated offset grows with the truncation radius are
treated as escaped to infinity and drop out of I.  The strict subset J
is only detectable where the offset sits exactly on a lattice value and
the corresponding boundary point is missing from the pattern; elsewhere
the strict and non-strict versions coincide as subsets of Z^D and the
distinction is vacuous.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .cone_lattice import ConeSpec
from .fell import AnalyticPattern, FinitePattern, ball_points

__all__ = [
    "EscapedDirectionError",
    "StratumLabel",
    "classify",
    "filtration_level",
    "gamma",
]

STRICT_TOL = 1e-9


class EscapedDirectionError(ValueError):
    """A requested direction has no finite offset on this pattern."""


@dataclass(frozen=True, eq=False)
class StratumLabel:
    """Where a pattern sits: constrained directions I, strict subset J,
    offsets x aligned with I, and an empirical error bar on x."""

    I: tuple
    J: tuple
    x: tuple
    x_error: float
    codimension: int
    escaped: tuple
    x_exact: tuple | None = None
    notes: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "I", tuple(sorted(int(k) for k in self.I)))
        object.__setattr__(self, "J", tuple(sorted(int(k) for k in self.J)))
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        if not set(self.J) <= set(self.I):
            raise ValueError(f"J={self.J} must be contained in I={self.I}")
        if len(self.x) != len(self.I):
            raise ValueError("x must align with I")
        if any(v < 0 for v in self.x):
            raise ValueError("offsets are nonnegative by construction")
        if self.codimension != len(self.I):
            raise ValueError("codimension must equal |I|")
        if not (math.isfinite(self.x_error) and self.x_error >= 0):
            raise ValueError("x_error must be finite and nonnegative")

    def to_dict(self) -> dict:
        doc = {
            "I": list(self.I),
            "J": list(self.J),
            "x": list(self.x),
            "x_error": self.x_error,
            "codimension": self.codimension,
            "escaped": list(self.escaped),
        }
        if self.notes:
            doc["notes"] = list(self.notes)
        return doc


def _finite_estimates(spec: ConeSpec, p: FinitePattern, directions, radius=None):
    """Raw offset estimates -min v_k.n over the points inside ``radius``.

    Returns (raw floats, exact Fractions or None).  An empty restriction
    yields -inf raw estimates (nothing constrains the direction yet).
    """
    pts = p.points
    if radius is not None and radius < p.radius:
        nn = (pts.astype(float) ** 2).sum(axis=1)
        pts = pts[nn < radius * radius - 1e-9]
    raw = []
    exact = [] if all(r is not None for r in spec.int_rows) else None
    for k in directions:
        if len(pts) == 0:
            raw.append(-math.inf)
            if exact is not None:
                exact.append(None)
            continue
        vals = pts.astype(float) @ spec.matrix[k - 1]
        raw.append(-float(vals.min()))
        if exact is not None:
            pk, sk = spec.int_rows[k - 1]
            dots = pts @ pk
            exact.append(Fraction(-int(dots.min()), sk))
    return raw, exact


def gamma(p, I, spec: ConeSpec):
    """Offset vector of p over the stratum with constrained directions I.

    Returns (x, x_error) with x_k = -min v_k.n over the truncation,
    clamped at 0.  Analytic patterns are read off exactly (error 0).
    The error bar for finite patterns is the largest decrement of the
    estimate between the half-radius and full-radius truncations.
    """
    I = tuple(sorted(int(k) for k in I))
    if any(k < 1 or k > spec.d for k in I):
        raise ValueError(f"I={I} must be a subset of 1..{spec.d}")
    if isinstance(p, AnalyticPattern):
        missing = set(I) - set(p.I)
        if missing:
            raise EscapedDirectionError(
                f"directions {sorted(missing)} are unconstrained on this pattern; "
                "their offsets diverge"
            )
        return tuple(p.offset(k) for k in I), 0.0
    if not isinstance(p, FinitePattern):
        raise TypeError(f"cannot take offsets of {type(p).__name__}")
    raw_full, ex_full = _finite_estimates(spec, p, I)
    raw_half, ex_half = _finite_estimates(spec, p, I, radius=p.radius / 2.0)
    x = []
    err = 0.0
    for pos, (k, est, half) in enumerate(zip(I, raw_full, raw_half)):
        if est > 0.5 * p.radius:
            raise EscapedDirectionError(
                f"direction {k}: estimated offset {est:.6g} exceeds half the "
                f"truncation radius {p.radius}; the infimum appears to diverge"
            )
        if ex_full is not None and ex_full[pos] is not None:
            # exact-rational rows: integer arithmetic, error bar free of
            # float rounding (identical estimates give exactly zero)
            xk = max(ex_full[pos], Fraction(0))
            x.append(float(xk))
            h = ex_half[pos] if ex_half is not None else None
            if h is not None:
                err = max(err, float(xk - max(h, Fraction(0))))
            continue
        x.append(max(est, 0.0))
        if math.isfinite(half):
            err = max(err, max(est, 0.0) - max(half, 0.0))
    return tuple(x), err


def _strict_detect(spec: ConeSpec, p: FinitePattern, I, x, strict_tol):
    """Literal boundary test for the strict subset.

    k goes into J when the offset coincides with a lattice value of
    v_k and every ball point achieving that boundary (while satisfying
    the other constraints) is missing from the pattern.
    """
    J = []
    notes = []
    if not I:
        return tuple(J), tuple(notes)
    pts = ball_points(p.D, p.radius)
    vals = {k: pts.astype(float) @ spec.matrix[k - 1] for k in I}
    xmap = dict(zip(I, x))
    present = p._point_set
    for k in I:
        on_boundary = np.abs(vals[k] + xmap[k]) <= strict_tol
        if not np.any(on_boundary):
            notes.append(
                f"direction {k}: offset {xmap[k]!r} matches no lattice value; "
                "strict and non-strict constraints coincide here"
            )
            continue
        ok_others = np.ones(len(pts), dtype=bool)
        for j in I:
            if j != k:
                ok_others &= vals[j] + xmap[j] >= -strict_tol
        cand = pts[on_boundary & ok_others]
        if len(cand) and all(tuple(int(v) for v in m) not in present for m in cand):
            J.append(k)
    return tuple(J), tuple(notes)


def classify(
    p,
    spec: ConeSpec,
    escape_threshold: float = 0.5,
    strict_tol: float = STRICT_TOL,
) -> StratumLabel:
    """Assign a pattern to its stratum.

    Analytic patterns are read off directly.  For finite truncations a
    direction is declared escaped once its raw offset estimate exceeds
    escape_threshold times the truncation radius; the rest form I with
    clamped offsets, and the strict subset is detected by the literal
    boundary test.
    """
    if not (0.0 < escape_threshold < 1.0):
        raise ValueError("escape_threshold must lie in (0, 1)")
    if isinstance(p, AnalyticPattern):
        if p.spec is not spec and p.spec.to_dict() != spec.to_dict():
            raise ValueError("pattern was built over a different cone spec")
        escaped = tuple(k for k in range(1, spec.d + 1) if k not in p.I)
        x_exact = None
        if all(r is not None for r in spec.int_rows):
            x_exact = tuple(_exact_offset(v) for v in p.x)
        return StratumLabel(
            I=p.I,
            J=p.J,
            x=p.x,
            x_error=0.0,
            codimension=len(p.I),
            escaped=escaped,
            x_exact=x_exact,
            notes=p.warnings,
        )
    if not isinstance(p, FinitePattern):
        raise TypeError(f"cannot classify {type(p).__name__}")

    every = tuple(range(1, spec.d + 1))
    raw_full, exact_full = _finite_estimates(spec, p, every)
    I, escaped = [], []
    for k, est in zip(every, raw_full):
        if est > escape_threshold * p.radius:
            escaped.append(k)
        else:
            I.append(k)
    I = tuple(I)
    x, err = gamma(p, I, spec) if I else ((), 0.0)
    J, notes = _strict_detect(spec, p, I, x, strict_tol)
    x_exact = None
    if exact_full is not None:
        x_exact = tuple(
            max(exact_full[k - 1], Fraction(0)) for k in I
        )
    return StratumLabel(
        I=I,
        J=J,
        x=x,
        x_error=err,
        codimension=len(I),
        escaped=tuple(escaped),
        x_exact=x_exact,
        notes=notes,
    )


def _exact_offset(v: float) -> Fraction:
    f = Fraction(v).limit_denominator(10**9)
    return f if abs(float(f) - v) <= 1e-12 else Fraction(v)


def filtration_level(label: StratumLabel) -> int:
    """Smallest filtration index containing the stratum: |I|."""
    return label.codimension
