"""Embedding geometric data into the three algebras and reading it back.

Points:

* Euclidean algebra: a position is only meaningful relative to a caller
  supplied center, embedded as the grade-1 vector p - center.
* Projective algebra: the homogeneous trivector
  x1 e032 + x2 e013 + x3 e021 + e123, stored on canonical blades as
  (-x1) e023 + x2 e013 + (-x3) e012 + e123.
* Conformal algebra: the null vector o + p + |p|^2 inf / 2.

Planes with unit normal n and offset delta (the set n . x = delta):

* projective: n - delta e0
* conformal:  n + delta inf

Both plane vectors have inner product n . p - delta with the embedded
point p, so their odd sandwich realizes the Householder reflection
p - 2 (n . p - delta) n.

Plane embeddings are unit vectors, so they act as reflections through the
odd sandwich.  Extraction normalizes homogeneous representatives and raises
PointAtInfinityError when the normalizer underflows.
"""

import numpy as np

from gaeq.algebra import get_algebra, inner

__all__ = [
    "PointAtInfinityError",
    "embed_point_ega",
    "embed_point_pga",
    "embed_point_cga",
    "extract_point",
    "embed_plane_pga",
    "embed_plane_cga",
    "pga_point_to_cga_point",
    "load_points",
]


class PointAtInfinityError(ValueError):
    """Raised when a homogeneous point has no finite representative."""


def _check_point(p):
    p = np.asarray(p, dtype=float)
    if p.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {p.shape}")
    return p


def _check_unit_normal(n):
    n = np.asarray(n, dtype=float)
    if n.shape != (3,):
        raise ValueError(f"expected a 3-vector normal, got shape {n.shape}")
    if abs(np.linalg.norm(n) - 1.0) > 1e-9:
        raise ValueError("plane normal must have unit length")
    return n


def embed_point_ega(p, center):
    """Translation-gauged Euclidean embedding: the 1-vector p - center."""
    p = _check_point(p)
    center = _check_point(center)
    alg = get_algebra("ega")
    out = np.zeros(alg.size)
    out[[1, 2, 4]] = p - center
    return out


def embed_point_pga(p):
    """Projective trivector for a finite point, e123 coefficient one."""
    p = _check_point(p)
    alg = get_algebra("pga")
    out = np.zeros(alg.size)
    # x1 e032 + x2 e013 + x3 e021 + e123 on canonical ascending blades
    out[alg.blade_index("e023")] = -p[0]
    out[alg.blade_index("e013")] = p[1]
    out[alg.blade_index("e012")] = -p[2]
    out[alg.blade_index("e123")] = 1.0
    return out


def embed_point_cga(p):
    """Conformal null 1-vector o + p + |p|^2 inf / 2."""
    p = _check_point(p)
    alg = get_algebra("cga")
    out = alg.origin + 0.5 * float(p @ p) * alg.infinity
    out[[1, 2, 4]] += p
    return out


def extract_point(m, algebra_name):
    """Read a point back out of its multivector representation.

    The projective and conformal representations are homogeneous, so m is
    first normalized (trivector e123 coefficient, respectively the origin
    coefficient, set to one).  For the Euclidean algebra the grade-1
    coefficients are returned as is; they are relative to whatever center
    was used at embedding time.
    """
    m = np.asarray(m, dtype=float)
    alg = get_algebra(algebra_name)
    scale_floor = 1e-12 * max(np.abs(m).max(), 1e-300)
    if algebra_name == "ega":
        return m[[1, 2, 4]].copy()
    if algebra_name == "pga":
        w = m[alg.blade_index("e123")]
        if abs(w) < scale_floor:
            raise PointAtInfinityError("projective point has vanishing e123 part")
        return np.array(
            [
                -m[alg.blade_index("e023")],
                m[alg.blade_index("e013")],
                -m[alg.blade_index("e012")],
            ]
        ) / w
    if algebra_name == "cga":
        w = -inner(alg, m, alg.infinity)
        if abs(w) < scale_floor:
            raise PointAtInfinityError("conformal point has vanishing origin part")
        return m[[1, 2, 4]] / w
    raise ValueError(f"unknown algebra {algebra_name!r}")


def embed_plane_pga(n, delta):
    """Projective plane vector n - delta e0 for the plane n . x = delta."""
    n = _check_unit_normal(n)
    alg = get_algebra("pga")
    out = np.zeros(alg.size)
    out[alg.blade_index("e0")] = -float(delta)
    out[[2, 4, 8]] = n
    return out


def embed_plane_cga(n, delta):
    """Conformal plane vector n + delta inf for the plane n . x = delta."""
    n = _check_unit_normal(n)
    alg = get_algebra("cga")
    out = float(delta) * alg.infinity
    out[[1, 2, 4]] += n
    return out


def pga_point_to_cga_point(m):
    """Map a projective point to the conformal null vector of the same point.

    The projective representative is normalized first, so any nonzero scalar
    multiple of a finite point maps to the same conformal point.
    """
    return embed_point_cga(extract_point(m, "pga"))


def load_points(path):
    """Read a point set from a CSV or JSON file into an (n, 3) array.

    CSV files carry one x,y,z row per point; a leading non-numeric row is
    treated as a header and skipped.  JSON files carry an array of
    three-element arrays.  The format is picked by the .json suffix.
    """
    import csv
    import json
    import os

    if os.path.splitext(path)[1].lower() == ".json":
        with open(path) as fh:
            rows = json.load(fh)
    else:
        rows = []
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh)):
                if not row:
                    continue
                try:
                    rows.append([float(v) for v in row])
                except ValueError:
                    if lineno == 0:
                        continue
                    raise ValueError(f"{path}: bad row {lineno + 1}: {row!r}")
    pts = np.asarray(rows, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] == 0:
        raise ValueError(f"{path}: expected n x 3 point rows, got {pts.shape}")
    if not np.isfinite(pts).all():
        raise ValueError(f"{path}: points must be finite")
    return pts
