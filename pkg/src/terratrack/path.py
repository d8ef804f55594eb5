"""Reference paths: polylines with arc-length parameterization and a
position-indexed speed profile, plus closed-loop reference generation."""

from __future__ import annotations

import numpy as np
from dataclasses import dataclass, field


class PathError(ValueError):
    pass


@dataclass
class ReferencePath:
    points: np.ndarray                  # (M, 2) waypoints
    speed_s: np.ndarray                 # arc-length knots of the speed table
    speed_v: np.ndarray                 # reference speed at each knot, >= 0
    arclen: np.ndarray = field(init=False)  # (M,) cumulative arc length

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.speed_s = np.asarray(self.speed_s, dtype=float)
        self.speed_v = np.asarray(self.speed_v, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 2 or len(self.points) < 2:
            raise PathError("path needs at least two 2-D waypoints")
        if not np.all(np.isfinite(self.points)):
            raise PathError("waypoints must be finite")
        seg = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        if np.any(seg <= 0.0):
            raise PathError("consecutive waypoints must be distinct")
        self.arclen = np.concatenate(([0.0], np.cumsum(seg)))
        if len(self.speed_s) != len(self.speed_v) or len(self.speed_s) < 1:
            raise PathError("speed table must pair arc-length and speed knots")
        if np.any(np.diff(self.speed_s) <= 0.0) and len(self.speed_s) > 1:
            raise PathError("speed table knots must be strictly increasing")
        if np.any(self.speed_v < 0.0):
            raise PathError("reference speeds must be >= 0")

    @classmethod
    def straight(cls, length: float, v_ref: float) -> "ReferencePath":
        """Straight line along +x with a constant speed reference."""
        pts = np.array([[0.0, 0.0], [length, 0.0]])
        return cls(pts, np.array([0.0, length]), np.array([v_ref, v_ref]))

    @property
    def total_length(self) -> float:
        return float(self.arclen[-1])

    def v_ref_at(self, s: float) -> float:
        return float(np.interp(s, self.speed_s, self.speed_v))

    def _segment_index(self, s: float) -> int:
        i = int(np.searchsorted(self.arclen, s, side="right")) - 1
        return min(max(i, 0), len(self.points) - 2)

    def point_at(self, s: float) -> np.ndarray:
        s = min(max(s, 0.0), self.total_length)
        i = self._segment_index(s)
        seg_len = self.arclen[i + 1] - self.arclen[i]
        t = (s - self.arclen[i]) / seg_len
        return self.points[i] + t * (self.points[i + 1] - self.points[i])

    def heading_at(self, s: float) -> float:
        i = self._segment_index(min(max(s, 0.0), self.total_length))
        d = self.points[i + 1] - self.points[i]
        return float(np.arctan2(d[1], d[0]))

    def project(self, position) -> tuple[float, float]:
        """Closest point on the polyline: (arc length s*, unsigned distance).

        Ties resolve toward smaller arc length.
        """
        p = np.asarray(position, dtype=float)
        a = self.points[:-1]
        d = self.points[1:] - a
        seg_len2 = np.einsum("ij,ij->i", d, d)
        t = np.clip(np.einsum("ij,ij->i", p - a, d) / seg_len2, 0.0, 1.0)
        proj = a + t[:, None] * d
        dist2 = np.einsum("ij,ij->i", p - proj, p - proj)
        i = int(np.argmin(dist2))  # first minimum = smallest arc length
        s_star = self.arclen[i] + t[i] * np.sqrt(seg_len2[i])
        return float(s_star), float(np.sqrt(dist2[i]))

    def cross_track_error(self, position) -> tuple[float, float, float]:
        """(s*, signed cross-track distance, path heading at s*).

        Positive distance means the position lies left of the path tangent.
        """
        p = np.asarray(position, dtype=float)
        s_star, dist = self.project(p)
        i = self._segment_index(s_star)
        d = self.points[i + 1] - self.points[i]
        w = p - self.points[i]
        sign = 1.0 if d[0] * w[1] - d[1] * w[0] >= 0.0 else -1.0
        return s_star, sign * dist, float(np.arctan2(d[1], d[0]))


def generate_references(path: ReferencePath, position, stages: int,
                        dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Closed-loop reference trajectory, re-anchored at the current projection.

    Returns state references rho of shape (stages+1, 5) laid out as the
    bicycle state [x, y, heading, steering, speed] with zero steering, and
    zero input references mu of shape (stages, 2). Depends only on the
    current position, never on elapsed mission time.
    """
    s, _ = path.project(position)
    rho = np.zeros((stages + 1, 5))
    for k in range(stages + 1):
        pt = path.point_at(s)
        v = path.v_ref_at(s)
        rho[k, 0] = pt[0]
        rho[k, 1] = pt[1]
        rho[k, 2] = path.heading_at(s)
        rho[k, 4] = v
        s = min(s + v * dt, path.total_length)
    mu = np.zeros((stages, 2))
    return rho, mu
