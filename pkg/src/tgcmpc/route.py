"""Piecewise constant-curvature routes, Frenet projection and speed profiles."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, InvalidParameterError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Segment:
    length: float  # m
    curvature: float  # 1/m, positive = left
    speed: float  # m/s target on this segment


class EndOfRoute(DomainError):
    pass


def _wrap(a):
    """Wrap to (-pi, pi]."""
    w = math.fmod(a + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


class Route:
    def __init__(self, segments, mu: float | None = None, g: float = 9.81, x0=0.0, y0=0.0, heading0=0.0,
                 a_brake: float = 4.0, a_accel: float = 2.0):
        segs = [s if isinstance(s, Segment) else Segment(*s) for s in segments]
        if not segs:
            raise InvalidParameterError("route has no segments")
        for s in segs:
            if not s.length > 0:
                raise InvalidParameterError("segment lengths must be positive")
            if not s.speed > 0:
                raise InvalidParameterError("segment speeds must be positive")
        self.segments = segs
        self.a_brake, self.a_accel = float(a_brake), float(a_accel)
        self.start = np.concatenate([[0.0], np.cumsum([s.length for s in segs])])
        self.kappa = np.array([s.curvature for s in segs])
        self.speeds = np.array([s.speed for s in segs])
        self.length = float(self.start[-1])
        # pose at every segment start
        px, py, th = [float(x0)], [float(y0)], [float(heading0)]
        for s in segs:
            x, y, t = _advance(px[-1], py[-1], th[-1], s.curvature, s.length)
            px.append(x)
            py.append(y)
            th.append(t)
        self._px, self._py, self._th = np.array(px), np.array(py), np.array(th)
        if mu is not None:
            lim = mu * g
            for s in segs:
                if abs(s.curvature) * s.speed**2 > lim:
                    log.warning(
                        "segment demands %.2f m/s^2 lateral, above mu*g = %.2f", abs(s.curvature) * s.speed**2, lim
                    )

    # geometry ----------------------------------------------------------
    def index(self, s: float) -> int:
        """Segment containing arc length ``s`` (right-continuous at joints)."""
        if s < 0 or s > self.length:
            raise EndOfRoute(f"progress {s} outside [0, {self.length}]")
        i = int(np.searchsorted(self.start, s, side="right") - 1)
        return min(i, len(self.segments) - 1)

    def curvature(self, s: float) -> float:
        return float(self.kappa[self.index(s)])

    def pose(self, s: float):
        """``(x, y, heading)`` of the reference at arc length ``s``."""
        i = self.index(s)
        return _advance(self._px[i], self._py[i], self._th[i], self.kappa[i], s - self.start[i])

    def curvature_preview(self, s: float, ds) -> np.ndarray:
        """Curvature at ``s + ds[k]``, held at the last segment beyond the end."""
        pts = np.clip(s + np.asarray(ds, dtype=float), 0.0, self.length)
        idx = np.minimum(np.searchsorted(self.start, pts, side="right") - 1, len(self.segments) - 1)
        return self.kappa[idx]

    def mirrored(self) -> "Route":
        return Route(
            [Segment(s.length, -s.curvature, s.speed) for s in self.segments],
            x0=self._px[0],
            y0=-self._py[0],
            heading0=-self._th[0],
            a_brake=self.a_brake,
            a_accel=self.a_accel,
        )

    # speed profile -------------------------------------------------------
    def speed_ref(self, s: float) -> tuple[float, float]:
        """Reference speed and its arc-length derivative at ``s``.

        Segment targets are blended with constant-deceleration ramps ahead of
        slower segments and constant-acceleration ramps after them.
        """
        s = min(max(s, 0.0), self.length)
        i = self.index(s)
        best, slope = float(self.speeds[i]), 0.0
        for j in range(len(self.segments)):
            vj = float(self.speeds[j])
            if j > i:  # brake for a slower segment ahead
                d = self.start[j] - s
                v = math.sqrt(vj * vj + 2.0 * self.a_brake * d)
                if v < best:
                    best, slope = v, -self.a_brake / v
            elif j < i:  # accelerate out of a slower segment behind
                d = s - self.start[j + 1]
                v = math.sqrt(vj * vj + 2.0 * self.a_accel * d)
                if v < best:
                    best, slope = v, self.a_accel / v
        return best, slope

    # io ------------------------------------------------------------------
    def to_list(self) -> list:
        return [{"length": s.length, "curvature": s.curvature, "speed": s.speed} for s in self.segments]

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_list(), fh, indent=1)

    @classmethod
    def from_list(cls, items, **kw) -> "Route":
        try:
            segs = [Segment(float(d["length"]), float(d["curvature"]), float(d["speed"])) for d in items]
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad route segment: {exc}") from exc
        return cls(segs, **kw)

    @classmethod
    def load(cls, path, **kw) -> "Route":
        with open(path) as fh:
            return cls.from_list(json.load(fh), **kw)


def _advance(x, y, th, kappa, ds):
    if abs(kappa) < 1e-12:
        return x + ds * math.cos(th), y + ds * math.sin(th), th
    th2 = th + kappa * ds
    return x + (math.sin(th2) - math.sin(th)) / kappa, y - (math.cos(th2) - math.cos(th)) / kappa, th2


def project(route: Route, x: float, y: float, s_guess: float, iters: int = 8) -> float:
    """Arc length of the reference point closest to ``(x, y)`` near ``s_guess``."""
    s = min(max(s_guess, 0.0), route.length)
    for _ in range(iters):
        px, py, th = route.pose(s)
        c, sn = math.cos(th), math.sin(th)
        dx, dy = x - px, y - py
        along = dx * c + dy * sn
        lateral = -dx * sn + dy * c
        k = route.curvature(s)
        step = along / max(1.0 - k * lateral, 1e-3)
        s_new = min(max(s + step, 0.0), route.length)
        if abs(s_new - s) < 1e-10:
            return s_new
        s = s_new
    return s


def frenet_errors(pose, route: Route, progress: float):
    """``(e_y, e_psi, kappa)`` of ``pose = (x, y, psi)`` at arc length ``progress``.

    ``e_y`` is the signed offset (left positive) from the reference point at
    ``progress``; the heading error is wrapped to (-pi, pi]; the curvature is
    that of the segment being entered at a joint.
    """
    if progress < 0 or progress > route.length:
        raise EndOfRoute(f"progress {progress} outside [0, {route.length}]")
    x, y, psi = pose
    px, py, th = route.pose(progress)
    e_y = -(x - px) * math.sin(th) + (y - py) * math.cos(th)
    return e_y, _wrap(psi - th), route.curvature(progress)


def two_left_turns(
    length: float = 750.0,
    mu: float = 0.8,
    a_lat_hard: float = 8.0,
    a_lat_mild: float = 3.0,
    v_straight: float = 25.0,
    v_mild: float = 20.0,
    v_hard: float = 18.0,
    angle_mild: float = math.pi / 2,
    angle_hard: float = math.pi / 2,
    g: float = 9.81,
) -> Route:
    """Straight, mild left arc, straight, hard left arc, straight; ``length`` m in total.

    Arc radii follow from the lateral acceleration each turn demands at its
    target speed.
    """
    R_mild = v_mild**2 / a_lat_mild
    R_hard = v_hard**2 / a_lat_hard
    L_mild, L_hard = R_mild * angle_mild, R_hard * angle_hard
    rest = length - L_mild - L_hard
    if rest <= 30.0:
        raise InvalidParameterError("turns do not fit into the route length")
    s1, s2 = 0.3 * rest, 0.35 * rest
    s3 = rest - s1 - s2
    segs = [
        Segment(s1, 0.0, v_straight),
        Segment(L_mild, 1.0 / R_mild, v_mild),
        Segment(s2, 0.0, v_straight),
        Segment(L_hard, 1.0 / R_hard, v_hard),
        Segment(s3, 0.0, v_straight),
    ]
    return Route(segs, mu=mu, g=g)


def straight(length: float = 300.0, speed: float = 15.0) -> Route:
    return Route([Segment(length, 0.0, speed)])
