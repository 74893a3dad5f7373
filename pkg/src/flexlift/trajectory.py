"""Reference trajectories for the two endpoints.

Every scalar reference is a :class:`Signal` that returns its value together
with exact first and second time derivatives, so ``v_d`` and ``a_d`` are
analytic. Signals compose with ``+``, ``*`` and :class:`Blend`; phase
changes are blended with quintic ramps, which keeps position, velocity and
acceleration continuous.

A :class:`Formation` turns a handful of signals (centre, plane yaw, endpoint
distance, per-endpoint height offsets) into the two endpoint references.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DistanceBoundViolation, PhaseOutOfRange

TAU = 2.0 * math.pi


@dataclass(frozen=True)
class TrajectoryPoint:
    p_d: np.ndarray
    v_d: np.ndarray
    a_d: np.ndarray


# -- scalar signals ---------------------------------------------------------

class Signal:
    def __call__(self, t: float) -> tuple:
        raise NotImplementedError

    def __add__(self, other):
        return Sum(self, as_signal(other))

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, Signal):
            return Product(self, other)
        return Scaled(float(other), self)

    __rmul__ = __mul__

    def __neg__(self):
        return Scaled(-1.0, self)

    def __sub__(self, other):
        return Sum(self, -as_signal(other))


def as_signal(x) -> Signal:
    return x if isinstance(x, Signal) else Const(float(x))


@dataclass(frozen=True)
class Const(Signal):
    c: float

    def __call__(self, t):
        return self.c, 0.0, 0.0


@dataclass(frozen=True)
class Linear(Signal):
    v0: float
    rate: float

    def __call__(self, t):
        return self.v0 + self.rate * t, self.rate, 0.0


@dataclass(frozen=True)
class Sine(Signal):
    """``offset + amp * sin(2 pi freq t + phase)``."""

    amp: float
    freq: float
    phase: float = 0.0
    offset: float = 0.0

    def __call__(self, t):
        w = TAU * self.freq
        s, c = math.sin(w * t + self.phase), math.cos(w * t + self.phase)
        return self.offset + self.amp * s, self.amp * w * c, -self.amp * w * w * s


def smoothstep(s: float) -> tuple:
    """Quintic ramp 0 -> 1 on [0, 1] with zero end slopes and curvatures."""
    if s <= 0.0:
        return 0.0, 0.0, 0.0
    if s >= 1.0:
        return 1.0, 0.0, 0.0
    return (s ** 3 * (10.0 - 15.0 * s + 6.0 * s * s),
            30.0 * s * s * (1.0 - s) ** 2,
            60.0 * s * (1.0 - s) * (1.0 - 2.0 * s))


def _smoothstep_integral(s: float) -> float:
    if s <= 0.0:
        return 0.0
    if s >= 1.0:
        return 0.5 + (s - 1.0)
    return s ** 6 - 3.0 * s ** 5 + 2.5 * s ** 4


@dataclass(frozen=True)
class Step(Signal):
    """Quintic transition from ``a`` to ``b`` over ``[t0, t0 + T]``."""

    a: float
    b: float
    t0: float
    T: float

    def __call__(self, t):
        s, ds, dds = smoothstep((t - self.t0) / self.T)
        d = self.b - self.a
        return self.a + d * s, d * ds / self.T, d * dds / self.T ** 2


@dataclass(frozen=True)
class Travel(Signal):
    """Motion at ``speed`` with quintic speed ramps.

    The speed ramps up over ``[t_start, t_start + ramp]`` and down over
    ``[t_stop - ramp, t_stop]``; use ``t_start <= -ramp`` to be at cruise
    speed from ``t = 0``. Position equals ``x0`` at ``t = 0``.
    """

    x0: float
    speed: float
    t_start: float
    t_stop: float
    ramp: float = 1.0

    def _raw(self, t):
        r = self.ramp
        up = smoothstep((t - self.t_start) / r)
        down = smoothstep((t - self.t_stop + r) / r)
        pos = r * (_smoothstep_integral((t - self.t_start) / r)
                   - _smoothstep_integral((t - self.t_stop + r) / r))
        return self.speed * pos, self.speed * (up[0] - down[0]), self.speed * (up[1] - down[1]) / r

    def __call__(self, t):
        x, v, a = self._raw(t)
        return self.x0 + x - self._raw(0.0)[0], v, a


@dataclass(frozen=True)
class Sum(Signal):
    a: Signal
    b: Signal

    def __call__(self, t):
        x, y = self.a(t), self.b(t)
        return x[0] + y[0], x[1] + y[1], x[2] + y[2]


@dataclass(frozen=True)
class Scaled(Signal):
    k: float
    s: Signal

    def __call__(self, t):
        x = self.s(t)
        return self.k * x[0], self.k * x[1], self.k * x[2]


@dataclass(frozen=True)
class Product(Signal):
    a: Signal
    b: Signal

    def __call__(self, t):
        (f, df, ddf), (g, dg, ddg) = self.a(t), self.b(t)
        return f * g, df * g + f * dg, ddf * g + 2.0 * df * dg + f * ddg


@dataclass(frozen=True)
class Blend(Signal):
    """Quintic hand-over from signal ``a`` to signal ``b`` over ``[t0, t0 + T]``."""

    a: Signal
    b: Signal
    t0: float
    T: float

    def __call__(self, t):
        if t <= self.t0:
            return self.a(t)
        if t >= self.t0 + self.T:
            return self.b(t)
        s, ds, dds = smoothstep((t - self.t0) / self.T)
        ds, dds = ds / self.T, dds / self.T ** 2
        (a, da, dda), (b, db, ddb) = self.a(t), self.b(t)
        # a + s (b - a), product rule
        return (a + s * (b - a),
                da + ds * (b - a) + s * (db - da),
                dda + dds * (b - a) + 2.0 * ds * (db - da) + s * (ddb - dda))


def chain(first: Signal, *handovers) -> Signal:
    """``chain(a, (t1, T1, b), (t2, T2, c), ...)``: successive blends."""
    sig = first
    for t0, T, nxt in handovers:
        sig = Blend(sig, as_signal(nxt), t0, T)
    return sig


# -- formations -------------------------------------------------------------

@dataclass
class Formation:
    """Endpoint references from formation-level signals.

    ``yaw`` is the heading of the horizontal direction from endpoint 1 to
    endpoint 2; ``distance`` is the full 3-D endpoint distance; ``h1`` and
    ``h2`` are height offsets of each endpoint relative to ``cz``.
    """

    cx: Signal
    cy: Signal
    cz: Signal
    yaw: Signal
    distance: Signal
    h1: Signal = Const(0.0)
    h2: Signal = Const(0.0)

    def __call__(self, t: float):
        cx, cy, cz = self.cx(t), self.cy(t), self.cz(t)
        psi, dpsi, ddpsi = self.yaw(t)
        d, dd, ddd = self.distance(t)
        h1, h2 = self.h1(t), self.h2(t)
        dz = (h2[0] - h1[0], h2[1] - h1[1], h2[2] - h1[2])
        q = d * d - dz[0] ** 2
        if q <= 0.0:
            raise DistanceBoundViolation(f"height offset {dz[0]:.3f} m exceeds distance {d:.3f} m")
        dq = 2.0 * (d * dd - dz[0] * dz[1])
        ddq = 2.0 * (dd * dd + d * ddd - dz[1] ** 2 - dz[0] * dz[2])
        dh = math.sqrt(q)
        ddh = dq / (2.0 * dh)
        dddh = ddq / (2.0 * dh) - dq * dq / (4.0 * dh ** 3)

        u = np.array([math.cos(psi), math.sin(psi), 0.0])
        up = np.array([-math.sin(psi), math.cos(psi), 0.0])
        du = dpsi * up
        ddu = ddpsi * up - dpsi * dpsi * u
        o = 0.5 * dh * u
        do = 0.5 * ddh * u + 0.5 * dh * du
        ddo = 0.5 * dddh * u + ddh * du + 0.5 * dh * ddu

        c = np.array([cx[0], cy[0], cz[0]])
        dc = np.array([cx[1], cy[1], cz[1]])
        ddc = np.array([cx[2], cy[2], cz[2]])
        z = np.array([0.0, 0.0, 1.0])
        p1 = TrajectoryPoint(c - o + h1[0] * z, dc - do + h1[1] * z, ddc - ddo + h1[2] * z)
        p2 = TrajectoryPoint(c + o + h2[0] * z, dc + do + h2[1] * z, ddc + ddo + h2[2] * z)
        return p1, p2


# -- excitation -------------------------------------------------------------

@dataclass(frozen=True)
class Excitation:
    """Sinusoid ``amp * sin(2 pi freq t + phase)`` along ``axis`` on one or both endpoints."""

    amp: float
    freq: float
    axis: tuple = (1.0, 0.0, 0.0)
    vehicle: Optional[int] = None  # 0, 1 or None for both
    phase: float = 0.0


# A small multi-sine set on different axes, vehicles and incommensurate
# frequencies; enough to make the order-2 features of a straight flight PE.
DEFAULT_EXCITATION = (
    Excitation(0.05, 0.31, (0.7071, 0.7071, 0.0), 1),
    Excitation(0.04, 0.53, (0.0, 0.0, 1.0), 0),
    Excitation(0.04, 0.79, (0.0, 0.0, 1.0), 1),
    Excitation(0.03, 1.13, (0.7071, -0.7071, 0.0), 0, 0.7),
    Excitation(0.02, 0.41, (1.0, 1.0, 0.0), None, 1.9),
)


def _distance(pair) -> float:
    return float(np.linalg.norm(pair[1].p_d - pair[0].p_d))


def superimpose_excitation(t: float, base, components: Sequence[Excitation],
                           bounds: Optional[tuple] = None):
    """Add multi-sine perturbations with their exact derivatives.

    Raises
    ------
    DistanceBoundViolation
        The perturbed endpoint distance leaves ``bounds`` (when given).
    """
    out = [TrajectoryPoint(b.p_d.copy(), b.v_d.copy(), b.a_d.copy()) for b in base]
    for ex in components:
        axis = np.asarray(ex.axis, dtype=float)
        x, dx, ddx = Sine(ex.amp, ex.freq, ex.phase)(t)
        targets = (0, 1) if ex.vehicle is None else (ex.vehicle,)
        for i in targets:
            out[i] = TrajectoryPoint(out[i].p_d + x * axis, out[i].v_d + dx * axis, out[i].a_d + ddx * axis)
    if bounds is not None:
        d = _distance(out)
        if not bounds[0] <= d <= bounds[1]:
            raise DistanceBoundViolation(f"endpoint distance {d:.4f} m outside {bounds} at t={t:.3f}")
    return tuple(out)


# -- windows ----------------------------------------------------------------

@dataclass(frozen=True)
class Window:
    """Virtual aperture in the plane ``x = x`` (normal along world x).

    ``shape`` is ``"square"`` (side ``size``) or ``"circle"`` (diameter
    ``size``), centred at ``(y, z)``. Points of the strip within
    ``half_depth`` of the plane, and the points where strip segments cross
    it, must lie inside the aperture. Outside ``active`` the window is
    ignored (the excitation flight of the two-window task shares its space).
    """

    name: str
    x: float
    y: float
    z: float
    size: float
    shape: str = "square"
    half_depth: float = 0.02
    active: tuple = (0.0, math.inf)  # time interval in which the window is in place

    def is_active(self, t: float) -> bool:
        return self.active[0] <= t <= self.active[1]

    def edge_distance(self, y: float, z: float) -> float:
        """Signed distance to the aperture edge, positive inside."""
        dy, dz = y - self.y, z - self.z
        h = 0.5 * self.size
        if self.shape == "circle":
            return h - math.hypot(dy, dz)
        return h - max(abs(dy), abs(dz))

    def inside(self, y: float, z: float) -> bool:
        return self.edge_distance(y, z) >= 0.0

    def crossing_points(self, pts: np.ndarray) -> np.ndarray:
        """Points of the polyline ``pts`` that lie in the window slab or cross its plane."""
        dx = pts[:, 0] - self.x
        near = pts[np.abs(dx) <= self.half_depth]
        crossings = []
        for k in range(len(pts) - 1):
            a, b = dx[k], dx[k + 1]
            if a * b < 0.0:
                s = a / (a - b)
                crossings.append(pts[k] + s * (pts[k + 1] - pts[k]))
        if crossings:
            return np.vstack([near, np.array(crossings)]) if near.size else np.array(crossings)
        return near

    def margin(self, pts: np.ndarray) -> Optional[float]:
        """Smallest edge distance of the strip at the window, ``None`` when not there."""
        cand = self.crossing_points(pts)
        if cand.size == 0:
            return None
        return min(self.edge_distance(p[1], p[2]) for p in cand)

    def clearance(self, pts: np.ndarray) -> Optional[bool]:
        """``None`` when the strip is not at the window, else whether it fits."""
        m = self.margin(pts)
        return None if m is None else bool(m >= 0.0)


# -- scenarios --------------------------------------------------------------

@dataclass
class Scenario:
    name: str
    kind: str
    duration: float
    formation: Formation
    excitation: list = field(default_factory=list)
    windows: list = field(default_factory=list)
    phases: dict = field(default_factory=dict)  # name -> (t0, t1)
    bounds: Optional[tuple] = None

    def __call__(self, t: float):
        if t < -1e-9 or t > self.duration + 1e-9:
            raise PhaseOutOfRange(f"t={t} outside [0, {self.duration}] for {self.name}")
        pair = self.formation(t)
        if self.excitation:
            return superimpose_excitation(t, pair, self.excitation, self.bounds)
        return pair

    def distance(self, t: float) -> float:
        return _distance(self(t))


EXP1_DEFAULTS = dict(
    duration=40.0, speed=0.05, x0=0.0, y0=0.0, height=1.0, yaw=math.pi / 2,
    distance_mean=0.6, distance_amp=0.2, distance_period=8.0,
    height_amp=0.05, height_freqs=(0.23, 0.37),
)


def exp1_scenario(params: Optional[dict] = None) -> Scenario:
    """Constant-speed translation along x while the endpoint distance swings 0.8 -> 0.4 m."""
    p = {**EXP1_DEFAULTS, **(params or {})}
    f1, f2 = p["height_freqs"]
    form = Formation(
        cx=Linear(p["x0"], p["speed"]), cy=Const(p["y0"]), cz=Const(p["height"]),
        yaw=Const(p["yaw"]),
        distance=Sine(p["distance_amp"], 1.0 / p["distance_period"], math.pi / 2, p["distance_mean"]),
        h1=Sine(p["height_amp"], f1), h2=Sine(p["height_amp"], f2),
    )
    sc = Scenario("exp1", "VaryingDistance", p["duration"], form,
                  phases={"all": (0.0, p["duration"])})
    sc.excitation = [Excitation(**e) for e in p.get("excitation", [])]
    return sc


EXP2_DEFAULTS = dict(
    x0=0.0, y0=0.0, speed=0.05, yaw=math.pi / 2,
    start_height=0.5, climb_height=1.8, pass_height=0.7, land_height=0.2,
    climb_end=20.0, descend_end=26.0, forward_end=32.0, hold_end=42.0, duration=60.0,
    distance_low=0.6, distance_high=1.1, distance_cycles=3.5,
    height_amp=0.05, height_freqs=(0.21, 0.34),
    window_size=0.633, window_x=1.4, window_z=0.47, blend=1.0,
)


def exp2_scenario(params: Optional[dict] = None) -> Scenario:
    """Climb, descend, cross a square window, hold for 10 s, recover and land."""
    p = {**EXP2_DEFAULTS, **(params or {})}
    t1, t2, t3, t4, T = p["climb_end"], p["descend_end"], p["forward_end"], p["hold_end"], p["duration"]
    bl = p["blend"]
    lo, hi = p["distance_low"], p["distance_high"]
    period = t1 / p["distance_cycles"]
    swing = Sine(0.5 * (hi - lo), 1.0 / period, math.pi / 2, 0.5 * (hi + lo))
    recover = 0.5 * (t4 + T)
    distance = chain(swing, (t1 - bl, bl, lo)) + Step(0.0, hi - lo, t4, recover - t4)
    f1, f2 = p["height_freqs"]
    h1 = Blend(Sine(p["height_amp"], f1), Const(0.0), t1 - bl, bl)
    h2 = Blend(Sine(p["height_amp"], f2), Const(0.0), t1 - bl, bl)
    cz = (Step(p["start_height"], p["climb_height"], 0.0, t1)
          + Step(0.0, p["pass_height"] - p["climb_height"], t1, t2 - t1)
          + Step(0.0, p["land_height"] - p["pass_height"], recover, T - recover))
    cx = Travel(p["x0"], p["speed"], -bl, t3, bl)
    form = Formation(cx=cx, cy=Const(p["y0"]), cz=cz, yaw=Const(p["yaw"]), distance=distance, h1=h1, h2=h2)
    window = Window("square", p["x0"] + p["window_x"], p["y0"], p["window_z"], p["window_size"], "square")
    return Scenario("exp2", "WindowPass", T, form, windows=[window],
                    phases={"climb": (0.0, t1), "descend": (t1, t2), "forward": (t2, t3),
                            "hold": (t3, t4), "recover": (t4, T)})


EXP3_DEFAULTS = dict(
    x0=0.0, y0=0.0, height=1.0, yaw=math.pi / 2, pe_end=60.0, duration=120.0,
    distance_mean=0.7, distance_amp=0.22, distance_period=7.5, distance_amp2=0.08, distance_period2=2.9,
    height_amp=0.1, height_freqs=(0.21, 0.33),
    x_amp=2.0, x_period=30.0, y_amp=0.1, y_period=12.0,
    speed=0.1, window1_x=1.0, window1_size=0.9, window1_distance=0.5,
    window2_x=3.0, window2_size=1.1, window2_distance=0.7, window2_yaw_change=-math.pi / 4,
    segment_split=80.0, stop_time=105.0, land_height=0.3, blend=2.0,
)


def exp3_scenario(params: Optional[dict] = None) -> Scenario:
    """Sixty seconds of persistently exciting free flight, then two windows."""
    p = {**EXP3_DEFAULTS, **(params or {})}
    t_pe, T, bl = p["pe_end"], p["duration"], p["blend"]
    t_split, t_stop = p["segment_split"], p["stop_time"]
    psi0 = p["yaw"]
    yaw = Step(psi0, psi0 + 2.0 * math.pi, 0.0, t_pe) + Step(0.0, p["window2_yaw_change"], t_split, 20.0)
    # two incommensurate tones: a single sinusoid ties r and rdot to an ellipse,
    # which leaves the distance powers linearly dependent
    d_osc = (Sine(p["distance_amp"], 1.0 / p["distance_period"], 0.0, p["distance_mean"])
             + Sine(p["distance_amp2"], 1.0 / p["distance_period2"]))
    takeoff = p["distance_mean"]
    distance = chain(d_osc, (t_pe - bl, bl, p["window1_distance"]),
                     (t_split - 5.0, 5.0, p["window2_distance"]),
                     (t_stop, 5.0, takeoff))
    f1, f2 = p["height_freqs"]
    h1 = Blend(Sine(p["height_amp"], f1), Const(0.0), t_pe - bl, bl)
    h2 = Blend(Sine(p["height_amp"], f2, 1.0), Const(0.0), t_pe - bl, bl)
    x_osc = Sine(p["x_amp"], 1.0 / p["x_period"], 0.0, p["x0"])
    cx = Blend(x_osc, Const(p["x0"]), t_pe - bl, bl) + Travel(0.0, p["speed"], t_pe, t_stop, bl)
    y_osc = Sine(p["y_amp"], 1.0 / p["y_period"], 0.0, p["y0"])
    cy = Blend(y_osc, Const(p["y0"]), t_pe - bl, bl)
    cz = Const(p["height"]) + Step(0.0, p["land_height"] - p["height"], T - 8.0, 8.0)
    form = Formation(cx=cx, cy=cy, cz=cz, yaw=yaw, distance=distance, h1=h1, h2=h2)
    windows = [
        Window("circular", p["x0"] + p["window1_x"], p["y0"], p["height"] - 0.3, p["window1_size"], "circle",
               active=(t_pe, T)),
        Window("square", p["x0"] + p["window2_x"], p["y0"], p["height"] - 0.3, p["window2_size"], "square",
               active=(t_pe, T)),
    ]
    return Scenario("exp3", "DualWindow", T, form, windows=windows,
                    excitation=[Excitation(**e) for e in p.get("excitation", [])],
                    phases={"excitation": (0.0, t_pe), "traverse": (t_pe, t_stop), "recover": (t_stop, T)})


def custom_scenario(params: dict) -> Scenario:
    """Single-phase formation with sinusoidal distance and heights."""
    p = {**EXP1_DEFAULTS, "speed": 0.0, "yaw_rate": 0.0, **params}
    f1, f2 = p["height_freqs"]
    form = Formation(
        cx=Linear(p["x0"], p["speed"]), cy=Const(p["y0"]), cz=Const(p["height"]),
        yaw=Linear(p["yaw"], p["yaw_rate"]),
        distance=Sine(p["distance_amp"], 1.0 / p["distance_period"], math.pi / 2, p["distance_mean"]),
        h1=Sine(p["height_amp"], f1), h2=Sine(p["height_amp"], f2),
    )
    sc = Scenario(p.get("name", "custom"), "Custom", p["duration"], form,
                  phases={"all": (0.0, p["duration"])})
    sc.excitation = [Excitation(**e) for e in p.get("excitation", [])]
    return sc


SCENARIOS = {"exp1": exp1_scenario, "exp2": exp2_scenario, "exp3": exp3_scenario, "custom": custom_scenario}
KIND_TO_NAME = {"VaryingDistance": "exp1", "WindowPass": "exp2", "DualWindow": "exp3", "Custom": "custom"}


def build_scenario(name_or_kind: str, params: Optional[dict] = None) -> Scenario:
    key = KIND_TO_NAME.get(name_or_kind, name_or_kind)
    if key not in SCENARIOS:
        raise KeyError(f"unknown scenario {name_or_kind!r}; choose from {sorted(SCENARIOS)}")
    return SCENARIOS[key](params or {})


def exp1_varying_distance(t: float, params: Optional[dict] = None):
    return exp1_scenario(params)(t)


def exp2_window_pass(t: float, params: Optional[dict] = None):
    return exp2_scenario(params)(t)


def exp3_dual_window(t: float, params: Optional[dict] = None):
    return exp3_scenario(params)(t)
