"""Event-detected integration of hybrid executions.

Each mode is integrated with an adaptive Dormand-Prince 5(4) pair, with
the pair's fourth-order continuous extension as dense output. After
every accepted step the outgoing guards of the active mode are evaluated at
the step end; a guard that became nonpositive is located by bisecting the
step in time (each trial re-takes a single RK step of the shorter length
from the step start) until the bracket is narrower than ``event_tol``.
The right end of the final bracket, which lies in the guard set, is the
reset point.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    ConfigError,
    IntegrationError,
    NonFiniteState,
    TransversalityViolation,
    ZenoSuspected,
)
from .hybrid import (
    TRANSVERSALITY_TOL,
    GuardArc,
    HybridState,
    HybridSystem,
    transversality,
)

log = logging.getLogger(__name__)

# Dormand & Prince (1980), RK5(4)7M. C: nodes, A: stage matrix,
# B: fifth-order weights (propagated), E: B minus the fourth-order weights.
C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200,
              22 / 525, -1 / 40])

# dense output: y(t + s h) = y + h K^T P [s, s^2, s^3, s^4]
P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608,
     -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933,
     87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304,
     -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408,
     701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0
ZENO_STREAK = 10


@dataclass(frozen=True)
class IntegratorOptions:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = np.inf
    event_tol: float = 1e-10
    max_events: int = 10_000
    min_dwell_warn: float = 1e-6

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "max_step", "event_tol", "min_dwell_warn"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.max_events < 1:
            raise ConfigError("max_events must be positive")


def rk_step(f, t, y, h, k1, stages=False):
    """One Dormand-Prince step.

    Returns ``(y_new, error_estimate, f(t+h, y_new))``, plus the interpolation
    coefficients ``h K^T P`` of the step when ``stages`` is true.
    """
    K = np.empty((7, y.size))
    K[0] = k1
    for s in range(1, 7):
        dy = h * (np.asarray(A[s]) @ K[:s])
        K[s] = f(t + C[s] * h, y + dy)
    y_new = y + h * (B @ K)
    if stages:
        return y_new, h * (E @ K), K[6], h * (K.T @ P)
    return y_new, h * (E @ K), K[6]


def _err_norm(err, y0, y1, opts):
    scale = opts.abs_tol + opts.rel_tol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _initial_step(f, t, y, k1, opts, span):
    scale = opts.abs_tol + opts.rel_tol * np.abs(y)
    d0 = np.sqrt(np.mean((y / scale) ** 2))
    d1 = np.sqrt(np.mean((k1 / scale) ** 2))
    h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    return min(h, opts.max_step, span)


def integrate_adaptive(f, t0, y0, t1, opts: IntegratorOptions):
    """Plain adaptive integration without events; returns (ts, ys, fs)."""
    y = np.asarray(y0, dtype=float).copy()
    t = float(t0)
    k1 = f(t, y)
    ts, ys, fs = [t], [y.copy()], [k1]
    if t1 <= t0:
        return np.array(ts), np.array(ys), np.array(fs)
    h = _initial_step(f, t, y, k1, opts, t1 - t0)
    while t < t1:
        h = min(h, opts.max_step, t1 - t)
        y_new, err, k_new = rk_step(f, t, y, h, k1)
        en = _err_norm(err, y, y_new, opts)
        if not np.isfinite(en):
            h *= MIN_FACTOR
            _check_step(h, t)
            continue
        if en > 1.0:
            h *= max(MIN_FACTOR, SAFETY * en ** -0.2)
            _check_step(h, t)
            continue
        t = t1 if t1 - (t + h) <= 1e-15 * max(1.0, abs(t1)) else t + h
        y, k1 = y_new, k_new
        ts.append(t); ys.append(y.copy()); fs.append(k1)
        h *= MAX_FACTOR if en == 0 else min(MAX_FACTOR, SAFETY * en ** -0.2)
    return np.array(ts), np.array(ys), np.array(fs)


def _check_step(h, t):
    if h < 1e-15 * max(1.0, abs(t)):
        raise IntegrationError(f"step size underflow at t={t}")


@dataclass
class Segment:
    """Dense samples of the execution while it stays in one mode.

    ``q[i]`` holds the continuous-extension coefficients of the step from
    ``t[i]`` to ``t[i + 1]``; without them interpolation is cubic Hermite.
    """

    mode: int
    t: np.ndarray
    x: np.ndarray
    dx: np.ndarray
    q: Optional[np.ndarray] = None

    @property
    def t_start(self) -> float:
        return float(self.t[0])

    @property
    def t_stop(self) -> float:
        return float(self.t[-1])

    def interpolate(self, t: float) -> np.ndarray:
        ts = self.t
        if t <= ts[0]:
            return self.x[0].copy()
        if t >= ts[-1]:
            return self.x[-1].copy()
        i = int(np.searchsorted(ts, t, side="right")) - 1
        h = ts[i + 1] - ts[i]
        if h <= 0:
            return self.x[i + 1].copy()
        s = (t - ts[i]) / h
        if self.q is not None:
            return self.x[i] + self.q[i] @ np.array([s, s * s, s ** 3, s ** 4])
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        return (h00 * self.x[i] + h10 * h * self.dx[i]
                + h01 * self.x[i + 1] + h11 * h * self.dx[i + 1])


@dataclass(frozen=True)
class ResetEvent:
    time: float
    arc: tuple[int, int]
    pre_state: np.ndarray
    post_state: np.ndarray
    guard_value: float = 0.0
    transversality: float = np.nan
    # the pre-state was strictly inside the guard at the initial time
    initial: bool = False

    def to_dict(self, sys: Optional[HybridSystem] = None) -> dict:
        arc = list(self.arc)
        if sys is not None:
            arc = [sys.modes[i].name for i in self.arc]
        return {
            "time": float(self.time),
            "arc": arc,
            "pre_state": [float(v) for v in self.pre_state],
            "post_state": [float(v) for v in self.post_state],
            "guard_value": float(self.guard_value),
            "transversality": float(self.transversality),
        }


@dataclass
class Execution:
    segments: list[Segment]
    events: list[ResetEvent]
    t0: float
    t_end: float
    initial_state: Optional[HybridState] = None
    options: IntegratorOptions = field(default_factory=IntegratorOptions)

    @property
    def final_state(self) -> HybridState:
        seg = self.segments[-1]
        return HybridState(seg.mode, seg.x[-1].copy())

    @property
    def event_arcs(self) -> list[tuple[int, int]]:
        return [e.arc for e in self.events]

    def dwell_times(self) -> np.ndarray:
        return np.diff([e.time for e in self.events])

    def samples(self):
        """Yield ``(t, mode, x)`` for every stored sample, in time order."""
        for seg in self.segments:
            for t, x in zip(seg.t, seg.x):
                yield float(t), seg.mode, x


def sample(exec: Execution, t: float) -> HybridState:
    """State at time ``t``; right-continuous at reset times."""
    tol = 1e-12 * max(1.0, abs(exec.t_end))
    if t < exec.t0 - tol or t > exec.t_end + tol:
        raise ValueError(f"t={t} outside [{exec.t0}, {exec.t_end}]")
    seg = exec.segments[0]
    for s in exec.segments:
        if s.t_start <= t:
            seg = s
        else:
            break
    return HybridState(seg.mode, seg.interpolate(t))


class _Flow:
    """Mutable bookkeeping while building one execution."""

    def __init__(self, sys: HybridSystem, opts: IntegratorOptions):
        self.sys = sys
        self.opts = opts
        self.events: list[ResetEvent] = []
        self.segments: list[Segment] = []
        self.short_dwells = 0

    def close(self, mode, ts, xs, fs, qs=None):
        q = np.array(qs) if qs else None
        self.segments.append(Segment(mode, np.array(ts), np.array(xs), np.array(fs), q))

    def record(self, event: ResetEvent):
        opts = self.opts
        if self.events:
            gap = event.time - self.events[-1].time
            if gap < opts.min_dwell_warn:
                self.short_dwells += 1
                warnings.warn(
                    f"dwell time {gap:.3g} below {opts.min_dwell_warn:g} at t={event.time}",
                    RuntimeWarning, stacklevel=3)
                if self.short_dwells >= ZENO_STREAK:
                    raise ZenoSuspected(
                        f"{self.short_dwells} consecutive resets closer than "
                        f"{opts.min_dwell_warn:g} near t={event.time}")
            else:
                self.short_dwells = 0
        self.events.append(event)
        if len(self.events) > opts.max_events:
            raise ZenoSuspected(f"more than {opts.max_events} resets by t={event.time}")


def _jump(sys: HybridSystem, arc: GuardArc, t: float, x: np.ndarray, initial=False):
    post = arc.R(x)
    if not np.all(np.isfinite(post)):
        raise NonFiniteState(f"reset {arc.key} produced a non-finite state at t={t}")
    if post.size != sys.modes[arc.target].dim:
        raise ConfigError(f"reset {arc.key} returned dimension {post.size}")
    return ResetEvent(t, arc.key, x.copy(), post, arc.g(x),
                      transversality(sys, arc, t, x), initial)


def flow(sys: HybridSystem, t0: float, state0: HybridState | tuple, t_end: float,
         opts: IntegratorOptions | None = None) -> Execution:
    """Integrate the hybrid system from ``state0`` at ``t0`` to ``t_end``."""
    opts = opts or IntegratorOptions()
    if not isinstance(state0, HybridState):
        state0 = sys.state(*state0)
    else:
        state0 = sys.state(state0.mode, state0.x)
    if t_end < t0:
        raise ConfigError("t_end must not precede t0")
    if not np.all(np.isfinite(state0.x)):
        raise NonFiniteState("initial state is not finite")

    run = _Flow(sys, opts)
    mode, x, t = state0.mode, state0.x.copy(), float(t0)

    def settle(mode, x, t):
        # resets at a single instant: initial guard membership or chained resets
        while True:
            arc = sys.triggered_arc(t, HybridState(mode, x))
            if arc is None:
                return mode, x
            ev = _jump(sys, arc, t, x, initial=arc.g(x) < 0)
            f0 = sys.modes[mode].F(t, x)
            run.close(mode, [t], [x.copy()], [f0])
            run.record(ev)
            mode, x = arc.target, ev.post_state

    mode, x = settle(mode, x, t)
    while True:
        f = sys.modes[mode].F
        arcs = sys.outgoing(mode)
        k1 = f(t, x)
        ts, xs, fs, qs = [t], [x.copy()], [k1], []
        if t >= t_end:
            run.close(mode, ts, xs, fs)
            break
        h = _initial_step(f, t, x, k1, opts, t_end - t)
        crossed = None
        while t < t_end:
            h = min(h, opts.max_step, t_end - t)
            y_new, err, k_new, q = rk_step(f, t, x, h, k1, stages=True)
            en = _err_norm(err, x, y_new, opts)
            if not np.isfinite(en) or en > 1.0:
                if not np.all(np.isfinite(y_new)) and h < 1e-12 * max(1.0, abs(t)):
                    raise NonFiniteState(f"non-finite state near t={t}")
                h *= MIN_FACTOR if not np.isfinite(en) else max(MIN_FACTOR, SAFETY * en ** -0.2)
                _check_step(h, t)
                continue
            if not np.all(np.isfinite(y_new)):
                raise NonFiniteState(f"non-finite state near t={t}")
            hits = [a for a in arcs if a.g(y_new) <= 0]
            if hits:
                crossed = _locate(sys, f, t, x, k1, h, hits, opts)
                break
            t = t_end if t_end - (t + h) <= 1e-15 * max(1.0, abs(t_end)) else t + h
            x, k1 = y_new, k_new
            ts.append(t); xs.append(x.copy()); fs.append(k1); qs.append(q)
            h *= MAX_FACTOR if en == 0 else min(MAX_FACTOR, SAFETY * en ** -0.2)

        if crossed is None:
            run.close(mode, ts, xs, fs, qs)
            break
        arc, s, pre, q = crossed
        t = t + s
        ts.append(t); xs.append(pre.copy()); fs.append(f(t, pre)); qs.append(q)
        run.close(mode, ts, xs, fs, qs)
        ev = _jump(sys, arc, t, pre)
        if not ev.transversality < -TRANSVERSALITY_TOL:
            raise TransversalityViolation(
                f"Dg.F = {ev.transversality:.3g} on arc {arc.key} at t={t}")
        run.record(ev)
        mode, x = settle(arc.target, ev.post_state, t)

    return Execution(run.segments, run.events, float(t0), float(t_end), state0, opts)


def _locate(sys, f, t, x, k1, h, hits, opts):
    """Bisect the step ``[t, t + h]`` for the earliest guard crossing."""
    found = []
    for arc in hits:
        lo, hi = 0.0, h
        while hi - lo > opts.event_tol:
            mid = 0.5 * (lo + hi)
            y_mid = rk_step(f, t, x, mid, k1)[0]
            if arc.g(y_mid) <= 0:
                hi = mid
            else:
                lo = mid
        found.append((hi, arc))
    found.sort(key=lambda c: c[0])
    s0 = found[0][0]
    close = [c for c in found if c[0] - s0 <= opts.event_tol]
    steps = {c[0]: rk_step(f, t, x, c[0], k1, stages=True) for c in close}
    if len(close) > 1:
        warnings.warn(
            f"arcs {[c[1].key for c in close]} cross within event_tol near t={t + s0}; "
            "taking the most transversal one", RuntimeWarning, stacklevel=3)
        close.sort(key=lambda c: transversality(sys, c[1], t + c[0], steps[c[0]][0]))
    s, arc = close[0]
    pre, _, _, q = steps[s]
    return arc, s, pre, q
