"""Hybrid system representation and static checks of the standing assumptions.

A system is a list of modes (each a vector field on R^n with a norm) and a
list of guard arcs. Arc ``j -> j'`` carries a guard function ``g`` whose
sublevel set ``{g <= 0}`` inside mode ``j`` triggers the reset ``R`` into
mode ``j'``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError
from .norms import NormSpec

# transversality is violated when Dg . F >= -TRANSVERSALITY_TOL
TRANSVERSALITY_TOL = 1e-8

Vector = np.ndarray
FieldFn = Callable[[float, Vector], Vector]
JacobianFn = Callable[[float, Vector], np.ndarray]


def fd_jacobian(fn: Callable[[Vector], Vector], x: Vector) -> np.ndarray:
    """Central-difference Jacobian with step ``1e-6 * (1 + |x|)``."""
    x = np.asarray(x, dtype=float)
    h = 1e-6 * (1.0 + np.linalg.norm(x))
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.atleast_1d(fn(x + e)) - np.atleast_1d(fn(x - e))) / (2 * h))
    return np.column_stack(cols)


@dataclass(frozen=True, eq=False)
class Mode:
    """One discrete mode: state dimension, norm and (time-varying) field.

    ``domain`` is an optional membership predicate used only when sampling
    points for validation and certification; ``box`` gives default sampling
    bounds ``(lo, hi)``.
    """

    name: str
    dim: int
    field: FieldFn
    norm: NormSpec = NormSpec(2)
    jacobian: Optional[JacobianFn] = None
    domain: Optional[Callable[[Vector], bool]] = None
    box: Optional[tuple[Sequence[float], Sequence[float]]] = None
    time_varying: bool = False
    jacobian_time_varying: Optional[bool] = None

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError(f"mode {self.name!r}: dimension must be positive")
        self.norm.check_dim(self.dim)
        if self.jacobian_time_varying is None:
            object.__setattr__(self, "jacobian_time_varying", self.time_varying)

    def F(self, t: float, x) -> Vector:
        return np.asarray(self.field(t, x), dtype=float)

    def DF(self, t: float, x) -> np.ndarray:
        if self.jacobian is not None:
            return np.asarray(self.jacobian(t, x), dtype=float)
        return fd_jacobian(lambda y: self.field(t, y), x)

    def contains(self, x) -> bool:
        return True if self.domain is None else bool(self.domain(np.asarray(x)))


@dataclass(frozen=True, eq=False)
class GuardArc:
    """Transition ``source -> target`` with guard ``g`` and reset ``R``.

    ``chart`` maps ``dim - 1`` parameters onto the surface ``g = 0`` and
    ``chart_inverse`` maps a surface point back to its parameters; both are
    optional and used by the distance estimator. ``chart_bounds`` clips the
    chart parameters to the part of the surface that belongs to the guard.
    Without ``reset`` the arc resets by the identity.
    """

    source: int
    target: int
    guard: Callable[[Vector], float]
    reset: Optional[Callable[[Vector], Vector]] = None
    guard_gradient: Optional[Callable[[Vector], Vector]] = None
    reset_jacobian: Optional[Callable[[Vector], np.ndarray]] = None
    chart: Optional[Callable[[Vector], Vector]] = None
    chart_inverse: Optional[Callable[[Vector], Vector]] = None
    chart_bounds: Optional[tuple[Sequence[float], Sequence[float]]] = None

    @property
    def key(self) -> tuple[int, int]:
        return (self.source, self.target)

    def g(self, x) -> float:
        return float(self.guard(np.asarray(x, dtype=float)))

    def Dg(self, x) -> Vector:
        x = np.asarray(x, dtype=float)
        if self.guard_gradient is not None:
            return np.asarray(self.guard_gradient(x), dtype=float).reshape(-1)
        return fd_jacobian(lambda y: np.atleast_1d(self.guard(y)), x).reshape(-1)

    def R(self, x) -> Vector:
        if self.reset is None:
            return np.array(x, dtype=float)
        return np.asarray(self.reset(np.asarray(x, dtype=float)), dtype=float)

    def DR(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.reset is None:
            return np.eye(x.size)
        if self.reset_jacobian is not None:
            return np.atleast_2d(np.asarray(self.reset_jacobian(x), dtype=float))
        return fd_jacobian(self.reset, x)


@dataclass(frozen=True)
class HybridState:
    mode: int
    x: Vector

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float).reshape(-1))


@dataclass(frozen=True, eq=False)
class HybridSystem:
    """The tuple (D, F, G, R) as modes plus guard arcs.

    ``horizon`` is the time window over which time-varying fields are
    sampled when bounding (for periodic inputs, one period).
    """

    modes: tuple[Mode, ...]
    arcs: tuple[GuardArc, ...] = ()
    name: str = "hybrid"
    horizon: Optional[float] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "arcs", tuple(self.arcs))
        if not self.modes:
            raise ConfigError("a hybrid system needs at least one mode")
        seen = set()
        for arc in self.arcs:
            for idx in arc.key:
                if not 0 <= idx < len(self.modes):
                    raise ConfigError(f"arc {arc.key} references a missing mode")
            if arc.key in seen:
                raise ConfigError(f"duplicate arc {arc.key}")
            seen.add(arc.key)
        names = [m.name for m in self.modes]
        if len(set(names)) != len(names):
            raise ConfigError("mode names must be unique")

    def mode_index(self, name_or_index) -> int:
        if isinstance(name_or_index, (int, np.integer)):
            if not 0 <= name_or_index < len(self.modes):
                raise ConfigError(f"mode index {name_or_index} out of range")
            return int(name_or_index)
        for i, m in enumerate(self.modes):
            if m.name == name_or_index:
                return i
        raise ConfigError(f"unknown mode {name_or_index!r}")

    def outgoing(self, mode: int) -> list[GuardArc]:
        return [a for a in self.arcs if a.source == mode]

    def arc(self, source, target) -> GuardArc:
        s, t = self.mode_index(source), self.mode_index(target)
        for a in self.arcs:
            if a.key == (s, t):
                return a
        raise ConfigError(f"no arc {s} -> {t}")

    def state(self, mode, x) -> HybridState:
        i = self.mode_index(mode)
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.modes[i].dim:
            raise ConfigError(
                f"state of dimension {x.size} in mode {self.modes[i].name!r} "
                f"(dimension {self.modes[i].dim})"
            )
        return HybridState(i, x)

    def triggered_arc(self, t: float, state: HybridState) -> Optional[GuardArc]:
        """The arc whose guard set contains ``state``, if any.

        A point strictly inside ``{g < 0}`` is in the guard; a point exactly
        on ``g = 0`` only counts when the flow enters the guard there. With
        several candidates the most negative guard value wins.
        """
        best, best_g = None, np.inf
        for arc in self.outgoing(state.mode):
            g = arc.g(state.x)
            if g < 0 or (g == 0 and transversality(self, arc, t, state.x) < 0):
                if g < best_g:
                    best, best_g = arc, g
        return best

    def infer_mode(self, x) -> int:
        """The unique mode containing ``x`` outside its guard sets."""
        x = np.asarray(x, dtype=float)
        cands = []
        for i, m in enumerate(self.modes):
            if m.dim != x.size or not m.contains(x):
                continue
            if self.triggered_arc(0.0, HybridState(i, x)) is None:
                cands.append(i)
        if len(cands) != 1:
            names = [self.modes[i].name for i in cands]
            raise ConfigError(
                f"cannot infer a mode for {x.tolist()}: candidates {names}; "
                "give the mode explicitly"
            )
        return cands[0]


def eval_field(sys: HybridSystem, t: float, state: HybridState) -> Vector:
    if not 0 <= state.mode < len(sys.modes):
        raise ConfigError(f"mode {state.mode} out of range")
    return sys.modes[state.mode].F(t, state.x)


def transversality(sys: HybridSystem, arc: GuardArc, t: float, x) -> float:
    """``Dg(x) . F_source(t, x)``; strictly negative when the flow enters."""
    return float(arc.Dg(x) @ sys.modes[arc.source].F(t, x))


# ---------------------------------------------------------------------------
# guard sampling and assumption checks


def _box(mode: Mode, box=None):
    box = box if box is not None else mode.box
    if box is None:
        return -np.ones(mode.dim), np.ones(mode.dim)
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    return lo, hi


def sample_guard(sys: HybridSystem, arc: GuardArc, n: int, rng, box=None,
                 max_tries: int | None = None) -> np.ndarray:
    """Points on ``g = 0`` inside the source domain, by root-finding on rays.

    Each try draws a point in the source mode's sampling box and a random
    direction, looks for a sign change of ``g`` along the chord through the
    box and polishes the root with Brent's method.
    """
    from scipy.optimize import brentq

    mode = sys.modes[arc.source]
    lo, hi = _box(mode, box)
    span = np.linalg.norm(hi - lo)
    max_tries = max_tries or 50 * n
    pts = []
    for _ in range(max_tries):
        if len(pts) >= n:
            break
        p = lo + rng.random(mode.dim) * (hi - lo)
        d = rng.standard_normal(mode.dim)
        d /= np.linalg.norm(d)
        s = np.linspace(-span, span, 33)
        vals = np.array([arc.g(p + si * d) for si in s])
        idx = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)[0]
        if idx.size == 0:
            continue
        k = idx[rng.integers(idx.size)]
        if vals[k] == 0:
            r = s[k]
        elif vals[k + 1] == 0:
            r = s[k + 1]
        else:
            r = brentq(lambda u: arc.g(p + u * d), s[k], s[k + 1],
                       xtol=1e-14, rtol=1e-15, maxiter=200)
        x = p + r * d
        if np.any(x < lo - 1e-12) or np.any(x > hi + 1e-12):
            continue
        if not mode.contains(x):
            continue
        pts.append(x)
    return np.array(pts).reshape(-1, mode.dim)


@dataclass
class ArcReport:
    arc: tuple[int, int]
    n_samples: int = 0
    n_entering: int = 0
    n_exiting: int = 0
    n_tangent: int = 0
    min_margin: float = np.nan
    reset_into_guard: int = 0
    min_gradient_norm: float = np.nan
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return (self.error is None and self.n_tangent == 0
                and self.reset_into_guard == 0 and self.min_gradient_norm > 0)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["arc"] = list(self.arc)
        d["ok"] = self.ok
        return d


@dataclass
class ValidationReport:
    arcs: list[ArcReport]
    dynamic_checks: tuple[str, ...] = (
        "existence/uniqueness", "no Zeno executions",
        "forward invariance of reset-connected paths",
    )

    @property
    def ok(self) -> bool:
        return all(a.ok for a in self.arcs)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "arcs": [a.to_dict() for a in self.arcs],
                "checked_during_integration": list(self.dynamic_checks)}


def validate_assumptions(sys: HybridSystem, n_samples: int = 200, seed: int = 0,
                         times: Sequence[float] = (0.0,),
                         boxes: dict | None = None) -> ValidationReport:
    """Sampled check of isolated transitions, guard regularity and transversality.

    Per arc: guard points are sampled on ``g = 0``. Points where the flow
    leaves the guard set are counted as exiting (flows never reach the guard
    there); points where it is tangent within ``TRANSVERSALITY_TOL`` are
    violations. A reset image strictly inside another guard set of the
    target mode violates isolation of discrete transitions.
    """
    rng = np.random.default_rng(seed)
    reports = []
    for arc in sys.arcs:
        rep = ArcReport(arc.key)
        box = None if boxes is None else boxes.get(arc.source)
        pts = sample_guard(sys, arc, n_samples, rng, box=box)
        rep.n_samples = len(pts)
        if rep.n_samples == 0:
            rep.error = "no guard points found"
            reports.append(rep)
            continue
        margins, grads = [], []
        for x in pts:
            grads.append(np.linalg.norm(arc.Dg(x)))
            tv = [transversality(sys, arc, t, x) for t in times]
            if all(v < -TRANSVERSALITY_TOL for v in tv):
                rep.n_entering += 1
                margins.append(-max(tv))
            elif all(v > TRANSVERSALITY_TOL for v in tv):
                rep.n_exiting += 1
            else:
                rep.n_tangent += 1
            y = arc.R(x)
            tol = 1e-8 * (1.0 + np.linalg.norm(y))
            for other in sys.outgoing(arc.target):
                if other.g(y) < -tol:
                    rep.reset_into_guard += 1
                    break
        rep.min_margin = float(min(margins)) if margins else np.nan
        rep.min_gradient_norm = float(min(grads))
        reports.append(rep)
    return ValidationReport(reports)
