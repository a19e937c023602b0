"""Upper bounds on the intrinsic distance between hybrid states.

The intrinsic distance is the infimum of lengths of paths that move
continuously inside modes and jump for free from a guard point to its reset
image. Here paths are restricted to straight segments inside each mode and
to at most ``max_hops`` jumps; guard points are optimized with multi-start
Nelder-Mead over a chart of each guard surface. The returned length is
therefore an upper bound on the true distance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import NoPathFound
from .hybrid import GuardArc, HybridState, HybridSystem
from .integrate import IntegratorOptions, flow, sample
from .norms import norm_function, vector_norm

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricOptions:
    max_hops: int = 2
    n_starts: int = 8
    seed: int = 0
    xatol: float = 1e-10
    fatol: float = 1e-13
    maxiter: int = 4000


@dataclass(frozen=True)
class Hop:
    mode: int
    start: np.ndarray
    end: np.ndarray
    length: float


@dataclass
class PathEstimate:
    """A reset-connected path of straight segments; its length bounds d(a, b)."""

    hops: list[Hop]
    jumps: list[tuple[tuple[int, int], np.ndarray]] = field(default_factory=list)
    total_length: float = 0.0
    upper_bound: bool = True
    # "forward" when every jump follows a reset, "backward" when found from b to a
    direction: str = "forward"

    def to_dict(self, sys: HybridSystem | None = None) -> dict:
        def name(i):
            return sys.modes[i].name if sys is not None else i

        return {
            "total_length": float(self.total_length),
            "upper_bound": self.upper_bound,
            "direction": self.direction,
            "hops": [{"mode": name(h.mode), "start": h.start.tolist(),
                      "end": h.end.tolist(), "length": float(h.length)}
                     for h in self.hops],
            "jumps": [{"arc": [name(k[0]), name(k[1])], "guard_point": p.tolist()}
                      for k, p in self.jumps],
        }


# ---------------------------------------------------------------------------
# guard charts


@dataclass
class _Chart:
    fn: Callable[[np.ndarray], np.ndarray]
    inverse: Callable[[np.ndarray], np.ndarray]
    lo: np.ndarray
    hi: np.ndarray
    check: Optional[Callable[[np.ndarray], bool]] = None

    def __call__(self, s):
        return self.fn(np.minimum(np.maximum(s, self.lo), self.hi))

    def seed(self, q):
        return np.clip(self.inverse(q), self.lo, self.hi)


def _project(arc: GuardArc, x: np.ndarray, iters: int = 50) -> np.ndarray:
    """Newton projection of ``x`` onto ``g = 0`` along the gradient."""
    for _ in range(iters):
        g = arc.g(x)
        if abs(g) <= 1e-14 * (1.0 + np.linalg.norm(x)):
            break
        dg = arc.Dg(x)
        x = x - g * dg / (dg @ dg)
    return x


def _implicit_chart(sys: HybridSystem, arc: GuardArc, a: np.ndarray,
                    b: np.ndarray) -> _Chart:
    """Tangent-plane chart around a root of ``g`` near the segment ``a -> b``."""
    base = _project(arc, 0.5 * (a + b) if a.size == b.size else a.copy())
    dg = arc.Dg(base)
    _, _, vt = np.linalg.svd(dg[None, :])
    T = vt[1:].T
    n = T.shape[1]
    mode = sys.modes[arc.source]
    return _Chart(
        fn=lambda s: _project(arc, base + T @ s),
        inverse=lambda q: T.T @ (q - base),
        lo=np.full(n, -np.inf), hi=np.full(n, np.inf),
        check=mode.contains,
    )


def _chart(sys, arc, a, b) -> _Chart:
    if arc.chart is None or arc.chart_inverse is None:
        return _implicit_chart(sys, arc, a, b)
    n = sys.modes[arc.source].dim - 1
    if arc.chart_bounds is None:
        lo, hi = np.full(n, -np.inf), np.full(n, np.inf)
    else:
        lo, hi = (np.asarray(v, dtype=float) for v in arc.chart_bounds)
    return _Chart(arc.chart, arc.chart_inverse, lo, hi)


def arc_sequences(sys: HybridSystem, start: int, stop: int, max_hops: int):
    """All arc sequences of length 1..max_hops leading from ``start`` to ``stop``."""
    out = []

    def walk(mode, path):
        if path and mode == stop:
            out.append(list(path))
        if len(path) == max_hops:
            return
        for arc in sys.outgoing(mode):
            path.append(arc)
            walk(arc.target, path)
            path.pop()

    walk(start, [])
    return out


# ---------------------------------------------------------------------------


def _straight(sys, a: HybridState, b: HybridState) -> PathEstimate:
    length = vector_norm(b.x - a.x, sys.modes[a.mode].norm)
    return PathEstimate([Hop(a.mode, a.x.copy(), b.x.copy(), length)], [], length)


def _assemble(sys, a, b, arcs, points) -> PathEstimate:
    hops, jumps = [], []
    cur_mode, cur = a.mode, a.x
    for arc, p in zip(arcs, points):
        hops.append(Hop(cur_mode, cur.copy(), p.copy(),
                        vector_norm(p - cur, sys.modes[cur_mode].norm)))
        jumps.append((arc.key, p.copy()))
        cur_mode, cur = arc.target, arc.R(p)
    hops.append(Hop(cur_mode, cur.copy(), b.x.copy(),
                    vector_norm(b.x - cur, sys.modes[cur_mode].norm)))
    return PathEstimate(hops, jumps, float(sum(h.length for h in hops)))


# finite penalty for guard points outside the source domain; an infinite one
# makes the simplex convergence test evaluate inf - inf
_INFEASIBLE = 1e300


def _optimize_sequence(sys, a, b, arcs, opts: MetricOptions, rng) -> PathEstimate | None:
    charts = [_chart(sys, arc, a.x, b.x) for arc in arcs]
    sizes = [sys.modes[arc.source].dim - 1 for arc in arcs]
    splits = np.cumsum(sizes)[:-1]
    norms = [norm_function(sys.modes[m].norm, sys.modes[m].dim)
             for m in [a.mode] + [arc.target for arc in arcs]]

    bounds = [(int(i), int(j)) for i, j in zip(np.r_[0, splits], np.cumsum(sizes))]

    def points(s):
        return [c(s[i:j]) for c, (i, j) in zip(charts, bounds)]

    def length(s):
        cur = a.x
        total = 0.0
        for k, (arc, c, (i, j)) in enumerate(zip(arcs, charts, bounds)):
            p = c(s[i:j])
            if c.check is not None and not c.check(p):
                return _INFEASIBLE
            total += norms[k](p - cur)
            cur = arc.R(p)
        return total + norms[-1](b.x - cur)

    same_dim = a.x.size == b.x.size
    fracs = [0.0, 1.0, 0.5, 0.25, 0.75]
    starts = []
    for k in range(opts.n_starts):
        parts = []
        for c, arc in zip(charts, arcs):
            if same_dim and k < len(fracs):
                q = a.x + fracs[k] * (b.x - a.x)
            else:
                q = a.x if arc.source == a.mode else b.x
                if q.size != sys.modes[arc.source].dim:
                    q = np.zeros(sys.modes[arc.source].dim)
            base = c.seed(q)
            if k >= len(fracs):
                base = base + rng.standard_normal(base.size) * (1.0 + np.abs(base))
                base = np.clip(base, c.lo, c.hi)
            parts.append(base)
        starts.append(np.concatenate(parts))

    best_s, best_f = None, np.inf
    tried = []
    for s0 in starts:
        if any(np.array_equal(s0, s1) for s1 in tried):
            continue
        tried.append(s0)
        f0 = length(s0)
        if f0 < best_f:
            best_s, best_f = s0, f0
        res = minimize(length, s0, method="Nelder-Mead",
                       options=dict(xatol=opts.xatol, fatol=opts.fatol,
                                    maxiter=opts.maxiter))
        if res.fun < best_f:
            best_s, best_f = res.x, float(res.fun)
    if not best_f < _INFEASIBLE:
        return None
    return _assemble(sys, a, b, arcs, points(best_s))


def _reverse(p: PathEstimate) -> PathEstimate:
    hops = [Hop(h.mode, h.end, h.start, h.length) for h in reversed(p.hops)]
    return PathEstimate(hops, list(reversed(p.jumps)), p.total_length, True, "backward")


def intrinsic_distance(sys: HybridSystem, a: HybridState, b: HybridState,
                       opts: MetricOptions | None = None) -> PathEstimate:
    """Shortest reset-connected path found between ``a`` and ``b``.

    Candidates: the straight segment when both states share a mode, and for
    every arc sequence of at most ``max_hops`` jumps from ``a`` to ``b`` (or
    from ``b`` to ``a``, which covers jumps taken against a reset) a path
    whose guard points minimize the total length.
    """
    opts = opts or MetricOptions()
    if not isinstance(a, HybridState):
        a = sys.state(*a)
    if not isinstance(b, HybridState):
        b = sys.state(*b)
    rng = np.random.default_rng(opts.seed)
    best = _straight(sys, a, b) if a.mode == b.mode else None
    if best is not None and best.total_length == 0.0:
        return best
    for src, dst, backward in ((a, b, False), (b, a, True)):
        for arcs in arc_sequences(sys, src.mode, dst.mode, opts.max_hops):
            cand = _optimize_sequence(sys, src, dst, arcs, opts, rng)
            if cand is None:
                continue
            if backward:
                cand = _reverse(cand)
            if best is None or cand.total_length < best.total_length:
                best = cand
    if best is None:
        raise NoPathFound(
            f"no path between modes {sys.modes[a.mode].name!r} and "
            f"{sys.modes[b.mode].name!r} within {opts.max_hops} jumps")
    return best


def divergence_series(sys: HybridSystem, a0: HybridState, b0: HybridState,
                      t_grid: Sequence[float], opts: MetricOptions | None = None,
                      integ: IntegratorOptions | None = None,
                      t0: float | None = None) -> list[tuple[float, float]]:
    """Distance estimates between two executions at each grid time."""
    t_grid = [float(t) for t in t_grid]
    if not t_grid:
        return []
    start = t_grid[0] if t0 is None else float(t0)
    ea = flow(sys, start, a0, t_grid[-1], integ)
    eb = flow(sys, start, b0, t_grid[-1], integ)
    out = []
    for t in t_grid:
        d = intrinsic_distance(sys, sample(ea, t), sample(eb, t), opts)
        out.append((t, d.total_length))
    return out
