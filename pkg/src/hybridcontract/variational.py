"""Saltation matrices and flow Jacobians through resets.

Between resets the Jacobian ``W`` of the flow with respect to the initial
state obeys ``dW/dt = DF(t, x(t)) W`` along the reference trajectory; at a
reset from mode ``j`` to ``j'`` at the guard point ``x`` it jumps by the
saltation matrix

    Xi = DR(x) + (F_j'(t, R(x)) - DR(x) F_j(t, x)) Dg(x) / (Dg(x) F_j(t, x)).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EventAtHorizon, EventSequenceMismatch, TransversalityViolation
from .hybrid import TRANSVERSALITY_TOL, GuardArc, HybridState, HybridSystem
from .integrate import Execution, IntegratorOptions, flow, integrate_adaptive


@dataclass(frozen=True)
class SaltationRecord:
    time: float
    point: np.ndarray
    arc: tuple[int, int]
    matrix: np.ndarray
    F_pre: np.ndarray
    F_post: np.ndarray
    Dg: np.ndarray
    DR: np.ndarray

    @property
    def denom(self) -> float:
        return float(self.Dg @ self.F_pre)

    def reconstruct(self) -> np.ndarray:
        return self.DR + np.outer(self.F_post - self.DR @ self.F_pre, self.Dg) / self.denom

    def to_dict(self, sys=None) -> dict:
        """Plain-data form; arc endpoints become mode names when ``sys`` is given."""
        arc = [sys.modes[i].name for i in self.arc] if sys is not None else list(self.arc)
        return {
            "time": float(self.time),
            "point": self.point.tolist(),
            "arc": arc,
            "matrix": self.matrix.tolist(),
            "F_pre": self.F_pre.tolist(),
            "F_post": self.F_post.tolist(),
            "Dg": self.Dg.tolist(),
            "DR": self.DR.tolist(),
            "denom": self.denom,
        }


def saltation_matrix(sys: HybridSystem, arc: GuardArc, t: float, x) -> SaltationRecord:
    x = np.asarray(x, dtype=float)
    F_pre = sys.modes[arc.source].F(t, x)
    F_post = sys.modes[arc.target].F(t, arc.R(x))
    Dg = arc.Dg(x)
    DR = arc.DR(x)
    denom = float(Dg @ F_pre)
    if not denom < -TRANSVERSALITY_TOL:
        raise TransversalityViolation(
            f"Dg.F = {denom:.3g} on arc {arc.key} at x={x.tolist()}")
    Xi = DR + np.outer(F_post - DR @ F_pre, Dg) / denom
    return SaltationRecord(t, x.copy(), arc.key, Xi, F_pre, F_post, Dg, DR)


@dataclass
class FlowJacobianResult:
    jacobian: np.ndarray
    events: list[SaltationRecord] = field(default_factory=list)
    execution: Execution | None = None


def _variational(mode, seg, t_a, t_b, W, opts):
    n = mode.dim
    m = W.shape[1]

    def rhs(t, w):
        return (mode.DF(t, seg.interpolate(t)) @ w.reshape(n, m)).ravel()

    _, ws, _ = integrate_adaptive(rhs, t_a, W.ravel(), t_b, opts)
    return ws[-1].reshape(n, m)


def flow_jacobian(sys: HybridSystem, t0: float, x0: HybridState | tuple, t_end: float,
                  opts: IntegratorOptions | None = None,
                  execution: Execution | None = None) -> FlowJacobianResult:
    """Jacobian of the final state with respect to the initial state.

    The matrix variational equation is integrated over the stored dense
    output of the reference execution, segment by segment, and multiplied by
    the saltation matrix at each reset.
    """
    opts = opts or IntegratorOptions()
    ex = execution if execution is not None else flow(sys, t0, x0, t_end, opts)
    for ev in ex.events:
        if not ev.initial and abs(ev.time - t_end) <= opts.event_tol and t_end > t0:
            raise EventAtHorizon(f"reset {ev.arc} at t={ev.time} coincides with t_end")
    W = np.eye(sys.modes[ex.segments[0].mode].dim)
    records = []
    var_opts = IntegratorOptions(rel_tol=opts.rel_tol, abs_tol=opts.abs_tol,
                                 max_step=opts.max_step)
    for i, seg in enumerate(ex.segments):
        mode = sys.modes[seg.mode]
        if seg.t_stop > seg.t_start:
            W = _variational(mode, seg, seg.t_start, seg.t_stop, W, var_opts)
        if i < len(ex.events):
            ev = ex.events[i]
            arc = sys.arc(*ev.arc)
            if ev.initial:
                # a neighbourhood of the initial state resets at once
                W = arc.DR(ev.pre_state) @ W
            else:
                rec = saltation_matrix(sys, arc, ev.time, ev.pre_state)
                records.append(rec)
                W = rec.matrix @ W
    return FlowJacobianResult(W, records, ex)


def finite_difference_flow_jacobian(sys: HybridSystem, t0: float,
                                    x0: HybridState | tuple, t_end: float,
                                    h: float | None = None,
                                    opts: IntegratorOptions | None = None,
                                    retries: int = 3) -> np.ndarray:
    """Central differences of flow endpoints over perturbed initial states.

    Every perturbed run must take the same sequence of arcs as the
    reference; otherwise the step is shrunk tenfold, at most ``retries``
    times. Default tolerances are tighter than the flow defaults so the
    difference quotient is not dominated by integration noise.
    """
    if not isinstance(x0, HybridState):
        x0 = sys.state(*x0)
    opts = opts or IntegratorOptions(rel_tol=1e-12, abs_tol=1e-12, event_tol=1e-13)
    ref = flow(sys, t0, x0, t_end, opts)
    arcs = ref.event_arcs
    n = x0.x.size
    h = 1e-5 * (1.0 + np.linalg.norm(x0.x)) if h is None else h
    for _ in range(retries + 1):
        cols, ok = [], True
        for i in range(n):
            e = np.zeros(n)
            e[i] = h
            ends = []
            for sgn in (1, -1):
                run = flow(sys, t0, HybridState(x0.mode, x0.x + sgn * e), t_end, opts)
                if run.event_arcs != arcs:
                    ok = False
                    break
                ends.append(run.final_state.x)
            if not ok:
                break
            cols.append((ends[0] - ends[1]) / (2 * h))
        if ok:
            return np.column_stack(cols)
        h /= 10
    raise EventSequenceMismatch(
        f"perturbed runs change the reset sequence {arcs} even with h={h * 10:g}")
