import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridcontract.errors import ConfigError, TransversalityViolation, ZenoSuspected
from hybridcontract.hybrid import GuardArc, HybridState, HybridSystem, Mode
from hybridcontract.integrate import (
    IntegratorOptions,
    flow,
    integrate_adaptive,
    sample,
)
from hybridcontract.models import build_example1, build_planar_pwl


def bouncing_ball(restitution=0.5):
    m = Mode("air", 2, lambda t, x: np.array([x[1], -9.81]))
    arc = GuardArc(0, 0, guard=lambda x: x[0],
                   guard_gradient=lambda x: np.array([1.0, 0.0]),
                   reset=lambda x: np.array([0.0, -restitution * x[1]]),
                   reset_jacobian=lambda x: np.diag([0.0, -restitution]))
    return HybridSystem((m,), (arc,), name="ball")


def test_integrate_adaptive_exponential():
    opts = IntegratorOptions(rel_tol=1e-10, abs_tol=1e-12)
    ts, ys, _ = integrate_adaptive(lambda t, y: -2.0 * y, 0.0, np.array([1.0]), 1.5, opts)
    assert ts[-1] == 1.5
    assert ys[-1, 0] == pytest.approx(math.exp(-3.0), rel=1e-9)


def test_tolerance_controls_error():
    f = lambda t, y: np.array([y[1], -y[0]])  # noqa: E731
    errs = []
    for tol in (1e-6, 1e-9, 1e-12):
        _, ys, _ = integrate_adaptive(f, 0.0, np.array([1.0, 0.0]), 10.0,
                                      IntegratorOptions(rel_tol=tol, abs_tol=tol))
        errs.append(abs(ys[-1, 0] - math.cos(10.0)))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-10


def test_example1_event_time_and_dense_output():
    sys = build_example1()
    opts = IntegratorOptions(rel_tol=1e-12, abs_tol=1e-12, event_tol=1e-13)
    ex = flow(sys, 0.0, (1, [2.0, 1.0]), 1.0, opts)
    tau = 0.5 * math.log(2.0)
    assert len(ex.events) == 1 and ex.events[0].arc == (1, 0)
    assert ex.events[0].time == pytest.approx(tau, abs=1e-10)
    assert ex.events[0].transversality < 0
    for t in (0.1, 0.3, 0.5, 0.9):
        x = sample(ex, t).x
        x1 = 2 * math.exp(-2 * t) if t < tau else math.exp(-(t - tau))
        assert x == pytest.approx([x1, math.exp(-t)], abs=1e-9)
    assert ex.final_state.mode == 0
    assert len(ex.dwell_times()) == 0


def test_sampling_is_right_continuous():
    sys = build_example1()
    ex = flow(sys, 0.0, (1, [2.0, 1.0]), 1.0)
    te = ex.events[0].time
    assert sample(ex, te).mode == 0
    assert sample(ex, te - 1e-6).mode == 1
    with pytest.raises(ValueError):
        sample(ex, 1.5)


def test_zero_length_run():
    ex = flow(build_example1(), 0.0, (1, [2.0, 1.0]), 0.0)
    assert list(ex.samples())[0][0] == 0.0
    assert len(list(ex.samples())) == 1
    with pytest.raises(ConfigError):
        flow(build_example1(), 1.0, (1, [2.0, 1.0]), 0.0)


def test_initial_state_inside_guard_resets_immediately():
    sys = build_example1()
    ex = flow(sys, 0.0, HybridState(1, np.array([0.5, 0.5])), 0.5)
    assert ex.events[0].initial and ex.events[0].time == 0.0
    assert ex.final_state.mode == 0
    assert ex.final_state.x == pytest.approx([0.5 * math.exp(-0.5)] * 2, rel=1e-7)


def test_planar_pwl_returns_every_half_turn():
    sys = build_planar_pwl()
    ex = flow(sys, 0.0, (0, [1.0, 0.0]), 10.0)
    times = np.array([e.time for e in ex.events])
    # beta_plus = 1 and beta_minus = 1.5: a quarter turn in plus, half turns after
    assert times[0] == pytest.approx(math.pi / 2, abs=1e-8)
    assert np.diff(times)[0] == pytest.approx(math.pi / 1.5, abs=1e-8)
    assert np.diff(times)[1] == pytest.approx(math.pi, abs=1e-8)


def halving_clock():
    """From (1, 1): resets at t = 2 - 2^-k, accumulating at t = 2, always transversal."""
    m = Mode("m", 2, lambda t, x: np.array([-1.0, 0.0]))
    arc = GuardArc(0, 0, guard=lambda x: x[0],
                   reset=lambda x: np.array([0.5 * x[1], 0.5 * x[1]]))
    return HybridSystem((m,), (arc,))


def test_zeno_is_detected():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        with pytest.raises(ZenoSuspected):
            flow(halving_clock(), 0.0, (0, [1.0, 1.0]), 5.0)


def test_short_dwell_warns():
    with pytest.warns(RuntimeWarning, match="dwell time"):
        flow(halving_clock(), 0.0, (0, [1.0, 1.0]), 2.0 - 2.0 ** -22)


def test_max_events():
    opts = IntegratorOptions(max_events=3)
    with pytest.raises(ZenoSuspected):
        flow(bouncing_ball(0.9), 0.0, (0, [1.0, 0.0]), 10.0, opts)


def test_tangential_guard_raises():
    # x1 = -(t - 1)^3 crosses zero with zero speed at t = 1
    m = Mode("m", 2, lambda t, x: np.array([-3.0 * (x[1] - 1.0) ** 2, 1.0]))
    arc = GuardArc(0, 0, guard=lambda x: x[0], guard_gradient=lambda x: np.array([1.0, 0.0]))
    sys = HybridSystem((m,), (arc,))
    with pytest.raises(TransversalityViolation):
        flow(sys, 0.0, (0, [1.0, 0.0]), 2.0)


def test_flow_is_deterministic():
    sys = build_planar_pwl()
    a = flow(sys, 0.0, (0, [1.0, 0.3]), 7.0)
    b = flow(sys, 0.0, (0, [1.0, 0.3]), 7.0)
    assert [e.time for e in a.events] == [e.time for e in b.events]
    assert np.array_equal(a.final_state.x, b.final_state.x)


@settings(max_examples=25, deadline=None)
@given(st.floats(1.01, 3.0), st.floats(0.0, 3.0))
def test_example1_runs_end_in_L_and_converge(x1, x2):
    sys = build_example1()
    horizon = 20.0
    ex = flow(sys, 0.0, (1, [x1, x2]), horizon)
    assert [e.arc for e in ex.events] == [(1, 0)]
    assert ex.final_state.mode == 0
    assert np.linalg.norm(ex.final_state.x) <= math.hypot(x1, x2) * math.exp(-horizon + 1)
