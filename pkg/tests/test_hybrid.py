import numpy as np
import pytest

from hybridcontract.errors import ConfigError
from hybridcontract.hybrid import (
    GuardArc,
    HybridState,
    HybridSystem,
    Mode,
    fd_jacobian,
    sample_guard,
    transversality,
    validate_assumptions,
)
from hybridcontract.models import build_example1, build_planar_pwl, build_traffic


def _field(t, x):
    return -x


def test_system_validation():
    a = Mode("a", 2, _field)
    b = Mode("b", 2, _field)
    arc = GuardArc(0, 1, guard=lambda x: x[0])
    with pytest.raises(ConfigError):
        HybridSystem((a, b), (arc, GuardArc(0, 1, guard=lambda x: x[1])))
    with pytest.raises(ConfigError):
        HybridSystem((a, b), (GuardArc(0, 2, guard=lambda x: x[0]),))
    with pytest.raises(ConfigError):
        HybridSystem((a, Mode("a", 2, _field)))
    with pytest.raises(ConfigError):
        HybridSystem(())
    with pytest.raises(ConfigError):
        Mode("bad", 0, _field)


def test_arc_defaults_use_finite_differences():
    arc = GuardArc(0, 0, guard=lambda x: x[0] ** 2 + x[1] - 1.0,
                   reset=lambda x: np.array([2 * x[0], x[1] ** 2]))
    x = np.array([0.5, 0.75])
    assert np.allclose(arc.Dg(x), [1.0, 1.0], atol=1e-8)
    assert np.allclose(arc.DR(x), [[2.0, 0.0], [0.0, 1.5]], atol=1e-8)
    identity = GuardArc(0, 0, guard=lambda x: x[0])
    assert np.array_equal(identity.R(x), x)


def test_fd_jacobian():
    J = fd_jacobian(lambda x: np.array([np.sin(x[0]) * x[1], x[0] ** 3]), np.array([0.3, 2.0]))
    ref = np.array([[np.cos(0.3) * 2.0, np.sin(0.3)], [3 * 0.09, 0.0]])
    assert np.allclose(J, ref, atol=1e-8)


def test_example1_guards_and_mode_inference():
    sys = build_example1()
    L, R = sys.mode_index("L"), sys.mode_index("R")
    assert sys.arc(R, L).g(np.array([1.0, 0.3])) == 0.0
    # inside R's guard set the state belongs to L and vice versa
    assert sys.infer_mode([0.5, 0.5]) == L
    assert sys.infer_mode([1.5, 0.5]) == R
    # on the guard R is already reset, so the state belongs to L
    assert sys.infer_mode([1.0, 0.5]) == L
    with pytest.raises(ConfigError):
        sys.infer_mode([-1.0, 0.5])
    assert sys.triggered_arc(0.0, HybridState(R, np.array([0.5, 1.0]))).key == (R, L)
    assert sys.triggered_arc(0.0, HybridState(L, np.array([0.5, 1.0]))) is None
    # on g = 0 only a guard the flow enters counts
    assert sys.triggered_arc(0.0, HybridState(R, np.array([1.0, 1.0]))).key == (R, L)
    assert sys.triggered_arc(0.0, HybridState(L, np.array([1.0, 1.0]))) is None


def test_transversality_sign():
    sys = build_example1()
    assert transversality(sys, sys.arc(1, 0), 0.0, np.array([1.0, 0.7])) == pytest.approx(-2.0)
    assert transversality(sys, sys.arc(0, 1), 0.0, np.array([1.0, 0.7])) == pytest.approx(1.0)


@pytest.mark.parametrize("build", [build_example1, build_planar_pwl, build_traffic])
def test_guard_samples_lie_on_guards(build):
    sys = build()
    rng = np.random.default_rng(0)
    for arc in sys.arcs:
        pts = sample_guard(sys, arc, 50, rng)
        assert len(pts) == 50
        for x in pts:
            assert abs(arc.g(x)) <= 1e-8
            assert sys.modes[arc.source].contains(x)


def test_validate_assumptions_example1():
    rep = validate_assumptions(build_example1(), n_samples=100)
    rl, lr = rep.arcs
    assert rl.arc == (1, 0) and rl.n_entering == 100 and rl.ok
    # the flow in L never reaches x1 = 1 from the left: every point is exiting
    assert lr.n_exiting == 100 and lr.n_entering == 0 and lr.ok
    assert rep.ok
    assert rep.to_dict()["ok"]


def test_validate_assumptions_flags_tangency():
    # dx/dt = (0, 1) is tangent to the guard x1 = 0
    m = Mode("m", 2, lambda t, x: np.array([0.0, 1.0]), box=([-1, -1], [1, 1]))
    sys = HybridSystem((m, Mode("n", 2, _field)), (GuardArc(0, 1, guard=lambda x: x[0]),))
    rep = validate_assumptions(sys, n_samples=20)
    assert rep.arcs[0].n_tangent == 20 and not rep.ok


def test_traffic_transversality_over_a_period():
    sys = build_traffic()
    rep = validate_assumptions(sys, n_samples=100, times=np.linspace(0, 1, 8, endpoint=False))
    for arc in rep.arcs:
        assert arc.n_samples == 100
        assert arc.reset_into_guard == 0
