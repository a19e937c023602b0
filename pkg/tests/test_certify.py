import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridcontract.certify import (
    CertificateKind,
    RegionSampler,
    bound_flow_measure,
    bound_saltation_norm,
    certify,
    check_envelope,
    check_translation_reset,
    estimate_dwell,
    make_certificate,
    translation_arcs,
)
from hybridcontract.errors import ConfigError, NotATranslation
from hybridcontract.hybrid import GuardArc, HybridState, HybridSystem, Mode
from hybridcontract.integrate import IntegratorOptions
from hybridcontract.models import (
    Example1Params,
    PlanarPwlParams,
    build_example1,
    build_linear,
    build_planar_pwl,
    build_traffic,
)
from hybridcontract.norms import NormSpec

SMALL = RegionSampler(n_points=400, n_guard=100, n_times=8)
TIGHT = IntegratorOptions(rel_tol=1e-11, abs_tol=1e-12, event_tol=1e-12)


def test_flow_measure_examples():
    c, w = bound_flow_measure(build_example1(), SMALL)
    assert c == pytest.approx(-1.0)
    assert w is not None and w.value == c
    assert bound_flow_measure(build_planar_pwl(), SMALL).value == pytest.approx(-0.1)
    pwl = build_planar_pwl(PlanarPwlParams(alpha_plus=-0.5, alpha_minus=0.2))
    assert bound_flow_measure(pwl, SMALL).value == pytest.approx(0.2)
    assert bound_flow_measure(build_traffic(), SMALL).value == pytest.approx(0.0, abs=1e-12)


def test_saltation_bound_examples():
    bound = bound_saltation_norm(build_example1(), SMALL)
    assert bound.value == pytest.approx(1.0)
    assert bound.witness.arc == (1, 0)
    # the arc from L never fires: its guard points are all exiting
    by_arc = {d.arc: d for d in bound.details}
    assert by_arc[(0, 1)].n_transversal == 0 and by_arc[(1, 0)].n_transversal == 100
    none = bound_saltation_norm(build_linear(), SMALL)
    assert none.value == 1.0 and none.witness is None


def test_larger_samples_never_lower_the_bounds():
    sys = build_traffic()
    small = RegionSampler(n_points=100, n_guard=50, n_times=4)
    big = dataclasses.replace(small, n_points=400)
    assert bound_flow_measure(sys, big).value >= bound_flow_measure(sys, small).value
    sys = build_example1(Example1Params(b_R=2.0))
    assert (bound_saltation_norm(sys, dataclasses.replace(small, n_guard=200)).value
            >= bound_saltation_norm(sys, small).value)


def test_envelope_values():
    cert = make_certificate(-1.0, 2.0, 2.0)
    assert cert.kind is CertificateKind.DWELL_TIME
    assert cert.envelope(0.0) == 1.0
    assert cert.envelope(-1.0) == 1.0
    # at most ceil(3 / 2) = 2 resets by t = 3
    assert cert.envelope(3.0) == pytest.approx(4 * math.exp(-3.0))
    assert cert.per_reset_factors() == (pytest.approx(2 * math.exp(-2.0)), 0.0)
    assert cert.contractive
    one = make_certificate(-0.5, 0.5)
    assert one.kind is CertificateKind.THEOREM_ONE
    assert one.envelope(4.0) == pytest.approx(math.exp(-2.0))


def test_sampling_roundoff_in_K_does_not_break_the_envelope():
    cert = make_certificate(0.0, 1 + 1e-12)
    assert cert.kind is CertificateKind.THEOREM_ONE
    assert cert.envelope(5.0) == 1.0
    assert make_certificate(0.0, 1 + 1e-6).envelope(5.0) == math.inf


def test_envelope_with_dwell_max_and_growth():
    cert = make_certificate(0.1, 0.5, 1.0, 4.0)
    # at least floor(10 / 4) = 2 resets, at most 10: the larger factor wins
    assert cert.envelope(10.0) == pytest.approx(0.25 * math.exp(1.0))
    assert cert.per_reset_factors() == (pytest.approx(0.5 * math.exp(0.1)),
                                        pytest.approx(0.5 * math.exp(0.4)))
    assert cert.contractive
    assert not make_certificate(0.0, 1.0).contractive
    assert not make_certificate(-1.0, 3.0, 0.5).contractive


@settings(max_examples=50, deadline=None)
@given(st.floats(-2, 2), st.floats(0, 3), st.floats(0.01, 5), st.floats(0, 20))
def test_kind_matches_K(c, K, tau, t):
    cert = make_certificate(c, K, tau)
    assert (cert.kind is CertificateKind.THEOREM_ONE) == (K <= 1 + 1e-10)
    assert cert.envelope(t) >= 0
    if K <= 1 and c <= 0:
        assert cert.envelope(t) <= 1 + 1e-12


def test_invalid_certificates():
    with pytest.raises(ConfigError):
        make_certificate(-1.0, 1.0, 2.0, 1.0)
    with pytest.raises(ConfigError):
        make_certificate(-1.0, 1.0, -0.1)
    with pytest.raises(ConfigError):
        make_certificate(-1.0, -1.0)
    with pytest.raises(ConfigError):
        RegionSampler(n_points=0)
    assert make_certificate(-1.0, 1.0, exact=False).kind is CertificateKind.NOT_CERTIFIED
    assert not make_certificate(-1.0, 1.0, exact=False).contractive


def test_certify_example1_and_serialisation():
    cert = certify(build_example1(), SMALL)
    assert cert.kind is CertificateKind.THEOREM_ONE and cert.contractive
    d = cert.to_dict()
    assert d["c"] == pytest.approx(-1.0) and d["dwell_max"] is None
    assert d["witnesses"]["K"]["arc"] == ["R", "L"]
    assert d["norms"] == ["2", "2"]


def test_mixed_norms_are_not_certified():
    sys = build_example1()
    modes = (dataclasses.replace(sys.modes[0], norm=NormSpec(1)), sys.modes[1])
    mixed = HybridSystem(modes, sys.arcs)
    assert certify(mixed, SMALL).kind is CertificateKind.NOT_CERTIFIED


def test_certify_is_independent_of_threads():
    sys = build_traffic()
    a = certify(sys, dataclasses.replace(SMALL, threads=1)).to_dict()
    b = certify(sys, dataclasses.replace(SMALL, threads=4)).to_dict()
    assert a == b


def test_estimate_dwell():
    sys = build_planar_pwl()
    lo, hi = estimate_dwell(sys, [HybridState(0, np.array([1.0, 0.0]))], 12.0)
    assert lo == pytest.approx(math.pi / 1.5, abs=1e-6)
    assert hi == pytest.approx(math.pi, abs=1e-6)
    assert estimate_dwell(build_linear(), [HybridState(0, np.ones(2))], 1.0) == (0.0, math.inf)


def test_envelope_check():
    sys = build_example1()
    cert = certify(sys, SMALL)
    same = (HybridState(1, np.array([2.0, 1.0])),) * 2
    other = (HybridState(1, np.array([2.0, 1.0])), HybridState(0, np.array([0.5, 0.5])))
    rep = check_envelope(sys, cert, [same, other], np.linspace(0, 3, 7), integ=TIGHT)
    assert rep.passed
    assert rep.pairs[0].max_ratio == 0.0
    assert rep.to_dict()["pairs"][1]["passed"]
    # a certificate claiming faster contraction than the flow delivers fails
    fast = make_certificate(-3.0, 1.0)
    assert not check_envelope(sys, fast, [other], np.linspace(0, 3, 7), integ=TIGHT).passed


def test_translation_report_example1():
    sys = build_example1()
    rep = check_translation_reset(sys, sys.arc(1, 0), RegionSampler(n_guard=50))
    assert rep.n_samples == 50 and rep.euclidean
    # field jump (1, 0) is parallel to Dg with alpha = 1 inside [0, 4]
    assert rep.all_parallel and rep.alpha_min == pytest.approx(1.0)
    assert rep.unit_norm_predicted and rep.lower_bound_holds
    assert rep.max_norm == pytest.approx(1.0)
    assert check_translation_reset(sys, sys.arc(0, 1), RegionSampler(n_guard=20)).n_samples == 0
    assert len(translation_arcs(sys, RegionSampler(n_guard=20))) == 2


def test_translation_with_equal_fields():
    field = lambda t, x: np.array([-1.0, 0.5])  # noqa: E731
    box = ([-1.0, -1.0], [1.0, 1.0])
    sys = HybridSystem((Mode("a", 2, field, box=box), Mode("b", 2, field, box=box)),
                       (GuardArc(0, 1, guard=lambda x: x[0]),))
    rep = check_translation_reset(sys, sys.arcs[0], RegionSampler(n_guard=20))
    assert rep.alpha_max == pytest.approx(0.0, abs=1e-9)
    assert rep.max_norm == pytest.approx(1.0) and rep.unit_norm_predicted


def test_scaling_reset_is_not_a_translation():
    sys = build_planar_pwl(PlanarPwlParams(c_plus=0.5))
    with pytest.raises(NotATranslation):
        check_translation_reset(sys, sys.arc(0, 1), RegionSampler(n_guard=10))
