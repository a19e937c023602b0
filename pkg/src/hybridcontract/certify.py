"""Sampled contraction certificates.

The flow bound ``c`` is the largest matrix measure of the field Jacobian
over sampled states (and times, for time-varying Jacobians); the reset
bound ``K`` is the largest induced norm of the saltation matrix over
sampled guard points where the flow enters the guard. Both are sampled
suprema, not rigorous bounds; the worst sample is kept as a witness.

With dwell times between resets in ``[dwell_min, dwell_max]`` the distance
between executions is bounded by

    max(K^ceil(t / dwell_min), K^floor(t / dwell_max)) * exp(c t) * d(0),

which reduces to ``exp(c t) d(0)`` when ``K <= 1``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy.stats import qmc

from .errors import ConfigError, NotATranslation
from .hybrid import (
    TRANSVERSALITY_TOL,
    GuardArc,
    HybridState,
    HybridSystem,
    sample_guard,
    transversality,
)
from .integrate import IntegratorOptions, flow
from .metric import MetricOptions, divergence_series
from .norms import induced_norm, matrix_measure
from .variational import saltation_matrix

THEOREM_K_TOL = 1e-10


@dataclass(frozen=True)
class RegionSampler:
    """Where and when the bounding sups are sampled.

    ``boxes`` maps mode index to ``(lo, hi)`` and falls back to each mode's
    own sampling box. Points come from a scrambled Halton sequence, so a
    larger ``n_points`` only appends samples.
    """

    n_points: int = 10_000
    n_guard: int = 1_000
    n_times: int = 32
    horizon: Optional[float] = None
    boxes: Optional[dict] = None
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.n_points < 1 or self.n_guard < 1 or self.n_times < 1:
            raise ConfigError("sample counts must be positive")

    def box(self, sys: HybridSystem, mode: int):
        box = (self.boxes or {}).get(mode) or sys.modes[mode].box
        if box is None:
            raise ConfigError(f"no sampling box for mode {sys.modes[mode].name!r}")
        lo, hi = (np.asarray(v, dtype=float) for v in box)
        if not np.all(hi > lo):
            raise ConfigError("sampling boxes need positive volume")
        return lo, hi

    def points(self, sys: HybridSystem, mode: int) -> np.ndarray:
        lo, hi = self.box(sys, mode)
        m = sys.modes[mode]
        seq = qmc.Halton(m.dim, scramble=True, seed=self.seed + 7919 * mode)
        pts = qmc.scale(seq.random(self.n_points), lo, hi)
        return np.array([x for x in pts if m.contains(x)]).reshape(-1, m.dim)

    def times(self, sys: HybridSystem, time_varying: bool) -> np.ndarray:
        horizon = self.horizon if self.horizon is not None else sys.horizon
        if not time_varying or horizon is None:
            return np.zeros(1)
        return np.linspace(0.0, horizon, self.n_times, endpoint=False)

    def guard_points(self, sys: HybridSystem, arc: GuardArc) -> np.ndarray:
        rng = np.random.default_rng([self.seed, arc.source, arc.target])
        box = (self.boxes or {}).get(arc.source)
        return sample_guard(sys, arc, self.n_guard, rng, box=box)


@dataclass(frozen=True)
class Witness:
    mode: int
    t: float
    x: np.ndarray
    value: float
    arc: Optional[tuple[int, int]] = None

    def to_dict(self, sys: HybridSystem | None = None) -> dict:
        name = (lambda i: sys.modes[i].name) if sys is not None else (lambda i: i)
        d = {"mode": name(self.mode), "t": float(self.t),
             "x": [float(v) for v in self.x], "value": float(self.value)}
        if self.arc is not None:
            d["arc"] = [name(i) for i in self.arc]
        return d


@dataclass
class Bound:
    """A sampled supremum with its worst-case sample."""

    value: float
    witness: Optional[Witness]
    exact: bool = True
    details: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.value, self.witness))


def _pmap(fn, items, threads):
    if threads and threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def bound_flow_measure(sys: HybridSystem, sampler: RegionSampler | None = None) -> Bound:
    """Largest sampled ``mu_j(DF_j(t, x))`` over all modes."""
    sampler = sampler or RegionSampler()

    def per_mode(j):
        mode = sys.modes[j]
        best = None
        for t in sampler.times(sys, mode.jacobian_time_varying):
            for x in sampler.points(sys, j):
                v = matrix_measure(mode.DF(t, x), mode.norm)
                if best is None or v > best.value:
                    best = Witness(j, float(t), x, v)
        return best

    results = [w for w in _pmap(per_mode, list(range(len(sys.modes))), sampler.threads)
               if w is not None]
    if not results:
        raise ConfigError("no sample points fell inside any mode domain")
    worst = max(results, key=lambda w: w.value)
    return Bound(worst.value, worst, True, results)


@dataclass
class ArcSaltation:
    arc: tuple[int, int]
    n_points: int
    n_transversal: int
    max_norm: float
    max_sym_eig: float
    exact: bool
    witness: Optional[Witness] = None

    def to_dict(self, sys: HybridSystem | None = None) -> dict:
        name = (lambda i: sys.modes[i].name) if sys is not None else (lambda i: i)
        return {"arc": [name(i) for i in self.arc], "n_points": self.n_points,
                "n_transversal": self.n_transversal,
                "max_norm": _num(self.max_norm), "max_sym_eig": _num(self.max_sym_eig),
                "exact": self.exact,
                "witness": None if self.witness is None else self.witness.to_dict(sys)}


def _num(v):
    return None if v is None or not np.isfinite(v) else float(v)


def arc_saltations(sys: HybridSystem, arc: GuardArc, sampler: RegionSampler):
    """Yield ``(t, x, record)`` at sampled guard points where the flow enters."""
    src, dst = sys.modes[arc.source], sys.modes[arc.target]
    times = sampler.times(sys, src.time_varying or dst.time_varying)
    for x in sampler.guard_points(sys, arc):
        for t in times:
            if transversality(sys, arc, t, x) < -TRANSVERSALITY_TOL:
                yield float(t), x, saltation_matrix(sys, arc, t, x)


def bound_saltation_norm(sys: HybridSystem, sampler: RegionSampler | None = None) -> Bound:
    """Largest sampled induced norm of the saltation matrix over all arcs.

    Guard points where the field does not enter the guard are skipped:
    executions never reset there, and the saltation matrix is undefined.
    An empty maximum (no arcs) is 1.
    """
    sampler = sampler or RegionSampler()

    def per_arc(arc):
        src, dst = sys.modes[arc.source], sys.modes[arc.target]
        n_pts = 0
        n_tr = 0
        best, best_sym, exact = None, -np.inf, True
        pts = sampler.guard_points(sys, arc)
        n_pts = len(pts)
        for t, x, rec in arc_saltations(sys, arc, sampler):
            n_tr += 1
            nv = induced_norm(rec.matrix, dst.norm, src.norm)
            exact = exact and nv.exact
            if rec.matrix.shape[0] == rec.matrix.shape[1]:
                sym = float(np.linalg.eigvalsh(0.5 * (rec.matrix + rec.matrix.T))[-1])
                best_sym = max(best_sym, sym)
            if best is None or nv.value > best.value:
                best = Witness(arc.source, t, x, nv.value, arc.key)
        return ArcSaltation(arc.key, n_pts, n_tr,
                            best.value if best else np.nan, best_sym, exact, best)

    details = _pmap(per_arc, list(sys.arcs), sampler.threads)
    reached = [d for d in details if d.witness is not None]
    exact = all(d.exact for d in details)
    if not reached:
        return Bound(1.0, None, exact, details)
    worst = max(reached, key=lambda d: d.max_norm)
    return Bound(worst.max_norm, worst.witness, exact, details)


# ---------------------------------------------------------------------------
# certificates


class CertificateKind(str, Enum):
    THEOREM_ONE = "TheoremOne"
    DWELL_TIME = "DwellTime"
    NOT_CERTIFIED = "NotCertified"


def _log_kpow(K: float, n: float) -> float:
    """``log(K ** n)`` with ``0 ** 0 = 1`` and the limits at ``n = inf``."""
    if n == 0:
        return 0.0
    if K == 0:
        return -math.inf
    if math.isinf(n):
        return -math.inf if K < 1 else (0.0 if K == 1 else math.inf)
    return n * math.log(K)


@dataclass
class ContractionCertificate:
    c: float
    K: float
    dwell_min: float = 0.0
    dwell_max: float = math.inf
    kind: CertificateKind = CertificateKind.THEOREM_ONE
    norms: list = field(default_factory=list)
    witnesses: dict = field(default_factory=dict)
    dwell_source: str = "given"
    sampled: bool = True

    @property
    def K_effective(self) -> float:
        """``K`` with values within ``THEOREM_K_TOL`` above 1 rounded to 1."""
        return 1.0 if 1.0 < self.K <= 1 + THEOREM_K_TOL else self.K

    def envelope(self, t: float) -> float:
        """Growth factor bounding ``d(t) / d(0)``; equals 1 before time 0."""
        K = self.K_effective
        if t < 0:
            return 1.0
        if self.dwell_min > 0:
            n_most = math.ceil(t / self.dwell_min)
        else:
            n_most = 0 if t == 0 else math.inf
        n_least = 0 if math.isinf(self.dwell_max) else math.floor(t / self.dwell_max)
        log_env = max(_log_kpow(K, n_most), _log_kpow(K, n_least)) + self.c * t
        return math.exp(log_env) if log_env < 709.0 else math.inf

    def per_reset_factors(self) -> tuple[float, float]:
        """``(K e^{c dwell_min}, K e^{c dwell_max})``, with limits at infinity."""
        K = self.K_effective

        def f(tau):
            if math.isinf(tau):
                if self.c < 0:
                    return 0.0
                return K if self.c == 0 else math.inf
            return K * math.exp(self.c * tau)
        return f(self.dwell_min), f(self.dwell_max)

    @property
    def contractive(self) -> bool:
        if self.kind is CertificateKind.NOT_CERTIFIED:
            return False
        if self.K <= 1 + THEOREM_K_TOL and self.c < 0:
            return True
        return max(self.per_reset_factors()) < 1

    def to_dict(self) -> dict:
        return {
            "c": float(self.c),
            "K": float(self.K),
            "dwell_min": float(self.dwell_min),
            "dwell_max": None if math.isinf(self.dwell_max) else float(self.dwell_max),
            "dwell_source": self.dwell_source,
            "kind": self.kind.value,
            "contractive": self.contractive,
            "norms": list(self.norms),
            "sampled": self.sampled,
            "witnesses": self.witnesses,
        }


def make_certificate(c: float, K: float, dwell_min: float = 0.0,
                     dwell_max: float = math.inf, *, exact: bool = True,
                     norms: Sequence[str] = (), witnesses: dict | None = None,
                     dwell_source: str = "given") -> ContractionCertificate:
    if not (dwell_min >= 0 and dwell_max > 0 and dwell_min <= dwell_max):
        raise ConfigError(
            f"need 0 <= dwell_min <= dwell_max and dwell_max > 0, got "
            f"({dwell_min}, {dwell_max})")
    if not K >= 0:
        raise ConfigError(f"K must be nonnegative, got {K}")
    if not exact:
        kind = CertificateKind.NOT_CERTIFIED
    elif K <= 1 + THEOREM_K_TOL:
        kind = CertificateKind.THEOREM_ONE
    else:
        kind = CertificateKind.DWELL_TIME
    return ContractionCertificate(float(c), float(K), float(dwell_min), float(dwell_max),
                                  kind, list(norms), dict(witnesses or {}), dwell_source)


def certify(sys: HybridSystem, sampler: RegionSampler | None = None,
            dwell_min: float = 0.0, dwell_max: float = math.inf,
            dwell_source: str = "given") -> ContractionCertificate:
    """Bound ``c`` and ``K`` by sampling and wrap them in a certificate."""
    sampler = sampler or RegionSampler()
    cb = bound_flow_measure(sys, sampler)
    kb = bound_saltation_norm(sys, sampler)
    wit = {"c": cb.witness.to_dict(sys),
           "K": None if kb.witness is None else kb.witness.to_dict(sys),
           "arcs": [d.to_dict(sys) for d in kb.details]}
    return make_certificate(cb.value, kb.value, dwell_min, dwell_max, exact=kb.exact,
                            norms=[m.norm.label for m in sys.modes], witnesses=wit,
                            dwell_source=dwell_source)


def estimate_dwell(sys: HybridSystem, states: Sequence[HybridState], t_end: float,
                   opts: IntegratorOptions | None = None) -> tuple[float, float]:
    """Smallest and largest gaps between consecutive resets over simulated runs.

    Empirical only; ``(0, inf)`` when fewer than two resets were seen.
    """
    gaps = []
    for s in states:
        gaps.extend(flow(sys, 0.0, s, t_end, opts).dwell_times())
    if not gaps:
        return 0.0, math.inf
    return float(min(gaps)), float(max(gaps))


# ---------------------------------------------------------------------------
# envelope checks


@dataclass
class PairResult:
    series: list[tuple[float, float]]
    envelope: list[float]
    max_ratio: float
    passed: bool

    def to_dict(self) -> dict:
        return {"series": [[float(t), float(d)] for t, d in self.series],
                "envelope": [float(e) for e in self.envelope],
                "max_ratio": _num(self.max_ratio), "passed": self.passed}


@dataclass
class EnvelopeReport:
    pairs: list[PairResult]
    tol: float

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.pairs)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "tolerance": self.tol,
            "note": ("distances are upper-bound estimates; a ratio above 1 is "
                     "either a violation or estimator slack"),
            "pairs": [p.to_dict() for p in self.pairs],
        }


def check_envelope(sys: HybridSystem, cert: ContractionCertificate,
                   pairs: Sequence[tuple[HybridState, HybridState]],
                   t_grid: Sequence[float], tol: float = 1e-3,
                   metric: MetricOptions | None = None,
                   integ: IntegratorOptions | None = None) -> EnvelopeReport:
    """Compare distance series against ``envelope(t) * d(0)`` for each pair."""
    t_grid = [float(t) for t in t_grid]
    t0 = t_grid[0]
    out = []
    for a, b in pairs:
        series = divergence_series(sys, a, b, t_grid, metric, integ)
        env = [cert.envelope(t - t0) for t in t_grid]
        d0 = series[0][1]
        if d0 == 0:
            worst = 0.0 if all(d <= 1e-12 for _, d in series) else math.inf
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = [d / (e * d0) if e > 0 else (0.0 if d == 0 else math.inf)
                          for (_, d), e in zip(series, env)]
            worst = float(max(ratios))
        out.append(PairResult(series, env, worst, worst <= 1 + tol))
    return EnvelopeReport(out, tol)


# ---------------------------------------------------------------------------
# translation resets


@dataclass
class TranslationReport:
    arc: tuple[int, int]
    n_samples: int
    min_norm: float
    max_norm: float
    euclidean: bool
    max_parallel_residual: float = np.nan
    all_parallel: Optional[bool] = None
    alpha_min: float = np.nan
    alpha_max: float = np.nan
    all_alpha_in_interval: Optional[bool] = None

    @property
    def lower_bound_holds(self) -> bool:
        """Sampled saltation norms are at least one."""
        return self.min_norm >= 1 - 1e-8

    @property
    def unit_norm_predicted(self) -> Optional[bool]:
        """Euclidean criterion: parallel field jump with admissible multiplier."""
        if not self.euclidean:
            return None
        return bool(self.all_parallel and self.all_alpha_in_interval)

    def to_dict(self) -> dict:
        d = {k: (_num(v) if isinstance(v, float) else v) for k, v in self.__dict__.items()}
        d["arc"] = list(self.arc)
        d["lower_bound_holds"] = self.lower_bound_holds
        d["unit_norm_predicted"] = self.unit_norm_predicted
        return d


def check_translation_reset(sys: HybridSystem, arc: GuardArc,
                            sampler: RegionSampler | None = None,
                            points: np.ndarray | None = None) -> TranslationReport:
    """Saltation norms of a translation reset and the Euclidean unit-norm test.

    For Euclidean norms the saltation matrix has norm one exactly when the
    field jump ``F_post - F_pre`` is ``alpha * Dg^T`` with
    ``0 <= alpha <= -2 Dg F_pre / |Dg|^2``.
    """
    sampler = sampler or RegionSampler(n_guard=200)
    src, dst = sys.modes[arc.source], sys.modes[arc.target]
    if src.norm != dst.norm or src.dim != dst.dim:
        raise NotATranslation(f"arc {arc.key}: modes carry different norms or dimensions")
    if points is None:
        points = sampler.guard_points(sys, arc)
    times = sampler.times(sys, src.time_varying or dst.time_varying)
    euclid = src.norm.p == 2 and src.norm.weights is None
    norms, residuals, alphas, in_interval = [], [], [], []
    for x in points:
        if not np.allclose(arc.DR(x), np.eye(src.dim), rtol=0, atol=1e-8):
            raise NotATranslation(f"arc {arc.key}: DR is not the identity at {x.tolist()}")
        for t in times:
            if not transversality(sys, arc, t, x) < -TRANSVERSALITY_TOL:
                continue
            rec = saltation_matrix(sys, arc, t, x)
            norms.append(induced_norm(rec.matrix, dst.norm, src.norm).value)
            if euclid:
                diff = rec.F_post - rec.F_pre
                dg = rec.Dg
                alpha = float(diff @ dg / (dg @ dg))
                res = float(np.linalg.norm(diff - alpha * dg))
                residuals.append((res, float(np.linalg.norm(diff))))
                alphas.append(alpha)
                upper = -2 * rec.denom / float(dg @ dg)
                in_interval.append(-1e-12 <= alpha <= upper + 1e-12)
    if not norms:
        return TranslationReport(arc.key, 0, np.nan, np.nan, euclid)
    rep = TranslationReport(arc.key, len(norms), float(min(norms)), float(max(norms)),
                            euclid)
    if euclid:
        rep.max_parallel_residual = max(r for r, _ in residuals)
        rep.all_parallel = all(r <= 1e-6 * n + 1e-14 for r, n in residuals)
        rep.alpha_min, rep.alpha_max = min(alphas), max(alphas)
        rep.all_alpha_in_interval = all(in_interval)
    return rep


def translation_arcs(sys: HybridSystem, sampler: RegionSampler | None = None):
    """Reports for every arc whose reset is a translation between equal norms."""
    out = []
    for arc in sys.arcs:
        try:
            out.append(check_translation_reset(sys, arc, sampler))
        except NotATranslation:
            continue
    return out
