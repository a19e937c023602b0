"""Vector norms, induced matrix norms and matrix measures.

Every norm here is a (possibly weighted) p-norm with p in {1, 2, inf}:

    |x| = |diag(w) x|_p

so induced norms and matrix measures of weighted norms reduce to the
unweighted ones after conjugating by the weight diagonals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

_VALID_P = (1, 2, np.inf)

# number of random directions for mixed-norm lower bounds
MIXED_NORM_SAMPLES = 10_000


@dataclass(frozen=True)
class NormSpec:
    """A weighted p-norm ``|diag(weights) @ x|_p``.

    ``weights=None`` means the plain p-norm in any dimension.
    """

    p: float = 2
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.p not in _VALID_P:
            raise ValueError(f"p must be 1, 2 or inf, got {self.p!r}")
        if self.weights is not None:
            w = tuple(float(v) for v in self.weights)
            if not w or any(not np.isfinite(v) or v <= 0 for v in w):
                raise ValueError("weights must be finite and strictly positive")
            object.__setattr__(self, "weights", w)

    @classmethod
    def one(cls) -> "NormSpec":
        return cls(1)

    @classmethod
    def two(cls) -> "NormSpec":
        return cls(2)

    @classmethod
    def inf(cls) -> "NormSpec":
        return cls(np.inf)

    @classmethod
    def weighted(cls, weights, p=2) -> "NormSpec":
        return cls(p, tuple(weights))

    @classmethod
    def parse(cls, text: str) -> "NormSpec":
        """Parse ``"1"``, ``"2"``, ``"inf"`` or ``"w1,w2,...@p"``."""
        text = text.strip().lower()
        if "@" in text:
            ws, p = text.split("@", 1)
            return cls(_parse_p(p), tuple(float(v) for v in ws.split(",")))
        return cls(_parse_p(text))

    @property
    def label(self) -> str:
        p = "inf" if self.p == np.inf else str(int(self.p))
        if self.weights is None:
            return p
        return ",".join(repr(w) for w in self.weights) + "@" + p

    def check_dim(self, n: int) -> None:
        if self.weights is not None and len(self.weights) != n:
            raise ValueError(
                f"norm has {len(self.weights)} weights but dimension is {n}"
            )

    def weight_vector(self, n: int) -> np.ndarray:
        self.check_dim(n)
        if self.weights is None:
            return np.ones(n)
        return np.asarray(self.weights)


def _parse_p(text: str) -> float:
    text = text.strip()
    if text in ("inf", "infinity", "oo"):
        return np.inf
    p = float(text)
    if p not in (1.0, 2.0):
        raise ValueError(f"unsupported norm {text!r}")
    return int(p)


class InducedNorm(NamedTuple):
    value: float
    exact: bool


def vector_norm(x, spec: NormSpec) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("expected a vector")
    if spec.weights is not None:
        x = spec.weight_vector(x.size) * x
    if spec.p == 1:
        return float(np.abs(x).sum())
    if spec.p == 2:
        return float(np.sqrt(x @ x))
    return float(np.abs(x).max(initial=0.0))


def norm_function(spec: NormSpec, n: int):
    """Unchecked ``x -> |x|`` for vectors of length ``n``; for hot loops."""
    w = spec.weight_vector(n)
    weighted = spec.weights is not None
    if spec.p == 1:
        if weighted:
            return lambda x: float(np.abs(w * x).sum())
        return lambda x: float(np.abs(x).sum())
    if spec.p == 2:
        if weighted:
            return lambda x: float(np.sqrt((w * x) @ (w * x)))
        return lambda x: float(np.sqrt(x @ x))
    if weighted:
        return lambda x: float(np.abs(w * x).max())
    return lambda x: float(np.abs(x).max())


def _plain_induced(M: np.ndarray, p) -> float:
    if M.size == 0:
        return 0.0
    if p == 1:
        return float(np.abs(M).sum(axis=0).max())
    if p == np.inf:
        return float(np.abs(M).sum(axis=1).max())
    return float(np.linalg.norm(M, 2))


def induced_norm(M, out_spec: NormSpec, in_spec: NormSpec | None = None,
                 rng=None) -> InducedNorm:
    """Operator norm ``sup |M x|_out / |x|_in``.

    Closed forms are used whenever both specs share the same p (weights
    may differ). Mixed p falls back to a sampled lower bound over random
    directions and the signed basis vectors, returned with ``exact=False``.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if in_spec is None:
        in_spec = out_spec
    m, n = M.shape
    w_out = out_spec.weight_vector(m)
    w_in = in_spec.weight_vector(n)
    scaled = (w_out[:, None] * M) / w_in[None, :]
    if out_spec.p == in_spec.p:
        return InducedNorm(_plain_induced(scaled, out_spec.p), True)

    rng = np.random.default_rng(0 if rng is None else rng)
    dirs = rng.standard_normal((MIXED_NORM_SAMPLES, n))
    dirs = np.vstack([dirs, np.eye(n), -np.eye(n)])
    num = np.linalg.norm(dirs @ scaled.T, out_spec.p, axis=1)
    den = np.linalg.norm(dirs, in_spec.p, axis=1)
    return InducedNorm(float(np.max(num / den)), False)


def _plain_measure(A: np.ndarray, p) -> float:
    d = np.diag(A)
    off = np.abs(A)
    np.fill_diagonal(off, 0.0)
    if p == 1:
        return float(np.max(d + off.sum(axis=0)))
    if p == np.inf:
        return float(np.max(d + off.sum(axis=1)))
    return float(np.linalg.eigvalsh(0.5 * (A + A.T))[-1])


def measure_quotient(A, spec: NormSpec, h: float = 1e-6) -> float:
    """One-sided difference ``(||I + hA|| - 1) / h`` approximating mu(A)."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    return (induced_norm(np.eye(n) + h * A, spec).value - 1.0) / h


def matrix_measure(A, spec: NormSpec) -> float:
    """Logarithmic norm of a square matrix for a weighted 1, 2 or inf norm."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n, m = A.shape
    if n != m:
        raise ValueError(f"matrix measure needs a square matrix, got {A.shape}")
    w = spec.weight_vector(n)
    if spec.weights is not None:
        A = (w[:, None] * A) / w[None, :]
    mu = _plain_measure(A, spec.p)
    if __debug__:
        # the difference quotient has O(h |A|^2) bias for the 2-norm
        h = 1e-6
        q = (_plain_induced(np.eye(n) + h * A, spec.p) - 1.0) / h
        scale = max(1.0, float(np.abs(A).max()) ** 2)
        assert abs(q - mu) <= 1e-4 * scale, (mu, q)
    return mu
