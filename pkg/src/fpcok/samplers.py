"""Entry laws on F_p, matrix ensembles, and reproducible sampling.

Every matrix is a pure function of ``(seed, stream)``: a Philox counter
generator is keyed by the pair, and entry ``e`` (row-major) is decided by
the ``e``-th 32-bit word of that stream. A sample therefore comes out the
same whichever worker draws it, and in whatever order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .errors import ThresholdOutOfRange
from .gfp import FpMatrix, check_prime

PROB_TOL = 1e-12
_TWO32 = 1 << 32
_MASK64 = (1 << 64) - 1


def alpha_n(c: float, n: int, p: int, clamp: bool = False) -> float:
    """Balance parameter ``c * ln(n) / n``.

    Raises ``ThresholdOutOfRange`` when the value exceeds ``1 - 1/p`` (no law
    on F_p can then be balanced). With ``clamp=True`` the value is replaced
    by ``1 - 1/p`` instead.
    """
    p = check_prime(p)
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    if c <= 0:
        raise ValueError(f"c must be positive, got {c}")
    a = c * math.log(n) / n
    cap = 1.0 - 1.0 / p
    if a > cap:
        if clamp:
            return cap
        raise ThresholdOutOfRange(
            f"c*ln(n)/n = {a:.6g} exceeds 1 - 1/p = {cap:.6g} (c={c}, n={n}, p={p})"
        )
    return a


@dataclass(frozen=True, eq=False)
class EntryDistribution:
    """A law on F_p given by its probability vector."""

    p: int
    probs: np.ndarray

    def __post_init__(self):
        p = check_prime(self.p)
        probs = np.array(self.probs, dtype=float)
        if probs.shape != (p,):
            raise ValueError(f"need {p} probabilities, got shape {probs.shape}")
        if (probs < 0).any():
            raise ValueError("probabilities must be non-negative")
        if abs(probs.sum() - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
        probs.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def uniform(cls, p: int) -> EntryDistribution:
        return cls(p, np.full(p, 1.0 / p))

    def is_balanced(self, alpha: float) -> bool:
        return bool(self.probs.max() <= 1.0 - alpha + PROB_TOL)

    def check_balanced(self, alpha: float) -> None:
        if not self.is_balanced(alpha):
            raise ValueError(
                f"law is not {alpha}-balanced: max probability {self.probs.max()} > {1 - alpha}"
            )

    def char(self, m: int) -> complex:
        """``E[zeta^(m x)]`` for ``zeta = exp(2 pi i / p)``."""
        k = (np.arange(self.p) * m) % self.p
        return complex(np.sum(self.probs * np.exp(2j * np.pi * k / self.p)))

    def __eq__(self, other):
        if not isinstance(other, EntryDistribution):
            return NotImplemented
        return self.p == other.p and np.array_equal(self.probs, other.probs)

    def __hash__(self):
        return hash((self.p, self.probs.tobytes()))


@dataclass(frozen=True)
class TwoPointEntry:
    """``P(0) = 1 - alpha``, ``P(t) = alpha`` for a fixed nonzero residue ``t``."""

    p: int
    t: int
    alpha: float

    def __post_init__(self):
        p = check_prime(self.p)
        if not 1 <= self.t < p:
            raise ValueError(f"t must be a nonzero residue mod {p}, got {self.t}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        object.__setattr__(self, "p", p)

    def to_distribution(self) -> EntryDistribution:
        probs = np.zeros(self.p)
        probs[0] = 1.0 - self.alpha
        probs[self.t] += self.alpha
        return EntryDistribution(self.p, probs)


@dataclass(frozen=True, eq=False)
class TwoPointGrid:
    """Independent two-point entries sharing ``alpha`` with per-entry values ``t[k, l]``."""

    t: np.ndarray
    alpha: float

    def __post_init__(self):
        t = np.array(self.t, dtype=np.int64)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise ValueError(f"t grid must be square, got shape {t.shape}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        t.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "is_constant", bool((t == t.flat[0]).all()))

    @classmethod
    def constant(cls, n: int, alpha: float, t: int = 1) -> TwoPointGrid:
        return cls(np.full((n, n), t, dtype=np.int64), alpha)

    def entry(self, k: int, l: int, p: int) -> TwoPointEntry:
        return TwoPointEntry(p, int(self.t[k, l]), self.alpha)


Law = Union[str, EntryDistribution, TwoPointGrid]


@dataclass(frozen=True, eq=False)
class MatrixEnsemble:
    """An ``n x n`` random matrix with independent entries.

    ``law`` is ``"uniform"``, one shared ``EntryDistribution``, or a
    ``TwoPointGrid`` (entries need not be identically distributed).
    """

    p: int
    n: int
    law: Law = "uniform"
    seed: int = 0

    def __post_init__(self):
        p = check_prime(self.p)
        object.__setattr__(self, "p", p)
        if self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")
        if not 0 <= self.seed <= _MASK64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        law = self.law
        if isinstance(law, str):
            if law != "uniform":
                raise ValueError(f"unknown law {law!r}")
        elif isinstance(law, EntryDistribution):
            if law.p != p:
                raise ValueError("entry law and ensemble use different moduli")
        elif isinstance(law, TwoPointGrid):
            if law.t.shape != (self.n, self.n):
                raise ValueError(f"t grid must be {self.n}x{self.n}, got {law.t.shape}")
            if law.t.min() < 1 or law.t.max() >= p:
                raise ValueError(f"t values must lie in [1, {p})")
        else:
            raise TypeError(f"unsupported law {law!r}")

    def entry_law(self, k: int, l: int) -> EntryDistribution:
        """The distribution of entry ``(k, l)``."""
        if isinstance(self.law, str):
            return EntryDistribution.uniform(self.p)
        if isinstance(self.law, EntryDistribution):
            return self.law
        return self.law.entry(k, l, self.p).to_distribution()

    def with_seed(self, seed: int) -> MatrixEnsemble:
        return MatrixEnsemble(self.p, self.n, self.law, seed)

    def to_dict(self) -> dict:
        if isinstance(self.law, str):
            law = self.law
        elif isinstance(self.law, EntryDistribution):
            law = {"probs": self.law.probs.tolist()}
        else:
            t = self.law.t
            tval = int(t[0, 0]) if self.law.is_constant else t.tolist()
            law = {"two_point_grid": {"t": tval, "alpha": self.law.alpha}}
        return {"p": self.p, "n": self.n, "law": law, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> MatrixEnsemble:
        p, n = int(d["p"]), int(d["n"])
        law = d.get("law", "uniform")
        if isinstance(law, dict):
            if "probs" in law:
                law = EntryDistribution(p, law["probs"])
            elif "two_point_grid" in law:
                g = law["two_point_grid"]
                t = g["t"]
                if isinstance(t, int):
                    law = TwoPointGrid.constant(n, float(g["alpha"]), t)
                else:
                    law = TwoPointGrid(np.asarray(t), float(g["alpha"]))
            else:
                raise ValueError(f"unrecognized law object {law!r}")
        return cls(p, n, law, int(d.get("seed", 0)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> MatrixEnsemble:
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> MatrixEnsemble:
        return cls.from_json(Path(path).read_text())


def entry_words(seed: int, stream: int, count: int) -> np.ndarray:
    """The first ``count`` 32-bit words of the Philox stream keyed by ``(seed, stream)``."""
    key = np.array([seed & _MASK64, stream & _MASK64], dtype=np.uint64)
    bitgen = np.random.Philox(key=key)
    raw = bitgen.random_raw((count + 1) // 2)
    return raw.view(np.uint32)[:count]


def _thresholds(probs: np.ndarray) -> np.ndarray:
    cum = np.cumsum(probs)[:-1]
    return np.minimum(np.round(cum * _TWO32), _TWO32).astype(np.uint64)


def sample_array(ens: MatrixEnsemble, stream: int) -> np.ndarray:
    """Sample the entries as an ``n x n`` ``uint16`` array (no validation copy)."""
    n, p = ens.n, ens.p
    words = entry_words(ens.seed, stream, n * n).reshape(n, n)
    law = ens.law
    if isinstance(law, str):
        if p == 2:
            return (words >> np.uint32(31)).astype(np.uint16)
        return ((words.astype(np.uint64) * np.uint64(p)) >> np.uint64(32)).astype(np.uint16)
    if isinstance(law, EntryDistribution):
        out = np.searchsorted(_thresholds(law.probs), words.astype(np.uint64), side="right")
        return out.astype(np.uint16)
    cut = min(round(law.alpha * _TWO32), _TWO32)
    hit = np.ones((n, n), dtype=bool) if cut == _TWO32 else words < np.uint32(cut)
    t0 = int(law.t[0, 0])
    if law.is_constant:
        out = hit.astype(np.uint16)
        return out if t0 == 1 else out * np.uint16(t0)
    return np.where(hit, law.t.astype(np.uint16), np.uint16(0))


def sample_matrix(ens: MatrixEnsemble, stream: int) -> FpMatrix:
    """Draw matrix number ``stream`` of the ensemble."""
    return FpMatrix(ens.p, sample_array(ens, stream))


def extreme_points(p: int, alpha: float) -> list[tuple[int, int, EntryDistribution]]:
    """All two-point laws ``P(u) = 1 - alpha``, ``P(v) = alpha`` with ``u != v``.

    These are the vertices of the polytope of ``alpha``-balanced laws when
    ``alpha <= 1/2``; beyond that the vertices have more mass points, so the
    call is refused.
    """
    p = check_prime(p)
    if not 0.0 < alpha <= 1.0 - 1.0 / p:
        raise ValueError(f"alpha must lie in (0, {1 - 1 / p}], got {alpha}")
    if alpha > 0.5:
        raise ValueError("two-point vertices describe the polytope only for alpha <= 1/2")
    out = []
    for u in range(p):
        for v in range(p):
            if u == v:
                continue
            probs = np.zeros(p)
            probs[u] = 1.0 - alpha
            probs[v] = alpha
            out.append((u, v, EntryDistribution(p, probs)))
    return out


def random_balanced_law(p: int, alpha: float, rng: np.random.Generator) -> EntryDistribution:
    """A random ``alpha``-balanced law: a Dirichlet draw pulled towards uniform just enough."""
    p = check_prime(p)
    cap = 1.0 - alpha
    if cap < 1.0 / p - PROB_TOL:
        raise ValueError(f"no {alpha}-balanced law exists on F_{p}")
    d = rng.dirichlet(np.full(p, 0.3))
    top = d.max()
    if top > cap:
        # mix with uniform: s*top + (1-s)/p = cap
        s = max(0.0, (cap - 1.0 / p) / (top - 1.0 / p))
        d = s * d + (1.0 - s) / p
    d = d / d.sum()
    return EntryDistribution(p, d)
