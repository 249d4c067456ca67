"""Exact character-sum evaluation of surjective moments at small ``n``.

For ``G = F_p^r`` and an ``n x n`` matrix ``A`` with independent entries,

    E #Sur(cok A, G) = p^{-rn} sum_{g spanning G} prod_l sum_{h in G} prod_k E zeta^{A_kl (g_k . h)}.

All sums here enumerate the ``g``-tuples over ``G^n`` (a zero coordinate
meaning "index not selected") and fold the ``h``-sum column by column, so
the cost is ``|G|^n * n^2 * |G|`` rather than ``|G|^{2n}``. Only the
popular-set case split needs the joint ``(g, h)`` enumeration.

The absolute-value sums use ``c(m) = |1 - alpha + alpha zeta^m|``, the
modulus of the per-entry character of the two-point law ``P(0)=1-alpha``,
``P(t)=alpha``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from . import gfp
from .errors import InfeasibleSize, InvalidProfile, NoFeasibleGamma, ThresholdOutOfRange
from .limits import expected_sur_uniform, num_surjections
from .samplers import EntryDistribution, MatrixEnsemble, random_balanced_law

MAX_LOG2_TUPLES = 24
MAX_LOG2_JOINT = 26
MAX_LOG2_SUPPORT = 24
MAX_T_GRIDS = 4096
_CHUNK_ELEMS = 1 << 22

CASES = ("C1", "C2", "C3")
C3_SUBCASES = ("C3a", "C3b", "C3c")


# ---------------------------------------------------------------- constants


def _entropy(x: float) -> float:
    return -x * math.log(x) - (1 - x) * math.log(1 - x)


def _bisect_root(f, lo: float, hi: float, what: str) -> float:
    """Largest x in (lo, hi) with f(x) < 0 for increasing f, to 64 halvings."""
    if not f(lo) < 0:
        raise NoFeasibleGamma(f"{what}: inequality fails even at the lower end")
    if f(hi) < 0:
        return hi
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    if not f(lo) < 0:
        raise NoFeasibleGamma(f"{what}: bisection did not converge")
    return lo


@dataclass(frozen=True)
class Constants:
    """The auxiliary constants fixed once ``(p, r, c)`` are known."""

    c: float
    c1: float
    c2: float
    c3: float
    gamma1: float
    gamma2: float
    gamma3: float
    gamma4: float
    gamma5: float


def gamma2_closing(p: int, r: int, c1: float, gamma1: float, gamma2: float) -> float:
    """``(K/q) (q-1)^g / (g^g (1-g)^(1-g))`` at ``g = gamma2``; must be below 1."""
    q = p**r
    K = (q - 1) + math.exp(-8 * (p - 1) * c1 * gamma1 / p**3)
    return (K / q) * math.exp(gamma2 * math.log(q - 1) + _entropy(gamma2))


def gamma3_closing(p: int, r: int, gamma3: float) -> float:
    """``((q-1)/q) (q^g4 / (g4^g4 (1-g4)^(1-g4)))^2`` with ``g4 = q gamma3``; must be below 1."""
    q = p**r
    g4 = q * gamma3
    return ((q - 1) / q) * math.exp(2 * (g4 * math.log(q) + _entropy(g4)))


def gamma_defaults(p: int, r: int, c: float, margin: float = 0.99) -> Constants:
    """Pick concrete constants for ``(p, r, c)``.

    ``c1, c2, c3, gamma1`` are closed-form. ``gamma2`` and ``gamma3`` only
    need to be small enough for their closing inequalities; each is set to
    ``margin`` times the bisected boundary of its inequality (``gamma3``
    starting from half its hard upper bound). ``gamma5`` is the smallest
    value with ``exp(8 c1 gamma5 gamma3 / p^2) >= 2 p^r``.
    """
    p = gfp.check_prime(p)
    if r < 1:
        raise ValueError(f"r must be at least 1, got {r}")
    if not c > 1:
        raise ValueError(f"c must exceed 1, got {c}")
    q = p**r
    c1 = (1 + c) / 2
    c2 = (1 + c1) / 2
    c3 = (1 + c2) / 2
    gamma1 = (c1 - 1) / (2 * c1 * c1)

    g2_edge = _bisect_root(
        lambda g: gamma2_closing(p, r, c1, gamma1, g) - 1.0, 1e-300, 0.5, "gamma2"
    )
    gamma2 = margin * g2_edge

    g3_start = 0.5 * min(gamma2 / (q - 1), 1.0 / (2 * q))
    if gamma3_closing(p, r, g3_start) < 1.0:
        gamma3 = g3_start
    else:
        g3_edge = _bisect_root(lambda g: gamma3_closing(p, r, g) - 1.0, 1e-300, g3_start, "gamma3")
        gamma3 = margin * g3_edge
    gamma4 = q * gamma3

    target = math.log(2 * q)
    gamma5 = max(1.000001, p * p * target / (8 * c1 * gamma3))
    # nudge past rounding so the inequality holds as evaluated
    while math.exp(8 * c1 * gamma5 * gamma3 / (p * p)) < 2 * q:
        gamma5 = math.nextafter(gamma5, math.inf)
    return Constants(c, c1, c2, c3, gamma1, gamma2, gamma3, gamma4, gamma5)


# ---------------------------------------------------------------- parameters


@dataclass(frozen=True, eq=False)
class FourierParams:
    """Everything the character sums depend on.

    ``alpha`` defaults to ``c ln(n) / n``; ``t_grid`` holds the nonzero value
    of each two-point entry (all ones by default).
    """

    p: int
    r: int
    n: int
    c: float
    alpha: float
    t_grid: np.ndarray
    constants: Constants

    @classmethod
    def build(cls, p, r, n, c=2.0, alpha=None, t_grid=None, constants=None) -> FourierParams:
        p = gfp.check_prime(p)
        if r < 1:
            raise ValueError(f"r must be at least 1, got {r}")
        if n < 2:
            raise ValueError(f"n must be at least 2, got {n}")
        if alpha is None:
            alpha = c * math.log(n) / n
            if alpha > 1:
                raise ThresholdOutOfRange(f"c ln(n)/n = {alpha:.6g} exceeds 1; pass alpha explicitly")
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
        if t_grid is None:
            t_grid = np.ones((n, n), dtype=np.int64)
        t = np.array(t_grid, dtype=np.int64)
        if t.shape != (n, n):
            raise ValueError(f"t grid must be {n}x{n}, got {t.shape}")
        if t.min() < 1 or t.max() >= p:
            raise ValueError(f"t values must lie in [1, {p})")
        t.setflags(write=False)
        if constants is None:
            constants = gamma_defaults(p, r, c)
        return cls(p, r, n, float(c), float(alpha), t, constants)

    @property
    def q(self) -> int:
        return self.p**self.r

    def transposed(self) -> FourierParams:
        """The same parameters with ``t`` replaced by its transpose."""
        return replace(self, t_grid=np.ascontiguousarray(self.t_grid.T))

    def with_t(self, t_grid) -> FourierParams:
        t = np.array(t_grid, dtype=np.int64)
        t.setflags(write=False)
        return replace(self, t_grid=t)

    # index ranges over i (or j) in [0, n]
    def _log_scale(self) -> float:
        return self.n / math.log(self.n)

    @property
    def I1(self) -> list[int]:
        hi = self.constants.gamma1 * self._log_scale()
        return [i for i in range(1, self.n + 1) if i < hi]

    @property
    def I2(self) -> list[int]:
        lo = self.constants.gamma1 * self._log_scale()
        hi = self.constants.gamma2 * self.n
        return [i for i in range(0, self.n + 1) if lo <= i < hi]

    @property
    def I3(self) -> list[int]:
        lo = self.constants.gamma2 * self.n
        return [i for i in range(0, self.n + 1) if i >= lo]

    def from_k(self, k: int) -> list[int]:
        """``[n]_k = {k, ..., n}``."""
        return list(range(k, self.n + 1))

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "r": self.r,
            "n": self.n,
            "c": self.c,
            "alpha": self.alpha,
            "t_grid": self.t_grid.tolist(),
            "constants": asdict(self.constants),
        }


# ---------------------------------------------------------------- group G = F_p^r


@lru_cache(maxsize=None)
def group_elements(p: int, r: int) -> np.ndarray:
    """Elements of ``F_p^r`` as rows; row ``a`` holds the base-``p`` digits of ``a``."""
    q = p**r
    a = np.arange(q)
    out = np.stack([(a // p**i) % p for i in range(r)], axis=1)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def dot_table(p: int, r: int) -> np.ndarray:
    """``D[a, b] = g_a . g_b mod p`` over all pairs of group elements."""
    el = group_elements(p, r).astype(np.int64)
    out = (el @ el.T) % p
    out.setflags(write=False)
    return out


def element_index(coords: Sequence[int], p: int) -> int:
    return int(sum(int(x) % p * p**i for i, x in enumerate(coords)))


def element_coords(index: int, p: int, r: int) -> tuple[int, ...]:
    return tuple(int(x) for x in group_elements(p, r)[index])


def c_norm(p: int, alpha: float, m) -> np.ndarray | float:
    """``|1 - alpha + alpha zeta^m|`` via ``sqrt(1 - 4 alpha (1-alpha) sin^2(pi m / p))``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    s = np.sin(np.pi * np.asarray(m) / p)
    val = np.sqrt(np.maximum(1.0 - 4.0 * alpha * (1.0 - alpha) * s * s, 0.0))
    return float(val) if np.ndim(val) == 0 else val


def c_norm_direct(p: int, alpha: float, m: int) -> float:
    return abs(1 - alpha + alpha * np.exp(2j * np.pi * m / p))


def _check_tuples(p: int, r: int, n: int, log2_cap: int = MAX_LOG2_TUPLES) -> None:
    bits = r * n * math.log2(p)
    if bits > log2_cap + 1e-9:
        raise InfeasibleSize(
            f"enumerating (F_{p}^{r})^{n} needs 2^{bits:.1f} tuples; cap is 2^{log2_cap}"
        )


def _tuple_chunks(q: int, n: int, per_tuple_cost: int):
    total = q**n
    step = max(1, _CHUNK_ELEMS // max(per_tuple_cost, 1))
    powers = q ** np.arange(n, dtype=np.int64)
    for start in range(0, total, step):
        lin = np.arange(start, min(total, start + step), dtype=np.int64)
        yield (lin[:, None] // powers[None, :]) % q


def _spanning(idx: np.ndarray, p: int, r: int) -> np.ndarray:
    """Whether each g-tuple (rows of element indices) spans ``F_p^r``."""
    coords = group_elements(p, r)[idx]  # (N, n, r)
    return gfp.batch_rank(coords, p) == r


def _column_factors(idx: np.ndarray, table: np.ndarray, p: int, r: int) -> np.ndarray:
    """``out[N, l, h] = prod_k table[k, l, (g_k . h) mod p]``."""
    D = dot_table(p, r)
    Dg = D[idx]  # (N, n_k, q)
    n = table.shape[0]
    k_idx = np.arange(n)[None, :, None, None]
    l_idx = np.arange(n)[None, None, :, None]
    vals = table[k_idx, l_idx, Dg[:, :, None, :]]  # (N, k, l, h)
    return vals.prod(axis=1)


def _abs_table(params: FourierParams) -> np.ndarray:
    """``table[k, l, m] = c(t_kl m)``."""
    p = params.p
    m = (params.t_grid[:, :, None] * np.arange(p)[None, None, :]) % p
    return c_norm(p, params.alpha, m)


def _char_table(laws) -> np.ndarray:
    """``table[k, l, m] = E zeta^{m x_kl}`` for a grid of entry laws (probabilities, shape (n, n, p))."""
    probs = np.asarray(laws, dtype=float)
    p = probs.shape[2]
    v = np.arange(p)
    phase = np.exp(2j * np.pi * ((v[None, :] * v[:, None]) % p) / p)  # [m, v]
    return np.einsum("klv,mv->klm", probs, phase)


def _two_point_probs(params: FourierParams) -> np.ndarray:
    n, p = params.n, params.p
    probs = np.zeros((n, n, p))
    probs[:, :, 0] = 1 - params.alpha
    k, l = np.indices((n, n))
    probs[k, l, params.t_grid] += params.alpha
    return probs


def _elementary_symmetric(e: np.ndarray) -> np.ndarray:
    """Coefficients of ``prod_l (1 + e_l z)`` for each row of ``e``; shape (N, n+1)."""
    N, n = e.shape
    out = np.zeros((N, n + 1), dtype=e.dtype)
    out[:, 0] = 1
    for l in range(n):
        out[:, 1 : l + 2] = out[:, 1 : l + 2] + out[:, 0 : l + 1] * e[:, l : l + 1]
    return out


# ---------------------------------------------------------------- moments


def moment_general(p: int, r: int, laws) -> complex:
    """Exact ``E #Sur(cok A, F_p^r)`` for independent entries with per-entry laws.

    ``laws`` is an ``(n, n, p)`` array of probabilities (entry ``(k, l)``
    takes value ``v`` with probability ``laws[k, l, v]``).
    """
    p = gfp.check_prime(p)
    laws = np.asarray(laws, dtype=float)
    n = laws.shape[0]
    if laws.shape != (n, n, p):
        raise ValueError(f"laws must have shape (n, n, {p}), got {laws.shape}")
    _check_tuples(p, r, n)
    q = p**r
    table = _char_table(laws)
    total = 0.0 + 0.0j
    for idx in _tuple_chunks(q, n, n * n * q):
        span = _spanning(idx, p, r)
        if not span.any():
            continue
        f = _column_factors(idx[span], table, p, r)
        total += np.prod(f.sum(axis=2), axis=1).sum()
    # the 1/q^n normalization is applied last; q^n is exact in float up to 2^53
    return complex(total / float(q) ** n)


def moment_fourier(params: FourierParams) -> complex:
    """Exact ``E #Sur(cok A, F_p^r)`` for the two-point ensemble ``X(t)``.

    Equals the zero-``h`` contribution ``prod_{j<r}(1 - p^{j-n})`` plus the
    signed remainder; the imaginary part is rounding noise.
    """
    return moment_general(params.p, params.r, _two_point_probs(params))


def zero_h_contribution(p: int, n: int, r: int) -> float:
    return expected_sur_uniform(p, n, r)


def fourier_remainder(params: FourierParams) -> complex:
    """``f_{p,r}(X(t))``: the moment minus the ``h = 0`` term."""
    return moment_fourier(params) - zero_h_contribution(params.p, params.n, params.r)


def brute_force_expected_sur(ens: MatrixEnsemble, r: int) -> float:
    """``sum_M P(M) #Sur(cok M, F_p^r)`` over every matrix in the support.

    Independent of the character sums: it only needs the rank kernel.
    """
    if r < 0:
        raise ValueError("r must be non-negative")
    if r == 0:
        return 1.0
    n, p = ens.n, ens.p
    supports, weights = [], []
    for k in range(n):
        for l in range(n):
            probs = ens.entry_law(k, l).probs
            vals = np.flatnonzero(probs > 0)
            supports.append(vals)
            weights.append(probs[vals])
    sizes = np.array([len(s) for s in supports], dtype=np.int64)
    log2_total = float(np.sum(np.log2(sizes)))
    if log2_total > MAX_LOG2_SUPPORT + 1e-9:
        raise InfeasibleSize(f"support has 2^{log2_total:.1f} matrices; cap is 2^{MAX_LOG2_SUPPORT}")
    total = int(np.prod(sizes))
    radix = np.concatenate([[1], np.cumprod(sizes)[:-1]])
    sur = np.array([float(num_surjections(p, k, r)) for k in range(n + 1)])
    acc = 0.0
    step = 1 << 16
    for start in range(0, total, step):
        lin = np.arange(start, min(total, start + step), dtype=np.int64)
        digits = (lin[:, None] // radix[None, :]) % sizes[None, :]
        mats = np.empty((len(lin), n * n), dtype=np.int64)
        w = np.ones(len(lin))
        for e in range(n * n):
            mats[:, e] = supports[e][digits[:, e]]
            w *= weights[e][digits[:, e]]
        rk = gfp.batch_rank(mats.reshape(-1, n, n), p)
        acc += float(np.sum(w * sur[n - rk]))
    return acc


def ensemble_for(params: FourierParams) -> MatrixEnsemble:
    """The two-point ensemble ``X(t)`` as a sampler ensemble."""
    from .samplers import TwoPointGrid

    return MatrixEnsemble(params.p, params.n, TwoPointGrid(params.t_grid, params.alpha))


# ---------------------------------------------------------------- partial sums


def _as_set(ix: Iterable[int]) -> np.ndarray:
    return np.array(sorted(set(int(i) for i in ix)), dtype=np.int64)


def partial_sums_many(params: FourierParams, blocks: Sequence[tuple[Iterable[int], Iterable[int], bool]]) -> list[float]:
    """Evaluate several ``F^{I x J}`` / ``Fbar^{I x J}`` in a single enumeration.

    Each block is ``(I, J, constrained)``; ``constrained`` enforces that the
    selected ``g`` values span ``G``.
    """
    p, r, n = params.p, params.r, params.n
    _check_tuples(p, r, n)
    q = p**r
    table = _abs_table(params)
    masks = []
    for I, J, constrained in blocks:
        Im = np.zeros(n + 1, dtype=bool)
        Jm = np.zeros(n + 1, dtype=bool)
        Ii, Ji = _as_set(I), _as_set(J)
        if len(Ii) and (Ii.min() < 0 or Ii.max() > n):
            raise ValueError("I must be a subset of [0, n]")
        if len(Ji) and (Ji.min() < 0 or Ji.max() > n):
            raise ValueError("J must be a subset of [0, n]")
        Im[Ii] = True
        Jm[Ji] = True
        masks.append((Im, Jm, bool(constrained)))
    totals = np.zeros(len(blocks))
    if not any(Im.any() and Jm.any() for Im, Jm, _ in masks):
        return [0.0] * len(blocks)
    for idx in _tuple_chunks(q, n, n * n * q):
        i_count = np.count_nonzero(idx, axis=1)
        span = _spanning(idx, p, r)
        f = _column_factors(idx, table, p, r)
        e = f[:, :, 1:].sum(axis=2)  # sum over h != 0, per column
        esp = _elementary_symmetric(e)
        for b, (Im, Jm, constrained) in enumerate(masks):
            keep = Im[i_count]
            if constrained:
                keep &= span
            if keep.any():
                totals[b] += esp[keep][:, Jm].sum()
    return [float(t) / float(q) ** n for t in totals]


def partial_sum(params: FourierParams, I: Iterable[int], J: Iterable[int], constrained: bool = True) -> float:
    """``F^{I x J}(t)`` (spanning ``g`` only) or, unconstrained, ``Fbar^{I x J}(t)``."""
    return partial_sums_many(params, [(I, J, constrained)])[0]


def F_total(params: FourierParams) -> float:
    """``F(t) = F^{[n]_r x [n]}(t)``."""
    return partial_sum(params, params.from_k(params.r), params.from_k(1), True)


# ---------------------------------------------------------------- popular sets


@dataclass(frozen=True)
class TupleProfile:
    """Counts of each nonzero value in a tuple, and the values counted at least ``threshold`` times."""

    counts: dict
    popular_set: frozenset
    threshold: float

    @classmethod
    def from_counts(cls, counts: dict, threshold: float) -> TupleProfile:
        counts = {tuple(k): int(v) for k, v in counts.items() if any(k)}
        popular = frozenset(g for g, v in counts.items() if v >= threshold)
        return cls(counts, popular, float(threshold))

    @classmethod
    def from_tuple(cls, elements: Iterable[Sequence[int]], threshold: float) -> TupleProfile:
        counts: dict = {}
        for g in elements:
            g = tuple(int(x) for x in g)
            if any(g):
                counts[g] = counts.get(g, 0) + 1
        return cls.from_counts(counts, threshold)

    @property
    def size(self) -> int:
        return sum(self.counts.values())


@dataclass(frozen=True)
class Classification:
    label: str
    subspace: frozenset | None = None
    complement: frozenset | None = None


def _dot(g, h, p) -> int:
    return sum(a * b for a, b in zip(g, h)) % p


@lru_cache(maxsize=4096)
def _classify_sets(A: frozenset, B: frozenset, p: int, r: int) -> Classification:
    if not A or not B:
        raise InvalidProfile("popular sets must be nonempty")
    for g in A:
        for h in B:
            if _dot(g, h, p):
                return Classification("C1")
    q = p**r
    size = (len(A) + 1) * (len(B) + 1)
    if size < q:
        return Classification("C2")
    if size > q:
        raise InvalidProfile(f"orthogonal popular sets cannot have (|A|+1)(|B|+1) = {size} > {q}")
    V = gfp.span_elements(gfp.FpMatrix.from_rows(sorted(A), p))
    perp_basis = gfp.nullspace(gfp.FpMatrix.from_rows(sorted(A), p))
    W = {(0,) * r} if perp_basis is None else gfp.span_elements(perp_basis)
    zero = (0,) * r
    if set(A) != V - {zero} or set(B) != W - {zero}:
        raise RuntimeError("case C3 without A = V* and B = (V-perp)*")
    return Classification("C3", frozenset(V), frozenset(W))


def classify_case(profileA: TupleProfile, profileB: TupleProfile, p: int, r: int) -> Classification:
    """Split into C1 (some popular pair not orthogonal), C2 or C3 by ``(|A|+1)(|B|+1)`` vs ``p^r``.

    A C3 answer carries ``V = span(A)`` and ``V-perp`` after checking
    ``A = V - {0}`` and ``B = V-perp - {0}``.
    """
    return _classify_sets(profileA.popular_set, profileB.popular_set, gfp.check_prime(p), r)


def classify_c3_subcase(profileA: TupleProfile, profileB: TupleProfile, params: FourierParams) -> str:
    """C3a: some unpopular count above ``gamma5 n/ln n``; C3c: both unpopular totals at most
    ``gamma1 n/ln n``; C3b: everything else."""
    scale = params.n / math.log(params.n)
    k = params.constants
    offA = [v for g, v in profileA.counts.items() if g not in profileA.popular_set]
    offB = [v for h, v in profileB.counts.items() if h not in profileB.popular_set]
    big = k.gamma5 * scale
    if any(v > big for v in offA) or any(v > big for v in offB):
        return "C3a"
    small = k.gamma1 * scale
    if sum(offA) <= small and sum(offB) <= small:
        return "C3c"
    return "C3b"


def conditioned_sums(params: FourierParams) -> dict[str, float]:
    """``F_C^{I3 x I3}(t)`` for every case and C3 subcase, plus the unsplit total.

    Needs the joint enumeration of ``g`` and ``h`` tuples.
    """
    p, r, n = params.p, params.r, params.n
    _check_tuples(p, r, n)
    bits = 2 * r * n * math.log2(p)
    if bits > MAX_LOG2_JOINT + 1e-9:
        raise InfeasibleSize(f"joint (g, h) enumeration needs 2^{bits:.1f} pairs; cap is 2^{MAX_LOG2_JOINT}")
    q = p**r
    k = params.constants
    thr = k.gamma3 * n
    scale = n / math.log(n)
    I3 = np.zeros(n + 1, dtype=bool)
    I3[params.I3] = True
    out = {name: 0.0 for name in ("I3xI3",) + CASES + C3_SUBCASES}
    if not I3.any():
        return out
    el = group_elements(p, r)
    table = _abs_table(params)

    # every h tuple at once
    H = np.concatenate(list(_tuple_chunks(q, n, 1)))
    hcount = np.zeros((len(H), q), dtype=np.int64)
    for l in range(n):
        np.add.at(hcount, (np.arange(len(H)), H[:, l]), 1)
    hcount[:, 0] = 0
    h_ok = I3[hcount.sum(axis=1)]
    H, hcount = H[h_ok], hcount[h_ok]
    if len(H) == 0:
        return out
    bpop = hcount >= thr
    bkey = _mask_keys(bpop)
    b_off = np.where(bpop, 0, hcount)
    b_off_max, b_off_sum = b_off.max(axis=1), b_off.sum(axis=1)
    b_sets = {key: frozenset(tuple(int(x) for x in el[h]) for h in np.flatnonzero(m))
              for key, m in zip(*_unique_rows(bkey, bpop))}

    cols = np.arange(n)
    for idx in _tuple_chunks(q, n, n * n * q + len(H) * n):
        gcount = np.zeros((len(idx), q), dtype=np.int64)
        for kk in range(n):
            np.add.at(gcount, (np.arange(len(idx)), idx[:, kk]), 1)
        gcount[:, 0] = 0
        keep = I3[gcount.sum(axis=1)] & _spanning(idx, p, r)
        if not keep.any():
            continue
        idx, gcount = idx[keep], gcount[keep]
        f = _column_factors(idx, table, p, r)  # (N, l, h)
        E = np.prod(f[:, cols[None, :], H], axis=2)  # (N, nH)
        apop = gcount >= thr
        akey = _mask_keys(apop)
        a_off = np.where(apop, 0, gcount)
        a_off_max, a_off_sum = a_off.max(axis=1), a_off.sum(axis=1)
        a_sets = {key: frozenset(tuple(int(x) for x in el[g]) for g in np.flatnonzero(m))
                  for key, m in zip(*_unique_rows(akey, apop))}

        out["I3xI3"] += E.sum()
        labels = np.empty((len(idx), len(H)), dtype=np.int8)
        for ak, aset in a_sets.items():
            rows = akey == ak
            for bk, bset in b_sets.items():
                colsel = bkey == bk
                lab = _classify_sets(aset, bset, p, r).label
                labels[np.ix_(rows, colsel)] = CASES.index(lab)
        for ci, name in enumerate(CASES):
            out[name] += E[labels == ci].sum()
        c3 = labels == 2
        if c3.any():
            is_a = (a_off_max[:, None] > k.gamma5 * scale) | (b_off_max[None, :] > k.gamma5 * scale)
            is_c = (a_off_sum[:, None] <= k.gamma1 * scale) & (b_off_sum[None, :] <= k.gamma1 * scale)
            out["C3a"] += E[c3 & is_a].sum()
            out["C3c"] += E[c3 & ~is_a & is_c].sum()
            out["C3b"] += E[c3 & ~is_a & ~is_c].sum()
    norm = float(q) ** n
    return {name: float(v) / norm for name, v in out.items()}


def conditioned_sum(params: FourierParams, case: str) -> float:
    """``F_C^{I3 x I3}(t)`` restricted to tuples in ``case`` (C1, C2, C3, C3a, C3b or C3c)."""
    if case not in CASES + C3_SUBCASES:
        raise ValueError(f"unknown case {case!r}")
    return conditioned_sums(params)[case]


def _mask_keys(mask: np.ndarray) -> np.ndarray:
    weights = np.left_shift(np.int64(1), np.arange(mask.shape[1], dtype=np.int64))
    return (mask.astype(np.int64) * weights).sum(axis=1)


def _unique_rows(keys: np.ndarray, mask: np.ndarray):
    uk, first = np.unique(keys, return_index=True)
    return uk, mask[first]


# ---------------------------------------------------------------- audits


@dataclass
class Lemma22Report:
    p: int
    c: float
    c1: float
    threshold_n: int | None
    n_checked: int
    violations: list = field(default_factory=list)
    violations_below_threshold: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations


def lemma22_audit(p: int, c: float, n_range) -> Lemma22Report:
    """Check both per-entry modulus bounds for every ``n`` where they are claimed.

    The bounds are ``c(m) <= 1 - (2 c1 ln n / n) sin^2(pi m / p)`` for all
    ``m`` and ``c(m) <= 1 - (ln n / n)(8 c1 / p^2)`` for ``m != 0``, with
    ``alpha = c ln n / n``. They are claimed once
    ``alpha (1 - alpha) > c1 ln n / n``; that ``n`` is reported as the
    threshold. Violations below it are only counted.
    """
    p = gfp.check_prime(p)
    if not c > 1:
        raise ValueError(f"c must exceed 1, got {c}")
    c1 = (1 + c) / 2
    if isinstance(n_range, tuple) and len(n_range) == 2:
        n_range = range(n_range[0], n_range[1] + 1)
    ns = np.array([n for n in n_range if n >= 2], dtype=np.int64)
    rate = np.log(ns) / ns
    alpha = c * rate
    valid = alpha <= 1.0
    suff = valid & (alpha * (1 - alpha) > c1 * rate)
    m = np.arange(p)
    s2 = np.sin(np.pi * m / p) ** 2
    a = np.clip(alpha, 0, 1)[:, None]
    cm = np.sqrt(np.maximum(1.0 - 4.0 * a * (1 - a) * s2[None, :], 0.0))
    bound1 = 1.0 - 2.0 * c1 * rate[:, None] * s2[None, :]
    bound2 = np.broadcast_to(1.0 - rate[:, None] * (8.0 * c1 / p**2), cm.shape)
    bad1 = cm > bound1
    bad2 = (cm > bound2) & (m[None, :] != 0)
    viol = []
    for i, j in zip(*np.nonzero((bad1 | bad2) & suff[:, None])):
        which = "sin2" if bad1[i, j] else "uniform"
        rhs = bound1[i, j] if bad1[i, j] else bound2[i, j]
        viol.append((int(ns[i]), int(j), which, float(cm[i, j]), float(rhs)))
    below = int(((bad1 | bad2) & (valid & ~suff)[:, None]).sum())
    thr = int(ns[suff][0]) if suff.any() else None
    return Lemma22Report(p, c, c1, thr, int(suff.sum()), viol, below)


@dataclass
class PartialSumReport:
    """Values of the exact sums and the outcome of each audited relation."""

    params: dict
    F_total: float
    F_IxJ: dict
    Fbar_IxJ: dict
    F_C1: float
    F_C2: float
    F_C3: float
    F_C3a: float
    F_C3b: float
    F_C3c: float
    moment_value: float
    moment_imag: float
    checks: dict
    details: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @property
    def ok(self) -> bool:
        return all(v for v in self.checks.values() if v is not None)


def _rel_close(a: float, b: float, rtol: float) -> bool:
    return abs(a - b) <= rtol * max(abs(a), abs(b), 1e-300)


def all_t_grids(p: int, n: int):
    """Every ``t`` grid in ``(F_p^*)^{n x n}``."""
    count = (p - 1) ** (n * n)
    for lin in range(count):
        digits = [(lin // (p - 1) ** e) % (p - 1) + 1 for e in range(n * n)]
        yield np.array(digits, dtype=np.int64).reshape(n, n)


def extreme_point_check(params: FourierParams, n_random: int = 20, seed: int = 0) -> dict:
    """Compare ``|f(x)|`` for random balanced laws with ``max_t F(X(t))`` over all ``t`` grids."""
    p, n = params.p, params.n
    if params.alpha > 0.5:
        # balanced laws then have vertices with more than two atoms
        return {"enumerable": False, "reason": "alpha > 1/2"}
    if (p - 1) ** (n * n) > MAX_T_GRIDS:
        return {"enumerable": False, "reason": "too many t grids"}
    best = max(F_total(params.with_t(t)) for t in all_t_grids(p, n))
    rng = np.random.default_rng(seed)
    zero = zero_h_contribution(p, n, params.r)
    worst = 0.0
    for _ in range(n_random):
        laws = np.array([[random_balanced_law(p, params.alpha, rng).probs for _ in range(n)] for _ in range(n)])
        worst = max(worst, abs(moment_general(p, params.r, laws) - zero))
    return {"enumerable": True, "max_F": best, "max_abs_f": worst, "ok": worst <= best * (1 + 1e-9) + 1e-15}


def decomposition_audit(params: FourierParams, rtol: float = 1e-10, extreme_samples: int = 20) -> PartialSumReport:
    """Evaluate ``F(t)``, every range-restricted piece, and check how they fit together.

    Checked relations: the five-term upper bound and its barred version,
    ``F <= Fbar`` blockwise, the transpose identity, the C1/C2/C3 and
    C3a/C3b/C3c partitions of ``F^{I3 x I3}``, and (when the ``t`` grids
    can be enumerated) the extreme-point bound.
    """
    n, r = params.n, params.r
    I1, I2, I3 = params.I1, params.I2, params.I3
    full, nr, n0 = params.from_k(1), params.from_k(r), params.from_k(0)
    names = {
        "[n]_r x [n]": (nr, full),
        "I1 x [n]": (I1, full),
        "[n]_r x I1": (nr, I1),
        "I2 x [n]": (I2, full),
        "[n]_r x I2": (nr, I2),
        "I3 x I3": (I3, I3),
    }
    bar_names = {
        "I1 x [n]_0": (I1, n0),
        "[n]_0 x I1": (n0, I1),
        "I2 x [n]_0": (I2, n0),
        "[n]_0 x I2": (n0, I2),
        "I3 x I3": (I3, I3),
        "[n]_r x [n]": (nr, full),
        "I1 x [n]": (I1, full),
        "[n]_r x I1": (nr, I1),
        "I2 x [n]": (I2, full),
        "[n]_r x I2": (nr, I2),
    }
    blocks = [(I, J, True) for I, J in names.values()] + [(I, J, False) for I, J in bar_names.values()]
    vals = partial_sums_many(params, blocks)
    F = dict(zip(names, vals[: len(names)]))
    Fbar = dict(zip(bar_names, vals[len(names):]))
    dual = params.transposed()
    dual_vals = partial_sums_many(dual, [(I1, n0, False), (I2, n0, False)])
    Fbar["I1 x [n]_0 (t dual)"] = dual_vals[0]
    Fbar["I2 x [n]_0 (t dual)"] = dual_vals[1]

    cond = conditioned_sums(params)
    moment = moment_fourier(params)
    total = F["[n]_r x [n]"]
    five = F["I1 x [n]"] + F["[n]_r x I1"] + F["I2 x [n]"] + F["[n]_r x I2"] + F["I3 x I3"]
    five_bar = Fbar["I1 x [n]_0"] + Fbar["[n]_0 x I1"] + Fbar["I2 x [n]_0"] + Fbar["[n]_0 x I2"] + F["I3 x I3"]
    slack = 1 + rtol
    checks = {
        "five_term": total <= five * slack,
        "five_term_barred": five <= five_bar * slack,
        "transpose_I1": _rel_close(Fbar["[n]_0 x I1"], dual_vals[0], rtol),
        "transpose_I2": _rel_close(Fbar["[n]_0 x I2"], dual_vals[1], rtol),
        "F_le_Fbar": all(F[key] <= Fbar[key] * slack for key in names),
        "partition_C123": _rel_close(cond["C1"] + cond["C2"] + cond["C3"], F["I3 x I3"], 1e-12)
        and _rel_close(cond["I3xI3"], F["I3 x I3"], 1e-12),
        "partition_C3abc": _rel_close(cond["C3a"] + cond["C3b"] + cond["C3c"], cond["C3"], 1e-12),
        "nonnegative": all(v >= 0 for v in list(F.values()) + list(Fbar.values()) + list(cond.values())),
        "imag_small": abs(moment.imag) < 1e-9,
    }
    details = {"intervals": {"I1": I1, "I2": I2, "I3": I3}, "five_term_sum": five, "five_term_barred_sum": five_bar}
    if extreme_samples:
        ext = extreme_point_check(params, extreme_samples)
        details["extreme_points"] = ext
        checks["extreme_point_bound"] = ext.get("ok") if ext["enumerable"] else None
    return PartialSumReport(
        params=params.to_dict(),
        F_total=total,
        F_IxJ=F,
        Fbar_IxJ=Fbar,
        F_C1=cond["C1"],
        F_C2=cond["C2"],
        F_C3=cond["C3"],
        F_C3a=cond["C3a"],
        F_C3b=cond["C3b"],
        F_C3c=cond["C3c"],
        moment_value=float(moment.real),
        moment_imag=float(moment.imag),
        checks=checks,
        details=details,
    )
