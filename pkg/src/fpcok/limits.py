"""Closed-form corank laws and surjection counts.

Everything here is exact or evaluated in log-space; these functions serve
as the reference values for the Monte Carlo side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .gfp import check_prime

PRODUCT_CUTOFF = 1e-16


def euler_product(p: int) -> float:
    """``prod_{j>=1} (1 - p^-j)``, truncated once a factor is within 1e-16 of 1."""
    p = check_prime(p)
    log_total = 0.0
    j = 1
    while True:
        x = float(p) ** -j
        if x < PRODUCT_CUTOFF:
            break
        log_total += math.log1p(-x)
        j += 1
    return math.exp(log_total)


def _log_partial_product(p: int, k: int) -> float:
    # sum_{j=1}^{k} log(1 - p^-j)
    return sum(math.log1p(-(float(p) ** -j)) for j in range(1, k + 1))


def limiting_corank_prob(p: int, k: int) -> float:
    """Limit of ``P(corank = k)``: ``p^{-k^2} C_p / prod_{j<=k} (1 - p^-j)^2``."""
    p = check_prime(p)
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    log_val = -k * k * math.log(p) + math.log(euler_product(p)) - 2 * _log_partial_product(p, k)
    return math.exp(log_val)


@dataclass
class CorankLaw:
    """Corank probabilities for ``k <= truncation_k`` plus the mass beyond it."""

    p: int
    probs: dict[int, float]
    truncation_k: int
    tail_mass: float = 0.0
    label: str = field(default="", compare=False)

    def __post_init__(self):
        if any(v < 0 for v in self.probs.values()):
            raise ValueError("probabilities must be non-negative")
        if self.tail_mass < 0:
            raise ValueError("tail mass must be non-negative")

    def total(self) -> float:
        return math.fsum(self.probs.values()) + self.tail_mass

    def __getitem__(self, k: int) -> float:
        return self.probs.get(k, 0.0)


def limiting_law(p: int, kmax: int | None = None, tail_tol: float = 1e-300) -> CorankLaw:
    """The limiting corank law, truncated at ``kmax`` (or where terms underflow).

    The tail beyond the truncation is summed directly rather than taken as
    ``1 - sum``, so it stays accurate even when tiny.
    """
    p = check_prime(p)
    probs = {}
    k = 0
    while True:
        if kmax is not None and k > kmax:
            break
        v = limiting_corank_prob(p, k)
        if kmax is None and v < tail_tol:
            break
        probs[k] = v
        k += 1
    trunc = k - 1
    tail = 0.0
    j = trunc + 1
    while True:
        v = limiting_corank_prob(p, j)
        if v < tail_tol:
            break
        tail += v
        j += 1
    return CorankLaw(p, probs, trunc, tail, label="limit")


def num_surjections(p: int, k: int, r: int) -> int:
    """``#Sur(F_p^k, F_p^r) = prod_{j<r} (p^k - p^j)``; 0 when ``k < r``."""
    p = check_prime(p)
    if k < 0 or r < 0:
        raise ValueError("k and r must be non-negative")
    if k < r:
        return 0
    out = 1
    pk = p**k
    for j in range(r):
        out *= pk - p**j
    return out


def expected_sur_uniform(p: int, n: int, r: int) -> float:
    """``E #Sur(cok A, F_p^r)`` for a uniform ``n x n`` matrix: ``prod_{j<r} (1 - p^{j-n})``."""
    p = check_prime(p)
    if n < 0 or r < 0:
        raise ValueError("n and r must be non-negative")
    out = 1.0
    for j in range(r):
        out *= 1.0 - float(p) ** (j - n)
    return out


def exact_uniform_corank_prob(p: int, n: int, k: int) -> float:
    """``P(corank = k)`` for a uniform ``n x n`` matrix over F_p at finite ``n``.

    Counts rank-``(n-k)`` matrices; written as
    ``p^{-k^2} prod_{j<s}(1-p^{j-n})^2 / prod_{j<s}(1-p^{j-s})`` with ``s = n - k``.
    """
    p = check_prime(p)
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    s = n - k
    log_val = -k * k * math.log(p)
    for j in range(s):
        log_val += 2 * math.log1p(-(float(p) ** (j - n))) - math.log1p(-(float(p) ** (j - s)))
    return math.exp(log_val)


def exact_uniform_law(p: int, n: int) -> CorankLaw:
    probs = {k: exact_uniform_corank_prob(p, n, k) for k in range(n + 1)}
    return CorankLaw(check_prime(p), probs, n, 0.0, label=f"uniform n={n}")


def zero_column_probability(n: int, alpha: float) -> float:
    """P(some column is zero) when entries are i.i.d. with ``P(0) = 1 - alpha``."""
    col_zero = math.exp(n * math.log1p(-alpha)) if alpha < 1 else 0.0
    # 1 - (1 - q)^n, stable for tiny q
    return -math.expm1(n * math.log1p(-col_zero)) if col_zero < 1 else 1.0


def zero_line_probability(n: int) -> tuple[float, float]:
    """The zero-column probability at ``alpha = ln(n)/n`` and its limit ``1 - 1/e``."""
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    return zero_column_probability(n, math.log(n) / n), 1.0 - math.exp(-1.0)
