"""Dense matrices over a prime field F_p.

Entries are stored as ``uint16`` residues, so every prime up to ``2**15``
fits and products of two residues fit comfortably in ``int64`` during
elimination. For ``p == 2`` the rank is computed on bit-packed rows with
word-wide XOR, which is what the Monte Carlo experiments spend their time
on.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels

MAX_PRIME = 2**15


def is_prime(p: int) -> bool:
    """Deterministic trial division; cheap for the primes allowed here."""
    if p < 2:
        return False
    if p < 4:
        return True
    if p % 2 == 0:
        return False
    d = 3
    while d * d <= p:
        if p % d == 0:
            return False
        d += 2
    return True


def check_prime(p) -> int:
    """Return ``p`` as an ``int`` or raise ``ValueError`` if it is not an allowed prime."""
    if isinstance(p, bool) or int(p) != p:
        raise ValueError(f"modulus must be an integer, got {p!r}")
    p = int(p)
    if not 2 <= p <= MAX_PRIME or not is_prime(p):
        raise ValueError(f"modulus must be a prime in [2, {MAX_PRIME}], got {p}")
    return p


@dataclass(frozen=True, eq=False)
class FpMatrix:
    """An immutable ``rows x cols`` matrix with entries in ``[0, p)``."""

    p: int
    data: np.ndarray

    def __post_init__(self):
        p = check_prime(self.p)
        arr = np.asarray(self.data)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"expected a non-empty 2-d array, got shape {arr.shape}")
        if arr.dtype.kind not in "iub":
            raise ValueError(f"entries must be integers, got dtype {arr.dtype}")
        if arr.size and (arr.min() < 0 or arr.max() >= p):
            raise ValueError(f"entries must lie in [0, {p})")
        arr = np.array(arr, dtype=np.uint16, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_rows(cls, rows, p: int) -> FpMatrix:
        """Build from nested sequences, reducing each entry mod ``p``."""
        arr = np.asarray(rows, dtype=np.int64)
        return cls(p, np.mod(arr, p))

    @classmethod
    def zeros(cls, rows: int, cols: int, p: int) -> FpMatrix:
        return cls(p, np.zeros((rows, cols), dtype=np.uint16))

    @classmethod
    def identity(cls, n: int, p: int) -> FpMatrix:
        return cls(p, np.eye(n, dtype=np.uint16))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def transpose(self) -> FpMatrix:
        return FpMatrix(self.p, self.data.T)

    T = property(transpose)

    def __eq__(self, other):
        if not isinstance(other, FpMatrix):
            return NotImplemented
        return self.p == other.p and np.array_equal(self.data, other.data)

    def __hash__(self):
        return hash((self.p, self.data.shape, self.data.tobytes()))

    def __repr__(self):
        return f"FpMatrix(p={self.p}, shape={self.shape})"

    def tolist(self) -> list[list[int]]:
        return self.data.astype(int).tolist()

    def to_text(self) -> str:
        """Serialize as ``"p rows cols"`` followed by one line per row."""
        lines = [f"{self.p} {self.rows} {self.cols}"]
        lines += [" ".join(str(int(x)) for x in row) for row in self.data]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> FpMatrix:
        tokens = text.split()
        if len(tokens) < 3:
            raise ValueError("matrix text needs a 'p rows cols' header")
        p, rows, cols = (int(t) for t in tokens[:3])
        body = tokens[3:]
        if len(body) != rows * cols:
            raise ValueError(f"expected {rows * cols} entries, found {len(body)}")
        arr = np.array([int(t) for t in body], dtype=np.int64).reshape(rows, cols)
        return cls(p, arr)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> FpMatrix:
        return cls.from_text(Path(path).read_text())


def _as_matrix(M, p=None) -> FpMatrix:
    if isinstance(M, FpMatrix):
        return M
    if p is None:
        raise TypeError("pass an FpMatrix or supply p")
    return FpMatrix.from_rows(M, p)


def rank_packed(M: FpMatrix) -> int:
    """Rank over F_2 using bit-packed rows and XOR elimination."""
    if M.p != 2:
        raise ValueError("the packed kernel only handles p = 2")
    return bits_rank(M.data)


def bits_rank(bits: np.ndarray) -> int:
    """Rank over F_2 of a 0/1 array of any integer dtype."""
    bits = np.ascontiguousarray(bits, dtype=np.uint8)
    words = _kernels.pack_bits(bits)
    return int(_kernels.rank_packed(words, bits.shape[1]))


def rank_generic(M: FpMatrix) -> int:
    """Rank by plain Gaussian elimination with inverse pivots mod ``p``."""
    work = M.data.astype(np.int64)
    return int(_kernels.rref_mod_p(work, M.p, False))


def rank(M, p=None, method: str = "auto") -> int:
    """Dimension of the row space of ``M`` over F_p.

    ``method`` is ``"auto"`` (packed for ``p == 2``), ``"packed"`` or
    ``"generic"``. Both kernels agree on every input.
    """
    M = _as_matrix(M, p)
    if method == "auto":
        method = "packed" if M.p == 2 else "generic"
    if method == "packed":
        return rank_packed(M)
    if method == "generic":
        return rank_generic(M)
    raise ValueError(f"unknown method {method!r}")


def corank(M, p=None) -> int:
    """``cols - rank``; for a square matrix this is the k with cok(M) = F_p^k."""
    M = _as_matrix(M, p)
    return M.cols - rank(M)


def rref(M, p=None) -> tuple[FpMatrix, int]:
    """Reduced row-echelon form and its number of pivots."""
    M = _as_matrix(M, p)
    work = M.data.astype(np.int64)
    r = int(_kernels.rref_mod_p(work, M.p, True))
    return FpMatrix(M.p, work), r


def batch_rank(mats: np.ndarray, p: int) -> np.ndarray:
    """Ranks of a stack of small matrices, vectorized across the batch.

    ``mats`` has shape ``(batch, rows, cols)``. Used by the exact
    enumeration oracles, where there are many tiny matrices.
    """
    p = check_prime(p)
    a = np.mod(np.asarray(mats, dtype=np.int64), p)
    if a.ndim != 3:
        raise ValueError("expected a (batch, rows, cols) array")
    nb, nr, nc = a.shape
    inv = np.zeros(p, dtype=np.int64)
    inv[1:] = [pow(x, -1, p) for x in range(1, p)]
    rk = np.zeros(nb, dtype=np.int64)
    row_idx = np.arange(nr)
    for col in range(nc):
        cand = (a[:, :, col] != 0) & (row_idx[None, :] >= rk[:, None])
        has = cand.any(axis=1)
        if not has.any():
            continue
        b = np.flatnonzero(has)
        piv = cand[b].argmax(axis=1)
        top = rk[b]
        prow = a[b, piv].copy()
        a[b, piv] = a[b, top]
        prow = (prow * inv[prow[:, col]][:, None]) % p
        a[b, top] = prow
        below = row_idx[None, :] > top[:, None]
        f = np.where(below, a[b, :, col], 0)
        a[b] = (a[b] - f[:, :, None] * prow[:, None, :]) % p
        rk[b] += 1
    return rk


def nullspace(M, p=None) -> FpMatrix | None:
    """Basis (as rows) of ``{x : M x = 0}``, or ``None`` if only the zero vector."""
    M = _as_matrix(M, p)
    R, r = rref(M)
    a = R.data.astype(np.int64)
    pivots = []
    for i in range(r):
        pivots.append(int(np.flatnonzero(a[i])[0]))
    free = [j for j in range(M.cols) if j not in pivots]
    if not free:
        return None
    basis = np.zeros((len(free), M.cols), dtype=np.int64)
    for b, f in enumerate(free):
        basis[b, f] = 1
        for i, pc in enumerate(pivots):
            basis[b, pc] = (-a[i, f]) % M.p
    return FpMatrix(M.p, basis)


def span_elements(M, p=None) -> set[tuple[int, ...]]:
    """Every vector in the row span of ``M``, as tuples (includes zero)."""
    M = _as_matrix(M, p)
    R, r = rref(M)
    basis = R.data[:r].astype(np.int64)
    if r == 0:
        return {(0,) * M.cols}
    coeffs = np.indices((M.p,) * r).reshape(r, -1).T
    vecs = (coeffs @ basis) % M.p
    return {tuple(int(x) for x in v) for v in vecs}
