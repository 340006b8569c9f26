"""Data distributions: the hierarchical semantic task, low-rank ground truths,
observation masks and nested task pairs that share singular vectors."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix, matrix_from_json, matrix_to_json

# Printed block is 8 inputs x 15 outputs; stored transposed as the 15 x 8
# input-output correlation matrix.
_HIERARCHY_ROWS = (
    (1, 1, 0, 1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0),
    (1, 1, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0),
    (1, 1, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0),
    (1, 1, 0, 0, 1, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0),
    (1, 0, 1, 0, 0, 1, 0, 0, 0, 0, 0, 1, 0, 0, 0),
    (1, 0, 1, 0, 0, 1, 0, 0, 0, 0, 0, 0, 1, 0, 0),
    (1, 0, 1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 1, 0),
    (1, 0, 1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 1),
)


def hierarchical_task() -> np.ndarray:
    """Input-output correlation of the 8-item, 15-feature hierarchy (15 x 8).

    Inputs are one-hot, so the input correlation is the identity.
    """
    return np.array(_HIERARCHY_ROWS, dtype=float).T.copy()


def hierarchical_task_checksum() -> str:
    return hashlib.sha256(np.ascontiguousarray(hierarchical_task()).tobytes()).hexdigest()


def low_rank_ground_truth(n: int, r: int, rng: np.random.Generator,
                          norm: float | None = None) -> np.ndarray:
    """Random rank-``r`` n x n matrix ``L'^T L`` rescaled to Frobenius norm ``norm``.

    ``L`` and ``L'`` are r x n with iid standard normal entries. ``norm``
    defaults to ``n / r``.
    """
    if not 1 <= r <= n:
        raise ValueError(f"rank must satisfy 1 <= r <= n, got r={r}, n={n}")
    if norm is None:
        norm = n / r
    left = rng.standard_normal((r, n))
    right = rng.standard_normal((r, n))
    m = right.T @ left
    return m / np.linalg.norm(m, "fro") * norm


@dataclass(frozen=True)
class ObservationMask:
    """Observed cells of an n x n matrix, stored as sorted (row, col) index arrays."""

    n: int
    rows: np.ndarray
    cols: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        cols = np.asarray(self.cols, dtype=np.int64)
        if rows.shape != cols.shape or rows.ndim != 1:
            raise ValueError("rows and cols must be 1-D arrays of equal length")
        if rows.size < 1:
            raise ValueError("mask must observe at least one cell")
        if rows.min() < 0 or cols.min() < 0 or rows.max() >= self.n or cols.max() >= self.n:
            raise ValueError(f"mask indices out of range for n={self.n}")
        flat = rows * self.n + cols
        if np.unique(flat).size != flat.size:
            raise ValueError("mask contains duplicate cells")
        order = np.argsort(flat)
        object.__setattr__(self, "rows", rows[order])
        object.__setattr__(self, "cols", cols[order])

    @classmethod
    def from_array(cls, observed: np.ndarray) -> "ObservationMask":
        observed = np.asarray(observed, dtype=bool)
        if observed.ndim != 2 or observed.shape[0] != observed.shape[1]:
            raise ValueError("mask array must be square")
        rows, cols = np.nonzero(observed)
        return cls(observed.shape[0], rows, cols)

    @classmethod
    def full(cls, n: int) -> "ObservationMask":
        return cls.from_array(np.ones((n, n), dtype=bool))

    def __len__(self) -> int:
        return int(self.rows.size)

    def array(self) -> np.ndarray:
        out = np.zeros((self.n, self.n), dtype=bool)
        out[self.rows, self.cols] = True
        return out

    def subset(self, count: int, rng: np.random.Generator) -> "ObservationMask":
        """Uniformly chosen ``count`` cells of this mask."""
        if not 1 <= count <= len(self):
            raise ValueError(f"subset size {count} outside [1, {len(self)}]")
        pick = np.sort(rng.choice(len(self), size=count, replace=False))
        return ObservationMask(self.n, self.rows[pick], self.cols[pick])

    def to_json(self) -> dict:
        return {"n": self.n, "observed": np.column_stack([self.rows, self.cols]).tolist()}

    @classmethod
    def from_json(cls, obj) -> "ObservationMask":
        if isinstance(obj, (str, bytes)):
            obj = json.loads(obj)
        pairs = np.asarray(obj["observed"], dtype=np.int64).reshape(-1, 2)
        return cls(int(obj["n"]), pairs[:, 0], pairs[:, 1])


def sample_mask(n: int, count: int, rng: np.random.Generator) -> ObservationMask:
    """Uniform sample of ``count`` distinct cells of an n x n matrix."""
    if not 1 <= count <= n * n:
        raise ValueError(f"count must be in [1, n^2={n * n}], got {count}")
    flat = np.sort(rng.choice(n * n, size=count, replace=False))
    return ObservationMask(n, flat // n, flat % n)


@dataclass
class TaskPair:
    """Two ground truths, ``m_a`` then ``m_b``.

    With ``shared_svd`` the pair is ``m_a = m_b + s * u v^T`` and ``basis``
    holds the shared (u, v) columns: the modes of ``m_b`` followed by the
    inserted one. ``delta_mode`` is (index of the inserted mode in ``m_a``'s
    descending order, its singular value).
    """

    m_a: np.ndarray
    m_b: np.ndarray
    shared_svd: bool = False
    delta_mode: tuple[int, float] | None = None
    basis: tuple[np.ndarray, np.ndarray] | None = None

    def spectra(self):
        """Shared basis and per-task singular values ``(u, s_a, s_b, v)``."""
        if not self.shared_svd or self.basis is None:
            raise ValueError("tasks do not share singular vectors")
        u, v = self.basis
        s_a = np.einsum("ia,ij,ja->a", u, self.m_a, v)
        s_b = np.einsum("ia,ij,ja->a", u, self.m_b, v)
        return u, s_a, s_b, v

    def to_json(self) -> dict:
        return {"m_a": matrix_to_json(self.m_a), "m_b": matrix_to_json(self.m_b),
                "shared_svd": self.shared_svd,
                "delta_mode": list(self.delta_mode) if self.delta_mode else None}

    @classmethod
    def from_json(cls, obj) -> "TaskPair":
        delta = obj.get("delta_mode")
        return cls(matrix_from_json(obj["m_a"]), matrix_from_json(obj["m_b"]),
                   bool(obj.get("shared_svd", False)),
                   (int(delta[0]), float(delta[1])) if delta else None)


def _unit_orthogonal(basis: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    x = rng.standard_normal(basis.shape[0])
    for _ in range(2):
        x -= basis @ (basis.T @ x)
    return x / np.linalg.norm(x)


def nested_task_pair(n: int, r_b: int, s_r: float, rng: np.random.Generator,
                     norm: float | None = None) -> TaskPair:
    """Rank-``r_b`` task ``m_b`` and ``m_a = m_b + s_r u v^T`` sharing its singular vectors.

    ``u`` and ``v`` are random unit vectors orthogonal to the column and row
    spaces of ``m_b``, so ``m_a`` has rank ``r_b + 1``.
    """
    if not 1 <= r_b < n:
        raise ValueError(f"need 1 <= r_b < n, got r_b={r_b}, n={n}")
    if s_r <= 0:
        raise ValueError(f"s_r must be positive, got {s_r}")
    m_b = low_rank_ground_truth(n, r_b, rng, norm=norm)
    ub, sb, vbt = np.linalg.svd(m_b)
    ub, vb = ub[:, :r_b], vbt[:r_b].T
    u = _unit_orthogonal(ub, rng)
    v = _unit_orthogonal(vb, rng)
    m_a = m_b + s_r * np.outer(u, v)
    position = int(np.sum(sb[:r_b] > s_r))
    basis = (np.column_stack([ub, u]), np.column_stack([vb, v]))
    return TaskPair(as_matrix(m_a), m_b, shared_svd=True,
                    delta_mode=(position, float(s_r)), basis=basis)
