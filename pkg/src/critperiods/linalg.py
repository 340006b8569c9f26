"""Dense linear algebra helpers: checked SVD, mode tracking, RNG and matrix I/O.

Matrices are plain 2-D ``numpy.ndarray`` of float64. Functions that accept a
matrix validate it at the boundary with :func:`as_matrix`.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NonFiniteError

log = logging.getLogger(__name__)

# gap below which two singular values are reported as degenerate
DEGENERACY_GAP = 1e-6


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    """Return ``m`` as a finite 2-D float64 array or raise."""
    arr = np.asarray(m, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = int(np.count_nonzero(~np.isfinite(arr)))
        raise NonFiniteError(f"{name} has {bad} non-finite entries")
    return arr


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator; identical seeds give identical streams on every platform."""
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


@dataclass
class SvdTriple:
    """Thin SVD ``m = u @ diag(a) @ v.T``.

    ``svd`` returns triples with ``a`` descending. After :func:`align_modes` the
    columns follow the tracked order instead, so ``a`` may be unsorted.
    """

    u: np.ndarray
    a: np.ndarray
    v: np.ndarray

    @property
    def rank(self) -> int:
        return self.a.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.a) @ self.v.T

    def orthonormality_error(self) -> float:
        r = self.rank
        eu = np.abs(self.u.T @ self.u - np.eye(r)).max()
        ev = np.abs(self.v.T @ self.v - np.eye(r)).max()
        return float(max(eu, ev))


def _fix_signs(u: np.ndarray, v: np.ndarray) -> None:
    # largest-|entry| of each u column made nonnegative; v flipped with it
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    u *= signs
    v *= signs


def svd(m) -> SvdTriple:
    """Thin SVD with descending singular values and a deterministic sign convention.

    Rank-deficient inputs keep all ``min(rows, cols)`` modes, including the
    trailing near-zero ones. Near-degenerate pairs are logged, not resolved.
    """
    arr = as_matrix(m)
    u, a, vt = np.linalg.svd(arr, full_matrices=False)
    v = vt.T.copy()
    _fix_signs(u, v)
    gaps = -np.diff(a)
    if a.size > 1 and np.any(gaps < DEGENERACY_GAP):
        log.debug("near-degenerate singular values at indices %s",
                  np.flatnonzero(gaps < DEGENERACY_GAP).tolist())
    return SvdTriple(u=u, a=a, v=v)


def align_modes(prev: SvdTriple, curr: SvdTriple) -> SvdTriple:
    """Permute and sign-flip ``curr`` so its modes continue those of ``prev``.

    Assignment is greedy on ``|u_prev^T u_curr|``: the largest remaining overlap
    is matched first. Singular values are only reordered, never changed.
    """
    if prev.u.shape != curr.u.shape or prev.v.shape != curr.v.shape:
        raise ValueError(
            f"cannot align triples of shapes {prev.u.shape}/{prev.v.shape} "
            f"and {curr.u.shape}/{curr.v.shape}")
    r = prev.rank
    overlap = np.abs(prev.u.T @ curr.u)
    perm = np.full(r, -1)
    used = np.zeros(r, dtype=bool)
    # stable sort so ties resolve in index order
    for flat in np.argsort(-overlap, axis=None, kind="stable"):
        i, j = divmod(int(flat), r)
        if perm[i] >= 0 or used[j]:
            continue
        perm[i] = j
        used[j] = True
    u = curr.u[:, perm].copy()
    v = curr.v[:, perm].copy()
    a = curr.a[perm].copy()
    signs = np.sign(np.einsum("ij,ij->j", prev.u, u))
    signs[signs == 0] = 1.0
    return SvdTriple(u=u * signs, a=a, v=v * signs)


def frobenius(m) -> float:
    return float(np.linalg.norm(as_matrix(m), "fro"))


def complete_basis(q: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
    """Extend orthonormal columns ``q`` (n x r) to a full n x n orthogonal matrix."""
    n, r = q.shape
    if r == n:
        return q.copy()
    rng = rng if rng is not None else make_rng(0)
    extra = rng.standard_normal((n, n - r))
    extra -= q @ (q.T @ extra)
    qe, _ = np.linalg.qr(extra)
    qe -= q @ (q.T @ qe)
    qe, _ = np.linalg.qr(qe)
    return np.hstack([q, qe])


# -- serialization -----------------------------------------------------------

def matrix_to_csv(m, path=None) -> str:
    """Row per line, '.' decimal, no header. Returns the text; writes it if ``path``."""
    arr = as_matrix(m)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in arr:
        writer.writerow([repr(float(x)) for x in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def parse_matrix_csv(text: str) -> np.ndarray:
    rows = [[float(x) for x in row] for row in csv.reader(io.StringIO(text)) if row]
    return as_matrix(rows)


def matrix_from_csv(path) -> np.ndarray:
    return parse_matrix_csv(Path(path).read_text())


def matrix_to_json(m) -> dict:
    arr = as_matrix(m)
    return {"rows": arr.shape[0], "cols": arr.shape[1], "data": arr.ravel().tolist()}


def matrix_from_json(obj) -> np.ndarray:
    if isinstance(obj, (str, bytes)):
        obj = json.loads(obj)
    rows, cols, data = int(obj["rows"]), int(obj["cols"]), obj["data"]
    if len(data) != rows * cols:
        raise ValueError(f"envelope has {len(data)} entries, expected {rows * cols}")
    return as_matrix(np.asarray(data, dtype=float).reshape(rows, cols))


# -- deep linear chains ------------------------------------------------------

def chain_product(layers) -> np.ndarray:
    """``layers[-1] @ ... @ layers[0]``; layer 0 acts on the input."""
    out = layers[0]
    for w in layers[1:]:
        out = w @ out
    return out


def chain_forward(layers):
    """Product of ``layers`` and the partial products feeding each layer.

    ``below[d]`` is ``W_{d-1} ... W_1`` (``None`` for the first layer).
    """
    below = [None] * len(layers)
    acc = None
    for d, w in enumerate(layers):
        below[d] = acc
        acc = w if acc is None else w @ acc
    return acc, below


def layer_gradients(layers, outer: np.ndarray, below=None) -> list[np.ndarray]:
    """Chain rule through a product of layers.

    Given ``outer`` = dL/dW for the product W, returns dL/dW_d for each layer:
    ``(W_D ... W_{d+1})^T outer (W_{d-1} ... W_1)^T``. ``below`` may be passed
    from :func:`chain_forward` to skip recomputing partial products.
    """
    if below is None:
        _, below = chain_forward(layers)
    grads = [None] * len(layers)
    upstream = outer
    for d in range(len(layers) - 1, -1, -1):
        grads[d] = upstream if below[d] is None else upstream @ below[d].T
        if d:
            upstream = layers[d].T @ upstream
    return grads
