"""Scalar per-mode dynamics of aligned multi-pathway networks.

For every target singular value ``s`` and pathway ``a`` the state is ``(q, p)``:
``q`` is the diagonal scale shared by the first ``D - 1`` layers, ``p`` that of
the last layer. The pathway's share of the mode is ``k = p * q**(D - 1)`` and
each Euler step of size ``step`` applies

    q += step * q**(D - 2) * p * (s - sum_a k)
    p += step * q**(D - 1) * (s - sum_a k)

which leaves ``q**2 - p**2`` invariant in continuous time.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .deficits import NO_DEFICIT, DeficitSchedule
from .errors import DivergenceError
from .trajectory import TrajectoryLog


@dataclass
class ModeState:
    q: float
    p: float
    depth: int

    def conserved(self) -> float:
        return conserved(self)

    @property
    def k(self) -> float:
        return self.p * self.q ** (self.depth - 1)


def conserved(ms: ModeState) -> float:
    return ms.q ** 2 - ms.p ** 2


@dataclass
class ReducedSystem:
    """States for P pathways x r modes, arrays of shape (P, r)."""

    q: np.ndarray
    p: np.ndarray
    s: np.ndarray
    depths: tuple[int, ...]
    step: float
    schedule: DeficitSchedule = NO_DEFICIT

    def __post_init__(self):
        self.q = np.array(self.q, dtype=float, ndmin=2)
        self.p = np.array(self.p, dtype=float, ndmin=2)
        self.s = np.atleast_1d(np.asarray(self.s, dtype=float))
        if np.isscalar(self.depths):
            self.depths = (int(self.depths),) * self.q.shape[0]
        self.depths = tuple(int(d) for d in self.depths)
        if self.q.shape != self.p.shape or self.q.shape[1] != self.s.shape[0]:
            raise ValueError("q, p must be (P, r) with r matching s")
        if len(self.depths) != self.q.shape[0]:
            raise ValueError("one depth per pathway required")
        if min(self.depths) < 2:
            raise ValueError("reduced dynamics need depth >= 2")

    @classmethod
    def from_network(cls, net, s, step: float,
                     schedule: DeficitSchedule = NO_DEFICIT) -> "ReducedSystem":
        """Counterpart of an aligned ``PathwayNetwork``: every layer starts at ``init_diag``."""
        if net.init_diag is None:
            raise ValueError("network was not built by init_aligned")
        return cls(net.init_diag.copy(), net.init_diag.copy(), s, net.depths, step, schedule)

    @property
    def _depth_col(self) -> np.ndarray:
        return np.array(self.depths, dtype=float)[:, None]

    def k(self) -> np.ndarray:
        return self.p * self.q ** (self._depth_col - 1)

    def conserved(self) -> np.ndarray:
        return self.q ** 2 - self.p ** 2

    def copy(self) -> "ReducedSystem":
        return ReducedSystem(self.q.copy(), self.p.copy(), self.s.copy(), self.depths,
                             self.step, self.schedule)


def step_reduced(sys: ReducedSystem, epoch: int = 0) -> ReducedSystem:
    """One simultaneous Euler step for all modes and pathways (in place).

    Gated pathways keep their state but still enter the shared residual.
    Lesioned modes are zeroed after the step.
    """
    if sys.step <= 0:
        raise ValueError("step must be positive")
    dcol = sys._depth_col
    residual = sys.s - sys.k().sum(axis=0)
    dq = sys.q ** (dcol - 2) * sys.p * residual
    dp = sys.q ** (dcol - 1) * residual
    for a in range(sys.q.shape[0]):
        if not sys.schedule.gated(a, epoch):
            sys.q[a] += sys.step * dq[a]
            sys.p[a] += sys.step * dp[a]
        for m in sys.schedule.lesioned_modes(a, epoch):
            sys.q[a, m] = 0.0
            sys.p[a, m] = 0.0
    if not (np.all(np.isfinite(sys.q)) and np.all(np.isfinite(sys.p))):
        raise DivergenceError(f"reduced state became non-finite at epoch {epoch}; step too large")
    return sys


def integrate(sys: ReducedSystem, epochs: int, start_epoch: int = 0,
              record_every: int = 1) -> np.ndarray:
    """Run ``epochs`` steps; returns ``k`` snapshots of shape (records, P, r).

    Snapshot ``i`` is the state after ``i * record_every`` steps (the initial
    state included); the final state is always recorded.
    """
    snaps = [sys.k().copy()]
    for i in range(epochs):
        step_reduced(sys, start_epoch + i)
        if (i + 1) % record_every == 0 or i + 1 == epochs:
            snaps.append(sys.k().copy())
    return np.array(snaps)


# -- flow fields -------------------------------------------------------------

@dataclass
class FlowField:
    """Arrows at lattice points; ``dx, dy`` are unit length (zero where the flow vanishes)."""

    x: np.ndarray
    y: np.ndarray
    dx: np.ndarray
    dy: np.ndarray
    magnitude: np.ndarray
    depth: int
    sigma: float
    branch: str = "balanced q = p"

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "dx", "dy", "magnitude"])
        for row in zip(self.x.ravel(), self.y.ravel(), self.dx.ravel(), self.dy.ravel(),
                       self.magnitude.ravel()):
            w.writerow([repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def balanced_velocity(depth: int, sigma: float, ka, kb, tau: float = 1.0):
    """(dk_a/dt, dk_b/dt) on the balanced branch: ``D k^(2 - 2/D) (sigma - k_a - k_b) / tau``."""
    ka = np.asarray(ka, dtype=float)
    kb = np.asarray(kb, dtype=float)
    residual = sigma - ka - kb
    expo = 2.0 - 2.0 / depth
    return (depth * ka ** expo * residual / tau, depth * kb ** expo * residual / tau)


def flow_field(depth: int, sigma: float, ka_grid, kb_grid, tau: float = 1.0) -> FlowField:
    """Velocity field over the (k_a, k_b) lattice spanned by the two 1-D grids."""
    ka_grid = np.asarray(ka_grid, dtype=float)
    kb_grid = np.asarray(kb_grid, dtype=float)
    if np.any(ka_grid < 0) or np.any(kb_grid < 0):
        raise ValueError("flow field is defined for k_a, k_b >= 0")
    x, y = np.meshgrid(ka_grid, kb_grid, indexing="xy")
    vx, vy = balanced_velocity(depth, sigma, x, y, tau)
    mag = np.hypot(vx, vy)
    safe = np.where(mag > 0, mag, 1.0)
    return FlowField(x, y, np.where(mag > 0, vx / safe, 0.0), np.where(mag > 0, vy / safe, 0.0),
                     mag, depth, sigma)


# -- phase portraits ---------------------------------------------------------

INIT_FAMILIES = ("unit-conserved", "small-balanced")


@dataclass
class PhasePortrait:
    """Trajectories of independent two-pathway trials for one target singular value.

    ``q``, ``p`` have shape (records, 2, trials); ``epochs`` lists the epoch of
    each record.
    """

    epochs: np.ndarray
    q: np.ndarray
    p: np.ndarray
    depth: int
    sigma: float

    @property
    def k(self) -> np.ndarray:
        return self.p * self.q ** (self.depth - 1)

    @property
    def endpoints(self) -> np.ndarray:
        """Final (k_a, k_b) per trial, shape (trials, 2)."""
        return self.k[-1].T

    def to_log(self) -> TrajectoryLog:
        log = TrajectoryLog(["trial", "epoch", "q_a", "p_a", "q_b", "p_b", "k_a", "k_b"])
        k = self.k
        for t in range(self.q.shape[2]):
            for i, e in enumerate(self.epochs):
                log.append(trial=t, epoch=int(e), q_a=self.q[i, 0, t], p_a=self.p[i, 0, t],
                           q_b=self.q[i, 1, t], p_b=self.p[i, 1, t],
                           k_a=k[i, 0, t], k_b=k[i, 1, t])
        return log


def initial_states(n_trials: int, init_family: str, rng: np.random.Generator,
                   p_sd: float = 0.01, eps: float = 0.005):
    """Initial (q, p) of shape (2, n_trials).

    ``unit-conserved``: ``p ~ N(0, p_sd)`` and ``q**2 - p**2 = 1``.
    ``small-balanced``: ``q = p = eps``.
    """
    if init_family == "unit-conserved":
        p = rng.normal(0.0, p_sd, size=(2, n_trials))
        q = np.sqrt(1.0 + p ** 2)
    elif init_family == "small-balanced":
        p = np.full((2, n_trials), float(eps))
        q = p.copy()
    else:
        raise ValueError(f"unknown init family {init_family!r}; expected one of {INIT_FAMILIES}")
    return q, p


def phase_portrait(depth: int, sigma: float, n_trials: int, init_family: str,
                   schedule: DeficitSchedule, step: float, epochs: int,
                   rng: np.random.Generator, p_sd: float = 0.01, eps: float = 0.005,
                   record_every: int = 1) -> PhasePortrait:
    """Integrate ``n_trials`` independent initial conditions of the two-pathway system."""
    if n_trials < 1:
        raise ValueError("need at least one trial")
    q0, p0 = initial_states(n_trials, init_family, rng, p_sd, eps)
    # trials are independent modes sharing the same target value
    sys = ReducedSystem(q0, p0, np.full(n_trials, float(sigma)), (depth, depth), step, schedule)
    qs, ps, marks = [sys.q.copy()], [sys.p.copy()], [0]
    for e in range(epochs):
        step_reduced(sys, e)
        if (e + 1) % record_every == 0 or e + 1 == epochs:
            qs.append(sys.q.copy())
            ps.append(sys.p.copy())
            marks.append(e + 1)
    return PhasePortrait(np.array(marks), np.array(qs), np.array(ps), depth, float(sigma))
