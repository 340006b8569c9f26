"""Multi-pathway deep linear networks trained by full-batch gradient descent.

Inputs are whitened (one-hot), so training only needs the input-output
correlation ``sigma_yx``; the loss is ``0.5 * ||sigma_yx - Omega||_F^2`` with
``Omega`` the sum of every pathway's product map.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .deficits import NO_DEFICIT, PATHWAY_NAMES, DeficitSchedule
from .errors import DivergenceError
from .linalg import SvdTriple, as_matrix, chain_product, layer_gradients, make_rng, svd
from .tasks import hierarchical_task
from .trajectory import TrajectoryLog


@dataclass
class PathwayNetwork:
    """``pathways[a][d]`` is layer ``d + 1`` of pathway ``a`` (layer 0 sees the input)."""

    pathways: list[list[np.ndarray]]
    hidden_width: int
    init_diag: np.ndarray | None = None  # (P, r) aligned diagonal at init

    def __post_init__(self):
        for a, layers in enumerate(self.pathways):
            for d in range(1, len(layers)):
                if layers[d].shape[1] != layers[d - 1].shape[0]:
                    raise ValueError(f"pathway {a}: layer {d + 1} does not compose with layer {d}")
        shapes = {(ls[-1].shape[0], ls[0].shape[1]) for ls in self.pathways}
        if len(shapes) != 1:
            raise ValueError(f"pathways disagree on io dims: {shapes}")

    @property
    def n_pathways(self) -> int:
        return len(self.pathways)

    @property
    def depths(self) -> tuple[int, ...]:
        return tuple(len(ls) for ls in self.pathways)

    def product(self, a: int) -> np.ndarray:
        return chain_product(self.pathways[a])

    def total(self) -> np.ndarray:
        return sum(self.product(a) for a in range(self.n_pathways))

    def copy(self) -> "PathwayNetwork":
        return PathwayNetwork([[w.copy() for w in ls] for ls in self.pathways],
                              self.hidden_width,
                              None if self.init_diag is None else self.init_diag.copy())


@dataclass
class PathwayContribution:
    """Diagonal of ``U^T Omega_a V`` per pathway, shape (P, r)."""

    k: np.ndarray
    offdiag: np.ndarray = field(default_factory=lambda: np.zeros(0))
    epoch: int = 0

    @property
    def total(self) -> np.ndarray:
        return self.k.sum(axis=0)


def init_aligned(task_svd: SvdTriple, depth, hidden_width: int = 100, scale: float = 0.01,
                 noise_sd: float = 1e-3, rng: np.random.Generator | None = None,
                 n_pathways: int = 2) -> PathwayNetwork:
    """Layers ``R D V^T``, ``R D R^T``, ..., ``U D R^T`` with a shared diagonal ``D``.

    ``D`` holds ``scale ** (1 / depth)`` plus one Gaussian jitter per mode; the
    jitter is shared between pathways. ``R`` is a random hidden_width x r
    matrix with orthonormal columns.
    """
    depths = (depth,) * n_pathways if np.isscalar(depth) else tuple(depth)
    if len(depths) != n_pathways:
        raise ValueError("one depth per pathway required")
    if min(depths) < 2:
        raise ValueError("aligned initialisation needs depth >= 2")
    if scale <= 0:
        raise ValueError("scale must be positive")
    r = task_svd.rank
    if hidden_width < r:
        raise ValueError(f"hidden_width {hidden_width} smaller than task rank {r}")
    rng = rng if rng is not None else make_rng(0)
    basis, _ = np.linalg.qr(rng.standard_normal((hidden_width, r)))
    jitter = noise_sd * rng.standard_normal(r)
    u, v = task_svd.u, task_svd.v
    pathways, diags = [], []
    for d_a in depths:
        diag = scale ** (1.0 / d_a) + jitter
        mid = (basis * diag) @ basis.T
        layers = [(basis * diag) @ v.T] + [mid.copy() for _ in range(d_a - 2)] + [(u * diag) @ basis.T]
        pathways.append(layers)
        diags.append(diag)
    return PathwayNetwork(pathways, hidden_width, np.array(diags))


def loss(net: PathwayNetwork, sigma_yx: np.ndarray) -> float:
    return 0.5 * float(np.sum((sigma_yx - net.total()) ** 2))


def pathway_contributions(net: PathwayNetwork, task_svd: SvdTriple,
                          epoch: int = 0) -> PathwayContribution:
    ks, off = [], []
    for a in range(net.n_pathways):
        kmat = task_svd.u.T @ net.product(a) @ task_svd.v
        diag = np.diag(kmat).copy()
        ks.append(diag)
        off.append(np.linalg.norm(kmat - np.diag(diag)))
    return PathwayContribution(np.array(ks), np.array(off), epoch)


def _lesion(layers: list[np.ndarray], u: np.ndarray, v: np.ndarray) -> None:
    # zero row and column of K_a for this mode: input side on the first layer,
    # output side on the last
    layers[0] = layers[0] - np.outer(layers[0] @ v, v)
    layers[-1] = layers[-1] - np.outer(u, u @ layers[-1])


def train_epoch(net: PathwayNetwork, sigma_yx: np.ndarray, lr: float,
                schedule: DeficitSchedule = NO_DEFICIT, epoch: int = 0,
                task_svd: SvdTriple | None = None):
    """One full-batch gradient step; returns ``(net, contribution)``.

    Gated pathways still contribute to the residual but are not updated
    (their arrays are left untouched). Lesioned modes are projected out of
    their pathway after the step. ``contribution`` is ``None`` without
    ``task_svd``.
    """
    if lr <= 0:
        raise ValueError("lr must be positive")
    residual = sigma_yx - net.total()
    updates = {}
    for a, layers in enumerate(net.pathways):
        if schedule.gated(a, epoch):
            continue
        updates[a] = layer_gradients(layers, residual)
    for a, grads in updates.items():
        layers = net.pathways[a]
        for d, g in enumerate(grads):
            layers[d] = layers[d] + lr * g
    for a in range(net.n_pathways):
        modes = schedule.lesioned_modes(a, epoch)
        if modes and task_svd is None:
            raise ValueError("lesions need the task SVD")
        for m in modes:
            _lesion(net.pathways[a], task_svd.u[:, m], task_svd.v[:, m])
    for a in updates:
        for w in net.pathways[a]:
            if not np.all(np.isfinite(w)):
                raise DivergenceError(f"non-finite weights in pathway {PATHWAY_NAMES[a]} "
                                      f"after epoch {epoch}; reduce the learning rate")
    contrib = None if task_svd is None else pathway_contributions(net, task_svd, epoch + 1)
    return net, contrib


@dataclass
class MultipathConfig:
    depth: int | tuple = 4
    hidden_width: int = 100
    lr: float = 0.01
    epochs: int = 1500
    scale: float = 0.01
    noise_sd: float = 1e-3
    schedule: DeficitSchedule = NO_DEFICIT
    seed: int = 0
    log_every: int = 1
    task: np.ndarray | None = None  # defaults to the hierarchical task


def trajectory_columns(r: int, n_pathways: int = 2) -> list[str]:
    cols = ["epoch", "loss"]
    for a in range(n_pathways):
        cols += [f"k_{PATHWAY_NAMES[a]}_{i + 1}" for i in range(r)]
    cols += [f"offdiag_{PATHWAY_NAMES[a]}" for a in range(n_pathways)]
    return cols


def _record(log: TrajectoryLog, epoch: int, loss_value: float, c: PathwayContribution):
    row = {"epoch": epoch, "loss": loss_value}
    for a in range(c.k.shape[0]):
        name = PATHWAY_NAMES[a]
        for i, x in enumerate(c.k[a]):
            row[f"k_{name}_{i + 1}"] = float(x)
        row[f"offdiag_{name}"] = float(c.offdiag[a])
    log.append(**row)


def run_multipath_experiment(config: MultipathConfig):
    """Train from the aligned init and log loss and pathway contributions.

    Row ``e`` holds the state after ``e`` updates. Returns ``(log, net, task_svd)``.
    """
    sigma_yx = as_matrix(hierarchical_task() if config.task is None else config.task)
    task_svd = svd(sigma_yx)
    rng = make_rng(config.seed)
    net = init_aligned(task_svd, config.depth, config.hidden_width, config.scale,
                       config.noise_sd, rng)
    log = TrajectoryLog(trajectory_columns(task_svd.rank, net.n_pathways),
                        meta={"singular_values": task_svd.a.tolist()})
    initial = loss(net, sigma_yx)
    _record(log, 0, initial, pathway_contributions(net, task_svd, 0))
    for epoch in range(config.epochs):
        _, contrib = train_epoch(net, sigma_yx, config.lr, config.schedule, epoch, task_svd)
        current = loss(net, sigma_yx)
        if not np.isfinite(current) or current > 1e6 * max(initial, 1e-300):
            raise DivergenceError(f"loss {current:.3g} exceeded 1e6 x initial at epoch {epoch + 1}")
        if (epoch + 1) % config.log_every == 0 or epoch + 1 == config.epochs:
            _record(log, epoch + 1, current, contrib)
    return log, net, task_svd
