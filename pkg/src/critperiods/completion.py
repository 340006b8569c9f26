"""Matrix completion with a deep linear factorization ``W = W_D ... W_1``.

The training loss is the average over observed cells of ``0.5 (M_ij - W_ij)^2``
and every layer is updated by full-batch gradient descent. A schedule of
phases (ground truth, mask, epoch budget) runs on one factorization, which is
how pre-training deficits are expressed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError
from .linalg import as_matrix, chain_forward, chain_product, layer_gradients
from .tasks import ObservationMask, low_rank_ground_truth, sample_mask
from .trajectory import TrajectoryLog

N_LOGGED_SV = 10
SV_FLOOR = 1e-12


@dataclass
class DeepFactorization:
    layers: list[np.ndarray]

    def __post_init__(self):
        n = self.layers[0].shape[0]
        if any(w.shape != (n, n) for w in self.layers):
            raise ValueError("all layers must be square and of equal size")

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def n(self) -> int:
        return self.layers[0].shape[0]

    def product(self) -> np.ndarray:
        return chain_product(self.layers)

    def copy(self) -> "DeepFactorization":
        return DeepFactorization([w.copy() for w in self.layers])


def init_factorization(n: int, depth: int, g: float, rng: np.random.Generator) -> DeepFactorization:
    """Gaussian layers with per-entry sd ``g**(1/depth) / sqrt(n)``."""
    if g <= 0 or depth < 1:
        raise ValueError("need g > 0 and depth >= 1")
    sd = g ** (1.0 / depth) / np.sqrt(n)
    return DeepFactorization([rng.normal(0.0, sd, size=(n, n)) for _ in range(depth)])


def diagonal_factorization(a0, depth: int) -> DeepFactorization:
    """Balanced init: every layer is ``diag(a0 ** (1/depth))`` so the product is ``diag(a0)``."""
    a0 = np.asarray(a0, dtype=float)
    if np.any(a0 <= 0):
        raise ValueError("initial singular values must be positive")
    d = np.diag(a0 ** (1.0 / depth))
    return DeepFactorization([d.copy() for _ in range(depth)])


def _product(fac_or_w) -> np.ndarray:
    return fac_or_w.product() if isinstance(fac_or_w, DeepFactorization) else as_matrix(fac_or_w)


def _mask_array(mask) -> np.ndarray:
    arr = mask.array() if isinstance(mask, ObservationMask) else np.asarray(mask, dtype=bool)
    if not arr.any():
        raise ValueError("mask observes no entries")
    return arr


def completion_loss(fac_or_w, m, mask) -> float:
    """Mean over observed cells of ``0.5 * (M_ij - W_ij)**2``."""
    w = _product(fac_or_w)
    obs = _mask_array(mask)
    diff = (m - w)[obs]
    return 0.5 * float(np.mean(diff ** 2))


def completion_gradient(w, m, mask, average: bool = True) -> np.ndarray:
    """Gradient of the completion loss with respect to the product matrix.

    ``-(M_ij - W_ij)`` on observed cells and 0 elsewhere, divided by the
    number of observed cells when ``average`` (matching :func:`completion_loss`).
    """
    obs = _mask_array(mask)
    g = np.where(obs, w - m, 0.0)
    if average:
        g /= np.count_nonzero(obs)
    return g


def gd_step(fac: DeepFactorization, m, mask, lr: float) -> DeepFactorization:
    """One gradient descent step on every layer, computed from pre-step weights."""
    if lr <= 0:
        raise ValueError("lr must be positive")
    w, below = chain_forward(fac.layers)
    grad = completion_gradient(w, m, mask)
    for d, g in enumerate(layer_gradients(fac.layers, grad, below)):
        fac.layers[d] = fac.layers[d] - lr * g
    return fac


def reconstruction_error(fac_or_w, m) -> float:
    """Average squared error per entry, ``||M - W||_F^2 / N^2``."""
    w = _product(fac_or_w)
    return float(np.mean((m - w) ** 2))


def relative_error(fac_or_w, m) -> float:
    """``||M - W||_F^2 / ||M||_F^2``."""
    w = _product(fac_or_w)
    return float(np.sum((m - w) ** 2) / np.sum(m ** 2))


def surviving_modes(w, rel: float = 0.01) -> int:
    """Number of singular values above ``rel`` times the largest."""
    s = np.linalg.svd(_product(w), compute_uv=False)
    return int(np.count_nonzero(s > rel * s[0]))


def balancedness(fac: DeepFactorization) -> list[np.ndarray]:
    """``W_{d+1}^T W_{d+1} - W_d W_d^T`` for each adjacent pair."""
    ls = fac.layers
    return [ls[d + 1].T @ ls[d + 1] - ls[d] @ ls[d].T for d in range(len(ls) - 1)]


def balancedness_drift(fac: DeepFactorization, initial: list[np.ndarray]) -> float:
    """Largest ``||B_d - B_d(0)||_F`` relative to the Gram terms ``B_d`` is built from."""
    ls = fac.layers
    out = 0.0
    for d, (b, b0) in enumerate(zip(balancedness(fac), initial)):
        scale = max(np.linalg.norm(ls[d + 1].T @ ls[d + 1]), np.linalg.norm(ls[d] @ ls[d].T))
        out = max(out, float(np.linalg.norm(b - b0) / scale))
    return out


def logged_singular_values(w: np.ndarray, count: int = N_LOGGED_SV) -> np.ndarray:
    s = np.linalg.svd(w, compute_uv=False)[:count]
    s = np.where(s < SV_FLOOR, 0.0, s)
    return np.pad(s, (0, count - s.size))


# -- schedules ---------------------------------------------------------------

@dataclass
class Phase:
    target: np.ndarray
    mask: ObservationMask
    epochs: int
    name: str = ""

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epoch budget must be nonnegative")
        if self.mask.n != self.target.shape[0]:
            raise ValueError("mask size does not match the ground truth")


@dataclass
class CompletionTaskSchedule:
    phases: list[Phase]

    @property
    def total_epochs(self) -> int:
        return sum(p.epochs for p in self.phases)


def log_columns(n_sv: int = N_LOGGED_SV) -> list[str]:
    return ["epoch", "phase", "train_loss", "recon_error"] + [f"sv_{i + 1}" for i in range(n_sv)]


def run_schedule(fac: DeepFactorization, schedule: CompletionTaskSchedule, lr: float,
                 log_every: int = 1, n_sv: int = N_LOGGED_SV) -> TrajectoryLog:
    """Train ``fac`` in place through every phase.

    Rows are written at epoch 0, every ``log_every`` epochs and at the end of
    each phase; ``recon_error`` is measured against the current phase's truth.
    """
    log = TrajectoryLog(log_columns(n_sv))

    def record(epoch, phase_idx, phase):
        w = fac.product()
        row = {"epoch": epoch, "phase": phase_idx,
               "train_loss": completion_loss(w, phase.target, phase.mask),
               "recon_error": reconstruction_error(w, phase.target)}
        row.update({f"sv_{i + 1}": float(x) for i, x in enumerate(logged_singular_values(w, n_sv))})
        log.append(**row)

    epoch = 0
    for idx, phase in enumerate(schedule.phases):
        obs = phase.mask.array()
        count = np.count_nonzero(obs)
        target = phase.target
        if idx == 0:
            record(0, 0, phase)
        start_loss = completion_loss(fac.product(), target, obs)
        for _ in range(phase.epochs):
            w, below = chain_forward(fac.layers)
            grad = np.where(obs, w - target, 0.0) / count
            for d, g in enumerate(layer_gradients(fac.layers, grad, below)):
                fac.layers[d] = fac.layers[d] - lr * g
            epoch += 1
            if epoch % log_every == 0:
                w = fac.product()
                if not np.all(np.isfinite(w)):
                    raise DivergenceError(f"non-finite weights at epoch {epoch}")
                current = completion_loss(w, target, obs)
                if current > 1e6 * max(start_loss, 1e-300):
                    raise DivergenceError(f"completion loss {current:.3g} diverged at epoch {epoch}")
                record(epoch, idx, phase)
        if phase.epochs and epoch % log_every != 0:
            record(epoch, idx, phase)
        if not np.all(np.isfinite(fac.product())):
            raise DivergenceError(f"non-finite weights at epoch {epoch}")
    return log


def run_transfer_experiment(schedule: CompletionTaskSchedule, depth: int, g: float, lr: float,
                            rng: np.random.Generator, log_every: int = 1,
                            n_sv: int = N_LOGGED_SV):
    """Fresh factorization trained through ``schedule``; returns ``(log, fac)``."""
    n = schedule.phases[0].target.shape[0]
    fac = init_factorization(n, depth, g, rng)
    return run_schedule(fac, schedule, lr, log_every, n_sv), fac


# -- standard experiment setups -------------------------------------------------

GT_NORMS = ("n", "n_over_r")


def ground_truth_norm(kind: str, n: int, r: int) -> float:
    """``"n"``: unit mean-square entries; ``"n_over_r"``: Frobenius norm n / r."""
    if kind == "n":
        return float(n)
    if kind == "n_over_r":
        return n / r
    raise ValueError(f"unknown ground-truth normalisation {kind!r}; expected one of {GT_NORMS}")


def _factor_pair(n, ranks, rng, norms):
    # shared Gaussian factors; task i uses the first ranks[i] rows
    top = max(ranks)
    left = rng.standard_normal((top, n))
    right = rng.standard_normal((top, n))
    out = []
    for r, norm in zip(ranks, norms):
        m = right[:r].T @ left[:r]
        out.append(m / np.linalg.norm(m) * norm)
    return out


@dataclass
class TransferSetup:
    pretrain: np.ndarray
    final: np.ndarray
    mask: ObservationMask
    fac: DeepFactorization


def transfer_setup(n: int, pretrain_rank: int, final_rank: int, observations: int, depth: int,
                   g: float, seed: int, gt_norm: str = "n",
                   pretrain_relation: str = "independent") -> TransferSetup:
    """Ground truths, mask and initial factorization for a task-switch run.

    Each ingredient draws from its own child stream of ``seed``, so changing
    e.g. the pre-training rank leaves the final task, mask and init untouched.
    ``pretrain_relation="nested"`` builds both tasks from shared Gaussian
    factors instead of independent draws.
    """
    streams = [np.random.Generator(np.random.PCG64(s))
               for s in np.random.SeedSequence(seed).spawn(4)]
    final_norm = ground_truth_norm(gt_norm, n, final_rank)
    pre_norm = ground_truth_norm(gt_norm, n, pretrain_rank)
    if pretrain_relation == "independent":
        final = low_rank_ground_truth(n, final_rank, streams[0], final_norm)
        pre = low_rank_ground_truth(n, pretrain_rank, streams[1], pre_norm)
    elif pretrain_relation == "nested":
        final, pre = _factor_pair(n, (final_rank, pretrain_rank), streams[0],
                                  (final_norm, pre_norm))
    else:
        raise ValueError(f"unknown pretrain_relation {pretrain_relation!r}")
    mask = sample_mask(n, observations, streams[2])
    fac = init_factorization(n, depth, g, streams[3])
    return TransferSetup(pre, final, mask, fac)


def transfer_run(n: int = 100, depth: int = 3, g: float = 0.01, lr: float = 0.2,
                 pretrain_rank: int = 10, final_rank: int = 5, observations: int = 2000,
                 pretrain_epochs: int = 0, final_epochs: int = 30000, seed: int = 0,
                 gt_norm: str = "n", pretrain_relation: str = "independent",
                 log_every: int = 500):
    """Pre-train on one task, then train on the final task with the same mask.

    Returns ``(log, metrics)``; metrics are measured on the final task.
    """
    setup = transfer_setup(n, pretrain_rank, final_rank, observations, depth, g, seed,
                           gt_norm, pretrain_relation)
    phases = []
    if pretrain_epochs:
        phases.append(Phase(setup.pretrain, setup.mask, pretrain_epochs, "pretrain"))
    phases.append(Phase(setup.final, setup.mask, final_epochs, "final"))
    log = run_schedule(setup.fac, CompletionTaskSchedule(phases), lr, log_every)
    return log, final_metrics(setup.fac, setup.final, setup.mask)


def final_metrics(fac: DeepFactorization, target: np.ndarray, mask) -> dict:
    w = fac.product()
    s = np.linalg.svd(w, compute_uv=False)
    return {"recon_error": reconstruction_error(w, target),
            "relative_error": relative_error(w, target),
            "train_loss": completion_loss(w, target, mask),
            "surviving_modes": int(np.count_nonzero(s > 0.01 * s[0])),
            "top_singular_values": [float(x) for x in s[:N_LOGGED_SV]]}


def partial_observation_experiment(n_pre: int, n_final: int, durations, n: int = 100,
                                   depth: int = 3, g: float = 0.01, lr: float = 0.2,
                                   rank: int = 5, final_epochs: int = 30000, seed: int = 0,
                                   gt_norm: str = "n") -> list[dict]:
    """Deficit of seeing only ``n_pre`` of the final task's ``n_final`` cells.

    For each pre-phase duration the same final task, masks and init are used;
    duration 0 is the single-phase baseline.
    """
    if not 1 <= n_pre <= n_final:
        raise ValueError(f"need 1 <= n_pre <= n_final, got {n_pre}, {n_final}")
    streams = [np.random.Generator(np.random.PCG64(s))
               for s in np.random.SeedSequence(seed).spawn(4)]
    target = low_rank_ground_truth(n, rank, streams[0], ground_truth_norm(gt_norm, n, rank))
    full = sample_mask(n, n_final, streams[1])
    partial = full.subset(n_pre, streams[2])
    init = init_factorization(n, depth, g, streams[3])
    out = []
    for duration in durations:
        fac = init.copy()
        phases = []
        if duration:
            phases.append(Phase(target, partial, int(duration), "partial"))
        phases.append(Phase(target, full, final_epochs, "final"))
        run_schedule(fac, CompletionTaskSchedule(phases), lr, log_every=max(final_epochs, 1))
        metrics = final_metrics(fac, target, full)
        metrics.update(duration=int(duration), n_pre=n_pre, n_final=n_final)
        out.append(metrics)
    return out
