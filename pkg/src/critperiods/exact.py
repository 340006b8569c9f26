"""Spectral dynamics of a balanced deep factorization, integrated directly.

For ``W = U diag(a) V^T`` evolving under gradient flow of a depth-``D``
factorization from a balanced start,

    tau da_r/dt = -D a_r^(2 - 2/D) u_r^T G v_r
    tau dU/dt   = -U (F * [U^T G V A + A V^T G^T U]) - (I - U U^T) G V (A^2)^(1/2 - 1/D)
    tau dV/dt   = -V (F * [A U^T G V + V^T G^T U A]) - (I - V V^T) G^T U (A^2)^(1/2 - 1/D)

with ``G`` the loss gradient at ``W`` and ``F[r, r'] = 1 / (a_r'^(2/D) - a_r^(2/D))``
off the diagonal. The coupling exponent uses the network depth ``D``.

For depth 2 with complete observations and aligned singular vectors each
mode follows a closed-form logistic curve, which also gives task transfer in
closed form when both tasks share singular vectors.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .completion import (N_LOGGED_SV, DeepFactorization, completion_gradient,
                         diagonal_factorization, ground_truth_norm, logged_singular_values)
from .errors import DivergenceError, FSingularityError
from .linalg import chain_forward, complete_basis, layer_gradients
from .tasks import ObservationMask, TaskPair, low_rank_ground_truth, nested_task_pair, sample_mask
from .trajectory import TrajectoryLog

__all__ = [
    "SpectralState", "coupling_matrix", "step_exact", "completion_gradient",
    "AnalyticalParams", "analytical_trajectory", "analytical_transfer",
    "transfer_params", "exact_compare", "analytical_compare",
]

MIN_GAP = 1e-8
MIN_VALUE = 1e-10
ORTHO_TOL = 1e-8


@dataclass
class SpectralState:
    u: np.ndarray
    a: np.ndarray
    v: np.ndarray
    depth: int
    tau: float = 1.0

    def product(self) -> np.ndarray:
        return (self.u * self.a) @ self.v.T

    def orthonormality_error(self) -> float:
        r = self.a.size
        return float(max(np.abs(self.u.T @ self.u - np.eye(r)).max(),
                         np.abs(self.v.T @ self.v - np.eye(r)).max()))

    @classmethod
    def diagonal(cls, a0, depth: int, tau: float = 1.0) -> "SpectralState":
        """State of a factorization whose layers are all diagonal: ``U = V = I``."""
        a0 = np.asarray(a0, dtype=float)
        n = a0.size
        return cls(np.eye(n), a0.copy(), np.eye(n), depth, tau)


def check_separation(a: np.ndarray) -> None:
    if np.any(np.abs(a) <= MIN_VALUE):
        raise FSingularityError(f"F-singularity: singular value below {MIN_VALUE:g}")
    srt = np.sort(a)
    gaps = np.diff(srt)
    if gaps.size and gaps.min() <= MIN_GAP:
        i = int(np.argmin(gaps))
        raise FSingularityError(
            f"F-singularity: singular values {srt[i]:.6g} and {srt[i + 1]:.6g} are within {MIN_GAP:g}")


def coupling_matrix(a: np.ndarray, depth: int) -> np.ndarray:
    """Skew-symmetric ``F`` with ``1 / (a_r'^(2/D) - a_r^(2/D))`` off the diagonal."""
    powered = (a ** 2) ** (1.0 / depth)
    diff = powered[None, :] - powered[:, None]
    np.fill_diagonal(diff, 1.0)
    f = 1.0 / diff
    np.fill_diagonal(f, 0.0)
    return f


def _reorthonormalize(q: np.ndarray) -> np.ndarray:
    qq, r = np.linalg.qr(q)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return qq * signs


def step_exact(state: SpectralState, grad: np.ndarray, dt: float) -> SpectralState:
    """Forward-Euler step of the spectral equations; returns a new state."""
    check_separation(state.a)
    u, a, v, depth = state.u, state.a, state.v, state.depth
    rate = dt / state.tau
    gt = u.T @ grad @ v
    f = coupling_matrix(a, depth)
    a_new = a - rate * depth * (a ** 2) ** (1.0 - 1.0 / depth) * np.diag(gt)
    du = -u @ (f * (gt * a[None, :] + a[:, None] * gt.T))
    dv = -v @ (f * (a[:, None] * gt + gt.T * a[None, :]))
    if u.shape[1] < u.shape[0]:
        scale = (a ** 2) ** (0.5 - 1.0 / depth)
        gv = grad @ v
        du -= (gv - u @ (u.T @ gv)) * scale
        gtu = grad.T @ u
        dv -= (gtu - v @ (v.T @ gtu)) * scale
    u_new = u + rate * du
    v_new = v + rate * dv
    if not (np.all(np.isfinite(a_new)) and np.all(np.isfinite(u_new)) and np.all(np.isfinite(v_new))):
        raise DivergenceError("exact spectral integration produced non-finite values")
    out = SpectralState(u_new, a_new, v_new, depth, state.tau)
    eye = np.eye(a.size)
    if np.abs(u_new.T @ u_new - eye).max() > ORTHO_TOL:
        out.u = _reorthonormalize(u_new)
    if np.abs(v_new.T @ v_new - eye).max() > ORTHO_TOL:
        out.v = _reorthonormalize(v_new)
    return out


# -- closed form, depth 2 ---------------------------------------------------

@dataclass
class AnalyticalParams:
    s_alpha: np.ndarray
    a0: np.ndarray
    tau: float

    def __post_init__(self):
        self.s_alpha = np.atleast_1d(np.asarray(self.s_alpha, dtype=float))
        self.a0 = np.broadcast_to(np.asarray(self.a0, dtype=float), self.s_alpha.shape).copy()
        if np.any(self.a0 <= 0):
            raise ValueError("initial values a0 must be positive")
        if np.any(self.s_alpha < 0):
            raise ValueError("target singular values must be nonnegative")
        if self.tau <= 0:
            raise ValueError("tau must be positive")


def analytical_trajectory(params: AnalyticalParams, t) -> np.ndarray:
    """Depth-2 mode values at time(s) ``t``; shape ``t.shape + (modes,)``.

    ``a(t) = s e^{2st/tau} / (e^{2st/tau} - 1 + s/a0)``, evaluated as
    ``a0 / (e^{-x} + a0 h)`` with ``x = 2st/tau`` and
    ``h = (1 - e^{-x}) / s``. This never overflows, stays accurate for tiny
    ``s`` and reduces to ``a0 / (1 + 2 a0 t / tau)`` at ``s = 0``.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    s, a0, tau = params.s_alpha, params.a0, params.tau
    tt = t[..., None]
    x = 2.0 * s * tt / tau
    pos = s > 0
    h = np.where(pos, -np.expm1(-x) / np.where(pos, s, 1.0), 2.0 * tt / tau)
    return a0 / (np.exp(-x) + a0 * h)


def analytical_transfer(params_a: AnalyticalParams, params_b: AnalyticalParams,
                        t_switch: float, t) -> np.ndarray:
    """Task A until ``t_switch``, then task B restarted from ``a(t_switch)``.

    Only ``params_b.s_alpha`` is used from the second task; ``params_b.a0`` is
    replaced by the value reached at the switch.
    """
    if params_a.s_alpha.shape != params_b.s_alpha.shape:
        raise ValueError("both tasks must describe the same modes")
    t = np.asarray(t, dtype=float)
    at_switch = analytical_trajectory(params_a, np.array(float(t_switch)))
    after = AnalyticalParams(params_b.s_alpha, at_switch, params_b.tau)
    before = analytical_trajectory(params_a, np.minimum(t, t_switch))
    later = analytical_trajectory(after, np.maximum(t - t_switch, 0.0))
    return np.where((t <= t_switch)[..., None], before, later)


def transfer_params(pair: TaskPair, a0: float, tau: float):
    """Closed-form parameters for both tasks of a pair that shares singular vectors."""
    if not pair.shared_svd:
        raise ValueError("analytical transfer needs tasks with shared singular vectors")
    _, s_a, s_b, _ = pair.spectra()
    return AnalyticalParams(s_a, a0, tau), AnalyticalParams(np.clip(s_b, 0.0, None), a0, tau)


# -- cross-checks against gradient descent ------------------------------------

def _streams(seed: int, count: int):
    return [np.random.Generator(np.random.PCG64(s))
            for s in np.random.SeedSequence(seed).spawn(count)]


def _gd_epoch(fac: DeepFactorization, target, obs, count, lr):
    w, below = chain_forward(fac.layers)
    grad = np.where(obs, w - target, 0.0) / count
    for d, g in enumerate(layer_gradients(fac.layers, grad, below)):
        fac.layers[d] = fac.layers[d] - lr * g


def exact_compare(n: int = 100, depth: int = 3, lr: float = 0.25, ranks=(8, 2),
                  observations: int = 1750, switch_epoch: int = 15000, post_epochs: int = 10000,
                  init_scale: float = 1e-2, init_floor: float = 0.01, seed: int = 0,
                  gt_norm: str = "n", log_every: int = 100):
    """Train a diagonal-initialised factorization and integrate the spectral ODE side by side.

    The product starts at ``diag(a0)`` with ``a0`` geometrically spaced from
    ``init_scale`` down to ``init_scale * init_floor``; geometric spacing keeps
    the small, barely coupled modes well separated. One Euler step
    (``dt = 1``, ``tau = 1/lr``) per epoch. Returns ``(log, metrics)`` where
    ``log`` has a ``source`` column in {gd, exact}.
    """
    streams = _streams(seed, 3)
    tasks = [low_rank_ground_truth(n, r, streams[i], ground_truth_norm(gt_norm, n, r))
             for i, r in enumerate(ranks)]
    mask = sample_mask(n, observations, streams[2])
    obs = mask.array()
    count = len(mask)
    a0 = init_scale * np.geomspace(1.0, init_floor, n)
    fac = diagonal_factorization(a0, depth)
    state = SpectralState.diagonal(a0, depth, tau=1.0 / lr)
    budgets = [switch_epoch, post_epochs]
    log = TrajectoryLog(["source", "epoch", "phase"] + [f"sv_{i + 1}" for i in range(N_LOGGED_SV)])
    worst = 0.0

    def record(epoch, phase):
        nonlocal worst
        sv_gd = logged_singular_values(fac.product())
        sv_ex = np.sort(np.abs(state.a))[::-1][:N_LOGGED_SV]
        sv_ex = np.pad(sv_ex, (0, N_LOGGED_SV - sv_ex.size))
        worst = max(worst, float(np.abs(sv_gd - sv_ex).max()))
        for src, sv in (("gd", sv_gd), ("exact", sv_ex)):
            log.append(source=src, epoch=epoch, phase=phase,
                       **{f"sv_{i + 1}": float(x) for i, x in enumerate(sv)})

    record(0, 0)
    epoch = 0
    for phase, (target, budget) in enumerate(zip(tasks, budgets)):
        for _ in range(budget):
            grad = completion_gradient(state.product(), target, obs)
            _gd_epoch(fac, target, obs, count, lr)
            state = step_exact(state, grad, 1.0)
            epoch += 1
            if epoch % log_every == 0 or epoch == sum(budgets):
                record(epoch, phase)
    s_max = max(float(np.linalg.svd(m, compute_uv=False)[0]) for m in tasks)
    metrics = {"max_abs_deviation": worst, "s_max": s_max,
               "relative_deviation": worst / s_max,
               "final_orthonormality_error": state.orthonormality_error()}
    return log, metrics


def analytical_compare(n: int = 100, r_b: int = 5, s_r: float = 20.0, lam: float = 0.5,
                       eps: float = 0.01, observations: int | None = None,
                       switch_epoch: int = 10000, post_epochs: int = 20000, seed: int = 0,
                       gt_norm: str = "n_over_r", log_every: int = 100):
    """Depth-2 training from ``W(0) = eps^2 U V^T`` against the closed-form transfer curve.

    Task A is ``M_b + s_r u v^T``; after ``switch_epoch`` epochs the target
    becomes ``M_b``. ``observations=None`` observes every entry. Time constant
    is ``tau = n^2 / lam`` (averaged loss). Mode values of the network are the
    diagonal of ``U^T W V`` in the shared basis. Returns ``(log, metrics)``.
    """
    streams = _streams(seed, 3)
    norm = ground_truth_norm(gt_norm, n, r_b)
    pair = nested_task_pair(n, r_b, s_r, streams[0], norm=norm)
    u, s_a, s_b, v = pair.spectra()
    mask = ObservationMask.full(n) if observations is None else sample_mask(n, observations, streams[1])
    obs = mask.array()
    count = len(mask)
    u_full = complete_basis(u, streams[2])
    v_full = complete_basis(v, streams[2])
    fac = DeepFactorization([eps * v_full.T, eps * u_full])
    tau = n * n / lam
    params_a, params_b = transfer_params(pair, eps ** 2, tau)
    s_ref = np.maximum(s_a, s_b)
    modes = s_a.size
    cols = ["source", "epoch", "phase"] + [f"mode_{i + 1}" for i in range(modes)]
    log = TrajectoryLog(cols, meta={"s_a": s_a.tolist(), "s_b": s_b.tolist(), "tau": tau})
    worst = np.zeros(modes)

    def record(epoch, phase):
        w = fac.product()
        sim = np.einsum("ia,ij,ja->a", u, w, v)
        pred = analytical_transfer(params_a, params_b, switch_epoch, np.array(float(epoch)))
        worst[:] = np.maximum(worst, np.abs(sim - pred) / s_ref)
        for src, vals in (("gd", sim), ("analytical", pred)):
            log.append(source=src, epoch=epoch, phase=phase,
                       **{f"mode_{i + 1}": float(x) for i, x in enumerate(vals)})

    record(0, 0)
    epoch = 0
    total = switch_epoch + post_epochs
    for phase, (target, budget) in enumerate(((pair.m_a, switch_epoch), (pair.m_b, post_epochs))):
        for _ in range(budget):
            _gd_epoch(fac, target, obs, count, lam)
            epoch += 1
            if not np.all(np.isfinite(fac.layers[0])):
                raise DivergenceError(f"non-finite weights at epoch {epoch}")
            if epoch % log_every == 0 or epoch == total:
                record(epoch, phase)
    sv = np.linalg.svd(fac.product(), compute_uv=False)
    metrics = {"max_relative_deviation": worst.tolist(),
               "worst_relative_deviation": float(worst.max()),
               "surviving_modes": int(np.count_nonzero(sv > 0.01 * sv[0])),
               "s_a": s_a.tolist(), "s_b": s_b.tolist(),
               "observations": count}
    return log, metrics
