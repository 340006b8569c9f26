import numpy as np
import pytest

from critperiods.deficits import NO_DEFICIT, DeficitSchedule, Window
from critperiods.errors import DivergenceError
from critperiods.linalg import chain_product, make_rng, svd
from critperiods.multipath import (MultipathConfig, PathwayNetwork, init_aligned, loss,
                                   pathway_contributions, run_multipath_experiment,
                                   trajectory_columns, train_epoch)
from critperiods.tasks import hierarchical_task
from oracles import central_difference

TASK = hierarchical_task()
TASK_SVD = svd(TASK)


def small_net(seed=0, depth=3, width=6):
    rng = make_rng(seed)
    pathways = []
    for _ in range(2):
        dims = [8] + [width] * (depth - 1) + [15]
        pathways.append([0.3 * rng.standard_normal((dims[i + 1], dims[i])) for i in range(depth)])
    return PathwayNetwork(pathways, width)


def test_gradient_step_matches_finite_differences():
    net = small_net()
    before = net.copy()
    lr = 1e-3
    train_epoch(net, TASK, lr)
    for a in range(2):
        for d in range(3):
            def f(x, a=a, d=d):
                trial = before.copy()
                trial.pathways[a][d] = x
                return loss(trial, TASK)
            fd = central_difference(f, before.pathways[a][d].copy())
            step = (before.pathways[a][d] - net.pathways[a][d]) / lr
            assert np.allclose(step, fd, rtol=1e-5, atol=1e-8)


def test_exact_solution_gives_zero_update():
    rng = make_rng(1)
    first = rng.standard_normal((8, 8))
    last = TASK @ np.linalg.inv(first)
    zero = np.zeros((15, 8))
    net = PathwayNetwork([[first, last], [np.zeros((8, 8)), zero]], 8)
    before = net.copy()
    train_epoch(net, TASK, 0.1)
    for a in range(2):
        for w0, w1 in zip(before.pathways[a], net.pathways[a]):
            assert np.allclose(w0, w1, atol=1e-12)


def test_gated_pathway_is_bitwise_frozen_but_still_competes():
    net = small_net(2)
    schedule = DeficitSchedule.gate("b", 0, 5)
    frozen = [w.copy() for w in net.pathways[1]]
    reference = net.copy()
    for e in range(5):
        train_epoch(net, TASK, 0.01, schedule, e)
        train_epoch(reference, TASK, 0.01, NO_DEFICIT, e)
    for w0, w1 in zip(frozen, net.pathways[1]):
        assert np.array_equal(w0, w1)
    # pathway a sees b's fixed output in its residual
    solo = PathwayNetwork([[w.copy() for w in small_net(2).pathways[0]]], 6)
    for e in range(5):
        train_epoch(solo, TASK - chain_product(frozen), 0.01)
    for w0, w1 in zip(solo.pathways[0], net.pathways[0]):
        assert np.allclose(w0, w1, atol=1e-13)
    train_epoch(net, TASK, 0.01, schedule, 5)
    assert not np.array_equal(frozen[0], net.pathways[1][0])


def test_aligned_init_is_diagonal_in_task_basis():
    net = init_aligned(TASK_SVD, 4, 20, scale=0.01, noise_sd=1e-3, rng=make_rng(0))
    c = pathway_contributions(net, TASK_SVD)
    assert np.all(c.offdiag < 1e-12)
    assert np.allclose(c.k, net.init_diag ** 4, atol=1e-14)
    assert np.allclose(net.init_diag[0], net.init_diag[1])
    assert np.allclose(net.init_diag.mean(), 0.01 ** 0.25, atol=5e-3)


def test_init_aligned_validation():
    with pytest.raises(ValueError):
        init_aligned(TASK_SVD, 1)
    with pytest.raises(ValueError):
        init_aligned(TASK_SVD, 3, hidden_width=4)
    with pytest.raises(ValueError):
        init_aligned(TASK_SVD, (3, 4, 5))


def test_lesion_removes_mode_from_pathway():
    net = init_aligned(TASK_SVD, 3, 20, scale=0.5, rng=make_rng(0))
    schedule = DeficitSchedule((Window(0, None, "a", "lesion", 1),))
    for e in range(10):
        _, c = train_epoch(net, TASK, 0.01, schedule, e, TASK_SVD)
        assert abs(c.k[0, 1]) < 1e-12
    assert abs(c.k[1, 1]) > 0
    with pytest.raises(ValueError):
        train_epoch(net, TASK, 0.01, schedule, 0)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_raises():
    net = init_aligned(TASK_SVD, 3, 20, scale=1.0, rng=make_rng(0))
    with pytest.raises(DivergenceError):
        for e in range(200):
            train_epoch(net, TASK, 5.0, NO_DEFICIT, e)
    with pytest.raises(ValueError):
        train_epoch(net, TASK, -1.0)


def test_mismatched_layers_rejected():
    with pytest.raises(ValueError):
        PathwayNetwork([[np.zeros((4, 8)), np.zeros((15, 5))]], 4)


def test_run_logs_expected_columns_and_rows():
    cfg = MultipathConfig(depth=3, epochs=20, log_every=5, hidden_width=20)
    log, net, tsvd = run_multipath_experiment(cfg)
    assert log.columns == trajectory_columns(8)
    assert list(log.column("epoch")) == [0, 5, 10, 15, 20]
    assert log.column("loss")[-1] < log.column("loss")[0]


def test_mixed_depth_pathways():
    cfg = MultipathConfig(depth=(2, 4), epochs=5, hidden_width=20)
    log, net, _ = run_multipath_experiment(cfg)
    assert net.depths == (2, 4)
