import numpy as np
import pytest

from critperiods.deficits import NO_DEFICIT, DeficitSchedule, Window
from critperiods.errors import DivergenceError
from critperiods.linalg import make_rng, svd
from critperiods.multipath import init_aligned, pathway_contributions, train_epoch
from critperiods.reduced import (ModeState, PhasePortrait, ReducedSystem, balanced_velocity,
                                 conserved, flow_field, initial_states, integrate,
                                 phase_portrait, step_reduced)
from critperiods.tasks import hierarchical_task
from oracles import euler_scalar


def test_conserved_examples():
    assert conserved(ModeState(0.005, 0.005, 3)) == 0.0
    assert abs(ModeState(1.0005, 0.01, 2).conserved() - 1.0) < 1e-3
    assert ModeState(2.0, 0.5, 3).k == 0.5 * 4.0


def test_step_matches_scalar_loop():
    sys = ReducedSystem([[0.7]], [[0.2]], [3.0], (4,), 0.01)
    for e in range(50):
        step_reduced(sys, e)
    q, p = euler_scalar(0.7, 0.2, 3.0, 4, 0.01, 50)
    assert abs(sys.q[0, 0] - q) < 1e-13 and abs(sys.p[0, 0] - p) < 1e-13


def test_fixed_point_gives_zero_update():
    sys = ReducedSystem([[1.0], [1.0]], [[1.0], [2.0]], [3.0], 2, 0.1)
    before = sys.copy()
    step_reduced(sys)
    assert np.array_equal(sys.q, before.q) and np.array_equal(sys.p, before.p)


def test_simultaneous_update_uses_pre_step_values():
    sys = ReducedSystem([[0.5], [0.4]], [[0.3], [0.2]], [2.0], 3, 0.05)
    k0 = sys.k().sum()
    q0, p0 = sys.q.copy(), sys.p.copy()
    step_reduced(sys)
    r = 2.0 - k0
    assert np.allclose(sys.q, q0 + 0.05 * q0 * p0 * r)
    assert np.allclose(sys.p, p0 + 0.05 * q0 ** 2 * r)


def test_depth2_balanced_is_logistic_form():
    # with q = p at depth 2, dk = step * 2k (s - k) to first order
    sys = ReducedSystem([[0.1]], [[0.1]], [1.0], 2, 1e-4)
    k0 = sys.k()[0, 0]
    step_reduced(sys)
    dk = sys.k()[0, 0] - k0
    assert abs(dk - 1e-4 * 2 * k0 * (1.0 - k0)) < 1e-9


def test_gated_pathway_frozen_but_in_residual():
    sched = DeficitSchedule.gate("b", 0, 10)
    sys = ReducedSystem([[0.3], [0.3]], [[0.3], [0.3]], [1.0], 3, 0.01, sched)
    qb, pb = sys.q[1].copy(), sys.p[1].copy()
    solo = ReducedSystem([[0.3]], [[0.3]], [1.0 - 0.3 ** 3], 3, 0.01)
    for e in range(10):
        step_reduced(sys, e)
        step_reduced(solo, e)
    assert np.array_equal(sys.q[1], qb) and np.array_equal(sys.p[1], pb)
    assert np.allclose(sys.q[0], solo.q[0], atol=1e-15)


def test_lesion_zeroes_mode():
    sched = DeficitSchedule((Window(0, None, "a", "lesion", 0),))
    sys = ReducedSystem([[0.3, 0.3], [0.3, 0.3]], [[0.3, 0.3], [0.3, 0.3]], [1.0, 2.0], 3, 0.01,
                        sched)
    integrate(sys, 5)
    assert sys.q[0, 0] == 0.0 and sys.p[0, 0] == 0.0 and sys.q[0, 1] > 0.3


def test_divergence_and_validation():
    sys = ReducedSystem([[3.0]], [[3.0]], [100.0], 4, 1.0)
    with pytest.raises(DivergenceError):
        with np.errstate(all="ignore"):
            integrate(sys, 100)
    with pytest.raises(ValueError):
        step_reduced(ReducedSystem([[1.0]], [[1.0]], [1.0], 2, 0.0))
    with pytest.raises(ValueError):
        ReducedSystem([[1.0]], [[1.0]], [1.0, 2.0], 2, 0.1)
    with pytest.raises(ValueError):
        ReducedSystem([[1.0]], [[1.0]], [1.0], 1, 0.1)


def test_integrate_records_initial_and_final():
    sys = ReducedSystem([[0.1]], [[0.1]], [1.0], 2, 0.01)
    snaps = integrate(sys, 25, record_every=10)
    assert snaps.shape == (4, 1, 1)  # 0, 10, 20, 25


def test_reduced_matches_network_training():
    task = hierarchical_task()
    tsvd = svd(task)
    net = init_aligned(tsvd, 4, 30, scale=0.01, rng=make_rng(0))
    sched = DeficitSchedule.gate("b", 0, 50)
    sys = ReducedSystem.from_network(net, tsvd.a, 0.01, sched)
    worst = 0.0
    for e in range(300):
        _, c = train_epoch(net, task, 0.01, sched, e, tsvd)
        step_reduced(sys, e)
        worst = max(worst, np.abs(c.k - sys.k()).max())
    assert worst < 1e-10


def test_flow_field_properties(tmp_path):
    ff = flow_field(3, 10.0, [0.0, 2.0, 5.0, 8.0], [0.0, 2.0, 5.0, 8.0])
    # zero on the solution line k_a + k_b = sigma
    on_line = np.isclose(ff.x + ff.y, 10.0)
    assert np.all(ff.magnitude[on_line] == 0)
    diag = np.isclose(ff.x, ff.y) & (ff.magnitude > 0)
    assert np.allclose(ff.dx[diag], ff.dy[diag])
    text = ff.to_csv(tmp_path / "f.csv")
    assert text.splitlines()[0] == "x,y,dx,dy,magnitude"
    assert len(text.splitlines()) == 17
    with pytest.raises(ValueError):
        flow_field(2, 1.0, [-1.0], [0.0])


def test_flow_direction_sharpens_with_depth():
    ratios = {}
    for depth in (2, 13):
        va, vb = balanced_velocity(depth, 10.0, 0.2, 0.1)
        ratios[depth] = va / vb
        assert np.isclose(va / vb, 2.0 ** (2 - 2 / depth))
    assert ratios[13] > ratios[2]


def test_initial_state_families():
    q, p = initial_states(50, "unit-conserved", make_rng(0))
    assert np.allclose(q ** 2 - p ** 2, 1.0)
    q, p = initial_states(3, "small-balanced", make_rng(0), eps=0.005)
    assert np.all(q == 0.005) and np.all(p == 0.005)
    with pytest.raises(ValueError):
        initial_states(3, "other", make_rng(0))


def test_phase_portrait_converges_to_solution_line():
    pp = phase_portrait(2, 10.0, 100, "unit-conserved", NO_DEFICIT, 0.001, 1000, make_rng(0),
                        record_every=100)
    assert isinstance(pp, PhasePortrait)
    assert np.abs(pp.endpoints.sum(axis=1) - 10.0).max() < 1e-3
    log = pp.to_log()
    assert log.columns == ["trial", "epoch", "q_a", "p_a", "q_b", "p_b", "k_a", "k_b"]
    assert len(log) == 100 * 11
    with pytest.raises(ValueError):
        phase_portrait(2, 1.0, 0, "unit-conserved", NO_DEFICIT, 0.001, 10, make_rng(0))


def test_small_balanced_deficit_grows_with_depth():
    # desk-scale small-balanced family: 5-epoch deficit at step 0.01. sigma = 10
    # instead of 1 shortens the escape from eps = 0.005 tenfold while staying stable.
    shares = []
    for depth, epochs in ((2, 5000), (3, 20000), (4, 250000)):
        pp = phase_portrait(depth, 10.0, 1, "small-balanced", DeficitSchedule.gate("b", 0, 5),
                            0.01, epochs, make_rng(0), record_every=10**7)
        ka, kb = pp.endpoints[0]
        assert abs(ka + kb - 10.0) < 1e-3
        shares.append(ka / 10.0)
    assert shares[0] > 0.5 and shares[0] < shares[1] < shares[2]


def test_conservation_with_balanced_init_is_exact():
    sys = ReducedSystem([[0.3, 0.2]], [[0.3, 0.2]], [3.0, 1.0], 4, 0.001)
    integrate(sys, 1000)
    assert np.all(sys.conserved() == 0.0)
