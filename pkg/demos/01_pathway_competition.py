"""
Two pathways competing for one task
===================================

Two deep linear pathways learn the same hierarchical task. Gating one of them
early hands the whole task to the other, and the reduced scalar equations
track the trained network epoch by epoch.
"""
import numpy as np

from critperiods import (DeficitSchedule, MultipathConfig, ReducedSystem, init_aligned,
                         integrate, make_rng, run_multipath_experiment)

# gate pathway b for the first 150 epochs
schedule = DeficitSchedule.gate("b", 0, 150)
cfg = MultipathConfig(depth=4, lr=0.01, epochs=1500, schedule=schedule, log_every=10)
log, net, task_svd = run_multipath_experiment(cfg)

final = log.last()
r = task_svd.rank
k_a = np.array([final[f"k_a_{i + 1}"] for i in range(r)])
k_b = np.array([final[f"k_b_{i + 1}"] for i in range(r)])
print("target singular values", np.round(task_svd.a, 3))
print("pathway a learned     ", np.round(k_a, 3))
print("pathway b learned     ", np.round(k_b, 3))

# the same run through the per-mode scalar equations, from the same initial weights
init = init_aligned(task_svd, 4, cfg.hidden_width, cfg.scale, cfg.noise_sd, make_rng(cfg.seed))
sys = ReducedSystem.from_network(init, task_svd.a, cfg.lr, schedule)
snaps = integrate(sys, cfg.epochs, record_every=10)
gd = np.stack([np.stack([log.column(f"k_{p}_{i + 1}") for i in range(r)], axis=1)
               for p in ("a", "b")], axis=1)
print("largest gap between ODE and training:", np.abs(gd - snaps).max())
