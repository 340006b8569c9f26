"""
A critical period in matrix completion
======================================

A depth-3 factorization first fits a rank-10 matrix on 2000 observed entries,
then switches to the rank-5 matrix it is meant to recover. The longer the
first phase, the worse the final recovery. At depth 1 the unobserved entries
never move, so pre-training cannot bias them.
"""
from critperiods import transfer_run

# shortened from 30000 final epochs so the script runs in about a minute
for pretrain in (0, 5000, 20000):
    _, m = transfer_run(depth=3, pretrain_epochs=pretrain, final_epochs=10000)
    print(f"pre-training {pretrain:5d} epochs: error {m['recon_error']:.4f}, "
          f"{m['surviving_modes']} modes above 1% of the largest")

# the small gap left at depth 1 is the observed entries still converging, since the
# averaged loss moves each of them by only lr / 2000 per epoch
for pretrain in (0, 5000):
    _, m = transfer_run(depth=1, pretrain_epochs=pretrain, final_epochs=10000)
    print(f"depth 1, pre-training {pretrain:5d} epochs: error {m['recon_error']:.6f}")
