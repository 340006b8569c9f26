"""Critical learning periods in deep linear networks.

Multi-pathway competition under gating deficits, matrix completion with
pre-training deficits, and the reduced, exact and analytical dynamics that
describe both.
"""
__version__ = "0.1.0"

from .errors import (ConfigError, CritPeriodsError, DivergenceError, FSingularityError,
                     NonFiniteError)
from .linalg import (SvdTriple, align_modes, as_matrix, chain_product, frobenius, make_rng,
                     matrix_from_csv, matrix_from_json, matrix_to_csv, matrix_to_json, svd)
from .tasks import (ObservationMask, TaskPair, hierarchical_task, hierarchical_task_checksum,
                    low_rank_ground_truth, nested_task_pair, sample_mask)
from .trajectory import TrajectoryLog
from .deficits import NO_DEFICIT, DeficitSchedule, Window
from .multipath import (MultipathConfig, PathwayNetwork, init_aligned, pathway_contributions,
                        run_multipath_experiment, train_epoch)
from .reduced import (ModeState, ReducedSystem, conserved, flow_field, integrate,
                      phase_portrait, step_reduced)
from .completion import (CompletionTaskSchedule, DeepFactorization, Phase, completion_gradient,
                         completion_loss, gd_step, init_factorization, reconstruction_error,
                         run_transfer_experiment, transfer_run)
from .exact import (AnalyticalParams, SpectralState, analytical_trajectory, analytical_transfer,
                    step_exact)
