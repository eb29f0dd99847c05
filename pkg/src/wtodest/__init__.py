"""Protocol-scheduled remote state estimation for Markov-switched delayed
neural networks: model definition, scheduling, matrix-inequality certification,
gain synthesis, and closed-loop Monte Carlo validation."""

from .augment import (AugmentedPlant, ClosedLoopSystem, EstimatorGains,
                      build_augmented, build_closed_loop)
from .model import (Activation, DelaySpec, MjnnModel, ModeMatrices,
                    ModelBundle, ModelValidationError, SectorBounds,
                    TransitionCompletion, TransitionSpec, Violation,
                    completion_from_spec, load_model_file, model_violations,
                    validate_model)
from .protocol import NodePartition, SchedulerState, WtodWeights, make_weights
from .lmi import (LmiProblem, assemble_analysis_known,
                  assemble_analysis_partial, assemble_performance,
                  assemble_synthesis, extract_gains)
from .sdp import SolveOutcome, Status, minimize_linear, solve_feasibility
from .synthesis import (CclConfig, SynthesisResult, SynthesisStatus,
                        bisect_gamma, ccl_synthesize, verify_gains)
from .simulate import (DisturbanceSignal, EnsembleMetrics, Trajectory,
                       empirical_l2linf, lyapunov_delta_check,
                       mean_square_decay, simulate)

__all__ = [name for name in dir() if not name.startswith("_")]
