"""Decentralized aspiration-based learning in finite discounted stochastic games."""
from .analysis import (analyze, cumber_report, equilibrium_set_deterministic, is_common_interest,
                       is_weakly_acyclic, minimal_cumber_sets, minimal_lambda_cumber_sets,
                       strict_best_reply_successors, team_optimal_set)
from .chain import (ChainModel, UpdateKernel, dobrushin_coefficient, inertial_kernel_prob,
                    iup_transition_matrix, propagate, stationary_distribution,
                    weakly_acyclic_chain_bound)
from .game import (DeterministicPolicy, Game, GameError, JointPolicy, RandomizedPolicy,
                   build_example_game, fig1_game, fig2_game, fig3_game, load_game)
from .harness import (ExperimentSpec, MetricsRecord, export_metrics, repro_table, run_experiment,
                      step_environment)
from .learners import (LearnerConfig, LearnerState, Transition, end_phase_alg2, end_phase_alg3,
                       j_step, q_step, select_action)
from .oracle import (best_reply_set, game_constants, induced_mdp, policy_value,
                     value_iteration_q)

__version__ = "0.1.0"
