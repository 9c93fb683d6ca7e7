"""draokit: distributed risk-averse convex optimization on a simulated star network."""

from .problem import (AmbiguitySet, Chi2Set, Conjugate, CvarSet, EntropicSet,
                      GapReport, KnownOptimum, LeastSquaresWorkers, PiBall,
                      PiBox, Regularizer, RiskAverseProblem, SimplexSet,
                      SingletonSet, SmoothCost, SmoothWorkers, StructuredCost,
                      BoxDualWorkers, gap_Q, quadratic_form_cost, spectral_norm)
from .prox import (ProxCounter, SmoothDualState, p_argmax_chi2, p_argmax_cvar,
                   p_argmax_entropic, p_argmax_simplex, p_prox_chi2,
                   p_prox_cvar, p_prox_entropic, p_prox_simplex, pi_prox_box,
                   pi_prox_ball, pi_prox_smooth, pi_prox_via_primal, x_prox,
                   x_prox_two_centers)
from .network import CommPolicy, DPMViolation, StarNetwork
from .solvers import (InnerPlan, PhaseRecord, SolveReport, StepSchedule,
                      build_schedule, default_delta, drao_s_solve, drao_solve,
                      operator_norm_Mt, schedule_ns, schedule_ns_strong,
                      schedule_smooth, schedule_smooth_strong,
                      schedule_sps_ns, schedule_sps_ns_strong,
                      schedule_sps_smooth, schedule_sps_smooth_strong,
                      sd_solve, solve_xp_saddle, sps_subroutine,
                      tune_trial_stepsizes)
from .hard_instances import (ConfinementReport, HuberChainInstance,
                             StrongChainInstance, TwoWorkerNsInstance,
                             TwoWorkerSmoothInstance, certify_confinement,
                             huber_sigma, lower_bound_instance_lipschitz,
                             lower_bound_instance_smooth, make_huber_chain,
                             make_strong_chain, make_two_worker_ns,
                             make_two_worker_smooth, restricted_chain_optimum,
                             strong_chain_dist_floor, two_worker_ns_gap_floor,
                             two_worker_smooth_gap_floor)
from .applications import (ReferenceResult, StreamRng, ambiguity_from_spec,
                           gen_linreg, gen_two_stage, reference_optimum,
                           with_ambiguity)

__version__ = "0.1.0"
