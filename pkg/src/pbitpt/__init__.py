"""Sparsified Ising models solved by p-bit Gibbs sampling under 1D/2D
parallel tempering, with exact oracles, MMSE/ML detection baselines, and a
fixed-point hardware fidelity mode."""

from .bench import (ConfigError, ExperimentConfig, ber_sweep, bootstrap_ci,
                    gen_sk, ground_state_exhaustive, residual_sweep,
                    run_experiment)
from .hwmodel import (FixedPointFormat, HwCounters, HwProfile, TimingParams,
                      accumulator_format, approx_exp, energy_format,
                      instance_time, local_energy_terms, make_tanh_lut,
                      premultiplied_field, quantize, quantize_code,
                      step_cycles, step_time, swap_delta_hw)
from .mimo import MimoInstance, ber, gen_instance, ml_bruteforce, mmse_detect
from .models import (ConstraintReport, DenseIsingModel, OracleGuardError,
                     SparsifiedModel, as_spin_vector, constraint_report,
                     energy_eval, map_mimo_to_ising, normalize_weights,
                     problem_energy_parts, project_majority,
                     project_majority_batch, random_spins, sparse_energy_eval,
                     sparsify)
from .rng import Lfsr, RandomStream, lfsr_next
from .sampler import (SamplerConfig, batch_sweep, chromatic_sweep, local_field,
                      pbit_update, probe_chains)
from .schedule import (ScheduleError, ScheduleParams, adaptive_schedule,
                       average_schedules, geometric_ladder)
from .tempering import (PtConfig, ReplicaGrid, RunResult, beta_swap_delta,
                        logical_energy, p_swap_delta, run_1dpt, run_2dpt,
                        swap_round, swap_statistics)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
