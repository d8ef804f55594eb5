"""Speed-tracking control laboratory on deformable terrain.

Building blocks: a soil-contact vehicle plant, a bicycle-model tracking MPC,
a from-scratch actor-critic (PPO), the additive compensation ensemble, and a
scenario/metrics harness with a CLI.
"""

from .terrain import (ControlInput, Deformable, Matched, Plant, PlantFault,
                      PlantMode, TerrainParams, VehicleParams, VehicleState,
                      bekker_pressure, compaction_resistance, run_with_zoh,
                      static_sinkage, step, traction_limit)
from .path import ReferencePath, generate_references
from .mpc import MpcConfig, MpcSolution, MpcTracker, SolveStatus, shift_warm_start
from .nets import Adam, GaussianPolicy, Mlp
from .ppo import (ActorCritic, PpoConfig, RolloutBuffer, ToySpeedEnv,
                  build_observation_ac, gae_advantages, ppo_update, reward_r1,
                  train_ac)
from .compensator import (CompensatedTrackingEnv, CompensatorConfig,
                          DirectTrackingEnv, Ensemble, ac_standalone_control,
                          build_observation_ac2, reward_r2)
from .checkpoint import PolicyCheckpoint
from .scenarios import (ScenarioError, ScenarioSpec, builtin_scenario,
                        load_scenario, save_scenario)
from .harness import (EpisodeRecord, MetricsReport, compare, compute_metrics,
                      run_episode, train_controller)

__version__ = "0.1.0"
