"""Fine-tuning-based representation learning (AdaptRep) versus frozen representations.

Modules
-------
env        ground-truth task environments and dataset sampling
source     AdaptRep / FrozenRep source training
pgd        projected gradient descent with its suboptimality certificate
adapt      target-time fine-tuning (linear, logistic, two-layer network)
hardcase   adversarial task families and the frozen-representation limit
metrics    excess risk, population loss, principal-angle distance
experiment separation study harness
cli        command-line interface
"""

from .adapt import (AdaptSpec, FineTunedLinearRegressor, FineTunedLogisticClassifier,
                    FineTunedNNRegressor, FineTuneResult, build_antisymmetric_init,
                    finetune_linear, finetune_linear_batch, finetune_logistic, finetune_nn,
                    linear_radii, nn_antisymmetric_init, nn_features, nn_predict, nn_remainder)
from .env import (Dataset, DegenerateTaskDraw, TargetTask, TaskEnvironment, load_env,
                  make_linear_env, make_logistic_env, make_nn_env, normalize_convention,
                  sample_dataset, sample_source_datasets, sample_target_task, save_env)
from .experiment import ExperimentConfig, ExperimentRecord, reproduce_separation
from .hardcase import (HardCaseSpec, frozenrep_population_limit, lift_to_relu, make_hardcase_env,
                       relu_lifted_predict, sample_hard_task, worst_case_target)
from .metrics import MetricsReport, excess_risk_quadratic, population_loss_mc, sine_principal_angle
from .pgd import (NonFiniteError, PGDConfig, PGDTrace, estimate_approx_linearity, pgd_bound,
                  project_ball, project_product_ball, run_pgd)
from .source import (AdaptRepSource, FrozenRepSource, SourceOptions, SourceSolution, SourceStats,
                     adaptrep_source, default_regularization, frozenrep_source,
                     regularizer_equivalence_check)

__version__ = "0.1.0"
