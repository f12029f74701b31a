"""QUBO regression for transcription-factor binding.

Binary-weight linear regression is posed as a QUBO, mapped to an Ising
instance and solved with simulated annealing, simulated quantum annealing or
exhaustive search; ridge and lasso serve as real-valued baselines. The
calibrate / bag / test protocol and its metrics live in :mod:`qabind.pipeline`.
"""
__version__ = "0.1.0"

from .baselines import LinearModel, lasso_fit, ridge_fit
from .logo import WeightLogo, average_weights, emit_weight_logo
from .metrics import auprc, kendall_tau, threshold_labels
from .model import (IsingInstance, QuboInstance, TargetScaler, build_qubo, ising_energy,
                    predict, qubo_energy, qubo_to_ising, scale_ising)
from .pipeline import (CalibrationResult, EvaluationReport, ExperimentConfig, MethodKind,
                       MethodSpec, Task, calibrate, evaluate, run_experiment, train_instances)
from .samplers import (AnnealSchedule, SolutionPool, brute_force_solve, ensemble_average,
                       simulated_anneal, simulated_quantum_anneal)
from .seqdata import (EncodedDataset, RawRecord, SplitSpec, bag_sample, encode_one_hot,
                      preprocess, read_tsv, train_test_split)

__all__ = [
    "AnnealSchedule", "CalibrationResult", "EncodedDataset", "EvaluationReport",
    "ExperimentConfig", "IsingInstance", "LinearModel", "MethodKind", "MethodSpec",
    "QuboInstance", "RawRecord", "SolutionPool", "SplitSpec", "TargetScaler", "Task",
    "WeightLogo", "auprc", "average_weights", "bag_sample", "brute_force_solve",
    "build_qubo", "calibrate", "emit_weight_logo", "encode_one_hot", "ensemble_average",
    "evaluate", "ising_energy", "kendall_tau", "lasso_fit", "predict", "preprocess",
    "qubo_energy", "qubo_to_ising", "read_tsv", "ridge_fit", "run_experiment",
    "scale_ising", "simulated_anneal", "simulated_quantum_anneal", "threshold_labels",
    "train_instances", "train_test_split",
]
