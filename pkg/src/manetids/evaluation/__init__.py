"""Metrics, cross-validated tuning, experiment sweeps and online detection."""

from .experiment import (ExperimentResult, ExperimentSpec, ScenarioStore, SWEEPS, duration_for,
                         report_rows, run_experiment, simulate_dataset, summarize,
                         write_summary, write_table)
from .metrics import (ConfusionMatrix, EvalReport, SchemaMismatch, classification_error,
                      detection_metrics, evaluate, per_attack_dr, per_attack_dr_sliced)
from .online import AlarmRecord, Scope, run_online_detection
from .tuning import (CandidateScore, GridSpec, SearchFailure, SearchResult, grid_search,
                     kfold_split, linear_from_mlp, stratified_cap)

__all__ = [
    "AlarmRecord", "CandidateScore", "ConfusionMatrix", "EvalReport", "ExperimentResult",
    "ExperimentSpec", "GridSpec", "SWEEPS", "ScenarioStore", "SchemaMismatch", "Scope",
    "SearchFailure", "SearchResult", "classification_error", "detection_metrics",
    "duration_for", "evaluate", "grid_search", "kfold_split", "linear_from_mlp",
    "per_attack_dr", "per_attack_dr_sliced", "report_rows", "run_experiment",
    "run_online_detection", "simulate_dataset", "stratified_cap", "summarize", "write_summary", "write_table",
]
