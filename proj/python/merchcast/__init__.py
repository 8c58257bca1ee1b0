"""Delphi labeling, regression learners and the weighted ensemble for movie merchandising value."""

from ._core import (
    DelphiService,
    MerchcastError,
    accuracy,
    config_hash,
    consensus_label,
    dispersion,
    distribution,
    evaluate,
    fit,
    impute,
    is_anonymous_feedback,
    kfold,
    label,
    lasso_lambda_max,
    null_report,
    parse_csv,
    parse_jsonl,
    predict,
    predict_model,
    round_predictions,
    run_stages,
    search_weights,
    stratified_split,
    synth,
    train,
    write_csv,
)

__all__ = [
    "DelphiService",
    "MerchcastError",
    "accuracy",
    "config_hash",
    "consensus_label",
    "dispersion",
    "distribution",
    "evaluate",
    "fit",
    "impute",
    "is_anonymous_feedback",
    "kfold",
    "label",
    "lasso_lambda_max",
    "null_report",
    "parse_csv",
    "parse_jsonl",
    "predict",
    "predict_model",
    "round_predictions",
    "run_stages",
    "search_weights",
    "stratified_split",
    "synth",
    "train",
    "write_csv",
]
