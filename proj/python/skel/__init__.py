"""Stable Koopman embeddings: Python bindings to the C++ core."""

import json as _json

from ._skel import (
    ContractError,
    ConvergenceError,
    DimensionError,
    DomainError,
    InfeasibleError,
    KoopmanModel,
    LogRow,
    NumericalError,
    ParseError,
    SingularityError,
    TrainConfig,
    TrainingLog,
    Trajectory,
    augment_velocity,
    dmd_operator,
    expm,
    fit,
    gen_synthetic,
    load_csv,
    load_model,
    nse,
    recover_stable_dt,
    resample_uniform,
    run_cli,
    save_csv,
    solve_dlyap,
    spectral_abscissa,
    spectral_radius,
    stable_ct_operator,
    stable_dt_operator,
)
from . import _skel


def certify(model, data, max_samples=500, seed=0):
    """Contraction certificate of a trained model as a dict."""
    return _json.loads(_skel._certify_json(model, data, max_samples, seed))


def evaluate(model, data):
    """NSE, reconstruction error and stability measure as a dict."""
    return _json.loads(_skel._evaluate_json(model, data))


__all__ = [name for name in dir() if not name.startswith("_")]
