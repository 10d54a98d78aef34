from .adam import AdamConfig, adam_minimize
from .history import CSV_COLUMNS, History, IterationRecord, read_history_csv
from .oracle import FunctionOracle, Oracle, TapeOracle
from .quasi_newton import LineSearchConfig, bfgs_minimize, lbfgs_minimize
from .trust_region import Subproblem, TrustRegionConfig, tr_subproblem, trust_region_minimize

OPTIMIZERS = ("adam", "bfgs", "lbfgs", "trust-region")


def minimize(optimizer, oracle, theta0, max_iters=5000, timed=False, **kw):
    """Dispatch by name with each method's default settings."""
    if optimizer == "trust-region":
        return trust_region_minimize(oracle, theta0, TrustRegionConfig(max_iters=max_iters, timed=timed), **kw)
    if optimizer == "bfgs":
        return bfgs_minimize(oracle, theta0, LineSearchConfig(max_iters=max_iters, timed=timed), **kw)
    if optimizer == "lbfgs":
        return lbfgs_minimize(oracle, theta0, LineSearchConfig(max_iters=max_iters, timed=timed), **kw)
    if optimizer == "adam":
        return adam_minimize(oracle, theta0, AdamConfig(max_iters=max_iters, timed=timed), **kw)
    raise ValueError(f"unknown optimizer {optimizer!r}; expected one of {', '.join(OPTIMIZERS)}")
