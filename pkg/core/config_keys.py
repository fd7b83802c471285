# core/config_keys.py
from enum import Enum


class ConfigKeys(Enum):
    THREADS = "threads"
    LOG_LEVEL = "log.level"
    TEST_DATA_PATH = "TEST_DATA_PATH"
    # Wiener ridge, relative to trace(Phi R Phi^T) / dim
    RIDGE_RELATIVE = "ridge.relative"
    # Markov-Wiener baseline
    MARKOV_RHO_SPATIAL = "markov.rho.spatial"
    MARKOV_RHO_SPECTRAL = "markov.rho.spectral"
    # Alternating optimizer
    OPTIM_OUTER_ITERS = "optim.outer.iters"
    OPTIM_INNER_MAX_ITERS = "optim.inner.max.iters"
    OPTIM_INNER_TOL = "optim.inner.tol"
    OPTIM_LOG_EVERY = "optim.log.every"
    OPTIM_EARLY_STOP_WINDOW = "optim.early.stop.window"
    OPTIM_EARLY_STOP_RTOL = "optim.early.stop.rtol"
    OPTIM_SEED = "optim.seed"
