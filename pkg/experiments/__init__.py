"""
Experiment harnesses: pipeline stages, ablations and hyperparameter sweeps.
"""
from experiments.runner import (
    run_generate, run_caption, load_inputs, run_train, run_eval, run_gradcheck,
    variant_config, all_protocols, ablate, sweep, pipeline, VARIANTS, DEFAULT_GRIDS,
)
