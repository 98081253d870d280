from .certify import (
    GammaReport,
    Probe,
    certify_gamma_maximizer,
    fit_mlp_to_boundary,
    perturbation_probes,
    random_restart_probes,
)
from .gradients import RelaxedGradient, grad_relaxed_value
from .train import DivergenceError, TrainLog, evaluate_trained, train_nosb
from .train_config import (
    TrainConfig,
    construct_train_config,
    eps_at,
    learning_rate,
)
