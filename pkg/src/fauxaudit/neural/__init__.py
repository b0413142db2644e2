from .mlp import (
    Layer,
    MlpModel,
    dumps,
    embed_columns,
    forward,
    from_dict,
    init_mlp,
    input_gradient,
    input_jacobian,
    loads,
    logits,
    to_dict,
)
from .train import (
    AdversaryConfig,
    TrainConfig,
    TrainResult,
    fit,
    fit_adversarial,
    train,
    train_adversarial,
)
from .linear import LinearModel, fit_logistic
from .attribution import integrated_gradient

__all__ = [
    "Layer", "MlpModel", "dumps", "embed_columns", "forward", "from_dict", "init_mlp",
    "input_gradient", "input_jacobian", "loads", "logits", "to_dict",
    "AdversaryConfig", "TrainConfig", "TrainResult", "fit", "fit_adversarial",
    "train", "train_adversarial", "LinearModel", "fit_logistic",
    "integrated_gradient",
]
