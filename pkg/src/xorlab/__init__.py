"""Two-layer ReLU networks trained by gradient descent on noisy 2-XOR cluster data."""

__version__ = "0.1.0"

from .distribution import (Dataset, DistributionSpec, check_sample_properties, make_spec,
                           read_dataset_csv, sample_dataset, write_dataset_csv)
from .network import (NetworkParams, activation_pattern, forward, forward_batch, init_network,
                      load_checkpoint, save_checkpoint, second_layer, subnetwork_forward)
from .trainer import (TrainConfig, TrainTrace, empirical_risk, gd_step, gradient, logistic_loss,
                      logistic_loss_deriv, theorem_schedule, train)

__all__ = [
    "Dataset", "DistributionSpec", "check_sample_properties", "make_spec", "read_dataset_csv",
    "sample_dataset", "write_dataset_csv",
    "NetworkParams", "activation_pattern", "forward", "forward_batch", "init_network",
    "load_checkpoint", "save_checkpoint", "second_layer", "subnetwork_forward",
    "TrainConfig", "TrainTrace", "empirical_risk", "gd_step", "gradient", "logistic_loss",
    "logistic_loss_deriv", "theorem_schedule", "train",
]
