"""srcal: sleep-replay calibration for dense classifier heads.

Post-hoc calibration by replaying Poisson-encoded input statistics through a
spiking copy of the classifier head with a signed Hebbian rule, alongside
temperature scaling, label-smoothing / focal-loss retraining, a GA tuner,
calibration metrics, and representation analyses.
"""

from .data import LabeledDataset, generate_synthetic, ingest_csv, ingest_idx, \
    split_dataset
from .ga import GaConfig, Genome, decode, default_bounds, encode, fitness_src, \
    ga_search
from .metrics import (PredictionBatch, ReliabilityBins, accuracy, all_metrics,
                      brier, ece, entropy, nll, reliability_bins)
from .network import (DenseLayer, DenseNetwork, LossSpec, TrainConfig,
                      build_network, forward, forward_batch, load_network,
                      logits, loss_cross_entropy, loss_focal,
                      loss_label_smoothing, save_network, softmax, train_sgd)
from .sleep import (SleepConfig, SpikeState, USE_FAST_KERNEL,
                    compute_input_statistics, compute_layer_scales,
                    hebbian_update, poisson_encode, sleep, spiking_step)
from .temperature import Temperature, apply_temperature, fit_temperature

__version__ = "0.1.0"
