"""spikegrad: a CPU spiking-network training engine with
distribution-adaptive surrogate gradients and the instrumentation to audit
its gradient flow, membrane statistics, and energy estimates."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .data import Dataset, EventStream, bin_events, gen_synthetic, load_events, load_raster
from .engine import backward, lif_backward
from .metrics import EnergyReport, energy_estimate, energy_from_op_counts
from .model import Network, build_network, preset_spec
from .neuron import NeuronConfig, decay_from_rho, lif_step, rho_from_decay, unroll
from .normalization import TdBN
from .rng import Rng, uniform_fanin_init
from .surrogate import SgConfig, adaptive_width, family_sg, rect_sg
from .tensorops import ShapeError, avgpool2, conv2d, matmul
from .trainer import SGD, TrainConfig, cosine_lr, cross_entropy, cross_entropy_grad, train_epoch

__all__ = [
    "CheckpointError", "load_checkpoint", "save_checkpoint",
    "Dataset", "EventStream", "bin_events", "gen_synthetic", "load_events", "load_raster",
    "backward", "lif_backward",
    "EnergyReport", "energy_estimate", "energy_from_op_counts",
    "Network", "build_network", "preset_spec",
    "NeuronConfig", "decay_from_rho", "lif_step", "rho_from_decay", "unroll",
    "TdBN",
    "Rng", "uniform_fanin_init",
    "SgConfig", "adaptive_width", "family_sg", "rect_sg",
    "ShapeError", "avgpool2", "conv2d", "matmul",
    "SGD", "TrainConfig", "cosine_lr", "cross_entropy", "cross_entropy_grad", "train_epoch",
]

__version__ = "0.1.0"
