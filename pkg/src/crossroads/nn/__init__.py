from .checkpoint import load_checkpoint, load_into, load_network, save_checkpoint
from .layers import Conv2D, Dense, DuelingHead, Flatten, ReLU, conv_output_size
from .network import DuelingQNetwork, standard_architecture
from .optim import RMSprop

__all__ = [
    "Conv2D",
    "Dense",
    "DuelingHead",
    "DuelingQNetwork",
    "Flatten",
    "ReLU",
    "RMSprop",
    "conv_output_size",
    "load_checkpoint",
    "load_into",
    "load_network",
    "save_checkpoint",
    "standard_architecture",
]
