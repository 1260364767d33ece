"""Relay-assisted wireless physical neural network built from activation-integrated
stacked intelligent metasurfaces (AI-SIMs)."""

from relay_wpnn.config import ExperimentConfig, Scheme, TrainConfig
from relay_wpnn.linalg import SeededRng

__all__ = ["ExperimentConfig", "Scheme", "TrainConfig", "SeededRng"]
__version__ = "0.1.0"
