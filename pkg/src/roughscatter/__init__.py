"""Simulation and asymptotic predictions for pulses scattered by a randomly rough interface."""
from .interface import InterfaceModel, realization_seed, scattering_distribution, synthesize
from .medium import DomainError, MediumConfig, ScaleRegime
from .snell import SnellQuery, generalized_angle
from .solver import SplitStepSimulator, WaveField
from .source import LateralGrid, SourceProfile, TimeGrid, make_default_profile

__version__ = "0.1.0"

__all__ = ["DomainError", "InterfaceModel", "LateralGrid", "MediumConfig", "ScaleRegime", "SnellQuery",
           "SourceProfile", "SplitStepSimulator", "TimeGrid", "WaveField", "generalized_angle",
           "make_default_profile", "realization_seed", "scattering_distribution", "synthesize"]
