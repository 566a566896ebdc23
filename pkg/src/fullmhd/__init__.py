"""Truncated-Fourier solver and verification harness for the periodic
Navier-Stokes-Maxwell system."""

from .spectral import DecayProfile, Lattice, SpectralField
from .solver import PicardDiagnostics, SolverConfig, StateVector, integrate, picard_run, step
from .experiments import RunConfig, run

__all__ = [
    "DecayProfile",
    "Lattice",
    "PicardDiagnostics",
    "RunConfig",
    "SolverConfig",
    "SpectralField",
    "StateVector",
    "integrate",
    "picard_run",
    "run",
    "step",
]
