"""Simulation and analysis of an asynchronous heralded single-photon source on an HBT bench."""

__version__ = "0.1.0"
