"""Scheduling and simulation of synchronous federated learning over LEO satellite clusters."""

__version__ = "0.1.0"
