"""Spiking cortical network simulated as chained MapReduce jobs, with a sequential oracle."""

__version__ = "0.1.0"
