"""Simulator of the SiV- spin qubit: optical pumping, readout and coherent control."""

__version__ = "0.1.0"
