"""Recoil-free optical-qubit gates for trapped atoms: simulation, tomography and pulse optimization."""
__version__ = "0.1.0"
