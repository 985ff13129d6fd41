"""hdlearn: constrained Hamiltonian simulation, graph-network energy learning,
and symbolic distillation of learned energy functions."""

__version__ = "0.1.0"
