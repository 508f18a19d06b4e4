"""Adaptive single-level sparse-grid stochastic collocation FEM for linear
elliptic PDEs with affine or lognormal random coefficients."""

__version__ = "0.1.0"

from scfem.backend import BACKEND_NAME  # noqa: F401
