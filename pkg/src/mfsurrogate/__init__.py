"""Multi-fidelity surrogate models with a linear transfer from low to high fidelity."""

__version__ = "0.1.0"
