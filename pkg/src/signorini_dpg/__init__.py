"""DPG discretization of Signorini-type variational inequalities."""

__version__ = "0.1.0"
