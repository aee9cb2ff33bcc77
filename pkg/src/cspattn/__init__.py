"""Channel-wise sample permutation attention and its verification lab."""

__version__ = "0.1.0"
