"""Differentially private one permutation hashing and minwise hashing."""

__version__ = "0.1.0"
