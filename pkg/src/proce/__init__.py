"""Prototype-guided, causality-preserving counterfactual explanations."""

__version__ = "0.1.0"
