"""Reparameterization audits for Bayesian inversion.

Densities, diffeomorphisms, evidences, hierarchical and trans-dimensional
model selection, MAP estimation and the constructions showing that each of
these depends on how data or parameters are coordinatized.
"""

__version__ = "0.1.0"
