"""Shape reconstruction of sound-soft scatterers on a manifold of discrete closed curves."""

__version__ = "0.1.0"
