"""Uniform relative Ding stability and generalized Kähler-Einstein metrics on toric Fano manifolds."""

__version__ = "0.0.0"
