"""isogap: numerical laboratory for isoperimetric, spectral-gap and
concentration constants of convex bodies and log-concave measures in
dimensions 1 to 3."""

__version__ = "0.1.0"
