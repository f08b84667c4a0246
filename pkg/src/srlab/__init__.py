"""srlab: spectral laboratory for 3D contact sub-Riemannian structures."""

__version__ = "0.1.0"
