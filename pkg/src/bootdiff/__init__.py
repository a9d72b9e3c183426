"""bootdiff: a desk-scale lab for training diffusion denoisers from partial
data views, with exact Gaussian-mixture oracles for verification."""

__version__ = "0.1.0"
