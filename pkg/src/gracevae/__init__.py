"""Graph-context causal VAE for predicting responses to unseen intervention combinations."""

__version__ = "0.1.0"
