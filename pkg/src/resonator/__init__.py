"""Echo-state-network forecasting of the Lorenz system with configurable node activations."""

__version__ = "0.1.0"
