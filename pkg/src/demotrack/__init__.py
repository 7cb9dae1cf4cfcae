"""Single-object tracking agents trained with actor-critic learning and expert demonstrations."""

__version__ = "0.1.0"
