"""Coverage bounds and position-aware optimization for fluid reflecting-and-emitting surfaces."""

__version__ = "0.1.0"
