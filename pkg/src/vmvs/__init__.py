"""Virtual multi-view synthesis for pedestrian orientation estimation."""

__version__ = "0.1.0"
