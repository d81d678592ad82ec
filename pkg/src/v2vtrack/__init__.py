"""Cooperative perception: onboard sensor fusion combined with validated V2V tracks."""

__version__ = "0.1.0"
