"""AMCW time-of-flight digital-parallel demodulation simulator."""

__version__ = "0.1.0"
