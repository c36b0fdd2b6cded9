"""Digital twin of a two-chamber cavity-loadlock cold-atom apparatus."""

__version__ = "0.1.0"
