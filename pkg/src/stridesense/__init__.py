"""Online activity assessment engine for pole-walking sessions."""

__version__ = "0.1.0"
