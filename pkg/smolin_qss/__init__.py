"""smolin_qss: quantum secret sharing with the Smolin bound-entangled state."""

__version__ = "0.1.0"
