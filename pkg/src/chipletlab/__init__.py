"""Virtual laser-probing laboratory for chiplet packages."""

__version__ = "0.1.0"
