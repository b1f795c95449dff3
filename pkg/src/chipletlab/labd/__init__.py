"""Interactive session service exposing the simulated laboratory."""
