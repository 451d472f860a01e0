"""savch: energy-stable SAV time stepping for the 2D Cahn–Hilliard equation."""

__version__ = "0.1.0"
