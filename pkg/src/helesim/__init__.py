"""Pseudo-spectral simulator and verification harness for the Hele-Shaw
interface equation ``d_t h + G(h) h = 0`` on the periodic torus."""

__version__ = "0.1.0"
