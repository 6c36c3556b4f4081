"""Electron in a thermal photon bath: infrared decoherence, kinetics and field diagnostics."""

__version__ = "0.1.0"
