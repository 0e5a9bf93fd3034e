"""Qubit preparation and ion-ion interaction simulator for rare-earth-ion doped crystals."""

__version__ = "0.1.0"
