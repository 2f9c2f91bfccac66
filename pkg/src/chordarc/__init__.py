"""Harmonic approximation near chord-arc curves in R^3."""
