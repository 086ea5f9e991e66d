"""Damped waveguide toolkit: transverse spectra, discrete operators, wave simulation
and resolvent experiments for the wave equation with impedance damping on the
boundary of a strip."""

__version__ = "0.1.0"
