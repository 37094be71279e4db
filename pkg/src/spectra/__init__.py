"""Numerical spectral theory of harmonic tori in the 3-sphere.

Modules
-------
numkernel      polynomials, contours, quadrature, ODEs, tolerances
curve          hyperelliptic spectral curves, sheets, homology bases
differentials  holomorphic and meromorphic differentials, periods, residues
periodicity    period conditions, their equivalent formulations, search
laxflow        polynomial Killing fields, Lax flows, frames, harmonic maps
holonomy       holonomy of connection families and the empirical curve
cli            command-line entry point ``spectra``
"""

__version__ = "0.1.0"
