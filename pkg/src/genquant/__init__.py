"""genquant: quantization in orthogonal curvilinear coordinates.

A small computer-algebra kernel derives, for any orthogonal coordinate
map, the classical phase-space equation, its infinitesimal-transform
density equation, the continuity / quantum Hamilton-Jacobi pair, and the
divergence-form Hamiltonian operator; a finite-difference backend then
checks that spectra do not depend on the coordinate system.
"""

__version__ = "0.1.0"
