"""Numerical laboratory for effective-mass calculations in particle-field models.

The package assembles truncated-Fock representations of a particle coupled
linearly to a bosonic field, computes the ground-state dispersion of the
fixed-total-momentum fibers, and compares two routes to the effective mass:

* the dynamic mass, read off the curvature of the dispersion at zero total
  momentum, and
* the static mass, obtained by matching the ground energy of a coupled
  scaling-limit operator against a one-particle Schroedinger energy curve.

Certified two-sided bounds sandwich the coupled ground energy between
quantities computed from the dispersion alone, which turns the comparison
into a checkable numerical experiment.
"""

__version__ = "0.1.0"

__all__ = ["__version__"]
