"""Desk-scale statistical dynamics laboratory for a dilute hard-sphere gas.

Subpackages and modules:

- ``combinatorics``: exact cluster-expansion combinatorics (partitions,
  cumulant transforms, trees, the Penrose map).
- ``hardsphere``: event-driven dynamics of hard spheres on the unit torus.
- ``ensemble``: grand-canonical initial sampling and seeded replica runs.
- ``observables``: empirical measure, fluctuation field and cumulant
  estimators over replica ensembles.
- ``kinetic``: velocity-grid Boltzmann solver, DSMC, linearized operator,
  fluctuation covariance and the large-deviation Hamiltonian.
- ``duhamel``: collision-tree Monte Carlo for the iterated Duhamel series,
  pseudo-trajectories and recollision/overlap classification.
- ``cli``: JSON-configured experiment runner.
"""

__version__ = "0.1.0"
