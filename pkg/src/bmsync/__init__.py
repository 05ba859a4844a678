"""Rank-2 Burer-Monteiro optimization for Z2 synchronization and community detection.

Modules
-------
specmat     symmetric operators and extreme eigenpairs
circlefold  geometry of the product of circles (and the rank-p oblique manifold)
solver      Riemannian trust-region solvers
certify     dual certificates and SDP value brackets
models      Z2 and stochastic block model generators, noise summaries
recover     correlation, rounding and exact-recovery metrics
oracle      exhaustive references for small instances, lemma audits
harness     configuration, seeded sweeps, result files
"""
__version__ = "0.1.0"
