"""
Two communities in a sparse graph
=================================

The centered adjacency ``A - (a + b)/(2n) 1 1^T`` of a balanced two-block
stochastic block model plays the role of ``Y``. Its effective signal level
grows like ``(a - b)/sqrt(2(a + b))``.
"""
from bmsync.certify import dual_certificate
from bmsync.models import gen_sbm
from bmsync.recover import correlation, metrics
from bmsync.solver import SolverConfig, solve_rank2

n = 1000
for a, b in ((12, 8), (30, 5), (200, 2)):
    inst = gen_sbm(n, a=a, b=b, rng=3)
    rep = solve_rank2(inst.Anat, SolverConfig(seed=3))
    m = metrics(rep.point, inst.g, rng=0)
    verdict = dual_certificate(inst.Anat, rep.point).verdict
    print(f"a={a:3d} b={b:2d} lambda_ab={inst.lambda_ab:6.2f} "
          f"corr={correlation(rep.point, inst.g):.3f} overlap={m.overlap:.3f} verdict={verdict}")
