"""
Recovering signs from noisy pairwise products
=============================================

Plant ``z`` in ``{+-1}^n``, observe ``Y = z z^T + sigma W`` and solve the
rank-2 program on a product of circles. A dual certificate tells us whether
the point found is globally optimal for the SDP relaxation.
"""
import numpy as np

from bmsync.certify import dual_certificate
from bmsync.models import gen_z2
from bmsync.recover import metrics
from bmsync.solver import SolverConfig, solve_rank2

n = 400

# sigma = 0 is the noiseless case: every second-order point is z z^T.
for sigma in (0.0, 2.0, 8.0, 25.0):
    inst = gen_z2(n, sigma=sigma, rng=1)
    rep = solve_rank2(inst.Y, SolverConfig(seed=1))
    cert = dual_certificate(inst.Y, rep.point, z=inst.z)
    m = metrics(rep.point, inst.z, rng=0)
    print(f"sigma={sigma:5.1f} lambda={inst.lam:8.2f} status={rep.status:10s} "
          f"iters={rep.outer_iters:3d} corr={m.correlation:.3f} overlap={m.overlap:.3f} "
          f"exact={m.exact!s:5s} verdict={cert.verdict}")

# The solver returns angles folded into unit rows of an n x 2 matrix.
print("row norms within", float(np.abs(np.linalg.norm(rep.point, axis=1) - 1).max()), "of 1")
