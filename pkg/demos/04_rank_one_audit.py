"""
Exhaustive audit of rank-one second-order points
================================================

For tiny ``n`` every sign vector can be enumerated. Each one gives a rank-one
first-order critical point of the rank-2 program; we keep those that are also
second-order critical and compare their value with the exact maximum of
``x^T Y x`` over the hypercube.
"""
from bmsync.models import gen_z2
from bmsync.oracle import audit_rank_one_optimality, mle_bruteforce

total = bad = 0
for k in range(20):
    inst = gen_z2(12, sigma=0.5 + 0.5 * (k % 5), rng=k)
    count, counter = audit_rank_one_optimality(inst.Y)
    total += count
    bad += len(counter)
    if k < 5:
        best = mle_bruteforce(inst.Y)
        print(f"instance {k}: sigma={inst.sigma:.1f} optimum={best.best_value:8.3f} "
              f"second-order rank-one points={count}")

print(f"{total} second-order rank-one points over 20 instances, {bad} below the optimum")
