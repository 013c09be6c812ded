"""
Randomized checks of the convergence building blocks
====================================================

* augmented-pair stabilizability against the Rosenbrock rank test,
  including plants with a zero placed exactly on lambda;
* vanishing perturbations of a uniformly stable switched system;
* generator convergence over random rooted trees, with and without a root
  set that is closed to inbound edges.

The batteries are seeded; the worst tails are printed next to their limits.

Run with ``python3 demos/numerical_batteries.py [instances]``.
"""
import sys

from dimp import oracle

instances = int(sys.argv[1]) if len(sys.argv) > 1 else 10

for res in oracle.lemma1_battery():
    print(res.line())

results = oracle.lemma_harnesses(instances)
for res in results.values():
    print(res.line())
print(oracle.harness_summary(results), end="")
