"""Which tests find the rows a biased target treats unfairly?

Trains a target on a fully biased mixture dataset, labels held-out rows by
their counterfactual output gap, and prints the AP of every test. Then sweeps
the bias knob for the normalized-gradient test.

    python demos/detection_benchmark.py
"""

import numpy as np

from fauxaudit.benchmark import mixture_scenario, run_benchmark

res = run_benchmark(mixture_scenario(1.0, seed=0), seed=0)
print(f"target val acc {res.target_accuracy:.3f}  aux val acc {res.aux_accuracy:.3f}")
print(f"sigma0 {res.sigma0:.4f}  unfair rows {res.labels.sum()} / {res.labels.size}")
for test, ap in sorted(res.ap.items(), key=lambda kv: -kv[1]):
    print(f"  {test:<14s} AP {ap:.3f}")

print("\nbias sweep, faux_ng AP averaged over 3 seeds")
for bias in (0.0, 0.25, 0.5, 0.75, 1.0):
    runs = [run_benchmark(mixture_scenario(bias, seed=s), seed=s, tests=("faux_ng",))
            for s in range(3)]
    aps = [r.ap.get("faux_ng", np.nan) for r in runs]
    prev = np.mean([r.prevalence for r in runs])
    print(f"  bias {bias:.2f}  AP {np.nanmean(aps):.3f}  prevalence {prev:.3f}")
