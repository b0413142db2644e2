"""Adversarial debiasing lowers audit scores; the transparency report names the leak.

    python demos/debiasing_and_transparency.py
"""

import numpy as np

from fauxaudit import synthgen as sg
from fauxaudit.benchmark import fair_vs_unfair, gaussian_scenario, random_direction_scenario
from fauxaudit.evaluation import feature_mi, transparency_ndcg
from fauxaudit.fairtest import transparency
from fauxaudit.neural import TrainConfig, init_mlp, train

out = fair_vs_unfair(gaussian_scenario(1.0, seed=0), seed=0)
print("faux_ng scores on held-out rows")
print(f"  plain target     median {out['unfair_median']:.3f}  IQR {out['unfair_iqr']:.3f}")
print(f"  debiased target  median {out['fair_median']:.3f}  IQR {out['fair_iqr']:.3f}")
print(f"  P(plain > debiased) {out['p_unfair_greater']:.3f}")

spec = random_direction_scenario(0.5, seed=0)
data = sg.sample_dataset(spec)
aux = train(init_mlp(spec.n_features, [32], 1, seed=1), data, "c", TrainConfig(seed=0))
report = transparency(aux, data)
mi = feature_mi(data)
print("\ntransparency ranking (|mean aux gradient|) vs kNN mutual information")
for j in report.ranking:
    print(f"  {report.feature_names[j]:<5s} {report.scores[j]:.4f}  MI {mi[j]:.3f}")
print(f"NDCG {transparency_ndcg(report, data):.3f}")
