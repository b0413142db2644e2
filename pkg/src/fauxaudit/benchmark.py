"""Ready-made synthetic scenarios and an end-to-end benchmark runner.

A benchmark run trains a target on ``(x, y)``, an auxiliary model on the
c-block of ``(x, c)`` and a reference target on the bias-free twin of the
dataset. It then labels held-out rows by their individual fairness score and
measures how well each test ranks them.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import synthgen as sg
from .dataset import split_indices
from .evaluation import average_precision
from .fairtest import AuditConfig, audit_arrays
from .linalg import child_seed, make_rng
from .neural import TrainConfig, embed_columns, init_mlp, train

SPLIT = (0.7, 0.15, 0.15)


def _axis_block(d, slopes_by_component, centers=None, weights=None, noise=None):
    m = len(slopes_by_component)
    slopes = np.zeros((m, d))
    for j, s in enumerate(slopes_by_component):
        slopes[j, :len(s)] = s
    centers = np.zeros((m, d)) if centers is None else np.asarray(centers, dtype=np.float64)
    scales = np.ones((m, d)) if noise is None else np.asarray(noise, dtype=np.float64)
    weights = np.full(m, 1.0 / m) if weights is None else weights
    return sg.BlockGenerator("gaussian-mixture", centers, slopes, scales, weights)


def mixture_scenario(bias, seed=0, n=2000, d_y=5, d_c=5, y_sep=1.0, c_sep=3.0,
                     shared=0.6, offset=8.0):
    """c-block mixture where only some rows carry the protected signal.

    The y-block is one Gaussian whose first coordinate moves with ``y``. The
    c-block mixes an informative component (first coordinate moves with
    ``c``) and a ``shared`` component, placed ``offset`` away along the
    second coordinate, that ``c`` does not touch. Counterfactuals of shared
    rows equal the rows themselves, so those rows are fair for any target.
    """
    yb = _axis_block(d_y, [[y_sep]])
    centers = np.zeros((2, d_c))
    centers[1, 1] = offset
    cb = _axis_block(d_c, [[c_sep], [0.0]], centers=centers, weights=[1.0 - shared, shared])
    return sg.SyntheticSpec(yb, cb, "concat", sg.build_joint(0.5, 0.5, bias), n, seed)


def gaussian_scenario(bias, seed=0, n=2000, d_y=5, d_c=5, y_sep=1.0, c_sep=3.0):
    """One Gaussian per block; every row's c-block moves with ``c``."""
    yb = _axis_block(d_y, [[y_sep]])
    cb = _axis_block(d_c, [[c_sep]])
    return sg.SyntheticSpec(yb, cb, "concat", sg.build_joint(0.5, 0.5, bias), n, seed)


def random_direction_scenario(bias, seed=0, n=2000, d_y=5, d_c=5, y_sep=2.0, c_sep=3.0):
    """Blocks whose class effects point in random directions (varied per-feature MI)."""
    yb = sg.gaussian_block(d_y, y_sep, seed=child_seed(seed, "y-block"))
    cb = sg.gaussian_block(d_c, c_sep, seed=child_seed(seed, "c-block"))
    return sg.SyntheticSpec(yb, cb, "concat", sg.build_joint(0.5, 0.5, bias), n, seed)


def linear_c_scenario(bias=0.5, seed=0, n=2000, d_y=4, d_c=4, y_sep=2.0, c_slope=0.5):
    """c-block ``a * psi(c) + noise`` with the noise orthogonal to ``a``.

    ``a`` is the first c-block axis and that axis carries no noise, so ``c``
    is an exact linear function of the features.
    """
    yb = _axis_block(d_y, [[y_sep]])
    noise = np.ones((1, d_c))
    noise[0, 0] = 0.0
    cb = _axis_block(d_c, [[c_slope]], noise=noise)
    return sg.SyntheticSpec(yb, cb, "concat", sg.build_joint(0.5, 0.5, bias), n, seed)


def c_block_view(dataset, columns):
    return replace(dataset, features=dataset.features[:, columns],
                   column_names=[dataset.column_names[i] for i in columns],
                   one_hot_groups=[])


@dataclass
class BenchmarkResult:
    ap: dict
    prevalence: float
    sigma0: float
    ifs: np.ndarray
    labels: np.ndarray
    scores: dict
    target_accuracy: float
    aux_accuracy: float
    models: dict = field(default_factory=dict)


def train_aux(dataset, spec, seed, arch=(16,), config=None, disentangled=True):
    """Auxiliary model on the c-block only (or on all features)."""
    config = config or TrainConfig(seed=seed)
    d = dataset.n_features
    if not disentangled:
        res = train(init_mlp(d, arch, 1, seed=child_seed(seed, "aux")), dataset, "c", config,
                    full_result=True)
        return res.model, res.val_accuracy
    cols = spec.c_block_columns()
    res = train(init_mlp(len(cols), arch, 1, seed=child_seed(seed, "aux")),
                c_block_view(dataset, cols), "c", config, full_result=True)
    return embed_columns(res.model, cols, d), res.val_accuracy


def reference_sigma(spec, seed, target_arch, kappa_rows=None, config=None):
    """IFS standard deviation of a target trained on the bias-free twin."""
    twin = spec.with_bias(0.0, seed=child_seed(spec.seed, "twin"))
    data = sg.sample_dataset(twin)
    tr, va, te = split_indices(data.n_rows, SPLIT, make_rng(child_seed(seed, "split")))
    config = config or TrainConfig(seed=seed)
    ref = train(init_mlp(twin.n_features, target_arch, 1, seed=child_seed(seed, "target")),
                data.subset(np.concatenate([tr, va])), "y", config)
    return float(np.std(sg.dataset_ifs(ref, twin, data.subset(te))))


def run_benchmark(spec, seed=0, target_arch=(32, 32), aux_arch=(16,), tests=None,
                  kappa=3.0, disentangled=True, audit_config=None):
    """Train, label and score one synthetic dataset; returns AP per test.

    Rows are split 70/15/15; training uses the first two parts and the
    audit runs on the held-out last part.
    """
    data = sg.sample_dataset(spec)
    tr, va, te = split_indices(data.n_rows, SPLIT, make_rng(child_seed(seed, "split")))
    fit_rows = data.subset(np.concatenate([tr, va]))
    held = data.subset(te)
    config = TrainConfig(seed=seed)
    target = train(init_mlp(spec.n_features, target_arch, 1, seed=child_seed(seed, "target")),
                   fit_rows, "y", config, full_result=True)
    aux, aux_acc = train_aux(fit_rows, spec, seed, aux_arch, config, disentangled)
    sigma0 = reference_sigma(spec, seed, target_arch, config=config)
    ifs = sg.dataset_ifs(target.model, spec, held)
    labels = sg.fairness_labels(ifs, sigma0, kappa)
    audit_config = audit_config or AuditConfig()
    if tests is not None:
        audit_config = replace(audit_config, tests=tuple(tests))
    scores, _ = audit_arrays(held, target.model, aux, audit_config, spec=spec)
    ap = {t: average_precision(s, labels) for t, s in scores.items()} if labels.any() else {}
    return BenchmarkResult(ap, float(labels.mean()), sigma0, ifs, labels, scores,
                           target.val_accuracy, aux_acc,
                           {"target": target.model, "aux": aux})


def fair_vs_unfair(spec, seed=0, target_arch=(32, 32), aux_arch=(16,), adversary=None,
                   test="faux_ng"):
    """Held-out scores of a plain and an adversarially debiased target.

    Both targets start from the same initialization and see the same rows;
    returns the :func:`compare_models` summary plus the raw scores.
    """
    from .evaluation import compare_models
    from .neural import AdversaryConfig, train_adversarial

    data = sg.sample_dataset(spec)
    tr, va, te = split_indices(data.n_rows, SPLIT, make_rng(child_seed(seed, "split")))
    fit_rows = data.subset(np.concatenate([tr, va]))
    held = data.subset(te)
    init = init_mlp(spec.n_features, target_arch, 1, seed=child_seed(seed, "target"))
    plain = train(init, fit_rows, "y", TrainConfig(seed=seed))
    adv_cfg = TrainConfig(seed=seed, adversary=adversary or AdversaryConfig())
    fair = train_adversarial(init, fit_rows, adv_cfg)
    aux, _ = train_aux(fit_rows, spec, seed, aux_arch)
    cfg = AuditConfig(tests=(test,))
    unfair_s = audit_arrays(held, plain, aux, cfg)[0][test]
    fair_s = audit_arrays(held, fair, aux, cfg)[0][test]
    summary = compare_models(fair_s, unfair_s)
    summary.update(fair_scores=fair_s, unfair_scores=unfair_s)
    return summary
