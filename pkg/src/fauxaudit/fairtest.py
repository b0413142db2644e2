"""Per-row individual-fairness tests and transparency reports.

Every score works on a batch of rows at once. The model-level functions
accept either one input vector (returning a float) or an ``(n, d)`` batch
(returning an ``(n,)`` array).
"""

from dataclasses import dataclass, field, asdict
import math

import numpy as np

from .errors import ContractError, DegenerateGradientError, DivergenceError, FauxError
from .linalg import EPS_NORM, EPS_RIDGE, normalize_rows, solve_spd
from .neural.attribution import integrated_gradient
from .neural.linear import fit_logistic
from .neural.mlp import forward, input_gradient

TESTS = ("faux", "faux_ng", "faux_ig", "fta", "fta_weighted", "unfair_map", "lic_ub")


class AuditError(FauxError):
    """One or more rows could not be scored; ``rows`` holds their indices."""

    def __init__(self, message, rows):
        super().__init__(message)
        self.rows = list(rows)


@dataclass(frozen=True)
class UnfairMapConfig:
    steps: int = 100
    step_size: float = 0.01
    subspace_reg: float = 100.0

    def __post_init__(self):
        if self.steps < 0 or self.step_size < 0 or self.subspace_reg < 0:
            raise ContractError("unfair-map settings must be non-negative")


@dataclass(frozen=True)
class AuditConfig:
    """Settings for :func:`audit`.

    ``delta`` is either one threshold for every test or a mapping from test
    name to threshold. ``faux_ig_form`` picks the normalized alignment
    (default) or the ridge pseudoinverse form for the IG variant.
    """

    delta: object = 0.1
    ig_steps: int = 64
    ig_baseline: object = None
    unfair_map: UnfairMapConfig = field(default_factory=UnfairMapConfig)
    tests: tuple = TESTS
    fta_norm: object = 2
    gradient_space: str = "probability"
    faux_ig_form: str = "normalized"
    logistic_l2: float = 1e-2

    def __post_init__(self):
        if isinstance(self.unfair_map, dict):
            object.__setattr__(self, "unfair_map", UnfairMapConfig(**self.unfair_map))
        if self.ig_steps < 1:
            raise ContractError("ig_steps must be >= 1")
        deltas = self.delta.values() if isinstance(self.delta, dict) else [self.delta]
        if any(not d >= 0 for d in deltas):
            raise ContractError("delta must be >= 0")
        unknown = set(self.tests) - set(TESTS)
        if unknown:
            raise ContractError(f"unknown tests: {sorted(unknown)}")
        object.__setattr__(self, "tests", tuple(self.tests))
        if self.fta_norm not in (1, 2, math.inf, "inf"):
            raise ContractError("fta_norm must be 1, 2 or inf")
        if self.gradient_space not in ("probability", "logit"):
            raise ContractError("gradient_space must be 'probability' or 'logit'")
        if self.faux_ig_form not in ("normalized", "pseudoinverse"):
            raise ContractError("faux_ig_form must be 'normalized' or 'pseudoinverse'")

    def delta_for(self, test):
        if isinstance(self.delta, dict):
            return float(self.delta.get(test, math.inf))
        return float(self.delta)

    def to_dict(self):
        doc = asdict(self)
        doc["tests"] = list(self.tests)
        if self.ig_baseline is not None:
            doc["ig_baseline"] = np.asarray(self.ig_baseline).tolist()
        if doc["fta_norm"] in (math.inf, "inf"):
            doc["fta_norm"] = "inf"
        return doc


@dataclass(frozen=True)
class ScoreRecord:
    row_index: int
    scores: dict
    flags: dict
    notes: tuple = ()


@dataclass(frozen=True)
class TransparencyReport:
    """Group-level scores and their descending ranking (ties by index)."""

    names: list
    scores: np.ndarray
    groups: list
    ranking: list
    feature_scores: np.ndarray
    feature_names: list

    def to_dict(self):
        group_of = {}
        for name, g in zip(self.names, self.groups):
            for i in g:
                group_of[i] = name
        return {
            "features": [
                {"name": n, "score": float(s), "group": group_of[i]}
                for i, (n, s) in enumerate(zip(self.feature_names, self.feature_scores))
            ],
            "groups": [{"name": n, "score": float(s), "members": list(g)}
                       for n, s, g in zip(self.names, self.scores, self.groups)],
            "ranking": [self.names[i] for i in self.ranking],
        }


# -- gradient helpers ------------------------------------------------------------

def _batch(x):
    x = np.asarray(x, dtype=np.float64)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


def _out(values, single):
    return float(values[0]) if single else values


def positive_output(model):
    """Index of the output read as 'probability of class 1'."""
    return model.output_dim - 1


def aux_outputs(model):
    """Outputs of an auxiliary model, one per protected attribute.

    A sigmoid head has one output per attribute; for a softmax head the
    first class is the reference and is dropped.
    """
    if model.head == "softmax":
        return list(range(1, model.output_dim))
    return list(range(model.output_dim))


def target_gradient(f_tar, x, space="probability"):
    return input_gradient(f_tar, x, positive_output(f_tar), space)


def aux_jacobian(f_aux, x, space="probability"):
    """``(n, k, d)`` stack of auxiliary gradients."""
    x2, _ = _batch(x)
    return np.stack([input_gradient(f_aux, x2, j, space) for j in aux_outputs(f_aux)], axis=1)


# -- scores from gradients ---------------------------------------------------------

def faux_from_gradients(g_t, g_aux, ridge=EPS_RIDGE, eps=EPS_NORM):
    """Ridge-pseudoinverse alignment ``|g_t J' (J J' + ridge I)^-1|_inf``.

    ``g_t`` is ``(n, d)``, ``g_aux`` is ``(n, k, d)`` (or ``(n, d)`` for
    ``k = 1``). Returns the scores and a mask of rows whose auxiliary
    Jacobian was degenerate; those score 0.
    """
    g_t = np.atleast_2d(np.asarray(g_t, dtype=np.float64))
    g_aux = np.asarray(g_aux, dtype=np.float64)
    if g_aux.ndim == 2:
        g_aux = g_aux[:, None, :]
    if g_aux.shape[0] != g_t.shape[0] or g_aux.shape[2] != g_t.shape[1]:
        raise ContractError(f"gradient shapes {g_t.shape} and {g_aux.shape} do not agree")
    degenerate = np.linalg.norm(g_aux, axis=(1, 2)) <= eps
    k = g_aux.shape[1]
    proj = np.einsum("nkd,nd->nk", g_aux, g_t)
    if k == 1:
        gram = np.einsum("nd,nd->n", g_aux[:, 0], g_aux[:, 0])
        scores = np.abs(proj[:, 0]) / (gram + ridge)
    else:
        gram = np.einsum("nkd,njd->nkj", g_aux, g_aux) + ridge * np.eye(k)
        scores = np.array([np.abs(solve_spd(gram[i], proj[i])).max() for i in range(len(gram))])
    return np.where(degenerate, 0.0, scores), degenerate


def faux_ng_from_gradients(g_t, g_aux):
    """Max over attributes of ``|cos(g_t, g_aux_i)|``; zero operands give 0."""
    g_t = np.atleast_2d(np.asarray(g_t, dtype=np.float64))
    g_aux = np.asarray(g_aux, dtype=np.float64)
    if g_aux.ndim == 2:
        g_aux = g_aux[:, None, :]
    ut, _ = normalize_rows(g_t)
    ua, _ = normalize_rows(g_aux)
    cos = np.abs(np.einsum("nkd,nd->nk", ua, ut))
    return np.minimum(cos.max(axis=1), 1.0)


def lp_norm(g, p):
    g = np.atleast_2d(np.asarray(g, dtype=np.float64))
    if p in (math.inf, "inf"):
        return np.abs(g).max(axis=1) if g.shape[1] else np.zeros(g.shape[0])
    if p == 1:
        return np.abs(g).sum(axis=1)
    if p == 2:
        return np.linalg.norm(g, axis=1)
    raise ContractError("p must be 1, 2 or inf")


# -- model-level scores ------------------------------------------------------------

def score_faux(f_tar, f_aux, x, space="probability"):
    x2, single = _batch(x)
    s, _ = faux_from_gradients(target_gradient(f_tar, x2, space), aux_jacobian(f_aux, x2, space))
    return _out(s, single)


def score_faux_ng(f_tar, f_aux, x, space="probability"):
    x2, single = _batch(x)
    s = faux_ng_from_gradients(target_gradient(f_tar, x2, space), aux_jacobian(f_aux, x2, space))
    return _out(s, single)


def score_faux_ig(f_tar, f_aux, x, config=None, baseline=None):
    """Alignment of integrated-gradient attributions of both models."""
    config = config or AuditConfig()
    x2, single = _batch(x)
    if baseline is None:
        baseline = config.ig_baseline
    if baseline is None:
        baseline = np.zeros(x2.shape[1])
    steps, space = config.ig_steps, config.gradient_space
    ig_t = integrated_gradient(f_tar, x2, baseline, positive_output(f_tar), steps, space)
    ig_a = np.stack([integrated_gradient(f_aux, x2, baseline, j, steps, space)
                     for j in aux_outputs(f_aux)], axis=1)
    if config.faux_ig_form == "pseudoinverse":
        s, _ = faux_from_gradients(ig_t, ig_a)
    else:
        s = faux_ng_from_gradients(ig_t, ig_a)
    return _out(s, single)


def score_fta(f_tar, x, p=2, space="probability"):
    x2, single = _batch(x)
    return _out(lp_norm(target_gradient(f_tar, x2, space), p), single)


def _unit_weights(w_lin):
    w = np.asarray(getattr(w_lin, "weights", w_lin), dtype=np.float64).reshape(-1)
    n = np.linalg.norm(w)
    if n <= EPS_NORM:
        raise DegenerateGradientError("linear sensitive direction has zero norm")
    return w / n


def score_fta_weighted(f_tar, w_lin, x, space="probability"):
    """``|grad f_tar . w_hat|`` with ``w_hat`` the unit linear-model weights."""
    x2, single = _batch(x)
    w = _unit_weights(w_lin)
    return _out(np.abs(target_gradient(f_tar, x2, space) @ w), single)


def unfair_map_step(g, w, config):
    """Ascent step restricted to ``span(w)`` (``w`` a unit vector).

    The projected gradient is shrunk by ``1 + reg * (1 - cos^2)`` so that
    rows whose gradient is far from the sensitive direction barely move.
    """
    along = g @ w
    gn2 = np.einsum("nd,nd->n", g, g)
    cos2 = np.where(gn2 > EPS_NORM ** 2, along ** 2 / np.where(gn2 > 0, gn2, 1.0), 0.0)
    scale = config.step_size * along / (1.0 + config.subspace_reg * (1.0 - cos2))
    return scale[:, None] * w[None, :]


def score_unfair_map(f_tar, w_lin, x, config=None, bounds=None, space="probability"):
    """Output change after a subspace-restricted gradient ascent.

    ``bounds`` is an optional ``(lower, upper)`` pair of per-feature limits
    that iterates are clipped to.
    """
    config = config or UnfairMapConfig()
    if isinstance(config, AuditConfig):
        config = config.unfair_map
    x2, single = _batch(x)
    w = _unit_weights(w_lin)
    out = positive_output(f_tar)
    start = forward(f_tar, x2)[:, out]
    xt = x2.copy()
    for step in range(config.steps):
        xt = xt + unfair_map_step(input_gradient(f_tar, xt, out, space), w, config)
        if bounds is not None:
            xt = np.clip(xt, bounds[0], bounds[1])
        if not np.all(np.isfinite(xt)):
            raise DivergenceError("unfair-map iterate became non-finite", epoch=step)
    return _out(np.abs(forward(f_tar, xt)[:, out] - start), single)


def score_lic_ub(f_tar, x, dxdc, space="probability"):
    """``|grad f_tar . dx/dc|_inf`` with the exact generative Jacobian ``(n, d, k)``."""
    x2, single = _batch(x)
    dxdc = np.asarray(dxdc, dtype=np.float64)
    if dxdc.ndim == 2:
        dxdc = dxdc[None] if single else dxdc[:, :, None]
    g = target_gradient(f_tar, x2, space)
    s = np.abs(np.einsum("nd,ndk->nk", g, dxdc)).max(axis=1)
    return _out(s, single)


# -- drivers -----------------------------------------------------------------------

def audit_arrays(dataset, f_tar, f_aux, config=None, spec=None, w_lin=None, bounds=None):
    """All requested scores as ``{test: (n,) array}`` plus per-row notes.

    ``lic_ub`` needs ``spec`` and dataset provenance and is skipped without
    them. ``w_lin`` defaults to a logistic fit of the first protected column
    on the audited features; ``bounds`` default to their observed range.
    """
    from .synthgen import true_dxdc

    config = config or AuditConfig()
    x = dataset.features
    n = x.shape[0]
    scores, notes = {}, [[] for _ in range(n)]
    if n == 0:
        return {t: np.zeros(0) for t in config.tests if t != "lic_ub" or spec is not None}, notes
    if f_tar.input_dim != x.shape[1] or (f_aux is not None and f_aux.input_dim != x.shape[1]):
        raise ContractError("model input width does not match the dataset features")
    bad = np.flatnonzero(~np.all(np.isfinite(x), axis=1))
    if bad.size:
        raise AuditError(f"non-finite features in rows {bad.tolist()}", bad)
    tests = config.tests
    space = config.gradient_space
    g_t = target_gradient(f_tar, x, space)
    if {"faux", "faux_ng"} & set(tests):
        jac = aux_jacobian(f_aux, x, space)
        if "faux" in tests:
            scores["faux"], degenerate = faux_from_gradients(g_t, jac)
            for i in np.flatnonzero(degenerate):
                notes[i].append("degenerate auxiliary gradient")
        if "faux_ng" in tests:
            scores["faux_ng"] = faux_ng_from_gradients(g_t, jac)
    if "faux_ig" in tests:
        baseline = config.ig_baseline
        if baseline is None:
            baseline = x.mean(axis=0)
        scores["faux_ig"] = score_faux_ig(f_tar, f_aux, x, config, baseline)
    if "fta" in tests:
        scores["fta"] = lp_norm(g_t, config.fta_norm)
    if {"fta_weighted", "unfair_map"} & set(tests):
        if w_lin is None:
            w_lin = fit_logistic(x, dataset.protected[:, 0], l2=config.logistic_l2)
        if "fta_weighted" in tests:
            scores["fta_weighted"] = np.abs(g_t @ _unit_weights(w_lin))
        if "unfair_map" in tests:
            if bounds is None:
                bounds = (x.min(axis=0), x.max(axis=0))
            scores["unfair_map"] = score_unfair_map(f_tar, w_lin, x, config.unfair_map,
                                                    bounds, space)
    if "lic_ub" in tests and spec is not None and dataset.provenance is not None:
        scores["lic_ub"] = score_lic_ub(f_tar, x, true_dxdc(spec, dataset.provenance), space)
    for t, s in scores.items():
        bad = np.flatnonzero(~np.isfinite(s) | (s < 0))
        if bad.size:
            raise AuditError(f"test {t} produced invalid scores in rows {bad.tolist()}", bad)
    return {t: scores[t] for t in TESTS if t in scores}, notes


def flags_for(scores, config):
    return {t: (s > config.delta_for(t)).astype(np.int64) for t, s in scores.items()}


def audit(dataset, f_tar, f_aux, config=None, spec=None, w_lin=None, bounds=None):
    """One :class:`ScoreRecord` per row, in row order."""
    config = config or AuditConfig()
    scores, notes = audit_arrays(dataset, f_tar, f_aux, config, spec, w_lin, bounds)
    flags = flags_for(scores, config)
    return [
        ScoreRecord(i, {t: float(s[i]) for t, s in scores.items()},
                    {t: int(f[i]) for t, f in flags.items()}, tuple(notes[i]))
        for i in range(dataset.n_rows)
    ]


def transparency(f_aux, dataset, subgroup=0, attribute=0, space="probability"):
    """Rank features by ``|mean grad f_aux|`` over rows with ``c == subgroup``.

    One-hot groups score the mean of their members.
    """
    mask = dataset.protected[:, attribute] == subgroup
    if not np.any(mask):
        raise ContractError("transparency subgroup is empty")
    out = aux_outputs(f_aux)[attribute]
    g = input_gradient(f_aux, dataset.features[mask], out, space)
    feature_scores = np.abs(g.mean(axis=0))
    groups = dataset.feature_groups()
    scores = np.array([feature_scores[grp].mean() for grp in groups])
    ranking = np.argsort(-scores, kind="stable").tolist()
    return TransparencyReport(dataset.group_names(), scores, groups, ranking,
                              feature_scores, list(dataset.column_names))
