"""Biased synthetic datasets with a known generative model.

Two class-conditional feature blocks are sampled, one driven by the label
``y`` and one by the protected attribute ``c``, and fused into a single
observation. ``(y, c)`` are drawn from a 2x2 joint whose dependence is set
by one ``bias`` knob. Because the generators are closed-form, every row can
be replayed with ``c`` flipped (its counterfactual), and the exact
derivative of the features with respect to ``c`` is available.
"""

from dataclasses import dataclass, field, asdict
import math

import numpy as np

from .dataset import Dataset
from .errors import ContractError, ProvenanceError
from .linalg import child_seed, make_rng
from .neural.mlp import forward, softmax

GRID_POINTS = 1001
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


# -- joint distribution of (c, y) -------------------------------------------

@dataclass(frozen=True)
class JointBias:
    """``table[c][y] = P(C=c, Y=y)``."""

    p_c1: float
    p_y1: float
    bias: float
    table: np.ndarray

    def cell_probabilities(self):
        """Flat ``[P(0,0), P(0,1), P(1,0), P(1,1)]``."""
        return np.asarray(self.table, dtype=np.float64).ravel()

    def to_dict(self):
        return {"p_c1": self.p_c1, "p_y1": self.p_y1, "bias": self.bias}


def _table_from_p11(p11, p_c1, p_y1):
    return np.array([
        [1.0 - p_c1 - p_y1 + p11, p_y1 - p11],
        [p_c1 - p11, p11],
    ])


def dependence(table, reference):
    """sum P log(P / P_ref) with 0 log 0 = 0."""
    table = np.asarray(table, dtype=np.float64)
    mask = table > 0
    return float(np.sum(table[mask] * np.log(table[mask] / reference[mask])))


def _golden_max(f, lo, hi, iters=60):
    a, b = lo, hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(x1)
    return (x1, f1) if f1 >= f2 else (x2, f2)


def _max_dependence_p11(p_c1, p_y1, p_min):
    lo = max(0.0, p_c1 + p_y1 - 1.0)
    hi = min(p_c1, p_y1)

    def h(p):
        return dependence(_table_from_p11(p, p_c1, p_y1), p_min)

    grid = np.linspace(lo, hi, GRID_POINTS)
    grid[0], grid[-1] = lo, hi
    cells = np.stack([1.0 - p_c1 - p_y1 + grid, p_y1 - grid, p_c1 - grid, grid])
    ref = p_min.reshape(4, 1)
    safe = np.where(cells > 0, cells, 1.0)
    values = np.where(cells > 0, cells * np.log(safe / ref), 0.0).sum(axis=0)
    top = values.max()
    tol = 1e-12 * max(1.0, abs(top))
    # ties go to the larger P(1,1), i.e. positive correlation
    i = int(np.flatnonzero(values >= top - tol)[-1])
    best_p, best_h = grid[i], values[i]
    step = grid[1] - grid[0] if GRID_POINTS > 1 else 0.0
    for _ in range(2):
        a, b = max(lo, best_p - step), min(hi, best_p + step)
        if b <= a:
            break
        p, v = _golden_max(h, a, b)
        if v > best_h + tol:
            best_p, best_h = p, v
        step *= _GOLDEN
    return best_p


def build_joint(p_c1, p_y1, bias):
    """Interpolate between the independent joint and the most dependent one.

    The most dependent joint maximizes ``sum P log(P / P_c P_y)`` over all
    tables with the given marginals, a one-parameter family indexed by
    ``P(1,1)``.
    """
    if not (0.0 < p_c1 < 1.0 and 0.0 < p_y1 < 1.0):
        raise ContractError("marginals must lie strictly inside (0, 1)")
    if not 0.0 <= bias <= 1.0:
        raise ContractError("bias must lie in [0, 1]")
    p_min = np.outer([1.0 - p_c1, p_c1], [1.0 - p_y1, p_y1])
    p_max = _table_from_p11(_max_dependence_p11(p_c1, p_y1, p_min), p_c1, p_y1)
    p_max = np.clip(p_max, 0.0, 1.0)
    table = (1.0 - bias) * p_min + bias * p_max
    return JointBias(float(p_c1), float(p_y1), float(bias), table)


# -- block generators ----------------------------------------------------------

@dataclass(frozen=True)
class BlockGenerator:
    """Class-conditional feature block driven by ``psi(v) = embed_scale * v + embed_shift``.

    ``gaussian-mixture``: pick component ``j`` with ``weights``, then
    ``x = centers[j] + psi * slopes[j] + scales[j] * z`` with ``z ~ N(0, I)``.

    ``simplex-softmax``: ``x = softmax(mixing @ z + psi * slopes[0] + centers[0])``
    with ``z ~ N(0, I_latent)``; rows lie on the probability simplex.
    """

    kind: str
    centers: np.ndarray
    slopes: np.ndarray
    scales: np.ndarray = None
    weights: np.ndarray = None
    mixing: np.ndarray = None
    embed_scale: float = 2.0
    embed_shift: float = -1.0

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=np.float64))
        slopes = np.atleast_2d(np.asarray(self.slopes, dtype=np.float64))
        if centers.shape != slopes.shape:
            raise ContractError("centers and slopes must have the same shape")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "slopes", slopes)
        if self.kind == "gaussian-mixture":
            m = centers.shape[0]
            scales = np.ones_like(centers) if self.scales is None else self.scales
            scales = np.atleast_2d(np.asarray(scales, dtype=np.float64))
            weights = np.full(m, 1.0 / m) if self.weights is None else self.weights
            weights = np.asarray(weights, dtype=np.float64).reshape(-1)
            if scales.shape != centers.shape or weights.shape != (m,):
                raise ContractError("scales/weights do not match the component count")
            if np.any(weights < 0) or not math.isclose(weights.sum(), 1.0, abs_tol=1e-9):
                raise ContractError("mixture weights must be a probability vector")
            object.__setattr__(self, "scales", scales)
            object.__setattr__(self, "weights", weights)
        elif self.kind == "simplex-softmax":
            if centers.shape[0] != 1:
                raise ContractError("simplex-softmax takes a single center/slope row")
            mixing = np.atleast_2d(np.asarray(self.mixing, dtype=np.float64))
            if mixing.shape[0] != centers.shape[1]:
                raise ContractError("mixing must have one row per output dimension")
            object.__setattr__(self, "mixing", mixing)
        else:
            raise ContractError(f"unknown generator kind {self.kind!r}")

    @property
    def out_dim(self):
        return self.centers.shape[1]

    @property
    def latent_dim(self):
        if self.kind == "gaussian-mixture":
            return self.out_dim
        return self.mixing.shape[1]

    def psi(self, v):
        return self.embed_scale * np.asarray(v, dtype=np.float64) + self.embed_shift

    def draw_latents(self, n, rng):
        """Component indices (``-1`` for simplex blocks) and latent vectors."""
        if self.kind == "gaussian-mixture":
            comp = rng.choice(self.weights.size, size=n, p=self.weights)
        else:
            comp = np.full(n, -1, dtype=np.int64)
        z = rng.standard_normal((n, self.latent_dim))
        return comp.astype(np.int64), z

    def _logits(self, psi, z):
        return z @ self.mixing.T + psi[:, None] * self.slopes[0] + self.centers[0]

    def sample(self, v, comp, z):
        """Block values for class values ``v`` (n,) and latents."""
        psi = self.psi(np.asarray(v, dtype=np.float64).reshape(-1))
        if self.kind == "gaussian-mixture":
            return self.centers[comp] + psi[:, None] * self.slopes[comp] + self.scales[comp] * z
        return softmax(self._logits(psi, z))

    def dx_dpsi(self, v, comp, z):
        """Closed-form derivative of :meth:`sample` with respect to ``psi``."""
        if self.kind == "gaussian-mixture":
            return np.array(self.slopes[comp])
        x = self.sample(v, comp, z)
        s = self.slopes[0]
        return x * (s[None, :] - (x @ s)[:, None])

    def to_dict(self):
        doc = {"kind": self.kind, "centers": self.centers.tolist(),
               "slopes": self.slopes.tolist(), "embed_scale": self.embed_scale,
               "embed_shift": self.embed_shift}
        if self.kind == "gaussian-mixture":
            doc.update(scales=self.scales.tolist(), weights=self.weights.tolist())
        else:
            doc["mixing"] = self.mixing.tolist()
        return doc

    @classmethod
    def from_dict(cls, doc):
        return cls(**doc)


def gaussian_block(out_dim, separation=2.0, noise=1.0, n_components=1,
                   informative=None, seed=0):
    """Random Gaussian-mixture block.

    Component means are spread with unit scale; the class effect of each
    component points in a random direction of length ``separation / 2``
    (so the two class means sit ``separation`` apart under the default
    embed). ``informative`` restricts the class effect to the first columns.
    """
    rng = make_rng(seed)
    m = int(n_components)
    centers = rng.standard_normal((m, out_dim)) if m > 1 else np.zeros((1, out_dim))
    k = out_dim if informative is None else int(informative)
    dirs = np.zeros((m, out_dim))
    raw = rng.standard_normal((m, k))
    dirs[:, :k] = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    slopes = 0.5 * separation * dirs
    scales = np.full((m, out_dim), float(noise))
    return BlockGenerator("gaussian-mixture", centers, slopes, scales, np.full(m, 1.0 / m))


def simplex_block(out_dim, latent_dim=None, separation=2.0, spread=1.0, seed=0):
    """Random softmax-of-affine block whose rows sum to one."""
    rng = make_rng(seed)
    latent_dim = out_dim if latent_dim is None else int(latent_dim)
    mixing = spread * rng.standard_normal((out_dim, latent_dim)) / np.sqrt(latent_dim)
    raw = rng.standard_normal(out_dim)
    raw -= raw.mean()
    slopes = 0.5 * separation * raw / np.linalg.norm(raw)
    return BlockGenerator("simplex-softmax", np.zeros((1, out_dim)), slopes[None, :],
                          mixing=mixing)


# -- fusion ----------------------------------------------------------------------

def fuse_concat(a, b):
    """``[a || b]`` for vectors or row batches."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.concatenate([a, b], axis=-1)


def fuse_outer(a, b, tol=1e-9):
    """Row-major ``vec(a (x) b)``; both inputs must sum to one."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.any(np.abs(a.sum(axis=-1) - 1.0) > tol) or np.any(np.abs(b.sum(axis=-1) - 1.0) > tol):
        raise ContractError("outer fusion needs inputs on the probability simplex")
    prod = a[..., :, None] * b[..., None, :]
    return prod.reshape(*prod.shape[:-2], -1)


FUSIONS = {"concat": fuse_concat, "outer": fuse_outer}


# -- spec and provenance -------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    y_generator: BlockGenerator
    c_generator: BlockGenerator
    fusion: str
    joint: JointBias
    n_samples: int
    seed: int = 0

    def __post_init__(self):
        if self.fusion not in FUSIONS:
            raise ContractError(f"unknown fusion {self.fusion!r}")
        if self.fusion == "outer" and not (
                self.y_generator.kind == "simplex-softmax"
                and self.c_generator.kind == "simplex-softmax"):
            raise ContractError("outer fusion requires two simplex-softmax generators")
        if self.n_samples < 0:
            raise ContractError("n_samples must be >= 0")

    @property
    def n_features(self):
        dy, dc = self.y_generator.out_dim, self.c_generator.out_dim
        return dy + dc if self.fusion == "concat" else dy * dc

    def column_names(self):
        dy, dc = self.y_generator.out_dim, self.c_generator.out_dim
        if self.fusion == "concat":
            return [f"xy{i}" for i in range(dy)] + [f"xc{j}" for j in range(dc)]
        return [f"o{i}_{j}" for i in range(dy) for j in range(dc)]

    def y_block_columns(self):
        """Indices of features that depend on the y-block only (concat)."""
        if self.fusion != "concat":
            return []
        return list(range(self.y_generator.out_dim))

    def c_block_columns(self):
        if self.fusion != "concat":
            return []
        dy = self.y_generator.out_dim
        return list(range(dy, dy + self.c_generator.out_dim))

    def with_bias(self, bias, seed=None):
        joint = build_joint(self.joint.p_c1, self.joint.p_y1, bias)
        return SyntheticSpec(self.y_generator, self.c_generator, self.fusion, joint,
                             self.n_samples, self.seed if seed is None else seed)

    def to_dict(self):
        return {
            "y_generator": self.y_generator.to_dict(),
            "c_generator": self.c_generator.to_dict(),
            "fusion": self.fusion,
            "joint": self.joint.to_dict(),
            "n_samples": self.n_samples,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc):
        j = doc["joint"]
        return cls(BlockGenerator.from_dict(doc["y_generator"]),
                   BlockGenerator.from_dict(doc["c_generator"]),
                   doc["fusion"], build_joint(j["p_c1"], j["p_y1"], j["bias"]),
                   int(doc["n_samples"]), int(doc.get("seed", 0)))


@dataclass
class Provenance:
    """Per-row class draws and latents, enough to replay any row."""

    y: np.ndarray
    c: np.ndarray
    y_component: np.ndarray
    y_latent: np.ndarray
    c_component: np.ndarray
    c_latent: np.ndarray

    def __len__(self):
        return int(self.y.shape[0])

    def subset(self, idx):
        return Provenance(*(np.asarray(getattr(self, f))[idx] for f in self._fields()))

    @staticmethod
    def _fields():
        return ("y", "c", "y_component", "y_latent", "c_component", "c_latent")

    def to_dict(self):
        return {f: np.asarray(getattr(self, f)).tolist() for f in self._fields()}

    @classmethod
    def from_dict(cls, doc):
        ints = {"y", "c", "y_component", "c_component"}
        vals = []
        for f in cls._fields():
            a = np.asarray(doc[f], dtype=np.int64 if f in ints else np.float64)
            if f.endswith("latent") and a.ndim == 1:
                a = a.reshape(len(doc["y"]), -1)
            vals.append(a)
        return cls(*vals)


def _render(spec, y, c, prov):
    xy = spec.y_generator.sample(y, prov.y_component, prov.y_latent)
    xc = spec.c_generator.sample(c, prov.c_component, prov.c_latent)
    return FUSIONS[spec.fusion](xy, xc)


def _draw(spec, n, rng):
    cells = rng.choice(4, size=n, p=spec.joint.cell_probabilities())
    c, y = np.divmod(cells, 2)
    y_comp, y_lat = spec.y_generator.draw_latents(n, rng)
    c_comp, c_lat = spec.c_generator.draw_latents(n, rng)
    return Provenance(y.astype(np.int64), c.astype(np.int64), y_comp, y_lat, c_comp, c_lat)


def sample_dataset(spec):
    """Draw ``spec.n_samples`` rows; fully determined by ``spec.seed``."""
    rng = make_rng(spec.seed)
    prov = _draw(spec, spec.n_samples, rng)
    if spec.n_samples:
        x = _render(spec, prov.y, prov.c, prov)
    else:
        x = np.zeros((0, spec.n_features))
    groups = []
    return Dataset(
        features=x,
        labels=prov.y.astype(np.float64),
        protected=prov.c.astype(np.float64)[:, None],
        column_names=spec.column_names(),
        protected_names=["c"],
        label_name="y",
        one_hot_groups=groups,
        provenance=prov,
    )


def counterfactual_features(spec, provenance):
    """Features of every recorded row with ``c`` flipped, latents and ``y`` kept."""
    if provenance is None:
        raise ProvenanceError("row has no synthetic provenance")
    return _render(spec, provenance.y, 1 - provenance.c, provenance)


def counterfactual_pair(spec, rng):
    """One fresh ``(x, x_cf, y, c, c_cf)`` sharing every latent but ``c``."""
    prov = _draw(spec, 1, rng)
    x = _render(spec, prov.y, prov.c, prov)[0]
    x_cf = counterfactual_features(spec, prov)[0]
    c = int(prov.c[0])
    return x, x_cf, int(prov.y[0]), c, 1 - c


def ifs_from_pairs(model, x, x_cf):
    """l1 distance between model outputs on rows and their counterfactuals."""
    a = np.atleast_2d(forward(model, x))
    b = np.atleast_2d(forward(model, x_cf))
    return np.abs(a - b).sum(axis=1)


def ifs_scores(model, spec, n_pairs, seed=None):
    """Individual fairness scores over ``n_pairs`` freshly drawn pairs."""
    rng = make_rng(child_seed(spec.seed if seed is None else seed, "ifs"))
    prov = _draw(spec, int(n_pairs), rng)
    if n_pairs == 0:
        return np.zeros(0)
    x = _render(spec, prov.y, prov.c, prov)
    return ifs_from_pairs(model, x, counterfactual_features(spec, prov))


def dataset_ifs(model, spec, dataset):
    """Individual fairness score of every row of a generated dataset."""
    if dataset.provenance is None:
        raise ProvenanceError("dataset has no synthetic provenance")
    return ifs_from_pairs(model, dataset.features,
                          counterfactual_features(spec, dataset.provenance))


def fairness_labels(ifs, sigma0, kappa=3.0):
    """1 where the score exceeds ``kappa`` reference standard deviations."""
    if sigma0 < 0:
        raise ContractError("sigma0 must be >= 0")
    return (np.asarray(ifs, dtype=np.float64) > kappa * sigma0).astype(np.int64)


def true_dxdc(spec, provenance):
    """Exact ``dx/dc`` of every recorded row, shape ``(n, d, 1)``."""
    if provenance is None:
        raise ProvenanceError("row has no synthetic provenance")
    gen = spec.c_generator
    d_block = gen.dx_dpsi(provenance.c, provenance.c_component, provenance.c_latent)
    d_block = d_block * gen.embed_scale
    n = d_block.shape[0]
    if spec.fusion == "concat":
        jac = np.zeros((n, spec.n_features))
        jac[:, spec.y_generator.out_dim:] = d_block
    else:
        xy = spec.y_generator.sample(provenance.y, provenance.y_component, provenance.y_latent)
        jac = (xy[:, :, None] * d_block[:, None, :]).reshape(n, -1)
    return jac[:, :, None]
