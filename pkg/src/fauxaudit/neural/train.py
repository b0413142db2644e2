"""Minibatch Adam training with early stopping, plus adversarial debiasing."""

from dataclasses import dataclass, field, asdict
import logging

import numpy as np

from ..errors import ContractError, DivergenceError
from ..linalg import child_seed, make_rng
from .mlp import _activation_backward, backward, forward_cache, init_mlp

log = logging.getLogger(__name__)

BETA1, BETA2, ADAM_EPS = 0.9, 0.999, 1e-8
VAL_FRACTION = 0.15
_LOG_FLOOR = 1e-300


@dataclass(frozen=True)
class AdversaryConfig:
    """Adversarial debiasing settings.

    The default adversary is a logistic regression on the target outputs
    with a fast learning rate: hidden relu units tend to die under the
    ``alpha``-scaled pressure from the target, and a slow adversary cannot
    follow the target when it flips its outputs.
    """

    alpha: float = 100.0
    alpha_decay: float = 0.99
    n_adv: int = 3
    adversary_arch: tuple = ()
    learning_rate: float = 0.05

    def __post_init__(self):
        if self.alpha < 0:
            raise ContractError("alpha must be >= 0")
        if not 0 < self.alpha_decay <= 1:
            raise ContractError("alpha_decay must lie in (0, 1]")
        if self.n_adv < 1:
            raise ContractError("n_adv must be >= 1")
        if not self.learning_rate > 0:
            raise ContractError("adversary learning_rate must be > 0")
        object.__setattr__(self, "adversary_arch", tuple(int(h) for h in self.adversary_arch))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0
    adversary: AdversaryConfig = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ContractError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ContractError("batch_size must be >= 1")
        if self.patience < 1:
            raise ContractError("patience must be >= 1")
        if self.max_epochs < 0:
            raise ContractError("max_epochs must be >= 0")
        if isinstance(self.adversary, dict):
            object.__setattr__(self, "adversary", AdversaryConfig(**self.adversary))

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainResult:
    model: object
    best_epoch: int
    epochs_run: int
    history: list = field(default_factory=list)
    train_accuracy: float = float("nan")
    val_accuracy: float = float("nan")
    adversary: object = None


class Adam:
    def __init__(self, params, lr):
        self.lr = lr
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - BETA1 ** self.t
        c2 = 1.0 - BETA2 ** self.t
        out = []
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= BETA1
            m += (1.0 - BETA1) * g
            v *= BETA2
            v += (1.0 - BETA2) * g * g
            out.append(p - self.lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS))
        return out


# -- losses ------------------------------------------------------------------

def targets_for(model, raw):
    """Shape 0/1 targets to match the model head.

    A single 0/1 column feeding a 2-way softmax is expanded to one-hot.
    """
    t = np.asarray(raw, dtype=np.float64)
    if t.ndim == 1:
        t = t[:, None]
    if model.head == "softmax" and t.shape[1] == 1 and model.output_dim == 2:
        t = np.hstack([1.0 - t, t])
    if t.shape[1] != model.output_dim:
        raise ContractError(
            f"targets have {t.shape[1]} columns but the model has {model.output_dim} outputs")
    return t


def cross_entropy(head, probs, t):
    """Mean cross-entropy and its gradient with respect to the head logits."""
    n = probs.shape[0]
    p = np.clip(probs, _LOG_FLOOR, 1.0)
    if head == "sigmoid":
        q = np.clip(1.0 - probs, _LOG_FLOOR, 1.0)
        k = probs.shape[1]
        loss = -np.sum(t * np.log(p) + (1.0 - t) * np.log(q)) / (n * k)
        grad = (probs - t) / (n * k)
    elif head == "softmax":
        loss = -np.sum(t * np.log(p)) / n
        grad = (probs - t) / n
    else:
        raise ContractError(f"cross-entropy needs a sigmoid or softmax head, not {head!r}")
    return loss, grad


def accuracy(head, probs, t):
    if probs.shape[0] == 0:
        return float("nan")
    if head == "softmax":
        return float(np.mean(np.argmax(probs, axis=1) == np.argmax(t, axis=1)))
    return float(np.mean((probs > 0.5) == (t > 0.5)))


def _eval_loss(model, x, t):
    probs = forward_cache(model, x)[-1][2]
    return cross_entropy(model.head, probs, t)[0], probs


def _split(n, seed):
    rng = make_rng(child_seed(seed, "split"))
    perm = rng.permutation(n)
    n_val = int(round(VAL_FRACTION * n)) if n >= 2 else 0
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def _check_finite(loss, epoch):
    if not np.isfinite(loss):
        raise DivergenceError(f"loss became non-finite at epoch {epoch}", epoch=epoch)


# -- plain training ----------------------------------------------------------

def fit(model, x, targets, config):
    """Train ``model`` on arrays; returns a :class:`TrainResult`.

    15% of the rows (chosen by ``config.seed``) are held out for early
    stopping. The returned model carries the parameters of the epoch with
    the lowest validation loss, the untouched initialization counting as
    epoch 0.
    """
    x = np.asarray(x, dtype=np.float64)
    t = targets_for(model, targets)
    if x.shape[0] == 0:
        raise ContractError("cannot train on an empty dataset")
    tr, va = _split(x.shape[0], config.seed)
    if va.size == 0:
        va = tr
    shuffle = make_rng(child_seed(config.seed, "shuffle"))
    opt = Adam(model.params(), config.learning_rate)
    params = [np.array(p) for p in model.params()]

    best_loss, _ = _eval_loss(model, x[va], t[va])
    best_params, best_epoch = params, 0
    history = [{"epoch": 0, "val_loss": best_loss}]
    wait = epoch = 0
    current = model
    for epoch in range(1, config.max_epochs + 1):
        order = tr[shuffle.permutation(tr.size)]
        for start in range(0, order.size, config.batch_size):
            idx = order[start:start + config.batch_size]
            cache = forward_cache(current, x[idx])
            loss, dz = cross_entropy(current.head, cache[-1][2], t[idx])
            _check_finite(loss, epoch)
            grads, _ = backward(current, cache, dz)
            params = opt.step(params, grads)
            current = model.with_params(params)
        val_loss, _ = _eval_loss(current, x[va], t[va])
        _check_finite(val_loss, epoch)
        history.append({"epoch": epoch, "val_loss": val_loss})
        if val_loss < best_loss:
            best_loss, best_params, best_epoch, wait = val_loss, params, epoch, 0
        else:
            wait += 1
            if wait >= config.patience:
                break
    best = model.with_params(best_params)
    return _finish(best, best_epoch, epoch, history, x, t, tr, va)


def _finish(best, best_epoch, epochs_run, history, x, t, tr, va, adversary=None):
    probs = forward_cache(best, x)[-1][2]
    best.meta.update(best_epoch=best_epoch, epochs_run=epochs_run)
    return TrainResult(
        model=best,
        best_epoch=best_epoch,
        epochs_run=epochs_run,
        history=history,
        train_accuracy=accuracy(best.head, probs[tr], t[tr]),
        val_accuracy=accuracy(best.head, probs[va], t[va]),
        adversary=adversary,
    )


def _role_targets(dataset, role):
    if role in ("y", "label"):
        return dataset.labels
    if role in ("c", "protected"):
        if dataset.protected.shape[1] == 0:
            raise ContractError("dataset has no protected columns")
        return dataset.protected
    raise ContractError(f"unknown target role {role!r}")


def train(model_init, dataset, target_column_role, config, full_result=False):
    """Fit ``model_init`` to the labels (``"y"``) or protected columns (``"c"``).

    Returns the trained :class:`MlpModel`, or the whole :class:`TrainResult`
    when ``full_result`` is set.
    """
    res = fit(model_init, dataset.features, _role_targets(dataset, target_column_role), config)
    return res if full_result else res.model


# -- adversarial debiasing -----------------------------------------------------

def _base_entropy(c):
    """Mean binary entropy (nats) of each protected column's base rate."""
    p = np.clip(c.mean(axis=0), _LOG_FLOOR, 1.0 - _LOG_FLOOR)
    return float(np.mean(-(p * np.log(p) + (1.0 - p) * np.log(1.0 - p))))


def fit_adversarial(model, x, targets, protected, config):
    """Task loss minus ``alpha`` times an adversary's loss, alternating.

    The adversary reads the target's output probabilities and predicts the
    protected columns. Every target epoch is preceded by ``n_adv`` adversary
    epochs; ``alpha`` is multiplied by ``alpha_decay`` after each epoch.

    Early stopping tracks ``task + alpha0 * leakage`` on the validation rows,
    where ``leakage = max(0, H(c) - adversary loss)`` is how far the
    adversary beats a constant base-rate guess and ``alpha0`` is the initial
    weight. Each epoch is judged only after the adversary has caught up on
    that epoch's outputs (the next adversary phase), so a target that has
    just flipped its outputs past a stale adversary is not rewarded. With
    ``alpha0 > 0`` the untrained initialization is not a candidate; with
    ``alpha0 = 0`` this reproduces :func:`fit` exactly.
    """
    adv_cfg = config.adversary or AdversaryConfig()
    x = np.asarray(x, dtype=np.float64)
    t = targets_for(model, targets)
    c = np.asarray(protected, dtype=np.float64)
    c = c[:, None] if c.ndim == 1 else c
    if x.shape[0] == 0:
        raise ContractError("cannot train on an empty dataset")
    if c.shape[0] != x.shape[0] or c.shape[1] == 0:
        raise ContractError("adversarial training needs protected columns for every row")
    tr, va = _split(x.shape[0], config.seed)
    if va.size == 0:
        va = tr
    shuffle = make_rng(child_seed(config.seed, "shuffle"))
    adv_shuffle = make_rng(child_seed(config.seed, "adversary-shuffle"))
    adversary = init_mlp(model.output_dim, adv_cfg.adversary_arch, c.shape[1],
                         head="sigmoid", seed=child_seed(config.seed, "adversary-init"))
    adv_params = [np.array(p) for p in adversary.params()]
    adv_opt = Adam(adv_params, adv_cfg.learning_rate)

    def adversary_phase(target, epoch):
        nonlocal adversary, adv_params
        out_tr = forward_cache(target, x[tr])[-1][2]
        for _ in range(adv_cfg.n_adv):
            order = adv_shuffle.permutation(tr.size)
            for start in range(0, order.size, config.batch_size):
                idx = order[start:start + config.batch_size]
                cache = forward_cache(adversary, out_tr[idx])
                loss, dz = cross_entropy("sigmoid", cache[-1][2], c[tr][idx])
                _check_finite(loss, epoch)
                grads, _ = backward(adversary, cache, dz)
                adv_params = adv_opt.step(adv_params, grads)
                adversary = adversary.with_params(adv_params)

    monitor = adv_cfg.alpha
    base_entropy = _base_entropy(c[tr])
    opt = Adam(model.params(), config.learning_rate)
    params = [np.array(p) for p in model.params()]
    init_loss, _ = _eval_loss(model, x[va], t[va])
    best = {"loss": np.inf if monitor > 0.0 else init_loss, "params": params, "epoch": 0}
    history = [{"epoch": 0, "val_loss": init_loss, "alpha": adv_cfg.alpha}]
    state = {"wait": 0}

    def judge(pending):
        """Record a finished epoch; True when patience has run out."""
        ep, ep_params, task_val, val_probs, alpha_used = pending
        score, adv_val = task_val, 0.0
        if monitor > 0.0:
            adv_val = cross_entropy("sigmoid", forward_cache(adversary, val_probs)[-1][2],
                                    c[va])[0]
            score = task_val + monitor * max(0.0, base_entropy - adv_val)
        history.append({"epoch": ep, "val_loss": score, "task_loss": task_val,
                        "adv_loss": adv_val, "alpha": alpha_used})
        if score < best["loss"]:
            best.update(loss=score, params=ep_params, epoch=ep)
            state["wait"] = 0
            return False
        state["wait"] += 1
        return state["wait"] >= config.patience

    alpha = adv_cfg.alpha
    current = model
    pending = None
    epochs_run = 0
    for epoch in range(1, config.max_epochs + 1):
        adversary_phase(current, epoch)
        if pending is not None:
            stop = judge(pending)
            pending = None
            if stop:
                break

        order = tr[shuffle.permutation(tr.size)]
        for start in range(0, order.size, config.batch_size):
            idx = order[start:start + config.batch_size]
            cache = forward_cache(current, x[idx])
            _, z_out, probs = cache[-1]
            loss, dz = cross_entropy(current.head, probs, t[idx])
            _check_finite(loss, epoch)
            if alpha > 0.0:
                a_cache = forward_cache(adversary, probs)
                _, a_dz = cross_entropy("sigmoid", a_cache[-1][2], c[idx])
                _, d_probs = backward(adversary, a_cache, a_dz, need_params=False)
                dz = dz - alpha * _activation_backward(current.head, z_out, probs, d_probs)
            grads, _ = backward(current, cache, dz)
            params = opt.step(params, grads)
            current = model.with_params(params)

        val_loss, val_probs = _eval_loss(current, x[va], t[va])
        _check_finite(val_loss, epoch)
        pending = (epoch, params, val_loss, val_probs, alpha)
        epochs_run = epoch
        alpha *= adv_cfg.alpha_decay
    if pending is not None:
        adversary_phase(current, epochs_run)
        judge(pending)
    result = model.with_params(best["params"])
    return _finish(result, best["epoch"], epochs_run, history, x, t, tr, va,
                   adversary=adversary)


def train_adversarial(model_init, dataset, config, target_column_role="y", full_result=False):
    res = fit_adversarial(model_init, dataset.features,
                          _role_targets(dataset, target_column_role),
                          dataset.protected, config)
    return res if full_result else res.model
