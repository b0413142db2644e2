import numpy as np
import pytest

from fauxaudit.dataset import Dataset
from fauxaudit.linalg import make_rng
from fauxaudit.neural import Layer, MlpModel, init_mlp


def linear_model(w, b=0.0, head="sigmoid"):
    w = np.asarray(w, dtype=np.float64)
    return MlpModel((Layer(w[None, :], [b], head),))


def constant_model(d, value=0.0):
    return MlpModel((Layer(np.zeros((1, d)), [value], "sigmoid"),))


def random_mlp(rng, d=None, head="sigmoid", out=1, max_depth=4, widths=(8, 128)):
    d = int(rng.integers(2, 9)) if d is None else d
    depth = int(rng.integers(1, max_depth + 1))
    hidden = [int(rng.integers(widths[0], widths[1] + 1)) for _ in range(depth - 1)]
    model = init_mlp(d, hidden, out, head=head, seed=int(rng.integers(2 ** 32)))
    # non-zero biases so relu kinks are not all at the origin
    layers = tuple(Layer(l.weight, rng.normal(0, 0.1, l.fan_out), l.activation)
                   for l in model.layers)
    return MlpModel(layers)


def central_difference(f, x, h=1e-5):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def blob_dataset(n=400, seed=0, gap=4.0):
    rng = make_rng(seed)
    y = rng.integers(0, 2, n)
    x = rng.normal(size=(n, 2)) + gap * (y[:, None] - 0.5)
    return Dataset(x, y, rng.integers(0, 2, n))


@pytest.fixture
def rng():
    return make_rng(12345)


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
