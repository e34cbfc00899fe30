import numpy as np
import pytest

from ialam.datasets import write_idx
from ialam.network import AuxState, DataBatch, HyperParams, NetworkShape, Params, forward
from ialam.penalty import Multipliers


def rng_for(seed):
    return np.random.Generator(np.random.PCG64(seed))


def random_instance(rng, dims, N, alpha=0.1, lam_w=None, feasible_aux=False):
    """Random (shape, hp, params, aux, xi, batch) with a cone-feasible aux."""
    shape = NetworkShape(tuple(dims), N)
    L = shape.L
    hp = HyperParams(
        alpha=alpha,
        lambda_w=lam_w if lam_w is not None else float(rng.uniform(0.05, 0.5)),
        lambda_v=float(rng.uniform(0.01, 0.2)),
        beta=rng.uniform(0.05, 0.5, size=L),
        tau1=float(rng.uniform(0.05, 0.5)),
    )
    Ws = [rng.standard_normal((dims[l], dims[l - 1])) for l in range(1, L + 1)]
    bs = [rng.standard_normal(dims[l]) for l in range(1, L + 1)]
    params = Params(Ws, bs)
    batch = DataBatch(rng.standard_normal((dims[0], N)), rng.standard_normal((dims[-1], N)))
    if feasible_aux:
        aux = forward(params, batch, hp)
    else:
        aux = random_aux(rng, shape, alpha)
    xi = Multipliers([rng.standard_normal((dims[l], N)) for l in range(1, L + 1)])
    return shape, hp, params, aux, xi, batch


def random_aux(rng, shape, alpha):
    """u arbitrary, v = max(u, alpha u) + nonnegative slack."""
    us, vs = [], []
    for l in range(1, shape.L + 1):
        U = rng.standard_normal((shape.dims[l], shape.N))
        V = np.maximum(U, alpha * U) + rng.exponential(0.5, size=U.shape)
        us.append(U)
        vs.append(V)
    return AuxState(vs, us, feasible=True)


@pytest.fixture
def rng():
    return rng_for(12345)


@pytest.fixture
def tiny():
    """Two-layer instance small enough for exhaustive checks."""
    return random_instance(rng_for(7), (3, 2, 2), 4)


@pytest.fixture
def fake_mnist(tmp_path):
    rng = np.random.Generator(np.random.PCG64(0))
    for prefix, n in (("train", 300), ("t10k", 100)):
        labels = np.repeat(np.arange(10, dtype=np.uint8), n // 10)
        imgs = rng.integers(0, 256, size=(n, 28, 28), dtype=np.uint8)
        imgs[:, 0, 0] = 255
        imgs[:, 0, 1] = 0
        imgs[:, 1, 0] = labels  # lets the test check that labels follow their images
        write_idx(tmp_path / f"{prefix}-images-idx3-ubyte.gz", imgs)
        write_idx(tmp_path / f"{prefix}-labels-idx1-ubyte", labels)
    return tmp_path


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE = []


def report(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
