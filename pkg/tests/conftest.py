import numpy as np
import pytest

from textrec.tensor import GradTape, Tensor, backward


def fd_gradient(f, arrays, which, h=1e-5):
    """Central-difference gradient of scalar f(*arrays) w.r.t. arrays[which].

    Uses forward evaluation only, independent of the reverse pass it checks.
    """
    base = [np.array(a, dtype=np.float64) for a in arrays]
    g = np.zeros_like(base[which])
    it = np.nditer(base[which], flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = base[which][idx]
        base[which][idx] = orig + h
        up = f(*base)
        base[which][idx] = orig - h
        down = f(*base)
        base[which][idx] = orig
        g[idx] = (up - down) / (2.0 * h)
        it.iternext()
    return g


def rel_err(analytic, numeric):
    """Max elementwise |a - n| / max(1, |a|)."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))))


def analytic_gradients(build_loss, arrays):
    """Reverse-pass gradients of build_loss(tensors...) for every input array."""
    tape = GradTape()
    tensors = []
    for i, a in enumerate(arrays):
        t = Tensor(a)
        tape.watch(f"p{i}", t)
        tensors.append(t)
    loss = build_loss(*tensors)
    grads = backward(loss, tape)
    return [grads[f"p{i}"] for i in range(len(arrays))]


@pytest.fixture
def rng():
    return np.random.default_rng(0)
