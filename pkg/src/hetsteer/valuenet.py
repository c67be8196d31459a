"""Per-cell goodness scorer: three 1-wide convolution layers (20/10/1 channels).

Kernels are one cell wide, so every cell column goes through the same
3->20->10->1 transform (ReLU, ReLU, Sigmoid) independently: the output is
one value in (0,1) per cell, invariant to how many cells the observation
has and equivariant under column permutations.  Gradients are exact and
the update is a plain scaled add, as semi-gradient SARSA needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SnapshotError, TrainingDivergenceError

CHANNEL_PLAN = (20, 10, 1)
N_FEATURES = 3
_SNAPSHOT_VERSION = 1


@dataclass
class QNetwork:
    """Weights and biases of the three-layer scorer (float64 throughout)."""

    w1: np.ndarray  # (20, 3)
    b1: np.ndarray  # (20,)
    w2: np.ndarray  # (10, 20)
    b2: np.ndarray  # (10,)
    w3: np.ndarray  # (1, 10)
    b3: np.ndarray  # (1,)

    def params(self):
        return (self.w1, self.b1, self.w2, self.b2, self.w3, self.b3)

    def copy(self) -> "QNetwork":
        return QNetwork(*(p.copy() for p in self.params()))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params())


@dataclass
class ForwardCache:
    """Activations kept from a forward pass for exact gradient computation."""

    x: np.ndarray  # (3, N) input features
    h1: np.ndarray  # (20, N) post-ReLU
    h2: np.ndarray  # (10, N) post-ReLU
    q: np.ndarray  # (N,) sigmoid outputs


@dataclass
class Gradient:
    """Partials of one scalar output w.r.t. every parameter (QNetwork shapes)."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    def params(self):
        return (self.w1, self.b1, self.w2, self.b2, self.w3, self.b3)


def init_weights(seed) -> QNetwork:
    """Fan-balanced uniform init (+-sqrt(6/(fan_in+fan_out))), zero biases."""
    rng = np.random.default_rng(seed)
    shapes = [(CHANNEL_PLAN[0], N_FEATURES), (CHANNEL_PLAN[1], CHANNEL_PLAN[0]), (CHANNEL_PLAN[2], CHANNEL_PLAN[1])]
    weights = []
    for out_ch, in_ch in shapes:
        limit = np.sqrt(6.0 / (in_ch + out_ch))
        weights.append(rng.uniform(-limit, limit, size=(out_ch, in_ch)))
    return QNetwork(
        w1=weights[0],
        b1=np.zeros(CHANNEL_PLAN[0]),
        w2=weights[1],
        b2=np.zeros(CHANNEL_PLAN[1]),
        w3=weights[2],
        b3=np.zeros(CHANNEL_PLAN[2]),
    )


def forward(qnet: QNetwork, obs: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Score every cell column of a (3, N) observation; returns values in (0,1)."""
    x = np.asarray(obs, dtype=float)
    if x.ndim != 2 or x.shape[0] != N_FEATURES:
        raise ValueError(f"observation must have shape (3, N), got {x.shape}")
    h1 = np.maximum(qnet.w1 @ x + qnet.b1[:, None], 0.0)
    h2 = np.maximum(qnet.w2 @ h1 + qnet.b2[:, None], 0.0)
    z3 = qnet.w3[0] @ h2 + qnet.b3[0]
    q = 1.0 / (1.0 + np.exp(-z3))
    return q, ForwardCache(x=x, h1=h1, h2=h2, q=q)


def grad_wrt_params(qnet: QNetwork, cache: ForwardCache, cell_index: int) -> Gradient:
    """Exact gradient of q_values[cell_index] w.r.t. all weights and biases.

    Column independence of the 1-wide kernels means only the selected
    column's activations enter; parameters never touch other columns.
    """
    n = cache.q.shape[0]
    if not 0 <= cell_index < n:
        raise IndexError(f"cell index {cell_index} out of range for {n} cells")
    x = cache.x[:, cell_index]
    h1 = cache.h1[:, cell_index]
    h2 = cache.h2[:, cell_index]
    qv = cache.q[cell_index]

    d3 = qv * (1.0 - qv)  # sigmoid'
    g_w3 = (d3 * h2)[None, :]
    g_b3 = np.array([d3])
    d2 = d3 * qnet.w3[0] * (h2 > 0.0)
    g_w2 = np.outer(d2, h1)
    g_b2 = d2
    d1 = (qnet.w2.T @ d2) * (h1 > 0.0)
    g_w1 = np.outer(d1, x)
    g_b1 = d1
    return Gradient(w1=g_w1, b1=g_b1, w2=g_w2, b2=g_b2, w3=g_w3, b3=g_b3)


def apply_update(qnet: QNetwork, gradient: Gradient, scale: float) -> QNetwork:
    """In-place w <- w + scale * g for every parameter; rejects non-finite results."""
    if not np.isfinite(scale):
        raise TrainingDivergenceError(f"non-finite update scale {scale}")
    for p, g in zip(qnet.params(), gradient.params()):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        p += scale * g
    if not qnet.all_finite():
        raise TrainingDivergenceError("network weights became non-finite after an update")
    return qnet


def save_weights(qnet: QNetwork, path) -> None:
    """Versioned binary snapshot; round-trips bit-exactly."""
    with open(path, "wb") as fh:
        np.savez(
            fh,
            version=np.array([_SNAPSHOT_VERSION]),
            channels=np.array(CHANNEL_PLAN),
            w1=qnet.w1,
            b1=qnet.b1,
            w2=qnet.w2,
            b2=qnet.b2,
            w3=qnet.w3,
            b3=qnet.b3,
        )


def load_weights(path) -> QNetwork:
    """Load a snapshot, validating format version and channel plan."""
    try:
        with np.load(path) as data:
            fields = {k: data[k] for k in data.files}
    except Exception as exc:
        raise SnapshotError(f"cannot read weight snapshot {path}: {exc}") from exc
    expected = {"version", "channels", "w1", "b1", "w2", "b2", "w3", "b3"}
    if set(fields) != expected:
        raise SnapshotError(f"snapshot {path} has fields {sorted(fields)}, expected {sorted(expected)}")
    if fields["version"].tolist() != [_SNAPSHOT_VERSION]:
        raise SnapshotError(f"snapshot version {fields['version'].tolist()} not supported")
    if fields["channels"].tolist() != list(CHANNEL_PLAN):
        raise SnapshotError(
            f"snapshot channel plan {fields['channels'].tolist()} does not match {list(CHANNEL_PLAN)}"
        )
    shapes = {
        "w1": (CHANNEL_PLAN[0], N_FEATURES),
        "b1": (CHANNEL_PLAN[0],),
        "w2": (CHANNEL_PLAN[1], CHANNEL_PLAN[0]),
        "b2": (CHANNEL_PLAN[1],),
        "w3": (CHANNEL_PLAN[2], CHANNEL_PLAN[1]),
        "b3": (CHANNEL_PLAN[2],),
    }
    for name, shape in shapes.items():
        if fields[name].shape != shape:
            raise SnapshotError(f"snapshot field {name} has shape {fields[name].shape}, expected {shape}")
    net = QNetwork(*(fields[n].astype(float) for n in ("w1", "b1", "w2", "b2", "w3", "b3")))
    if not net.all_finite():
        raise SnapshotError(f"snapshot {path} contains non-finite values")
    return net
