"""Tanh MLP actor-critic in plain numpy with hand-written backprop.

A shared trunk feeds two heads: action logits and a scalar state value.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

CKPT_MAGIC = b"WHPPONET"
CKPT_VERSION = 1
_HEAD = struct.Struct("<8sII")
_SHAPE = struct.Struct("<II")


def _orthogonal(rng, n_in, n_out, gain):
    a = rng.standard_normal((max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if n_in < n_out:
        q = q.T
    return gain * q[:n_in, :n_out]


class ActorCritic:
    def __init__(self, obs_dim: int, hidden=(100, 100), n_actions: int = 2, seed: int = 0,
                 params: list[np.ndarray] | None = None):
        self.obs_dim = obs_dim
        self.hidden = tuple(hidden)
        self.n_actions = n_actions
        if params is not None:
            self.params = [np.array(p, dtype=np.float64) for p in params]
            self._check_shapes()
            return
        rng = np.random.default_rng(seed)
        sizes = (obs_dim,) + self.hidden
        self.params = []
        for a, b in zip(sizes[:-1], sizes[1:]):
            self.params += [_orthogonal(rng, a, b, np.sqrt(2.0)), np.zeros((1, b))]
        self.params += [_orthogonal(rng, sizes[-1], n_actions, 0.01), np.zeros((1, n_actions))]
        self.params += [_orthogonal(rng, sizes[-1], 1, 1.0), np.zeros((1, 1))]

    def shapes(self):
        sizes = (self.obs_dim,) + self.hidden
        out = []
        for a, b in zip(sizes[:-1], sizes[1:]):
            out += [(a, b), (1, b)]
        return out + [(sizes[-1], self.n_actions), (1, self.n_actions), (sizes[-1], 1), (1, 1)]

    def _check_shapes(self):
        got = [p.shape for p in self.params]
        if got != self.shapes():
            raise ValueError(f"parameter shapes {got} do not match network {self.shapes()}")

    def copy(self) -> "ActorCritic":
        return ActorCritic(self.obs_dim, self.hidden, self.n_actions, params=self.params)

    def forward(self, x):
        """Returns ``(logits [N, A], value [N], cache)``."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        acts = [x]
        h = x
        n_trunk = len(self.hidden)
        for j in range(n_trunk):
            W, b = self.params[2 * j], self.params[2 * j + 1]
            h = np.tanh(h @ W + b)
            acts.append(h)
        Wp, bp, Wv, bv = self.params[2 * n_trunk:]
        logits = h @ Wp + bp
        value = (h @ Wv + bv)[:, 0]
        return logits, value, acts

    def backward(self, cache, dlogits, dvalue):
        """Gradients of a scalar loss given its derivatives w.r.t. both heads."""
        acts = cache
        n_trunk = len(self.hidden)
        h = acts[-1]
        Wp, _, Wv, _ = self.params[2 * n_trunk:]
        dv = np.asarray(dvalue, dtype=np.float64)[:, None]
        grads = [None] * len(self.params)
        grads[2 * n_trunk] = h.T @ dlogits
        grads[2 * n_trunk + 1] = dlogits.sum(axis=0, keepdims=True)
        grads[2 * n_trunk + 2] = h.T @ dv
        grads[2 * n_trunk + 3] = dv.sum(axis=0, keepdims=True)
        dh = dlogits @ Wp.T + dv @ Wv.T
        for j in reversed(range(n_trunk)):
            dz = dh * (1.0 - acts[j + 1] ** 2)
            grads[2 * j] = acts[j].T @ dz
            grads[2 * j + 1] = dz.sum(axis=0, keepdims=True)
            if j:
                dh = dz @ self.params[2 * j].T
        return grads


def log_softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def save_checkpoint(path, net: ActorCritic) -> None:
    with open(path, "wb") as f:
        f.write(_HEAD.pack(CKPT_MAGIC, CKPT_VERSION, len(net.params)))
        for p in net.params:
            f.write(_SHAPE.pack(*p.shape))
        for p in net.params:
            f.write(np.ascontiguousarray(p, dtype="<f8").tobytes(order="C"))


def load_checkpoint(path, obs_dim: int | None = None) -> ActorCritic:
    """Read a checkpoint; ``obs_dim`` guards against a scenario mismatch."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing checkpoint: {path}")
    raw = path.read_bytes()
    magic, version, n = _HEAD.unpack_from(raw)
    if magic != CKPT_MAGIC or version != CKPT_VERSION:
        raise ValueError(f"{path}: not a version-{CKPT_VERSION} network checkpoint")
    off = _HEAD.size
    shapes = []
    for _ in range(n):
        shapes.append(_SHAPE.unpack_from(raw, off))
        off += _SHAPE.size
    params = []
    for r, c in shapes:
        params.append(np.frombuffer(raw, dtype="<f8", count=r * c, offset=off).reshape(r, c).copy())
        off += r * c * 8
    if off != len(raw):
        raise ValueError(f"{path}: trailing or missing bytes")
    # layout: trunk (W, b)*, policy (W, b), value (W, b)
    hidden = tuple(s[1] for s in shapes[:-4:2])
    net = ActorCritic(shapes[0][0], hidden, shapes[-3][1], params=params)
    if obs_dim is not None and net.obs_dim != obs_dim:
        raise ValueError(f"checkpoint expects {net.obs_dim} observation features, scenario gives {obs_dim}")
    return net
