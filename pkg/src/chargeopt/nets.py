"""Minimal dense-network machinery for the actor-critic trainer.

Plain numpy, 64-bit floats, explicit reverse-mode gradients. Hidden layers
use the rectifier; outputs are linear. The policy head squashes a
reparameterized Gaussian draw into the unit action interval and carries the
exact change-of-variables term in its log-density.
"""
from __future__ import annotations

import json

import numpy as np

from .errors import CheckpointError

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0


class MlpNet:
    """Fully connected net: weights as a flat list [W0, b0, W1, b1, ...]."""

    def __init__(self, layer_sizes, rng: np.random.Generator, final_scale: float = 1.0):
        self.layer_sizes = list(layer_sizes)
        self.weights = []
        self.biases = []
        for i, (n_in, n_out) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
            bound = 1.0 / np.sqrt(n_in)
            w = rng.uniform(-bound, bound, size=(n_in, n_out))
            b = rng.uniform(-bound, bound, size=n_out)
            if i == len(layer_sizes) - 2:
                w *= final_scale
                b *= final_scale
            self.weights.append(w)
            self.biases.append(b)

    @property
    def n_layers(self):
        return len(self.weights)

    def parameters(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def set_parameters(self, arrays):
        flat = self.parameters()
        if len(arrays) != len(flat):
            raise ValueError(f"expected {len(flat)} parameter arrays, got {len(arrays)}")
        for dst, src in zip(flat, arrays):
            if dst.shape != src.shape:
                raise ValueError(f"parameter shape mismatch: {dst.shape} vs {src.shape}")
            dst[...] = src

    def forward(self, x: np.ndarray) -> np.ndarray:
        y, _ = self.forward_cached(x)
        return y

    def forward_cached(self, x: np.ndarray):
        """Forward pass keeping layer inputs for the backward pass."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.layer_sizes[0]:
            raise ValueError(
                f"input dim {x.shape[1]} != expected {self.layer_sizes[0]}")
        inputs = [x]
        h = x
        for i in range(self.n_layers):
            z = h @ self.weights[i] + self.biases[i]
            h = np.maximum(z, 0.0) if i < self.n_layers - 1 else z
            inputs.append(h)
        return h, inputs

    def backward(self, cache, grad_out: np.ndarray):
        """Exact gradients of sum(grad_out * output) w.r.t. parameters and input.

        Returns (grads aligned with parameters(), grad wrt the input batch).
        """
        if cache is None:
            raise ValueError("forward_cached output required")
        inputs = cache
        delta = np.atleast_2d(np.asarray(grad_out, dtype=np.float64))
        grads = [None] * (2 * self.n_layers)
        for i in range(self.n_layers - 1, -1, -1):
            h_in = inputs[i]
            if i < self.n_layers - 1:
                delta = delta * (inputs[i + 1] > 0.0)
            grads[2 * i] = h_in.T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            delta = delta @ self.weights[i].T
        return grads, delta


class Adam:
    """Adaptive-moment optimizer over a parameter list."""

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        for i, g in enumerate(grads):
            if not np.all(np.isfinite(g)):
                raise ValueError(
                    f"non-finite gradient for parameter {i} (shape {g.shape}, "
                    f"max |g| finite part {np.nanmax(np.abs(g[np.isfinite(g)])) if np.any(np.isfinite(g)) else 'none'})")
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)

    def state_arrays(self):
        return {"m": self.m, "v": self.v, "t": self.t}


# ---------------------------------------------------------------------------
# squashed-Gaussian policy head (1-D action in (0, 1))

def _softplus(x):
    return np.logaddexp(0.0, x)


def split_policy_output(out):
    """Policy-net output (B, 2) -> (mean, raw log-std)."""
    out = np.atleast_2d(out)
    return out[:, 0], out[:, 1]


def squash(u):
    return 0.5 * (np.tanh(u) + 1.0)


def unsquash(a):
    return np.arctanh(2.0 * a - 1.0)


def sample_squashed(mu, log_std_raw, eps):
    """Reparameterized draw through the squash map.

    eps is a standard-normal draw treated as a constant under
    differentiation. Returns (action in (0,1), log_prob).
    """
    a, logp, _ = sample_squashed_with_grads(mu, log_std_raw, eps)
    return a, logp


def sample_squashed_with_grads(mu, log_std_raw, eps):
    """Draw plus the partial derivatives the policy update needs.

    The gradient dict maps d(log_prob) and d(action) to the head outputs
    (mean and raw log-std); the clamp on log-std zeroes gradients outside
    its range.
    """
    mu = np.asarray(mu, dtype=np.float64)
    raw = np.asarray(log_std_raw, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
    clamp_mask = ((raw > LOG_STD_MIN) & (raw < LOG_STD_MAX)).astype(np.float64)
    sigma = np.exp(log_std)
    u = mu + sigma * eps
    t = np.tanh(u)
    # tanh saturates to +-1 in float64 for |u| > ~19; keep the action strictly
    # inside the open interval at float resolution
    a = np.clip(0.5 * (t + 1.0), 1e-12, 1.0 - 1e-12)
    # log|da/du| = log(0.5 (1 - tanh^2 u)), written stably
    log_da_du = np.log(0.5) + 2.0 * (np.log(2.0) - u - _softplus(-2.0 * u))
    logp = -0.5 * eps ** 2 - log_std - 0.5 * np.log(2.0 * np.pi) - log_da_du
    da_du = 0.5 * (1.0 - t * t)
    grads = {
        "dlogp_dmu": 2.0 * t,
        "dlogp_dlogstd": (-1.0 + 2.0 * t * sigma * eps) * clamp_mask,
        "da_dmu": da_du,
        "da_dlogstd": da_du * sigma * eps * clamp_mask,
    }
    return a, logp, grads


def log_prob_of_action(mu, log_std_raw, a):
    """Log-density of a given action in (0, 1) under the squashed Gaussian."""
    mu = np.asarray(mu, dtype=np.float64)
    log_std = np.clip(np.asarray(log_std_raw, dtype=np.float64),
                      LOG_STD_MIN, LOG_STD_MAX)
    a = np.asarray(a, dtype=np.float64)
    u = unsquash(a)
    sigma = np.exp(log_std)
    z = (u - mu) / sigma
    log_da_du = np.log(0.5) + 2.0 * (np.log(2.0) - u - _softplus(-2.0 * u))
    return -0.5 * z ** 2 - log_std - 0.5 * np.log(2.0 * np.pi) - log_da_du


# ---------------------------------------------------------------------------
# checkpoints

def save_checkpoint(path, arrays: dict, meta: dict):
    """Self-describing container: named float arrays plus a JSON meta blob."""
    payload = {k: np.asarray(v) for k, v in arrays.items()}
    payload["__meta__"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    np.savez(path, **payload)


def load_checkpoint(path, expected_config_hash: str = None):
    try:
        with np.load(path) as z:
            arrays = {k: z[k] for k in z.files if k != "__meta__"}
            meta = json.loads(bytes(z["__meta__"].tobytes()).decode())
    except FileNotFoundError:
        raise
    except Exception as e:
        raise CheckpointError(f"unreadable checkpoint {path}: {e}") from e
    if expected_config_hash is not None:
        got = meta.get("config_hash")
        if got != expected_config_hash:
            raise CheckpointError(
                f"checkpoint config hash {got} != expected {expected_config_hash}")
    return arrays, meta
