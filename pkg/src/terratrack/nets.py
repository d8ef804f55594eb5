"""Tiny fully-connected networks with manual backprop, plus Adam.

Hidden layers are fixed to rectified-linear activations; the output layer is
linear. Parameters live in per-layer arrays and are exposed as one flat
vector for the optimizer, finite-difference checks and checkpointing.
"""

from __future__ import annotations

import numpy as np

HIDDEN_SIZES = (8, 32, 16, 8)
LOG_2PI = float(np.log(2.0 * np.pi))


class Mlp:
    def __init__(self, sizes, rng: np.random.Generator | None = None,
                 out_scale: float = 1.0):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2:
            raise ValueError("need at least input and output sizes")
        rng = rng or np.random.default_rng(0)
        self.weights = []
        self.biases = []
        last = len(self.sizes) - 2
        for i, (n_in, n_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            scale = np.sqrt(2.0 / n_in)
            if i == last:
                scale *= out_scale
            self.weights.append(rng.normal(0.0, scale, size=(n_out, n_in)))
            self.biases.append(np.zeros(n_out))

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def get_flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b])
                               for w, b in zip(self.weights, self.biases)])

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.size != self.n_params:
            raise ValueError("flat vector size mismatch")
        k = 0
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = flat[k:k + w.size].reshape(w.shape).copy()
            k += w.size
            self.biases[i] = flat[k:k + b.size].copy()
            k += b.size

    def forward(self, x: np.ndarray) -> np.ndarray:
        a = np.atleast_2d(np.asarray(x, dtype=float))
        n = len(self.weights)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = a @ w.T + b
            if i < n - 1:
                a = np.maximum(a, 0.0)
        return a

    def forward_cached(self, x: np.ndarray):
        """Forward pass keeping pre-activations for backprop."""
        a = np.atleast_2d(np.asarray(x, dtype=float))
        acts = [a]
        pre = []
        n = len(self.weights)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w.T + b
            pre.append(z)
            a = np.maximum(z, 0.0) if i < n - 1 else z
            acts.append(a)
        return a, (acts, pre)

    def backward(self, cache, grad_out: np.ndarray) -> np.ndarray:
        """Gradient of sum(grad_out * output) w.r.t. the flat parameters."""
        acts, pre = cache
        dz = np.atleast_2d(np.asarray(grad_out, dtype=float))
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        for i in range(len(self.weights) - 1, -1, -1):
            grads_w[i] = dz.T @ acts[i]
            grads_b[i] = dz.sum(axis=0)
            if i > 0:
                dz = (dz @ self.weights[i]) * (pre[i - 1] > 0.0)
        return np.concatenate([np.concatenate([gw.ravel(), gb])
                               for gw, gb in zip(grads_w, grads_b)])


class Adam:
    def __init__(self, n_params: int, learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class GaussianPolicy:
    """Diagonal Gaussian over one action with a state-dependent mean.

    Samples are clipped into the action bounds; log-densities refer to the
    pre-clip sample. The mean is squeezed through a scaled tanh so the
    distribution can never wander so far outside the bounds that every
    sample clips and the gradient signal dies.
    """

    MEAN_LIMIT = 1.2

    def __init__(self, mean_net: Mlp, log_std: float = -0.5,
                 bounds: tuple[float, float] = (-1.0, 1.0)):
        if mean_net.sizes[-1] != 1:
            raise ValueError("policy mean network must have one output")
        self.mean_net = mean_net
        self.log_std = float(log_std)
        self.bounds = bounds

    @property
    def obs_dim(self) -> int:
        return self.mean_net.sizes[0]

    def mean(self, obs: np.ndarray) -> np.ndarray:
        raw = self.mean_net.forward(obs)[:, 0]
        return self.MEAN_LIMIT * np.tanh(raw / self.MEAN_LIMIT)

    def sample(self, obs: np.ndarray, rng: np.random.Generator):
        """Returns (clipped action, pre-clip sample, log-prob), scalars."""
        m = float(self.mean(np.atleast_2d(obs))[0])
        if not np.isfinite(m):
            raise FloatingPointError("policy network produced a non-finite mean")
        std = np.exp(self.log_std)
        noise = rng.standard_normal()
        if std == 0.0:  # degenerate (point-mass) policy
            return float(np.clip(m, *self.bounds)), m, np.inf
        pre = m + std * noise
        logp = self.log_prob_scalar(pre, m)
        action = float(np.clip(pre, self.bounds[0], self.bounds[1]))
        return action, float(pre), float(logp)

    def deterministic(self, obs: np.ndarray) -> float:
        m = float(self.mean(np.atleast_2d(obs))[0])
        return float(np.clip(m, self.bounds[0], self.bounds[1]))

    def log_prob_scalar(self, pre_clip: float, mean: float) -> float:
        z = (pre_clip - mean) / np.exp(self.log_std)
        return -0.5 * z * z - self.log_std - 0.5 * LOG_2PI

    def log_prob(self, obs: np.ndarray, pre_clip: np.ndarray) -> np.ndarray:
        m = self.mean(obs)
        z = (np.asarray(pre_clip) - m) / np.exp(self.log_std)
        return -0.5 * z * z - self.log_std - 0.5 * LOG_2PI

    def entropy(self) -> float:
        return 0.5 * (1.0 + LOG_2PI) + self.log_std
