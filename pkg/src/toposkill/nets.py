"""Small fully-connected networks with hand-written forward/backward passes.

Everything runs in float64 so that analytic gradients can be checked against
central finite differences to tight tolerances. Hidden activations are tanh
(smooth everywhere), the output layer is linear.
"""

from __future__ import annotations

import numpy as np

Array = np.ndarray


class Mlp:
    """Feed-forward net: input -> [tanh hidden]*H -> linear output.

    Parameters are stored as a flat list ``[W1, b1, W2, b2, ...]`` with
    weights of shape (fan_in, fan_out).
    """

    def __init__(self, layer_sizes: list[int], rng: np.random.Generator):
        if len(layer_sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.layer_sizes = list(layer_sizes)
        self.params: list[Array] = []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.params.append(rng.uniform(-bound, bound, size=fan_out))

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    def forward(self, x: Array, cache: list[Array] | None = None) -> Array:
        """Compute outputs for a (n, in_dim) batch.

        When ``cache`` is given the post-activation of every layer is appended
        to it (input first), as needed by :meth:`backward`.
        """
        z = np.asarray(x, dtype=np.float64)
        if z.ndim != 2 or z.shape[1] != self.in_dim:
            raise ValueError(
                f"expected input of shape (n, {self.in_dim}), got {z.shape}"
            )
        if cache is not None:
            cache.append(z)
        n_layers = len(self.params) // 2
        for layer in range(n_layers):
            w = self.params[2 * layer]
            b = self.params[2 * layer + 1]
            z = z @ w + b
            if layer < n_layers - 1:
                z = np.tanh(z)
            if cache is not None:
                cache.append(z)
        return z

    def backward(self, cache: list[Array], grad_out: Array) -> tuple[list[Array], Array]:
        """Backpropagate ``grad_out`` (dLoss/dOutput) through a cached forward.

        Returns (parameter gradients in ``params`` order, dLoss/dInput).
        """
        grads: list[Array] = [np.zeros_like(p) for p in self.params]
        n_layers = len(self.params) // 2
        delta = np.asarray(grad_out, dtype=np.float64)
        for layer in range(n_layers - 1, -1, -1):
            post = cache[layer + 1]
            if layer < n_layers - 1:
                delta = delta * (1.0 - post * post)  # tanh'
            pre_input = cache[layer]
            grads[2 * layer] = pre_input.T @ delta
            grads[2 * layer + 1] = delta.sum(axis=0)
            delta = delta @ self.params[2 * layer].T
        return grads, delta

    def copy(self) -> "Mlp":
        dup = object.__new__(Mlp)
        dup.layer_sizes = list(self.layer_sizes)
        dup.params = [p.copy() for p in self.params]
        return dup

    def set_params(self, params: list[Array]) -> None:
        if len(params) != len(self.params):
            raise ValueError("parameter list length mismatch")
        for own, new in zip(self.params, params):
            if own.shape != np.asarray(new).shape:
                raise ValueError("parameter shape mismatch")
        self.params = [np.asarray(p, dtype=np.float64).copy() for p in params]


class Adam:
    """Adam optimizer over a list of parameter arrays (updated in place)."""

    def __init__(self, params: list[Array], lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[Array], grads: list[Array]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def smooth_update(target: list[Array], online: list[Array], rate: float) -> None:
    """Exponential moving average: target <- (1-rate)*target + rate*online."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"smooth-update rate must be in [0, 1], got {rate}")
    for t, o in zip(target, online):
        t *= 1.0 - rate
        t += rate * o


def finite_difference_grads(loss_fn, params: list[Array], h: float = 1e-5) -> list[Array]:
    """Central finite differences of ``loss_fn()`` w.r.t. every entry of params.

    ``loss_fn`` must read the (mutated in place) ``params`` arrays. Used as the
    independent oracle for gradient tests; O(#params) loss evaluations.
    """
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + h
            up = loss_fn()
            flat_p[i] = orig - h
            down = loss_fn()
            flat_p[i] = orig
            flat_g[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def max_relative_grad_error(analytic: list[Array], numeric: list[Array],
                            scale_floor: float = 1e-7,
                            abs_tol: float = 1e-9) -> float:
    """Worst relative disagreement between two gradient lists.

    Entries where both gradients are below ``scale_floor`` only need to agree
    to ``abs_tol`` absolutely (relative error is meaningless near zero).
    """
    worst = 0.0
    for a, n in zip(analytic, numeric):
        a = np.asarray(a, dtype=np.float64)
        n = np.asarray(n, dtype=np.float64)
        denom = np.maximum(np.abs(a), np.abs(n))
        err = np.abs(a - n)
        big = denom > scale_floor
        if np.any(big):
            worst = max(worst, float(np.max(err[big] / denom[big])))
        small = ~big
        if np.any(small) and float(np.max(err[small])) > abs_tol:
            worst = max(worst, 1.0)  # tiny-gradient disagreement counts as failure
    return worst
