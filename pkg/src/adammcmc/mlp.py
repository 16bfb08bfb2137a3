"""Small dense ReLU classifier with a self-contained backward pass.

The network is deliberately tiny (default 2-16-16-2) and its parameters live
in one flat vector, so samplers can treat it like any other loss surface.
The gradient is a hand-written reverse sweep over the fixed architecture;
no autodiff framework involved.
"""

from __future__ import annotations

import csv

import numpy as np


class MicroMlp:
    """Fully-connected ReLU network with softmax output, flat parameter vector."""

    def __init__(self, layer_sizes=(2, 16, 16, 2)):
        if len(layer_sizes) < 2:
            raise ValueError("need at least an input and an output layer")
        self.layer_sizes = tuple(int(s) for s in layer_sizes)
        self.shapes = [
            (a, b) for a, b in zip(self.layer_sizes[:-1], self.layer_sizes[1:])
        ]

    @property
    def n_params(self) -> int:
        return sum((a + 1) * b for a, b in self.shapes)

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        """He-scaled random weights, zero biases."""
        chunks = []
        for a, b in self.shapes:
            chunks.append(rng.standard_normal((a, b)).ravel() * np.sqrt(2.0 / a))
            chunks.append(np.zeros(b))
        return np.concatenate(chunks)

    def unpack(self, theta: np.ndarray):
        """Split the flat vector into (W, b) pairs; views, no copies."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError(
                f"parameter vector has {theta.shape}, expected ({self.n_params},)"
            )
        layers = []
        pos = 0
        for a, b in self.shapes:
            w = theta[pos : pos + a * b].reshape(a, b)
            pos += a * b
            bias = theta[pos : pos + b]
            pos += b
            layers.append((w, bias))
        return layers

    def logits(self, theta: np.ndarray, inputs: np.ndarray) -> np.ndarray:
        h = np.atleast_2d(np.asarray(inputs, dtype=float))
        layers = self.unpack(theta)
        for w, b in layers[:-1]:
            h = np.maximum(h @ w + b, 0.0)
        w, b = layers[-1]
        return h @ w + b

    def forward(self, theta: np.ndarray, inputs: np.ndarray) -> np.ndarray:
        """Class probabilities, one row per input (log-sum-exp stabilized)."""
        z = self.logits(theta, inputs)
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def loss(self, theta: np.ndarray, inputs: np.ndarray, labels: np.ndarray) -> float:
        """Mean cross entropy over the batch."""
        z = self.logits(theta, inputs)
        zmax = z.max(axis=1)
        lse = zmax + np.log(np.exp(z - zmax[:, None]).sum(axis=1))
        picked = z[np.arange(z.shape[0]), np.asarray(labels, dtype=int)]
        return float(np.mean(lse - picked))

    def loss_and_grad(self, theta, inputs, labels):
        """Mean cross entropy and its gradient w.r.t. the flat parameters."""
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        labels = np.asarray(labels, dtype=int)
        n = inputs.shape[0]
        layers = self.unpack(theta)

        # forward, keeping pre-activations for the backward sweep
        hs = [inputs]
        zs = []
        h = inputs
        for w, b in layers[:-1]:
            z = h @ w + b
            zs.append(z)
            h = np.maximum(z, 0.0)
            hs.append(h)
        w, b = layers[-1]
        logits = h @ w + b

        zmax = logits.max(axis=1)
        lse = zmax + np.log(np.exp(logits - zmax[:, None]).sum(axis=1))
        loss = float(np.mean(lse - logits[np.arange(n), labels]))

        probs = np.exp(logits - lse[:, None])
        dz = probs
        dz[np.arange(n), labels] -= 1.0
        dz /= n

        grads = [None] * len(layers)
        for i in range(len(layers) - 1, -1, -1):
            w, _ = layers[i]
            dw = hs[i].T @ dz
            db = dz.sum(axis=0)
            grads[i] = (dw, db)
            if i > 0:
                dz = (dz @ w.T) * (zs[i - 1] > 0.0)

        flat = np.concatenate([np.concatenate([dw.ravel(), db]) for dw, db in grads])
        return loss, flat


def two_moons(n_train=2000, n_test=2000, noise=0.15, seed=20240517):
    """Two interleaved noisy half circles, fixed seed by default.

    Returns (x_train, y_train, x_test, y_test) with 2-D inputs and 0/1 labels.
    """
    rng = np.random.default_rng(seed)

    def make(n):
        n_outer = n // 2
        n_inner = n - n_outer
        t_out = rng.uniform(0.0, np.pi, n_outer)
        t_in = rng.uniform(0.0, np.pi, n_inner)
        outer = np.column_stack([np.cos(t_out), np.sin(t_out)])
        inner = np.column_stack([1.0 - np.cos(t_in), 0.5 - np.sin(t_in)])
        x = np.vstack([outer, inner]) + noise * rng.standard_normal((n, 2))
        y = np.concatenate([np.zeros(n_outer, dtype=int), np.ones(n_inner, dtype=int)])
        perm = rng.permutation(n)
        return x[perm], y[perm]

    x_train, y_train = make(n_train)
    x_test, y_test = make(n_test)
    return x_train, y_train, x_test, y_test


def ood_inputs(n=500, seed=20240518):
    """Inputs well above the two-moons support (a band with no training data).

    Very distant inputs saturate the logits of every ensemble member and the
    prediction spread collapses to zero there; this band is far from the
    support but still in the region where member predictions react.
    """
    rng = np.random.default_rng(seed)
    return np.column_stack(
        [rng.uniform(-0.5, 3.0, n), rng.uniform(2.8, 4.5, n)]
    )


def save_dataset_csv(path, inputs, labels):
    """Write rows of (x1, x2, label)."""
    inputs = np.asarray(inputs, dtype=float)
    labels = np.asarray(labels, dtype=int)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x1", "x2", "label"])
        for (x1, x2), lab in zip(inputs, labels):
            writer.writerow([repr(float(x1)), repr(float(x2)), int(lab)])


def load_dataset_csv(path):
    """Read rows of (x1, x2, label); inverse of save_dataset_csv."""
    xs, ys = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] != ["x1", "x2", "label"]:
            raise ValueError(f"unexpected dataset header: {header}")
        for row in reader:
            xs.append([float(row[0]), float(row[1])])
            ys.append(int(row[2]))
    return np.array(xs), np.array(ys, dtype=int)
