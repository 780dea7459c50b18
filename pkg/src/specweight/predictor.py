"""Sequence-to-one binary classifiers with hand-written gradients.

The main model runs a gated recurrent layer over a subject's visit sequence
in chronological order, then two fully connected layers producing a single
logit. Forward passes cache activations; backward passes run exact
reverse-mode differentiation through the dense layers and back through time.
A last-visit logistic model with the same parameter interface serves as a
cheap stand-in where test suites need many training runs.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import NumericalError

PROB_CLAMP = 1e-7
CHECKPOINT_MAGIC = b"SCW1"


def _sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))


def bce_loss(p: float, y: int) -> float:
    """Binary cross-entropy with the probability clamped to [1e-7, 1 - 1e-7]."""
    pc = min(max(p, PROB_CLAMP), 1.0 - PROB_CLAMP)
    return -(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))


def bce_grad_prob(p: float, y: int) -> float:
    """d bce_loss / d p; zero where the clamp is active."""
    if p <= PROB_CLAMP or p >= 1.0 - PROB_CLAMP:
        return 0.0
    return (p - y) / (p * (1.0 - p))


class RecurrentClassifier:
    """Gated recurrent layer plus two dense layers, logistic output.

    Gate equations per visit x_t (update z, reset r, candidate via tanh):

        z_t = sigmoid(Wz x_t + Uz h + bz)
        r_t = sigmoid(Wr x_t + Ur h + br)
        g_t = tanh(Wh x_t + Uh (r_t * h) + bh)
        h   = (1 - z_t) * g_t + z_t * h

    followed by ReLU(W1 h + b1) and a scalar logit W2 (.) + b2. Parameters
    initialize uniformly in +-1/sqrt(fan_in) from the provided generator.
    """

    def __init__(self, feature_width: int, hidden: int = 64, fc: int = 32,
                 rng: np.random.Generator | None = None):
        if feature_width < 1 or hidden < 1 or fc < 1:
            raise ValueError("all layer widths must be >= 1")
        self.feature_width = feature_width
        self.hidden = hidden
        self.fc = fc
        rng = rng if rng is not None else np.random.default_rng(0)

        def uniform(shape, fan_in):
            bound = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-bound, bound, size=shape)

        f, h, k = feature_width, hidden, fc
        self.wz = uniform((h, f), f)
        self.uz = uniform((h, h), h)
        self.bz = uniform((h,), h)
        self.wr = uniform((h, f), f)
        self.ur = uniform((h, h), h)
        self.br = uniform((h,), h)
        self.wh = uniform((h, f), f)
        self.uh = uniform((h, h), h)
        self.bh = uniform((h,), h)
        self.w1 = uniform((k, h), h)
        self.b1 = uniform((k,), h)
        self.w2 = uniform((k,), k)
        self.b2 = uniform((1,), k)

    def _params(self):
        return [self.wz, self.uz, self.bz, self.wr, self.ur, self.br,
                self.wh, self.uh, self.bh, self.w1, self.b1, self.w2, self.b2]

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self._params())

    def flat_params(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self._params()])

    def set_flat_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {flat.shape}")
        offset = 0
        for p in self._params():
            p[...] = flat[offset:offset + p.size].reshape(p.shape)
            offset += p.size

    def forward(self, sequence):
        """Probability for one visit sequence plus the cache for backward."""
        x = np.asarray(sequence, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] != self.feature_width:
            raise ValueError(
                f"expected a (visits, {self.feature_width}) sequence, got shape {x.shape}"
            )
        # Input projections for all visits at once; the recurrence stays sequential.
        pz = x @ self.wz.T + self.bz
        pr = x @ self.wr.T + self.br
        ph = x @ self.wh.T + self.bh
        h = np.zeros(self.hidden)
        steps = []
        for t in range(x.shape[0]):
            z = _sigmoid(pz[t] + self.uz @ h)
            r = _sigmoid(pr[t] + self.ur @ h)
            g = np.tanh(ph[t] + self.uh @ (r * h))
            steps.append((h, z, r, g))
            h = (1.0 - z) * g + z * h
        a1 = self.w1 @ h + self.b1
        q = np.maximum(a1, 0.0)
        logit = float(self.w2 @ q + self.b2[0])
        if not np.isfinite(logit):
            raise NumericalError("non-finite activation in forward pass")
        p = float(_sigmoid(np.array([logit]))[0])
        return p, (x, steps, h, a1, q, p)

    def backward(self, cache, d_prob: float) -> np.ndarray:
        """Flat parameter gradient given d loss / d probability."""
        x, steps, h_final, a1, q, p = cache
        n_visits = x.shape[0]
        dlogit = d_prob * p * (1.0 - p)
        dw2 = dlogit * q
        db2 = np.array([dlogit])
        dq = dlogit * self.w2
        da1 = dq * (a1 > 0.0)
        dw1 = np.outer(da1, h_final)
        db1 = da1
        dh = self.w1.T @ da1

        daz_all = np.empty((n_visits, self.hidden))
        dar_all = np.empty((n_visits, self.hidden))
        dah_all = np.empty((n_visits, self.hidden))
        h_prev_all = np.empty((n_visits, self.hidden))
        rh_all = np.empty((n_visits, self.hidden))

        for t in range(n_visits - 1, -1, -1):
            h_prev, z, r, g = steps[t]
            h_prev_all[t] = h_prev
            rh_all[t] = r * h_prev
            dz = dh * (h_prev - g)
            dg = dh * (1.0 - z)
            dh_prev = dh * z

            dah = dg * (1.0 - g * g)
            dah_all[t] = dah
            drh = self.uh.T @ dah
            dr = drh * h_prev
            dh_prev = dh_prev + drh * r

            daz = dz * z * (1.0 - z)
            daz_all[t] = daz
            dh_prev = dh_prev + self.uz.T @ daz

            dar = dr * r * (1.0 - r)
            dar_all[t] = dar
            dh_prev = dh_prev + self.ur.T @ dar

            dh = dh_prev

        # Input/recurrent weight gradients accumulate over time as single matmuls.
        dwz = daz_all.T @ x
        dwr = dar_all.T @ x
        dwh = dah_all.T @ x
        duz = daz_all.T @ h_prev_all
        dur = dar_all.T @ h_prev_all
        duh = dah_all.T @ rh_all
        dbz = daz_all.sum(axis=0)
        dbr = dar_all.sum(axis=0)
        dbh = dah_all.sum(axis=0)

        grads = [dwz, duz, dbz, dwr, dur, dbr, dwh, duh, dbh, dw1, db1, dw2, db2]
        return np.concatenate([g.ravel() for g in grads])


class LogisticFallback:
    """Logistic regression on the final visit; same interface as the GRU.

    Exists so property suites that need dozens of training runs can exercise
    the full training machinery without paying for backprop through time.
    """

    def __init__(self, feature_width: int, rng: np.random.Generator | None = None):
        if feature_width < 1:
            raise ValueError("feature_width must be >= 1")
        self.feature_width = feature_width
        rng = rng if rng is not None else np.random.default_rng(0)
        bound = 1.0 / np.sqrt(feature_width)
        self.w = rng.uniform(-bound, bound, size=feature_width)
        self.b = rng.uniform(-bound, bound, size=1)

    @property
    def n_params(self) -> int:
        return self.feature_width + 1

    def flat_params(self) -> np.ndarray:
        return np.concatenate([self.w, self.b])

    def set_flat_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {flat.shape}")
        self.w = flat[:-1].copy()
        self.b = flat[-1:].copy()

    def forward(self, sequence):
        x = np.asarray(sequence, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] != self.feature_width:
            raise ValueError(
                f"expected a (visits, {self.feature_width}) sequence, got shape {x.shape}"
            )
        last = x[-1]
        logit = float(self.w @ last + self.b[0])
        if not np.isfinite(logit):
            raise NumericalError("non-finite activation in forward pass")
        p = float(_sigmoid(np.array([logit]))[0])
        return p, (last, p)

    def backward(self, cache, d_prob: float) -> np.ndarray:
        last, p = cache
        dlogit = d_prob * p * (1.0 - p)
        return np.concatenate([dlogit * last, [dlogit]])


def save_checkpoint(model: RecurrentClassifier, path) -> None:
    """Binary checkpoint: magic, layer widths, then the flat parameter vector
    as little-endian float64."""
    flat = model.flat_params().astype("<f8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<IIIQ", model.feature_width, model.hidden, model.fc, flat.size))
        fh.write(flat.tobytes())


def load_checkpoint(path) -> RecurrentClassifier:
    with open(path, "rb") as fh:
        blob = fh.read()
    header = struct.calcsize("<IIIQ")
    if len(blob) < 4 + header or blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"not a model checkpoint: {path}")
    f, h, k, count = struct.unpack("<IIIQ", blob[4:4 + header])
    flat = np.frombuffer(blob[4 + header:], dtype="<f8")
    if flat.size != count:
        raise ValueError(f"checkpoint truncated: expected {count} parameters, found {flat.size}")
    model = RecurrentClassifier(f, h, k, rng=np.random.default_rng(0))
    model.set_flat_params(flat.astype(np.float64))
    return model
