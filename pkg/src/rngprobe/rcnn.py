"""Recurrent-convolutional next-symbol predictor.

one-hot[N x n] -> conv(64, 5) + relu -> pool 2 -> conv(128, 3) + relu
-> pool 2 -> LSTM(128), final hidden state -> dense 64 + sigmoid
-> dense n + softmax.

Short windows (``N < 15``) cannot feed that stack, so :func:`reduced_spec`
gives the single-convolution variant used for byte streams with ``N = 10``.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .dataprep import WindowedDataset


@dataclass(frozen=True)
class ModelSpec:
    N: int
    n: int
    conv1: tuple[int, int] = (64, 5)
    conv2: tuple[int, int] | None = (128, 3)
    lstm_units: int = 128
    dense1: int = 64
    pool: int = 2

    def lstm_steps(self):
        length = self.N - self.conv1[1] + 1
        length //= self.pool
        if self.conv2 is not None:
            length = length - self.conv2[1] + 1
            length //= self.pool
        return length

    def validate(self):
        if self.n < 1:
            raise ValueError("alphabet size must be positive")
        length = self.N - self.conv1[1] + 1
        stages = [("conv1", length)]
        length //= self.pool
        stages.append(("pool1", length))
        if self.conv2 is not None:
            length = length - self.conv2[1] + 1
            stages.append(("conv2", length))
            length //= self.pool
            stages.append(("pool2", length))
        for name, size in stages:
            if size < 1:
                raise ValueError(
                    f"window N={self.N} too short for the conv stack "
                    f"({name} output length {size})")


def reduced_spec(N, n, **kw):
    """Single conv (64 filters, length 3) + pool variant for short windows."""
    kw.setdefault("conv1", (64, 3))
    return ModelSpec(N=N, n=n, conv2=None, **kw)


def default_spec(N, n, **kw):
    """Full stack when it fits, otherwise the reduced one."""
    if N < 15:
        return reduced_spec(N, n, **kw)
    return ModelSpec(N=N, n=n, **kw)


@dataclass
class TrainConfig:
    max_epochs: int = 20
    patience: int = 4
    val_fraction: float = 0.2
    batch_size: int = 256
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    verbose: bool = False

    def __post_init__(self):
        if not 0 < self.val_fraction < 1:
            raise ValueError("val_fraction must be in (0, 1)")


@dataclass
class ModelState:
    spec: ModelSpec
    params: dict[str, np.ndarray]
    optimizer: T.Adam | None = None
    history: list[dict] = field(default_factory=list)
    alphabet: np.ndarray | None = None

    def copy_params(self):
        return {k: v.copy() for k, v in self.params.items()}


@dataclass
class EvalResult:
    per_testset_accuracy: list[float]
    p_ml_mean: float
    p_ml_sd: float
    p_g: float
    advantage_sigma: float
    binomial_sd: float
    windows_per_set: int

    def sigma(self):
        return max(self.p_ml_sd, self.binomial_sd)

    def within(self, k=3.0):
        """True when ``|P_ML - P_g| <= k * sigma``."""
        return abs(self.p_ml_mean - self.p_g) <= k * self.sigma()


# ---------------------------------------------------------------------------
# model


def param_shapes(spec):
    f1, k1 = spec.conv1
    shapes = {"conv1_w": (f1, k1, spec.n), "conv1_b": (f1,)}
    width = f1
    if spec.conv2 is not None:
        f2, k2 = spec.conv2
        shapes["conv2_w"] = (f2, k2, f1)
        shapes["conv2_b"] = (f2,)
        width = f2
    h = spec.lstm_units
    shapes["lstm_w"] = (width + h, 4 * h)
    shapes["lstm_b"] = (4 * h,)
    shapes["dense1_w"] = (spec.dense1, h)
    shapes["dense1_b"] = (spec.dense1,)
    shapes["dense2_w"] = (spec.n, spec.dense1)
    shapes["dense2_b"] = (spec.n,)
    return shapes


def parameter_count(spec):
    return sum(int(np.prod(s)) for s in param_shapes(spec).values())


def build_model(spec, seed=0):
    spec.validate()
    rng = np.random.default_rng(seed)
    f1, k1 = spec.conv1
    p = {
        "conv1_w": T.glorot_uniform(rng, (f1, k1, spec.n), k1 * spec.n, k1 * f1),
        "conv1_b": np.zeros(f1),
    }
    width = f1
    if spec.conv2 is not None:
        f2, k2 = spec.conv2
        p["conv2_w"] = T.glorot_uniform(rng, (f2, k2, f1), k2 * f1, k2 * f2)
        p["conv2_b"] = np.zeros(f2)
        width = f2
    p["lstm_w"], p["lstm_b"] = T.lstm_init(rng, width, spec.lstm_units)
    p["dense1_w"] = T.glorot_uniform(rng, (spec.dense1, spec.lstm_units),
                                     spec.lstm_units, spec.dense1)
    p["dense1_b"] = np.zeros(spec.dense1)
    p["dense2_w"] = T.glorot_uniform(rng, (spec.n, spec.dense1), spec.dense1, spec.n)
    p["dense2_b"] = np.zeros(spec.n)
    return ModelState(spec=spec, params=p)


def forward(spec, p, x):
    """Logits for a batch.

    ``x`` is either integer symbol indices ``[B, N]`` (negative = unknown)
    or a dense one-hot array ``[B, N, n]``.
    """
    cache = {"x": x}
    if x.ndim == 2 and np.issubdtype(x.dtype, np.integer):
        a1 = T.conv1d_onehot(x, p["conv1_w"], p["conv1_b"])
    else:
        a1 = T.conv1d(x, p["conv1_w"], p["conv1_b"])
    h1 = T.relu(a1)
    s, arg1 = T.maxpool1d(h1, spec.pool)
    cache.update(a1=a1, arg1=arg1, h1_shape=h1.shape, s1=s)
    if spec.conv2 is not None:
        a2 = T.conv1d(s, p["conv2_w"], p["conv2_b"])
        h2 = T.relu(a2)
        s2, arg2 = T.maxpool1d(h2, spec.pool)
        cache.update(a2=a2, arg2=arg2, h2_shape=h2.shape)
        s = s2
    cache["seq"] = s
    h_last, lcache = T.lstm_forward(s, p["lstm_w"], p["lstm_b"])
    cache.update(lstm=lcache, h_last=h_last)
    d1 = T.sigmoid(T.dense(h_last, p["dense1_w"], p["dense1_b"]))
    cache["d1"] = d1
    logits = T.dense(d1, p["dense2_w"], p["dense2_b"])
    return logits, cache


def backward(spec, p, cache, dlogits):
    g = {}
    d1 = cache["d1"]
    dd1, g["dense2_w"], g["dense2_b"] = T.dense_backward(dlogits, d1, p["dense2_w"])
    dz1 = T.sigmoid_backward(dd1, d1)
    dh, g["dense1_w"], g["dense1_b"] = T.dense_backward(dz1, cache["h_last"], p["dense1_w"])
    seq = cache["seq"]
    dseq, g["lstm_w"], g["lstm_b"] = T.lstm_backward(dh, cache["lstm"], p["lstm_w"], seq.shape)
    ds = dseq
    if spec.conv2 is not None:
        dh2 = T.maxpool1d_backward(ds, cache["arg2"], cache["h2_shape"], spec.pool)
        da2 = T.relu_backward(dh2, cache["a2"])
        ds, g["conv2_w"], g["conv2_b"] = T.conv1d_backward(da2, cache["s1"], p["conv2_w"])
    dh1 = T.maxpool1d_backward(ds, cache["arg1"], cache["h1_shape"], spec.pool)
    da1 = T.relu_backward(dh1, cache["a1"])
    x = cache["x"]
    if x.ndim == 2 and np.issubdtype(x.dtype, np.integer):
        g["conv1_w"], g["conv1_b"] = T.conv1d_onehot_backward(da1, x, p["conv1_w"])
    else:
        _, g["conv1_w"], g["conv1_b"] = T.conv1d_backward(da1, x, p["conv1_w"])
    return g


def loss_and_grads(spec, p, x, labels):
    """Mean cross-entropy over the batch and its parameter gradients."""
    logits, cache = forward(spec, p, x)
    losses, probs = T.softmax_xent(logits, labels)
    dlogits = T.softmax_xent_backward(probs, labels, scale=1.0 / len(labels))
    return float(losses.mean()), backward(spec, p, cache, dlogits), probs


# ---------------------------------------------------------------------------
# training


def _batches(count, size, rng=None):
    order = np.arange(count) if rng is None else rng.permutation(count)
    for start in range(0, count, size):
        yield order[start:start + size]


def batch_loss(model, inputs, labels, batch_size=1024):
    """Mean cross-entropy and accuracy; labels < 0 count as misses."""
    total, hits = 0.0, 0
    known = labels >= 0
    for sel in _batches(len(labels), batch_size):
        logits, _ = forward(model.spec, model.params, inputs[sel])
        lab = labels[sel]
        ok = known[sel]
        if ok.any():
            losses, _ = T.softmax_xent(logits[ok], lab[ok])
            total += losses.sum()
        # an unseen label has zero model probability; charge the loss of
        # the smallest representable probability rather than infinity
        total += (~ok).sum() * -math.log(np.finfo(float).tiny)
        hits += int((logits.argmax(axis=1)[ok] == lab[ok]).sum())
    return total / len(labels), hits / len(labels)


def train(model, dataset: WindowedDataset, cfg: TrainConfig | None = None):
    """Fit with early stopping on validation loss; keep the best epoch.

    The last ``val_fraction`` of the windows (in stream order) are held
    out for validation.  Returns the model carrying the best checkpoint,
    the optimiser state and the per-epoch history.
    """
    cfg = cfg or TrainConfig()
    count = len(dataset.labels)
    if count == 0:
        raise ValueError("empty dataset")
    n_val = max(1, int(round(cfg.val_fraction * count)))
    n_train = count - n_val
    if n_train < 1:
        raise ValueError("not enough windows for a training split")
    x_tr, y_tr = dataset.inputs[:n_train], dataset.labels[:n_train]
    x_va, y_va = dataset.inputs[n_train:], dataset.labels[n_train:]

    rng = np.random.default_rng(cfg.seed)
    opt = T.Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    spec, params = model.spec, model.params
    best_loss = math.inf
    best_params = model.copy_params()
    best_opt = opt.state_dict()
    stale = 0
    history = []
    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        run_loss, run_hits = 0.0, 0
        for sel in _batches(n_train, cfg.batch_size, rng):
            loss, grads, probs = loss_and_grads(spec, params, x_tr[sel], y_tr[sel])
            opt.step(params, grads)
            run_loss += loss * len(sel)
            run_hits += int((probs.argmax(axis=1) == y_tr[sel]).sum())
        val_loss, val_acc = batch_loss(model, x_va, y_va)
        rec = {
            "epoch": epoch,
            "train_loss": run_loss / n_train,
            "train_acc": run_hits / n_train,
            "val_loss": val_loss,
            "val_acc": val_acc,
            "seconds": time.perf_counter() - t0,
        }
        history.append(rec)
        if cfg.verbose:
            print("epoch {epoch:2d} train {train_loss:.4f}/{train_acc:.4f} "
                  "val {val_loss:.4f}/{val_acc:.4f} ({seconds:.1f}s)".format(**rec),
                  flush=True)
        if val_loss < best_loss:
            best_loss = val_loss
            best_params = model.copy_params()
            best_opt = opt.state_dict()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.params = best_params
    opt.load_state_dict(best_opt)
    model.optimizer = opt
    model.history = history
    model.alphabet = dataset.alphabet
    return model


def best_epoch(model):
    return min(model.history, key=lambda r: r["val_loss"])["epoch"]


# ---------------------------------------------------------------------------
# inference and evaluation


def predict(model, window):
    """Class probabilities and argmax for one window of symbol indices."""
    x = np.asarray(window)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[-1] != model.spec.N and not (x.ndim == 3 and x.shape[1] == model.spec.N):
        raise ValueError(f"window length must be {model.spec.N}")
    logits, _ = forward(model.spec, model.params, x)
    probs = T.softmax(logits)[0]
    return probs, int(np.argmax(probs))


def accuracy(model, inputs, labels, batch_size=1024):
    """Fraction of windows whose argmax equals the label (unknown labels miss)."""
    hits = 0
    for sel in _batches(len(labels), batch_size):
        logits, _ = forward(model.spec, model.params, inputs[sel])
        lab = labels[sel]
        hits += int(((logits.argmax(axis=1) == lab) & (lab >= 0)).sum())
    return hits / len(labels)


def advantage(accs, p_g, windows_per_set):
    accs = np.asarray(accs, dtype=float)
    mean = float(accs.mean())
    sd = float(accs.std(ddof=1)) if len(accs) > 1 else 0.0
    binom = math.sqrt(p_g * (1.0 - p_g) / windows_per_set)
    sigma = max(sd, binom)
    adv = (mean - p_g) / sigma if sigma > 0 else (math.inf if mean > p_g else 0.0)
    return mean, sd, binom, adv


def evaluate(model, testsets, p_g):
    """Score each held-out set and compare the mean against ``p_g``.

    ``testsets`` is a sequence of ``WindowedDataset``-like objects (anything
    with ``inputs`` and ``labels``).  ``sigma`` is the larger of the spread
    across sets and the binomial standard deviation of a guess at ``p_g``.
    """
    if len(testsets) == 0:
        raise ValueError("need at least one test set")
    accs = [accuracy(model, ts.inputs, ts.labels) for ts in testsets]
    windows = min(len(ts.labels) for ts in testsets)
    mean, sd, binom, adv = advantage(accs, p_g, windows)
    return EvalResult(per_testset_accuracy=accs, p_ml_mean=mean, p_ml_sd=sd,
                      p_g=float(p_g), advantage_sigma=float(adv),
                      binomial_sd=binom, windows_per_set=windows)


def spec_to_dict(spec):
    return asdict(spec)


def spec_from_dict(d):
    d = dict(d)
    d["conv1"] = tuple(d["conv1"])
    d["conv2"] = tuple(d["conv2"]) if d.get("conv2") is not None else None
    return ModelSpec(**d)
