"""MCC_RCNN: LSTM feature extractor, gated convolution, max pool, softmax.

Forward pass for one T x k input matrix:

    H = LSTM(X)                       H is T x h
    G = (H * W + b) .* sigmoid(H * V + g)   width-w conv, T x c
    pooled[c] = max over time of G[:, c]
    probs = softmax(W_d pooled + b_d)

The LSTM is the standard formulation: gates f, i, o and candidate state
act on z_t = [x_t ; h_{t-1}] with sigmoid/tanh nonlinearities, h_0 = c_0
= 0.  The convolution zero-pads (w - 1) / 2 frames on both sides (odd w
only) so the time length is preserved.  Ablations are configuration, not
code: arch "lstm" pools the LSTM output directly, arch "gcnn" convolves
the raw input.

All gradients are hand-derived (BPTT through the LSTM, column unfolding
for the convolution, subgradient routed to the argmax for the pool) and
validated against central finite differences by gradient_check().
Everything is float64 and deterministic under a seed.  Public single
sample entry points accept (T, k) arrays; training internals batch to
(B, T, k) for speed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .embedding import DivergedLoss
from .errors import PipelineError
from .features import FeatureMatrix

log = logging.getLogger(__name__)


class EvenKernelWidth(PipelineError):
    """Symmetric padding needs an odd convolution width."""


class EmptyTrainSet(PipelineError):
    """Training was given no samples."""


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class LstmParams:
    """Gate weight matrices are (h, k + h); order of z is [x ; h_prev]."""

    w_f: np.ndarray
    w_i: np.ndarray
    w_o: np.ndarray
    w_c: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray

    @property
    def hidden(self) -> int:
        return self.w_f.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_f.shape[1] - self.w_f.shape[0]


@dataclass
class GatedConvParams:
    """Linear kernel w/b and gate kernel v/g, both (width, in, out)."""

    w: np.ndarray
    b: np.ndarray
    v: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        if self.w.shape[0] % 2 == 0:
            raise EvenKernelWidth(f"kernel width {self.w.shape[0]} is even")

    @property
    def width(self) -> int:
        return self.w.shape[0]

    @property
    def in_channels(self) -> int:
        return self.w.shape[1]

    @property
    def out_channels(self) -> int:
        return self.w.shape[2]


@dataclass
class ModelParams:
    """Full parameter set; lstm or conv may be None for ablation archs."""

    lstm: LstmParams | None
    conv: GatedConvParams | None
    dense_w: np.ndarray  # (l, pooled dim)
    dense_b: np.ndarray  # (l,)

    @property
    def l(self) -> int:
        return self.dense_w.shape[0]

    @property
    def arch(self) -> str:
        if self.lstm is not None and self.conv is not None:
            return "mcc_rcnn"
        if self.lstm is not None:
            return "lstm"
        if self.conv is not None:
            return "gcnn"
        raise ValueError("model has neither an LSTM nor a convolution")

    @property
    def input_dim(self) -> int:
        if self.lstm is not None:
            return self.lstm.input_dim
        return self.conv.in_channels


@dataclass
class ModelConfig:
    """Architecture knobs; hidden size lives in TrainConfig."""

    arch: str = "mcc_rcnn"  # "mcc_rcnn" | "lstm" | "gcnn"
    conv_channels: int | None = None  # defaults to the hidden size
    kernel_width: int = 3


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 12
    hidden: int = 24
    batch_size: int = 16
    seed: int = 0
    optimizer: str = "adagrad"  # "adagrad" | "sgd"


#: hyperparameter presets for the two reference sequence models
PRESETS = {
    "glove_lstm": TrainConfig(learning_rate=0.001, epochs=20, hidden=128),
    "ngram_lstm": TrainConfig(learning_rate=0.002, epochs=15, hidden=20),
}


def named_params(params: ModelParams) -> dict[str, np.ndarray]:
    """Flat name -> array view of every trainable tensor, fixed order."""
    out: dict[str, np.ndarray] = {}
    if params.lstm is not None:
        for gate in ("f", "i", "o", "c"):
            out[f"lstm.w_{gate}"] = getattr(params.lstm, f"w_{gate}")
        for gate in ("f", "i", "o", "c"):
            out[f"lstm.b_{gate}"] = getattr(params.lstm, f"b_{gate}")
    if params.conv is not None:
        out["conv.w"] = params.conv.w
        out["conv.b"] = params.conv.b
        out["conv.v"] = params.conv.v
        out["conv.g"] = params.conv.g
    out["dense.w"] = params.dense_w
    out["dense.b"] = params.dense_b
    return out


def init_params(model_cfg: ModelConfig, input_dim: int, classes: int,
                hidden: int, seed: int = 0) -> ModelParams:
    """Seeded init: weights uniform within +-1/sqrt(fan_in), biases zero."""
    if model_cfg.arch not in ("mcc_rcnn", "lstm", "gcnn"):
        raise ValueError(f"unknown arch {model_cfg.arch!r}")
    rng = np.random.default_rng(seed)

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    lstm = None
    conv = None
    pooled_dim = None
    if model_cfg.arch in ("mcc_rcnn", "lstm"):
        z_dim = input_dim + hidden
        lstm = LstmParams(
            w_f=uniform((hidden, z_dim), z_dim),
            w_i=uniform((hidden, z_dim), z_dim),
            w_o=uniform((hidden, z_dim), z_dim),
            w_c=uniform((hidden, z_dim), z_dim),
            b_f=np.zeros(hidden), b_i=np.zeros(hidden),
            b_o=np.zeros(hidden), b_c=np.zeros(hidden),
        )
        pooled_dim = hidden
    if model_cfg.arch in ("mcc_rcnn", "gcnn"):
        in_ch = hidden if model_cfg.arch == "mcc_rcnn" else input_dim
        out_ch = model_cfg.conv_channels or hidden
        width = model_cfg.kernel_width
        if width % 2 == 0:
            raise EvenKernelWidth(f"kernel width {width} is even")
        fan = width * in_ch
        conv = GatedConvParams(
            w=uniform((width, in_ch, out_ch), fan),
            b=np.zeros(out_ch),
            v=uniform((width, in_ch, out_ch), fan),
            g=np.zeros(out_ch),
        )
        pooled_dim = out_ch
    dense_w = uniform((classes, pooled_dim), pooled_dim)
    return ModelParams(lstm=lstm, conv=conv, dense_w=dense_w, dense_b=np.zeros(classes))


# ---------------------------------------------------------------- LSTM

def _lstm_forward_batch(p: LstmParams, x: np.ndarray):
    b, t, k = x.shape
    h = p.hidden
    zs = np.zeros((b, t, k + h))
    fs = np.zeros((b, t, h))
    is_ = np.zeros((b, t, h))
    os_ = np.zeros((b, t, h))
    cands = np.zeros((b, t, h))
    cs = np.zeros((b, t, h))
    tcs = np.zeros((b, t, h))
    hs = np.zeros((b, t, h))
    h_prev = np.zeros((b, h))
    c_prev = np.zeros((b, h))
    for step in range(t):
        z = np.concatenate([x[:, step, :], h_prev], axis=1)
        f = _sigmoid(z @ p.w_f.T + p.b_f)
        i = _sigmoid(z @ p.w_i.T + p.b_i)
        o = _sigmoid(z @ p.w_o.T + p.b_o)
        cand = np.tanh(z @ p.w_c.T + p.b_c)
        c = f * c_prev + i * cand
        tc = np.tanh(c)
        h_out = o * tc
        zs[:, step] = z
        fs[:, step] = f
        is_[:, step] = i
        os_[:, step] = o
        cands[:, step] = cand
        cs[:, step] = c
        tcs[:, step] = tc
        hs[:, step] = h_out
        h_prev, c_prev = h_out, c
    cache = {"z": zs, "f": fs, "i": is_, "o": os_, "cand": cands,
             "c": cs, "tc": tcs, "x_shape": (b, t, k)}
    return hs, cache


def _lstm_backward(p: LstmParams, cache: dict, dh_seq: np.ndarray):
    """BPTT. Returns (param grads dict with lstm.* keys, dX)."""
    b, t, k = cache["x_shape"]
    h = p.hidden
    grads = {
        "lstm.w_f": np.zeros_like(p.w_f), "lstm.w_i": np.zeros_like(p.w_i),
        "lstm.w_o": np.zeros_like(p.w_o), "lstm.w_c": np.zeros_like(p.w_c),
        "lstm.b_f": np.zeros_like(p.b_f), "lstm.b_i": np.zeros_like(p.b_i),
        "lstm.b_o": np.zeros_like(p.b_o), "lstm.b_c": np.zeros_like(p.b_c),
    }
    dx = np.zeros((b, t, k))
    dh_next = np.zeros((b, h))
    dc_next = np.zeros((b, h))
    for step in range(t - 1, -1, -1):
        z = cache["z"][:, step]
        f = cache["f"][:, step]
        i = cache["i"][:, step]
        o = cache["o"][:, step]
        cand = cache["cand"][:, step]
        tc = cache["tc"][:, step]
        c_prev = cache["c"][:, step - 1] if step > 0 else np.zeros((b, h))

        dh = dh_seq[:, step] + dh_next
        do = dh * tc * o * (1.0 - o)
        dc = dc_next + dh * o * (1.0 - tc * tc)
        df = dc * c_prev * f * (1.0 - f)
        di = dc * cand * i * (1.0 - i)
        dcand = dc * i * (1.0 - cand * cand)

        grads["lstm.w_f"] += df.T @ z
        grads["lstm.w_i"] += di.T @ z
        grads["lstm.w_o"] += do.T @ z
        grads["lstm.w_c"] += dcand.T @ z
        grads["lstm.b_f"] += df.sum(axis=0)
        grads["lstm.b_i"] += di.sum(axis=0)
        grads["lstm.b_o"] += do.sum(axis=0)
        grads["lstm.b_c"] += dcand.sum(axis=0)

        dz = df @ p.w_f + di @ p.w_i + do @ p.w_o + dcand @ p.w_c
        dx[:, step] = dz[:, :k]
        dh_next = dz[:, k:]
        dc_next = dc * f
    return grads, dx


def lstm_forward(p: LstmParams, x: np.ndarray):
    """Hidden state sequence for a (T, k) input, or (B, T, k) batch.

    Returns (H, cache); H matches the input's batching.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        hs, cache = _lstm_forward_batch(p, x[None])
        return hs[0], cache
    return _lstm_forward_batch(p, x)


# -------------------------------------------------------- gated conv

def _gconv_forward_batch(p: GatedConvParams, h: np.ndarray):
    b, t, c_in = h.shape
    width = p.width
    pad = (width - 1) // 2
    hp = np.zeros((b, t + width - 1, c_in))
    hp[:, pad:pad + t, :] = h
    cols = np.stack([hp[:, d:d + t, :] for d in range(width)], axis=2)
    cols = cols.reshape(b, t, width * c_in)
    w2 = p.w.reshape(width * c_in, -1)
    v2 = p.v.reshape(width * c_in, -1)
    lin = cols @ w2 + p.b
    gate_sig = _sigmoid(cols @ v2 + p.g)
    out = lin * gate_sig
    cache = {"cols": cols, "lin": lin, "gate_sig": gate_sig, "in_shape": (b, t, c_in)}
    return out, cache


def _gconv_backward(p: GatedConvParams, cache: dict, dout: np.ndarray):
    b, t, c_in = cache["in_shape"]
    width = p.width
    pad = (width - 1) // 2
    c_out = p.out_channels
    cols = cache["cols"]
    lin = cache["lin"]
    gate_sig = cache["gate_sig"]

    dlin = dout * gate_sig
    dgate = dout * lin * gate_sig * (1.0 - gate_sig)

    cols_flat = cols.reshape(-1, width * c_in)
    grads = {
        "conv.w": (cols_flat.T @ dlin.reshape(-1, c_out)).reshape(width, c_in, c_out),
        "conv.b": dlin.sum(axis=(0, 1)),
        "conv.v": (cols_flat.T @ dgate.reshape(-1, c_out)).reshape(width, c_in, c_out),
        "conv.g": dgate.sum(axis=(0, 1)),
    }
    w2 = p.w.reshape(width * c_in, -1)
    v2 = p.v.reshape(width * c_in, -1)
    dcols = (dlin @ w2.T + dgate @ v2.T).reshape(b, t, width, c_in)
    dhp = np.zeros((b, t + width - 1, c_in))
    for d in range(width):
        dhp[:, d:d + t, :] += dcols[:, :, d, :]
    return grads, dhp[:, pad:pad + t, :]


def gated_conv_forward(p: GatedConvParams, h: np.ndarray):
    """Gated linear unit over time for (T, c_in) or (B, T, c_in) input."""
    h = np.asarray(h, dtype=np.float64)
    if h.ndim == 2:
        out, cache = _gconv_forward_batch(p, h[None])
        return out[0], cache
    return _gconv_forward_batch(p, h)


# ------------------------------------------------------- full model

def max_pool_over_time(x: np.ndarray):
    """(B, T, C) -> (B, C) max plus argmax indices for backprop."""
    arg = x.argmax(axis=1)
    pooled = np.take_along_axis(x, arg[:, None, :], axis=1)[:, 0, :]
    return pooled, arg


def max_pool_backward(arg: np.ndarray, shape, dpooled: np.ndarray) -> np.ndarray:
    """Route the pooled gradient to the argmax positions, zero elsewhere."""
    dx = np.zeros(shape)
    np.put_along_axis(dx, arg[:, None, :], dpooled[:, None, :], axis=1)
    return dx


def _forward_batch(params: ModelParams, x: np.ndarray):
    cache: dict = {}
    cur = x
    if params.lstm is not None:
        cur, cache["lstm"] = _lstm_forward_batch(params.lstm, cur)
    if params.conv is not None:
        cur, cache["conv"] = _gconv_forward_batch(params.conv, cur)
    pooled, arg = max_pool_over_time(cur)
    cache["pool_arg"] = arg
    cache["pool_shape"] = cur.shape
    cache["pooled"] = pooled
    logits = pooled @ params.dense_w.T + params.dense_b
    probs = _softmax_rows(logits)
    return probs, cache


def mcc_rcnn_forward(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Class probability vector for one (T, k) input matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("expected a single (T, k) matrix")
    probs, _ = _forward_batch(params, x[None])
    return probs[0]


def _stack_batch(params: ModelParams, batch):
    xs = []
    ys = []
    for x, label in batch:
        arr = np.asarray(x, dtype=np.float64)
        xs.append(arr)
        if not 1 <= label <= params.l:
            raise ValueError(f"label {label} outside 1..{params.l}")
        ys.append(label - 1)
    return np.stack(xs), np.array(ys, dtype=np.intp)


def batch_loss(params: ModelParams, batch) -> float:
    """Mean cross-entropy of a list of (matrix, label) pairs."""
    x, y = _stack_batch(params, batch)
    probs, _ = _forward_batch(params, x)
    return float(-np.mean(np.log(probs[np.arange(len(y)), y])))


def loss_and_gradients(params: ModelParams, batch):
    """Mean cross-entropy and gradients for every parameter tensor.

    Returns (loss, grads) where grads maps the named_params() keys to
    arrays of matching shape.
    """
    x, y = _stack_batch(params, batch)
    n = len(y)
    probs, cache = _forward_batch(params, x)
    loss = float(-np.mean(np.log(probs[np.arange(n), y])))

    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    grads: dict[str, np.ndarray] = {
        "dense.w": dlogits.T @ cache["pooled"],
        "dense.b": dlogits.sum(axis=0),
    }
    dcur = max_pool_backward(
        cache["pool_arg"], cache["pool_shape"], dlogits @ params.dense_w
    )
    if params.conv is not None:
        conv_grads, dcur = _gconv_backward(params.conv, cache["conv"], dcur)
        grads.update(conv_grads)
    if params.lstm is not None:
        lstm_grads, _dx = _lstm_backward(params.lstm, cache["lstm"], dcur)
        grads.update(lstm_grads)
    return loss, grads


# ------------------------------------------------------------ training

def _to_matrix_default(payload):
    if isinstance(payload, FeatureMatrix):
        return payload.values
    if hasattr(payload, "to_matrix"):
        return payload.to_matrix()
    return np.asarray(payload, dtype=np.float64)


def predict(params: ModelParams, matrices, batch_size: int = 64) -> np.ndarray:
    """Predicted labels (1-based) for a list of (T, k) matrices."""
    out = np.zeros(len(matrices), dtype=np.int64)
    for lo in range(0, len(matrices), batch_size):
        chunk = matrices[lo:lo + batch_size]
        x = np.stack([np.asarray(m, dtype=np.float64) for m in chunk])
        probs, _ = _forward_batch(params, x)
        out[lo:lo + len(chunk)] = probs.argmax(axis=1) + 1
    return out


def train(model_cfg: ModelConfig, dataset, cfg: TrainConfig, to_matrix=None):
    """Train on a LabeledDataset with seeded shuffled minibatches.

    ``to_matrix`` converts a record payload to its (T, k) input matrix
    (defaults to FeatureMatrix.values / np.asarray).  Returns (params,
    history) where history rows carry epoch, mean training loss, and
    post-epoch training accuracy.  Raises DivergedLoss on non-finite
    loss and EmptyTrainSet on an empty dataset.
    """
    if len(dataset) == 0:
        raise EmptyTrainSet("empty training dataset")
    if cfg.optimizer not in ("adagrad", "sgd"):
        raise ValueError(f"unknown optimizer {cfg.optimizer!r}")
    convert = to_matrix or _to_matrix_default
    mats = [convert(p) for p in dataset.payloads()]
    labels = dataset.labels()
    input_dim = mats[0].shape[1]
    params = init_params(model_cfg, input_dim, dataset.l, cfg.hidden, cfg.seed)

    rng = np.random.default_rng(cfg.seed)
    acc_state = {name: np.zeros_like(arr) for name, arr in named_params(params).items()}
    tensors = named_params(params)
    history = []
    n = len(mats)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total_loss = 0.0
        for lo in range(0, n, cfg.batch_size):
            sel = order[lo:lo + cfg.batch_size]
            batch = [(mats[i], labels[i]) for i in sel]
            loss, grads = loss_and_gradients(params, batch)
            if not np.isfinite(loss):
                raise DivergedLoss(f"training loss non-finite at epoch {epoch + 1}")
            total_loss += loss * len(sel)
            for name, grad in grads.items():
                if cfg.optimizer == "adagrad":
                    acc_state[name] += grad * grad
                    tensors[name] -= cfg.learning_rate * grad / (
                        np.sqrt(acc_state[name]) + 1e-8
                    )
                else:
                    tensors[name] -= cfg.learning_rate * grad
        preds = predict(params, mats, batch_size=max(cfg.batch_size, 32))
        accuracy = float(np.mean(preds == np.array(labels)))
        history.append({
            "epoch": epoch + 1,
            "loss": total_loss / n,
            "accuracy": accuracy,
        })
        log.debug("epoch %d loss %.5f acc %.4f", epoch + 1, total_loss / n, accuracy)
    return params, history


# ------------------------------------------------------ gradient check

def gradient_check(params: ModelParams, sample, step: float = 1e-5,
                   max_params: int | None = None, seed: int = 0,
                   grads: dict | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``sample`` is one (matrix, label) pair.  When the model has more than
    ``max_params`` scalars, a seeded subsample of at least that many
    coordinates is checked.  ``grads`` overrides the analytic gradients
    (used to prove the check catches corrupted ones).  The relative error
    denominator is floored at 1e-6 to keep 0/0 and finite-difference
    noise on near-zero gradients from dominating.
    """
    batch = [sample]
    _, analytic = loss_and_gradients(params, batch)
    if grads is not None:
        analytic = grads
    tensors = named_params(params)
    coords = [
        (name, idx)
        for name, arr in tensors.items()
        for idx in range(arr.size)
    ]
    if max_params is not None and len(coords) > max_params:
        rng = np.random.default_rng(seed)
        chosen = rng.choice(len(coords), size=max_params, replace=False)
        coords = [coords[i] for i in sorted(chosen)]

    worst = 0.0
    for name, idx in coords:
        arr = tensors[name]
        orig = arr.flat[idx]
        arr.flat[idx] = orig + step
        up = batch_loss(params, batch)
        arr.flat[idx] = orig - step
        down = batch_loss(params, batch)
        arr.flat[idx] = orig
        numeric = (up - down) / (2.0 * step)
        ana = analytic[name].flat[idx]
        err = abs(numeric - ana) / max(abs(numeric), abs(ana), 1e-6)
        worst = max(worst, err)
    return worst
