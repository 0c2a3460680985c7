"""The dual Bi-LSTM fusion architecture and its checkpoint format.

Data flow per example: the English and Hindi embedding sequences run
through separate Bi-LSTM encoders; their per-timestep outputs are fused by
feature-axis concatenation; a further LSTM reduces the fused sequence to
its last valid hidden state; the Hinglish multi-hot vector goes through a
relu dense layer; both vectors concatenate into the final 10-class dense
head. The same topology serves both prediction tasks.

All forward functions accept row-batched tensors (batch x features); the
per-example operations are the batch-of-one case. Variable lengths are
handled by freezing recurrent state beyond a sequence's length and zeroing
the corresponding output rows, so padded timesteps never influence the
result.
"""

import logging
import struct
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .autodiff import Tensor, add, concat, matmul, mul, relu, sigmoid, slice_axis, tanh
from .errors import CheckpointError

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"HQECKPT\n"
CHECKPOINT_VERSION = 1

GATE_FIELDS = ("W_i", "W_f", "W_o", "W_c", "U_i", "U_f", "U_o", "U_c",
               "b_i", "b_f", "b_o", "b_c")


@dataclass
class ModelConfig:
    hinglish_vocab_size: int
    embedding_dim: int = 100
    hidden: int = 64
    hidden2: int = 64
    dense: int = 64
    max_len: int = 30
    n_classes: int = 10


@dataclass
class LstmParams:
    """One LSTM cell: four input projections, four recurrent, four biases."""
    W_i: Tensor
    W_f: Tensor
    W_o: Tensor
    W_c: Tensor
    U_i: Tensor
    U_f: Tensor
    U_o: Tensor
    U_c: Tensor
    b_i: Tensor
    b_f: Tensor
    b_o: Tensor
    b_c: Tensor

    @property
    def hidden(self) -> int:
        return self.b_i.shape[0]


@dataclass
class ModelParams:
    config: ModelConfig
    l_e_fwd: LstmParams
    l_e_bwd: LstmParams
    l_h_fwd: LstmParams
    l_h_bwd: LstmParams
    l_h_e: LstmParams
    d_he_W: Tensor
    d_he_b: Tensor
    d_out_W: Tensor
    d_out_b: Tensor


def _glorot(rng, n_in: int, n_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-limit, limit, size=(n_in, n_out))


def init_lstm_params(d_in: int, hidden: int, rng) -> LstmParams:
    def w():
        return Tensor(_glorot(rng, d_in, hidden), requires_grad=True)

    def u():
        return Tensor(_glorot(rng, hidden, hidden), requires_grad=True)

    def b(value=0.0):
        return Tensor(np.full(hidden, value), requires_grad=True)

    # forget-gate bias starts at 1 so early training can carry state
    return LstmParams(W_i=w(), W_f=w(), W_o=w(), W_c=w(),
                      U_i=u(), U_f=u(), U_o=u(), U_c=u(),
                      b_i=b(), b_f=b(1.0), b_o=b(), b_c=b())


def _zero_lstm_params(d_in: int, hidden: int) -> LstmParams:
    kwargs = {}
    for name in GATE_FIELDS:
        shape = ((d_in, hidden) if name.startswith("W")
                 else (hidden, hidden) if name.startswith("U") else (hidden,))
        kwargs[name] = Tensor(np.zeros(shape), requires_grad=True)
    return LstmParams(**kwargs)


def build_model(config: ModelConfig, rng=None) -> ModelParams:
    """Fresh parameters; Glorot-uniform when an rng is given, zeros otherwise."""
    c = config
    if rng is None:
        make_lstm = _zero_lstm_params
        dense_w = lambda n_in, n_out: Tensor(np.zeros((n_in, n_out)), requires_grad=True)
    else:
        make_lstm = lambda d_in, hidden: init_lstm_params(d_in, hidden, rng)
        dense_w = lambda n_in, n_out: Tensor(_glorot(rng, n_in, n_out), requires_grad=True)

    params = ModelParams(
        config=c,
        l_e_fwd=make_lstm(c.embedding_dim, c.hidden),
        l_e_bwd=make_lstm(c.embedding_dim, c.hidden),
        l_h_fwd=make_lstm(c.embedding_dim, c.hidden),
        l_h_bwd=make_lstm(c.embedding_dim, c.hidden),
        l_h_e=make_lstm(4 * c.hidden, c.hidden2),
        d_he_W=dense_w(c.hinglish_vocab_size, c.dense),
        d_he_b=Tensor(np.zeros(c.dense), requires_grad=True),
        d_out_W=dense_w(c.hidden2 + c.dense, c.n_classes),
        d_out_b=Tensor(np.zeros(c.n_classes), requires_grad=True),
    )
    log.info("model built: %d parameters (dim=%d hidden=%d hidden2=%d dense=%d "
             "hinglish_vocab=%d)", count_parameters(params), c.embedding_dim,
             c.hidden, c.hidden2, c.dense, c.hinglish_vocab_size)
    return params


def named_parameters(params: ModelParams) -> list:
    """(name, tensor) pairs in the canonical checkpoint order."""
    out = []
    for layer_name in ("l_e_fwd", "l_e_bwd", "l_h_fwd", "l_h_bwd", "l_h_e"):
        layer = getattr(params, layer_name)
        for gate in GATE_FIELDS:
            out.append((f"{layer_name}.{gate}", getattr(layer, gate)))
    out.extend([("d_he.W", params.d_he_W), ("d_he.b", params.d_he_b),
                ("d_out.W", params.d_out_W), ("d_out.b", params.d_out_b)])
    return out


def count_parameters(params: ModelParams) -> int:
    return sum(t.data.size for _, t in named_parameters(params))


def clone_params(params: ModelParams) -> ModelParams:
    clone = build_model(params.config, rng=None)
    for (_, src), (_, dst) in zip(named_parameters(params), named_parameters(clone)):
        dst.data = src.data.copy()
    return clone


# --- forward passes -------------------------------------------------------

def lstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor, p: LstmParams):
    """One LSTM step over a row batch; returns (h, c)."""
    def gate(W, U, b, squash):
        return squash(add(add(matmul(x, W), matmul(h_prev, U)), b))

    i = gate(p.W_i, p.U_i, p.b_i, sigmoid)
    f = gate(p.W_f, p.U_f, p.b_f, sigmoid)
    o = gate(p.W_o, p.U_o, p.b_o, sigmoid)
    c_tilde = gate(p.W_c, p.U_c, p.b_c, tanh)
    c = add(mul(f, c_prev), mul(i, c_tilde))
    h = mul(o, tanh(c))
    return h, c


def _scan(step_inputs, step_masks, p: LstmParams, collect: bool = True):
    """Run the cell over timesteps with per-example masking.

    step_masks[t] is a (B,) 0/1 float array or None for all-active. Where a
    mask is 0 the state freezes at its previous value and the emitted
    output row is zero, so padded steps are inert in both directions.
    """
    batch = step_inputs[0].shape[0] if step_inputs else 1
    hidden = p.hidden
    h = Tensor(np.zeros((batch, hidden)))
    c = Tensor(np.zeros((batch, hidden)))
    outputs = []
    for x_t, m in zip(step_inputs, step_masks):
        h_new, c_new = lstm_cell(x_t, h, c, p)
        if m is None:
            h, c = h_new, c_new
            out_t = h_new
        else:
            keep = Tensor(np.repeat(m[:, None], hidden, axis=1))
            drop = Tensor(1.0 - keep.data)
            h = add(mul(h_new, keep), mul(h, drop))
            c = add(mul(c_new, keep), mul(c, drop))
            out_t = mul(h_new, keep)
        if collect:
            outputs.append(out_t)
    return outputs, h


def _step_masks(lengths: np.ndarray, n_steps: int) -> list:
    masks = []
    for t in range(n_steps):
        m = (lengths > t).astype(np.float64)
        masks.append(None if m.all() else m)
    return masks


def _bilstm_outputs(seqs: np.ndarray, lengths: np.ndarray,
                    p_fwd: LstmParams, p_bwd: LstmParams, n_out: int) -> list:
    """Per-timestep concat(h_fwd, h_bwd) for a batch, padded with zero rows.

    seqs is (B, T, d); returns a list of n_out tensors shaped (B, 2H).
    """
    batch = seqs.shape[0]
    hidden = p_fwd.hidden
    active = int(lengths.max(initial=0))
    inputs = [Tensor(seqs[:, t, :]) for t in range(active)]
    masks = _step_masks(lengths, active)
    fwd, _ = _scan(inputs, masks, p_fwd)
    bwd_rev, _ = _scan(inputs[::-1], masks[::-1], p_bwd)
    bwd = bwd_rev[::-1]
    outs = [concat([f, b], axis=1) for f, b in zip(fwd, bwd)]
    zero = lambda: Tensor(np.zeros((batch, 2 * hidden)))
    outs.extend(zero() for _ in range(n_out - active))
    return outs


def bilstm_forward(seq, length: int, p_fwd: LstmParams, p_bwd: LstmParams) -> Tensor:
    """Bi-LSTM over one padded sequence (T x d); rows past `length` are zero."""
    seq = np.asarray(seq, dtype=np.float64)
    max_len = seq.shape[0]
    if length > max_len:
        raise ValueError(f"length {length} exceeds padded size {max_len}")
    outs = _bilstm_outputs(seq[None, :, :], np.array([length]), p_fwd, p_bwd, max_len)
    return concat(outs, axis=0)


def fuse_sequences(seq_e: Tensor, seq_h: Tensor) -> Tensor:
    """Feature-axis concatenation of the two encoder output sequences."""
    if seq_e.shape[0] != seq_h.shape[0]:
        raise ValueError(f"fuse: timestep counts differ, {seq_e.shape} vs {seq_h.shape}")
    return concat([seq_e, seq_h], axis=1)


def lstm_summarize(fused: Tensor, fused_len: int, p: LstmParams) -> Tensor:
    """Final hidden state after running the cell over the first fused_len rows."""
    if fused_len > fused.shape[0]:
        raise ValueError(f"fused_len {fused_len} exceeds {fused.shape[0]} rows")
    if fused_len == 0:
        return Tensor(np.zeros((1, p.hidden)))
    steps = [slice_axis(fused, 0, t, t + 1) for t in range(fused_len)]
    _, h = _scan(steps, [None] * fused_len, p, collect=False)
    return h


def dense(x: Tensor, W: Tensor, b: Tensor, activation: str = "none") -> Tensor:
    out = add(matmul(x, W), b)
    if activation == "relu":
        return relu(out)
    if activation == "none":
        return out
    raise ValueError(f"unknown activation {activation!r}")


def _check_encoded(enc, config: ModelConfig) -> None:
    expect = (config.max_len, config.embedding_dim)
    if enc.english_seq.shape != expect or enc.hindi_seq.shape != expect:
        raise ValueError(f"encoded sequences {enc.english_seq.shape} do not match "
                         f"model config {expect}")
    if enc.hinglish_multihot.shape != (config.hinglish_vocab_size,):
        raise ValueError(f"multi-hot size {enc.hinglish_multihot.shape[0]} does not "
                         f"match vocab size {config.hinglish_vocab_size}")


def forward_batch(encs, params: ModelParams) -> Tensor:
    """Logits (B x n_classes) for a batch of encoded examples."""
    cfg = params.config
    for enc in encs:
        _check_encoded(enc, cfg)
    batch = len(encs)
    eng = np.stack([e.english_seq for e in encs])
    hin = np.stack([e.hindi_seq for e in encs])
    len_e = np.array([e.english_len for e in encs])
    len_h = np.array([e.hindi_len for e in encs])
    fused_len = np.maximum(len_e, len_h)
    n_steps = int(fused_len.max(initial=0))

    if n_steps > 0:
        eng_outs = _bilstm_outputs(eng, len_e, params.l_e_fwd, params.l_e_bwd, n_steps)
        hin_outs = _bilstm_outputs(hin, len_h, params.l_h_fwd, params.l_h_bwd, n_steps)
        fused = [concat([e, h], axis=1) for e, h in zip(eng_outs, hin_outs)]
        _, summary = _scan(fused, _step_masks(fused_len, n_steps), params.l_h_e,
                           collect=False)
    else:
        summary = Tensor(np.zeros((batch, cfg.hidden2)))

    multihot = Tensor(np.stack([e.hinglish_multihot for e in encs]))
    hinglish_vec = dense(multihot, params.d_he_W, params.d_he_b, activation="relu")
    features = concat([summary, hinglish_vec], axis=1)
    return dense(features, params.d_out_W, params.d_out_b, activation="none")


def model_forward(enc, params: ModelParams) -> np.ndarray:
    """Logits for one encoded example, as a plain length-10 array."""
    return forward_batch([enc], params).data[0].copy()


# --- checkpoints -----------------------------------------------------------

_CONFIG_KEYS = ("hinglish_vocab_size", "embedding_dim", "hidden", "hidden2",
                "dense", "max_len", "n_classes")


def save_checkpoint(params: ModelParams, meta: dict, path) -> None:
    """Versioned container: key=value header, then length-prefixed float64 blocks.

    Blocks follow the order of named_parameters(); the header records the
    config so load can rebuild shapes before reading.
    """
    lines = [f"format_version={CHECKPOINT_VERSION}"]
    for key in _CONFIG_KEYS:
        lines.append(f"{key}={getattr(params.config, key)}")
    for key in sorted(meta):
        value = str(meta[key])
        if "\n" in value or "=" in key:
            raise ValueError(f"invalid metadata entry {key!r}")
        lines.append(f"{key}={value}")
    with Path(path).open("wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(("\n".join(lines) + "\n---\n").encode("utf-8"))
        for _, tensor in named_parameters(params):
            block = np.ascontiguousarray(tensor.data, dtype="<f8")
            fh.write(struct.pack("<Q", block.size))
            fh.write(block.tobytes())


def load_checkpoint(path, expected_config: ModelConfig = None):
    """Read a checkpoint; returns (ModelParams, metadata dict)."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    blob = path.read_bytes()
    if not blob.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint file")
    sep = blob.find(b"\n---\n", len(CHECKPOINT_MAGIC) - 1)
    if sep < 0:
        raise CheckpointError(f"{path}: truncated header")
    header = blob[len(CHECKPOINT_MAGIC):sep].decode("utf-8")
    body = blob[sep + len(b"\n---\n"):]

    entries = {}
    for line in header.splitlines():
        if not line:
            continue
        key, _, value = line.partition("=")
        entries[key] = value
    version = entries.pop("format_version", None)
    if version != str(CHECKPOINT_VERSION):
        raise CheckpointError(f"{path}: format version {version} unsupported "
                              f"(expected {CHECKPOINT_VERSION})")
    try:
        config = ModelConfig(**{k: int(entries.pop(k)) for k in _CONFIG_KEYS})
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: bad config header ({exc})") from None

    if expected_config is not None:
        for key in _CONFIG_KEYS:
            got, want = getattr(config, key), getattr(expected_config, key)
            if got != want:
                raise CheckpointError(f"{path}: checkpoint {key}={got} does not "
                                      f"match configured {key}={want}")

    params = build_model(config, rng=None)
    offset = 0
    for name, tensor in named_parameters(params):
        if offset + 8 > len(body):
            raise CheckpointError(f"{path}: truncated before block {name}")
        (count,) = struct.unpack_from("<Q", body, offset)
        offset += 8
        if count != tensor.data.size:
            raise CheckpointError(f"{path}: block {name} holds {count} values, "
                                  f"expected {tensor.data.size}")
        end = offset + 8 * count
        if end > len(body):
            raise CheckpointError(f"{path}: truncated inside block {name}")
        tensor.data = np.frombuffer(body[offset:end], dtype="<f8").reshape(
            tensor.data.shape).copy()
        offset = end
    if offset != len(body):
        raise CheckpointError(f"{path}: {len(body) - offset} trailing bytes")
    return params, entries
