"""Stacked-LSTM speaker encoder with exact hand-derived backpropagation.

Float64 throughout: every gradient here is checked against central finite
differences in the test suite, and 32-bit noise would drown that signal.
The utterance summary is the final-frame top-layer hidden state, passed
through an affine projection and L2-normalized.

Checkpoint layout (version 1, all little-endian):
  magic "DSRK" | version int32 | n_layers, hidden_dim, embed_dim,
  input_dim, seed as int32 | then per tensor, in the fixed order
  lstm0.w_x, lstm0.w_h, lstm0.b, lstm1.w_x, ... , proj.w, proj.b:
  name length uint32 | name UTF-8 | element count uint64 | float64 data.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyInputError,
    FormatError,
    NumericError,
    ParameterError,
    ShapeError,
    UnsupportedFormatError,
    ValidationError,
)

CHECKPOINT_MAGIC = b"DSRK"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class EncoderConfig:
    """Desk-scale defaults; hidden_dim=256, n_layers=3 mirrors full scale."""

    n_layers: int = 2
    hidden_dim: int = 32
    embed_dim: int = 16
    input_dim: int = 20
    seed: int = 0

    def __post_init__(self):
        for name in ("n_layers", "hidden_dim", "embed_dim", "input_dim"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be at least 1")


def tensor_order(config: EncoderConfig):
    """Canonical tensor names: serialization and reductions both follow it."""
    names = []
    for layer in range(config.n_layers):
        names += [f"lstm{layer}.w_x", f"lstm{layer}.w_h", f"lstm{layer}.b"]
    return names + ["proj.w", "proj.b"]


def _tensor_shapes(config: EncoderConfig):
    h, e = config.hidden_dim, config.embed_dim
    shapes = {}
    for layer in range(config.n_layers):
        d = config.input_dim if layer == 0 else h
        shapes[f"lstm{layer}.w_x"] = (4 * h, d)
        shapes[f"lstm{layer}.w_h"] = (4 * h, h)
        shapes[f"lstm{layer}.b"] = (4 * h,)
    shapes["proj.w"] = (e, h)
    shapes["proj.b"] = (e,)
    return shapes


@dataclass
class EncoderParams:
    config: EncoderConfig
    tensors: dict = field(default_factory=dict)

    def __post_init__(self):
        shapes = _tensor_shapes(self.config)
        if set(self.tensors) != set(shapes):
            raise ShapeError("parameter set does not match config tensor list")
        for name, shape in shapes.items():
            t = self.tensors[name]
            if t.shape != shape:
                raise ShapeError(f"{name}: expected shape {shape}, got {t.shape}")
            if not np.all(np.isfinite(t)):
                raise ValidationError(f"{name} contains non-finite values")

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.config, {k: v.copy() for k, v in self.tensors.items()})


def init_params(config: EncoderConfig) -> EncoderParams:
    """Uniform(-k, k) with k = 1/sqrt(hidden_dim); forget-gate bias shifted
    to +1 and projection bias forced nonzero so a zero-state LSTM still
    produces a usable direction."""
    rng = np.random.default_rng(config.seed)
    k = 1.0 / np.sqrt(config.hidden_dim)
    h = config.hidden_dim
    tensors = {}
    for name, shape in _tensor_shapes(config).items():
        t = rng.uniform(-k, k, size=shape)
        if name.endswith(".b") and name.startswith("lstm"):
            t[h:2 * h] += 1.0  # forget gate rows
        if name == "proj.b":
            t[t == 0.0] = 0.5 * k
        tensors[name] = t
    return EncoderParams(config, tensors)


def _sigmoid(a):
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


@dataclass
class BatchTrace:
    """Forward-pass cache for one uniform-length batch, kept for backprop."""

    stack: np.ndarray          # (B, T, input_dim)
    layer_inputs: list         # per layer: (B, T, d_in)
    gates: list                # per layer: (B, T, 4H) activated i|f|g|o
    c_prevs: list              # per layer: (B, T, H)
    tanh_cs: list              # per layer: (B, T, H)
    hs: list                   # per layer: (B, T, H)
    pre_norm: np.ndarray       # (B, E)
    norms: np.ndarray          # (B,)
    embeddings: np.ndarray     # (B, E), rows unit-norm


def stack_frames(frames_list) -> np.ndarray:
    """Stack equal-shape MelFrames into a (B, T, D) float64 array."""
    if not frames_list:
        raise EmptyInputError("no frame matrices to stack")
    mats = [np.asarray(f.frames, dtype=np.float64) for f in frames_list]
    first = mats[0].shape
    for m in mats[1:]:
        if m.shape != first:
            raise ShapeError(f"cannot stack frames of shapes {first} and {m.shape}")
    return np.stack(mats)


def forward_batch(params: EncoderParams, stack: np.ndarray) -> BatchTrace:
    """Run the full encoder over a (B, T, input_dim) stack."""
    stack = np.asarray(stack, dtype=np.float64)
    if stack.ndim != 3:
        raise ShapeError(f"expected a (B, T, D) stack, got ndim {stack.ndim}")
    cfg = params.config
    if stack.shape[2] != cfg.input_dim:
        raise ShapeError(f"frame width {stack.shape[2]} != input_dim {cfg.input_dim}")
    if stack.shape[0] < 1 or stack.shape[1] < 1:
        raise EmptyInputError("batch and frame count must both be nonzero")
    B, T, _ = stack.shape
    H = cfg.hidden_dim
    x = stack
    layer_inputs, gates_all, c_prevs_all, tanh_cs_all, hs_all = [], [], [], [], []
    for layer in range(cfg.n_layers):
        wx = params.tensors[f"lstm{layer}.w_x"]
        wh = params.tensors[f"lstm{layer}.w_h"]
        b = params.tensors[f"lstm{layer}.b"]
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        gates = np.empty((B, T, 4 * H))
        c_prevs = np.empty((B, T, H))
        tanh_cs = np.empty((B, T, H))
        hs = np.empty((B, T, H))
        for t in range(T):
            a = x[:, t] @ wx.T + h @ wh.T + b
            i = _sigmoid(a[:, :H])
            f = _sigmoid(a[:, H:2 * H])
            g = np.tanh(a[:, 2 * H:3 * H])
            o = _sigmoid(a[:, 3 * H:])
            c_prevs[:, t] = c
            c = f * c + i * g
            tc = np.tanh(c)
            h = o * tc
            gates[:, t, :H] = i
            gates[:, t, H:2 * H] = f
            gates[:, t, 2 * H:3 * H] = g
            gates[:, t, 3 * H:] = o
            tanh_cs[:, t] = tc
            hs[:, t] = h
        layer_inputs.append(x)
        gates_all.append(gates)
        c_prevs_all.append(c_prevs)
        tanh_cs_all.append(tanh_cs)
        hs_all.append(hs)
        x = hs
    top = hs_all[-1][:, -1]
    pre_norm = top @ params.tensors["proj.w"].T + params.tensors["proj.b"]
    norms = np.linalg.norm(pre_norm, axis=1)
    if np.any(norms < 1e-300):
        raise NumericError("pre-normalization embedding collapsed to zero")
    embeddings = pre_norm / norms[:, None]
    return BatchTrace(stack, layer_inputs, gates_all, c_prevs_all, tanh_cs_all,
                      hs_all, pre_norm, norms, embeddings)


def backward_batch(params: EncoderParams, trace: BatchTrace,
                   grad_out: np.ndarray) -> dict:
    """Gradients of sum_b grad_out[b] . embedding[b], summed over the batch."""
    cfg = params.config
    grad_out = np.asarray(grad_out, dtype=np.float64)
    B, T = trace.stack.shape[:2]
    H = cfg.hidden_dim
    if grad_out.shape != trace.embeddings.shape:
        raise ShapeError(
            f"grad_out shape {grad_out.shape} != embeddings {trace.embeddings.shape}"
        )
    e = trace.embeddings
    # Through L2 normalization: radial component of the upstream grad dies.
    dv = (grad_out - np.sum(grad_out * e, axis=1, keepdims=True) * e) / trace.norms[:, None]
    grads = {}
    top = trace.hs[-1][:, -1]
    grads["proj.w"] = dv.T @ top
    grads["proj.b"] = dv.sum(axis=0)
    dh_seq = np.zeros((B, T, H))
    dh_seq[:, -1] = dv @ params.tensors["proj.w"]
    for layer in reversed(range(cfg.n_layers)):
        wx = params.tensors[f"lstm{layer}.w_x"]
        wh = params.tensors[f"lstm{layer}.w_h"]
        x = trace.layer_inputs[layer]
        gates = trace.gates[layer]
        c_prevs = trace.c_prevs[layer]
        tanh_cs = trace.tanh_cs[layer]
        hs = trace.hs[layer]
        dwx = np.zeros_like(wx)
        dwh = np.zeros_like(wh)
        db = np.zeros(4 * H)
        dx = np.empty_like(x)
        dh = np.zeros((B, H))
        dc = np.zeros((B, H))
        for t in reversed(range(T)):
            dh = dh + dh_seq[:, t]
            i = gates[:, t, :H]
            f = gates[:, t, H:2 * H]
            g = gates[:, t, 2 * H:3 * H]
            o = gates[:, t, 3 * H:]
            tc = tanh_cs[:, t]
            do = dh * tc
            dc = dc + dh * o * (1.0 - tc * tc)
            di = dc * g
            dg = dc * i
            df = dc * c_prevs[:, t]
            da = np.concatenate(
                [di * i * (1.0 - i), df * f * (1.0 - f),
                 dg * (1.0 - g * g), do * o * (1.0 - o)], axis=1)
            h_prev = hs[:, t - 1] if t > 0 else np.zeros((B, H))
            dwx += da.T @ x[:, t]
            dwh += da.T @ h_prev
            db += da.sum(axis=0)
            dx[:, t] = da @ wx
            dh = da @ wh
            dc = dc * f
        grads[f"lstm{layer}.w_x"] = dwx
        grads[f"lstm{layer}.w_h"] = dwh
        grads[f"lstm{layer}.b"] = db
        dh_seq = dx
    return grads


def encode(params: EncoderParams, frames) -> np.ndarray:
    """Embed one utterance; returns a unit-norm (embed_dim,) vector."""
    mat = np.asarray(frames.frames, dtype=np.float64)
    if mat.ndim != 2:
        raise ShapeError("frames must be a 2-D (n_frames, n_mels) matrix")
    if mat.shape[0] == 0:
        raise EmptyInputError("cannot encode zero frames")
    return forward_batch(params, mat[None]).embeddings[0]


def encode_backward(params: EncoderParams, frames, grad_out: np.ndarray) -> dict:
    """Exact parameter gradients of grad_out . encode(params, frames)."""
    mat = np.asarray(frames.frames, dtype=np.float64)
    if mat.ndim != 2:
        raise ShapeError("frames must be a 2-D (n_frames, n_mels) matrix")
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != (params.config.embed_dim,):
        raise ShapeError(
            f"grad_out must have {params.config.embed_dim} entries, got {grad_out.shape}"
        )
    trace = forward_batch(params, mat[None])
    return backward_batch(params, trace, grad_out[None])


def zero_grads(params: EncoderParams) -> dict:
    return {name: np.zeros_like(t) for name, t in params.tensors.items()}


def add_grads(into: dict, grads: dict) -> dict:
    for name in into:
        into[name] += grads[name]
    return into


def global_grad_norm(params: EncoderParams, grads: dict) -> float:
    total = 0.0
    for name in tensor_order(params.config):
        total += float(np.sum(grads[name] * grads[name]))
    return float(np.sqrt(total))


def sgd_step(params: EncoderParams, grads: dict, lr: float, clip: float) -> EncoderParams:
    """One plain SGD update with global-norm clipping; returns new params."""
    if lr <= 0:
        raise ParameterError("lr must be positive")
    if clip <= 0:
        raise ParameterError("clip must be positive")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in {name}")
    norm = global_grad_norm(params, grads)
    factor = clip / norm if norm > clip else 1.0
    tensors = {name: t - lr * factor * grads[name] for name, t in params.tensors.items()}
    return EncoderParams(params.config, tensors)


def save_checkpoint(params: EncoderParams, path) -> None:
    cfg = params.config
    out = [CHECKPOINT_MAGIC, struct.pack("<i", CHECKPOINT_VERSION)]
    out.append(struct.pack("<5i", cfg.n_layers, cfg.hidden_dim, cfg.embed_dim,
                           cfg.input_dim, cfg.seed))
    for name in tensor_order(cfg):
        raw = name.encode("utf-8")
        data = np.ascontiguousarray(params.tensors[name], dtype="<f8")
        out.append(struct.pack("<I", len(raw)))
        out.append(raw)
        out.append(struct.pack("<Q", data.size))
        out.append(data.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(out))


def load_checkpoint(path) -> EncoderParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad checkpoint magic")
    (version,) = struct.unpack_from("<i", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise UnsupportedFormatError(f"{path}: checkpoint version {version} not supported")
    n_layers, hidden, embed, input_dim, seed = struct.unpack_from("<5i", blob, 8)
    cfg = EncoderConfig(n_layers, hidden, embed, input_dim, seed)
    shapes = _tensor_shapes(cfg)
    tensors = {}
    offset = 28
    for name in tensor_order(cfg):
        if offset + 4 > len(blob):
            raise FormatError(f"{path}: truncated checkpoint before {name}")
        (name_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        stored = blob[offset:offset + name_len].decode("utf-8")
        offset += name_len
        if stored != name:
            raise FormatError(f"{path}: expected tensor {name}, found {stored}")
        (count,) = struct.unpack_from("<Q", blob, offset)
        offset += 8
        shape = shapes[name]
        expected = int(np.prod(shape))
        if count != expected:
            raise FormatError(f"{path}: {name} has {count} values, expected {expected}")
        end = offset + 8 * count
        if end > len(blob):
            raise FormatError(f"{path}: truncated data for {name}")
        tensors[name] = np.frombuffer(blob[offset:end], dtype="<f8").reshape(shape).copy()
        offset = end
    if offset != len(blob):
        raise FormatError(f"{path}: {len(blob) - offset} trailing bytes after tensors")
    return EncoderParams(cfg, tensors)
