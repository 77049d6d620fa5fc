"""Recurrent cells: dense LSTM, convolutional LSTM, and the attention-equipped
bottleneck convolutional LSTM, plus the fixed-input unroll used by the
transcription head.

All three cells share the gate structure

    i = sig(Wx x + Wh h + wc o c)        (input gate, peephole via Hadamard)
    f = sig(...)                         (forget gate)
    c = f o c_prev + i o tanh(...)       (cell memory)
    o = sig(... + wc o c)                (output gate, peeps at the new memory)
    h = o o tanh(c)

with the dense cell using matrix products, the convolutional cell using
same-padded convolutions over (N, C, H, W) states, and the attention cell
replacing the direct gates with a channel-reducing bottleneck plus a spatial
attention map that reweights the (static) input at every step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor

__all__ = [
    "CellState",
    "StepTrace",
    "FcLstmParams",
    "ConvLstmParams",
    "AttnConvLstmParams",
    "fc_lstm_step",
    "conv_lstm_step",
    "attend",
    "attn_cell_step",
    "unroll",
]


def _uniform(rng: np.random.Generator, shape: tuple, fan_in: int) -> Tensor:
    s = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-s, s, size=shape))


@dataclass
class CellState:
    """Paired cell memory `c` and output `h` for one timestep."""

    c: Tensor
    h: Tensor

    def __post_init__(self):
        if self.c.dims != self.h.dims:
            raise ShapeError(f"cell state extents differ: c {self.c.dims} vs h {self.h.dims}")

    @classmethod
    def zeros(cls, dims: tuple) -> "CellState":
        return cls(Tensor(np.zeros(dims)), Tensor(np.zeros(dims)))


@dataclass
class StepTrace:
    """Per-step attention map, weighted input, and gate activations."""

    attn: Tensor
    weighted_input: Tensor
    gates: dict[str, Tensor] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# dense LSTM

@dataclass
class FcLstmParams:
    """Dense LSTM weights; input maps are (D_x, D_h), state maps (D_h, D_h),
    peepholes are length-D_h vectors applied elementwise."""

    w_xi: Tensor
    w_hi: Tensor
    w_ci: Tensor
    w_xf: Tensor
    w_hf: Tensor
    w_cf: Tensor
    w_xc: Tensor
    w_hc: Tensor
    w_xo: Tensor
    w_ho: Tensor
    w_co: Tensor

    @property
    def hidden_size(self) -> int:
        return self.w_hi.dims[0]

    @classmethod
    def create(cls, rng: np.random.Generator, d_x: int, d_h: int) -> "FcLstmParams":
        def wx():
            return _uniform(rng, (d_x, d_h), d_x)

        def wh():
            return _uniform(rng, (d_h, d_h), d_h)

        def wc():
            return _uniform(rng, (d_h,), d_h)

        return cls(w_xi=wx(), w_hi=wh(), w_ci=wc(), w_xf=wx(), w_hf=wh(), w_cf=wc(),
                   w_xc=wx(), w_hc=wh(), w_xo=wx(), w_ho=wh(), w_co=wc())

    def named(self) -> dict[str, Tensor]:
        return {k: getattr(self, k) for k in (
            "w_xi", "w_hi", "w_ci", "w_xf", "w_hf", "w_cf",
            "w_xc", "w_hc", "w_xo", "w_ho", "w_co")}


def fc_lstm_step(params: FcLstmParams, x: Tensor, prev: CellState) -> CellState:
    """One dense-LSTM step on (N, D_x) input and (N, D_h) state."""
    if x.dims[0] != prev.h.dims[0] or prev.h.dims[1] != params.hidden_size:
        raise ShapeError(
            f"fc_lstm_step: input {x.dims} / state {prev.h.dims} do not match "
            f"hidden size {params.hidden_size}"
        )
    i = T.sigmoid(T.matmul(x, params.w_xi) + T.matmul(prev.h, params.w_hi)
                  + params.w_ci * prev.c)
    f = T.sigmoid(T.matmul(x, params.w_xf) + T.matmul(prev.h, params.w_hf)
                  + params.w_cf * prev.c)
    c = f * prev.c + i * T.tanh(T.matmul(x, params.w_xc) + T.matmul(prev.h, params.w_hc))
    o = T.sigmoid(T.matmul(x, params.w_xo) + T.matmul(prev.h, params.w_ho)
                  + params.w_co * c)
    h = o * T.tanh(c)
    return CellState(c, h)


# ---------------------------------------------------------------------------
# convolutional LSTM

@dataclass
class ConvLstmParams:
    """Convolutional LSTM weights; every transform is a same-padded k x k
    convolution, peepholes are full (C_cell, H, W) tensors applied elementwise."""

    w_xi: Tensor
    w_hi: Tensor
    w_ci: Tensor
    w_xf: Tensor
    w_hf: Tensor
    w_cf: Tensor
    w_xc: Tensor
    w_hc: Tensor
    w_xo: Tensor
    w_ho: Tensor
    w_co: Tensor

    @property
    def cell_channels(self) -> int:
        return self.w_hi.dims[0]

    @classmethod
    def create(cls, rng: np.random.Generator, c_x: int, c_cell: int, k: int,
               height: int, width: int) -> "ConvLstmParams":
        if k % 2 == 0:
            raise ShapeError(f"kernel size must be odd, got {k}")

        def wx():
            return _uniform(rng, (c_cell, c_x, k, k), c_x * k * k)

        def wh():
            return _uniform(rng, (c_cell, c_cell, k, k), c_cell * k * k)

        def wc():
            return _uniform(rng, (c_cell, height, width), c_cell)

        return cls(w_xi=wx(), w_hi=wh(), w_ci=wc(), w_xf=wx(), w_hf=wh(), w_cf=wc(),
                   w_xc=wx(), w_hc=wh(), w_xo=wx(), w_ho=wh(), w_co=wc())

    def named(self) -> dict[str, Tensor]:
        return {k: getattr(self, k) for k in (
            "w_xi", "w_hi", "w_ci", "w_xf", "w_hf", "w_cf",
            "w_xc", "w_hc", "w_xo", "w_ho", "w_co")}


def conv_lstm_step(params: ConvLstmParams, x: Tensor, prev: CellState) -> CellState:
    """One convolutional-LSTM step on (N, C_x, H, W) input and matching state."""
    if x.dims[0] != prev.h.dims[0] or x.dims[2:] != prev.h.dims[2:]:
        raise ShapeError(f"conv_lstm_step: input {x.dims} / state {prev.h.dims} spatial mismatch")
    i = T.sigmoid(T.conv2d(x, params.w_xi) + T.conv2d(prev.h, params.w_hi)
                  + params.w_ci * prev.c)
    f = T.sigmoid(T.conv2d(x, params.w_xf) + T.conv2d(prev.h, params.w_hf)
                  + params.w_cf * prev.c)
    c = f * prev.c + i * T.tanh(T.conv2d(x, params.w_xc) + T.conv2d(prev.h, params.w_hc))
    o = T.sigmoid(T.conv2d(x, params.w_xo) + T.conv2d(prev.h, params.w_ho)
                  + params.w_co * c)
    h = o * T.tanh(c)
    return CellState(c, h)


# ---------------------------------------------------------------------------
# attention-equipped bottleneck convolutional LSTM

@dataclass
class AttnConvLstmParams:
    """Weights of the attention-equipped bottleneck cell.

    The bottleneck conv `w_b` maps the concatenated (weighted input, previous
    output) down to n_b channels; the i/f/o/candidate convs map n_b back up to
    c_cell. The attention convs `w_h` (over concat(c, h)) and `w_x` (over the
    static input) both emit c_attn channels; their concatenation plus `bias_y`
    feeds the single-channel score conv `w_z`.
    """

    w_b: Tensor
    bias_b: Tensor
    w_i: Tensor
    bias_i: Tensor
    w_f: Tensor
    bias_f: Tensor
    w_o: Tensor
    bias_o: Tensor
    bias_f2: Tensor
    w_b2: Tensor
    bias_b2: Tensor
    w_h: Tensor
    w_x: Tensor
    bias_y: Tensor
    w_z: Tensor

    @property
    def input_channels(self) -> int:
        return self.w_x.dims[1]

    @property
    def cell_channels(self) -> int:
        return self.w_i.dims[0]

    @classmethod
    def create(cls, rng: np.random.Generator, c_x: int, c_cell: int, n_b: int,
               c_attn: int, k: int = 3) -> "AttnConvLstmParams":
        if k % 2 == 0:
            raise ShapeError(f"kernel size must be odd, got {k}")

        def conv(cout, cin):
            return _uniform(rng, (cout, cin, k, k), cin * k * k)

        def zeros(n):
            return Tensor(np.zeros(n))

        return cls(
            w_b=conv(n_b, c_x + c_cell), bias_b=zeros(n_b),
            w_i=conv(c_cell, n_b), bias_i=zeros(c_cell),
            w_f=conv(c_cell, n_b), bias_f=zeros(c_cell),
            w_o=conv(c_cell, n_b), bias_o=zeros(c_cell),
            bias_f2=Tensor(np.ones(c_cell)),  # standard forget-bias head start
            w_b2=conv(c_cell, n_b), bias_b2=zeros(c_cell),
            w_h=conv(c_attn, 2 * c_cell),
            w_x=conv(c_attn, c_x),
            bias_y=zeros(2 * c_attn),
            w_z=conv(1, 2 * c_attn),
        )

    def named(self) -> dict[str, Tensor]:
        return {k: getattr(self, k) for k in (
            "w_b", "bias_b", "w_i", "bias_i", "w_f", "bias_f", "w_o", "bias_o",
            "bias_f2", "w_b2", "bias_b2", "w_h", "w_x", "bias_y", "w_z")}


def attend(params: AttnConvLstmParams, x: Tensor, prev: CellState,
           from_input: Tensor | None = None):
    """Spatial attention over the static input from the previous cell state.

    Returns (weighted input, attention map); the map is softmax-normalized
    over all positions and broadcast across input channels. `from_input` may
    carry the precomputed input-side conv, which is step-independent.
    """
    if x.dims[0] != prev.h.dims[0] or x.dims[2:] != prev.h.dims[2:]:
        raise ShapeError(f"attend: input {x.dims} / state {prev.h.dims} spatial mismatch")
    from_state = T.conv2d(T.concat_channels(prev.c, prev.h), params.w_h)
    if from_input is None:
        from_input = T.conv2d(x, params.w_x)
    hy = T.channel_bias(T.concat_channels(from_state, from_input), params.bias_y)
    z = T.conv2d(T.tanh(hy), params.w_z)
    attn = T.spatial_softmax(z)
    return T.hadamard(x, attn), attn


def _uniform_attention(x: Tensor) -> tuple:
    n, _, h, w = x.dims
    attn = Tensor(np.full((n, 1, h, w), 1.0 / (h * w)))
    return T.hadamard(x, attn), attn


def _fused_gates(params: AttnConvLstmParams):
    # one conv for i/f/o/candidate: identical math, a quarter of the GEMM calls
    kernel = T.concat_first_axis(params.w_i, params.w_f, params.w_o, params.w_b2)
    bias = T.concat_first_axis(params.bias_i, params.bias_f, params.bias_o, params.bias_b2)
    return kernel, bias


def attn_cell_step(params: AttnConvLstmParams, x: Tensor, prev: CellState,
                   uniform_attention: bool = False,
                   from_input: Tensor | None = None,
                   fused_gates: tuple | None = None):
    """One step of the attention-equipped bottleneck cell.

    With `uniform_attention` the learned attention path is bypassed and every
    position receives weight 1/(H*W) — the ablation baseline.
    """
    if uniform_attention:
        xhat, attn = _uniform_attention(x)
    else:
        xhat, attn = attend(params, x, prev, from_input=from_input)
    b = T.relu(T.conv2d(T.concat_channels(xhat, prev.h), params.w_b, params.bias_b))
    kernel, bias = fused_gates if fused_gates is not None else _fused_gates(params)
    gates = T.conv2d(b, kernel, bias)
    cc = params.cell_channels
    i = T.slice_channels(gates, 0, cc)
    f = T.slice_channels(gates, cc, 2 * cc)
    o = T.slice_channels(gates, 2 * cc, 3 * cc)
    i_gate = T.sigmoid(i)
    f_gate = T.sigmoid(T.channel_bias(f, params.bias_f2))
    o_gate = T.sigmoid(o)
    cand = T.relu(T.slice_channels(gates, 3 * cc, 4 * cc))
    c = f_gate * prev.c + i_gate * cand
    h = T.relu(c) * o_gate
    trace = StepTrace(attn=attn, weighted_input=xhat,
                      gates={"input": i_gate, "forget": f_gate, "output": o_gate})
    return CellState(c, h), trace


def unroll(params: AttnConvLstmParams, x: Tensor, steps: int,
           uniform_attention: bool = False):
    """Run the attention cell for `steps` timesteps from a zero state.

    The same static input feeds every step; returns the per-step states and
    traces in order.
    """
    if steps < 1:
        raise ValueError(f"unroll needs at least one step, got {steps}")
    n, _, h, w = x.dims
    state = CellState.zeros((n, params.cell_channels, h, w))
    from_input = None if uniform_attention else T.conv2d(x, params.w_x)
    fused = _fused_gates(params)
    states, traces = [], []
    for _ in range(steps):
        state, trace = attn_cell_step(params, x, state, uniform_attention,
                                      from_input=from_input, fused_gates=fused)
        states.append(state)
        traces.append(trace)
    return states, traces
