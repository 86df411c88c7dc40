"""Layer zoo, network assembly and parameter/FLOP accounting.

Layer kinds:

* ``fan``       -- ``[cos(W_p x) || sin(W_p x) || act(B + W_pbar x)]``
* ``gated_fan`` -- same, periodic rows scaled by ``g`` and the activated
  rows by ``1 - g``, with ``g = sigmoid(raw_gate)`` one scalar per layer
* ``mlp``       -- ``act(B + W x)``
* ``fsnn``      -- ``B + W_out [cos(W_in x) || sin(W_in x)]`` (a truncated
  Fourier series with learned frequencies and coefficients)
* ``fnn``       -- ``sin(B + W x)``
* ``snake``     -- ``z + sin(z)**2`` with ``z = B + W x``
* ``linear``    -- ``B + W x``; always the last layer of a network
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from fanlab import autograd as ag
from fanlab.autograd import Parameter, Tape, Tensor
from fanlab.errors import DimensionError, SpecError


class Activation(str, Enum):
    GELU = "gelu"
    RELU = "relu"
    IDENTITY = "identity"


class LayerKind(str, Enum):
    FAN = "fan"
    GATED_FAN = "gated_fan"
    MLP = "mlp"
    FSNN = "fsnn"
    FNN = "fnn"
    SNAKE = "snake"
    LINEAR = "linear"


FAN_KINDS = (LayerKind.FAN, LayerKind.GATED_FAN)
AFFINE_KINDS = (LayerKind.MLP, LayerKind.FNN, LayerKind.SNAKE, LayerKind.LINEAR)


def activate(kind: Activation, x: Tensor, tape: Tape | None = None) -> Tensor:
    if kind is Activation.GELU:
        return ag.gelu_elem(x, tape)
    if kind is Activation.RELU:
        return ag.relu_elem(x, tape)
    return x


def _check_input(x: Tensor, d_in: int, name: str) -> None:
    if x.rows != d_in:
        raise DimensionError(f"{name} expects {d_in} input rows, got {x.rows}")


# ---------------------------------------------------------------------------
# layers


class FanLayer:
    def __init__(self, w_p, w_pbar, b_pbar, activation: Activation = Activation.GELU):
        self.w_p = w_p if isinstance(w_p, Parameter) else Parameter(w_p)
        self.w_pbar = w_pbar if isinstance(w_pbar, Parameter) else Parameter(w_pbar)
        self.b_pbar = b_pbar if isinstance(b_pbar, Parameter) else Parameter(b_pbar)
        self.activation = Activation(activation)
        d_in = self.w_p.cols
        if self.w_pbar.rows and self.w_pbar.cols != d_in:
            raise DimensionError("W_p and W_pbar disagree on input width")
        if self.b_pbar.shape != (self.w_pbar.rows, 1):
            raise DimensionError(f"B_pbar shape {self.b_pbar.shape} does not match W_pbar")
        if self.d_p + self.d_pbar == 0:
            raise SpecError("FAN layer needs d_p > 0 or d_pbar > 0")

    @property
    def d_in(self) -> int:
        return self.w_p.cols

    @property
    def d_p(self) -> int:
        return self.w_p.rows

    @property
    def d_pbar(self) -> int:
        return self.w_pbar.rows

    @property
    def d_out(self) -> int:
        return 2 * self.d_p + self.d_pbar

    def named_parameters(self):
        return [("w_p", self.w_p), ("w_pbar", self.w_pbar), ("b_pbar", self.b_pbar)]

    def branches(self, x: Tensor, tape: Tape | None = None):
        """The three row blocks (cos, sin, activated) before concatenation."""
        _check_input(x, self.d_in, "FAN layer")
        proj = ag.matmul(self.w_p, x, tape)
        periodic = [ag.cos_elem(proj, tape), ag.sin_elem(proj, tape)]
        if self.d_pbar == 0:
            return periodic, None
        z = ag.add_bias(ag.matmul(self.w_pbar, x, tape), self.b_pbar, tape)
        return periodic, activate(self.activation, z, tape)

    def __call__(self, x: Tensor, tape: Tape | None = None) -> Tensor:
        periodic, rest = self.branches(x, tape)
        parts = periodic if rest is None else periodic + [rest]
        return ag.concat_rows(parts, tape)


class GatedFanLayer(FanLayer):
    def __init__(self, w_p, w_pbar, b_pbar, raw_gate=0.0, activation: Activation = Activation.GELU):
        super().__init__(w_p, w_pbar, b_pbar, activation)
        self.raw_gate = raw_gate if isinstance(raw_gate, Parameter) else Parameter([[raw_gate]])

    @property
    def gate(self) -> float:
        return float(1.0 / (1.0 + np.exp(-self.raw_gate.item())))

    def named_parameters(self):
        return super().named_parameters() + [("raw_gate", self.raw_gate)]

    def __call__(self, x: Tensor, tape: Tape | None = None) -> Tensor:
        periodic, rest = self.branches(x, tape)
        g = ag.sigmoid_elem(self.raw_gate, tape)
        parts = [ag.scale(p, g, tape) for p in periodic]
        if rest is not None:
            parts.append(ag.scale(rest, ag.one_minus(g, tape), tape))
        return ag.concat_rows(parts, tape)


class AffineLayer:
    """``act(B + W x)`` with ``act`` fixed by ``kind`` (mlp/fnn/snake/linear)."""

    def __init__(self, weight, bias, kind: LayerKind = LayerKind.MLP,
                 activation: Activation = Activation.GELU):
        self.weight = weight if isinstance(weight, Parameter) else Parameter(weight)
        self.bias = bias if isinstance(bias, Parameter) else Parameter(bias)
        self.kind = LayerKind(kind)
        if self.kind not in AFFINE_KINDS:
            raise SpecError(f"{self.kind.value} is not an affine layer kind")
        self.activation = Activation(activation)
        if self.bias.shape != (self.weight.rows, 1):
            raise DimensionError(f"bias shape {self.bias.shape} does not match weight {self.weight.shape}")

    @property
    def d_in(self) -> int:
        return self.weight.cols

    @property
    def d_out(self) -> int:
        return self.weight.rows

    def named_parameters(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def __call__(self, x: Tensor, tape: Tape | None = None) -> Tensor:
        _check_input(x, self.d_in, f"{self.kind.value} layer")
        z = ag.add_bias(ag.matmul(self.weight, x, tape), self.bias, tape)
        if self.kind is LayerKind.LINEAR:
            return z
        if self.kind is LayerKind.FNN:
            return ag.sin_elem(z, tape)
        if self.kind is LayerKind.SNAKE:
            return ag.snake_elem(z, tape)
        return activate(self.activation, z, tape)


class FsnnLayer:
    """Shallow Fourier-series network: rows of ``w_in`` are angular
    frequencies, ``w_out`` holds the cos/sin coefficients side by side and
    ``bias`` the constant term."""

    def __init__(self, w_in, w_out, bias):
        self.w_in = w_in if isinstance(w_in, Parameter) else Parameter(w_in)
        self.w_out = w_out if isinstance(w_out, Parameter) else Parameter(w_out)
        self.bias = bias if isinstance(bias, Parameter) else Parameter(bias)
        if self.w_out.cols != 2 * self.n_terms:
            raise DimensionError(f"W_out must have 2N={2 * self.n_terms} columns, got {self.w_out.cols}")
        if self.bias.shape != (self.w_out.rows, 1):
            raise DimensionError("bias does not match W_out rows")

    @property
    def d_in(self) -> int:
        return self.w_in.cols

    @property
    def n_terms(self) -> int:
        return self.w_in.rows

    @property
    def d_out(self) -> int:
        return self.w_out.rows

    def named_parameters(self):
        return [("w_in", self.w_in), ("w_out", self.w_out), ("bias", self.bias)]

    def __call__(self, x: Tensor, tape: Tape | None = None) -> Tensor:
        _check_input(x, self.d_in, "FSNN layer")
        proj = ag.matmul(self.w_in, x, tape)
        feats = ag.concat_rows([ag.cos_elem(proj, tape), ag.sin_elem(proj, tape)], tape)
        return ag.add_bias(ag.matmul(self.w_out, feats, tape), self.bias, tape)

    @classmethod
    def from_fourier(cls, a0: float, a: np.ndarray, b: np.ndarray, period: float) -> "FsnnLayer":
        """Exact 1-D truncated series ``a0 + sum a_n cos(2 pi n x/T) + b_n sin(...)``."""
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        n = np.arange(1, len(a) + 1)
        w_in = (2.0 * np.pi * n / period).reshape(-1, 1)
        w_out = np.concatenate([a, b]).reshape(1, -1)
        return cls(w_in, w_out, [[a0]])


# module-level forwards mirroring the layer kinds

def fan_forward(layer: FanLayer, x: Tensor, tape: Tape | None = None) -> Tensor:
    return layer(x, tape)


def gated_fan_forward(layer: GatedFanLayer, x: Tensor, tape: Tape | None = None) -> Tensor:
    return layer(x, tape)


def mlp_forward(layer: AffineLayer, x: Tensor, tape: Tape | None = None) -> Tensor:
    return layer(x, tape)


def fsnn_forward(layer: FsnnLayer, x: Tensor, tape: Tape | None = None) -> Tensor:
    return layer(x, tape)


def fnn_act_forward(weight, bias, x: Tensor, tape: Tape | None = None) -> Tensor:
    return AffineLayer(weight, bias, LayerKind.FNN)(x, tape)


def snake_forward(weight, bias, x: Tensor, tape: Tape | None = None) -> Tensor:
    return AffineLayer(weight, bias, LayerKind.SNAKE)(x, tape)


def linear_forward(weight, bias, x: Tensor, tape: Tape | None = None) -> Tensor:
    return AffineLayer(weight, bias, LayerKind.LINEAR)(x, tape)


# ---------------------------------------------------------------------------
# specs and assembly


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    d_in: int
    d_out: int
    d_p: int | None = None
    n_terms: int | None = None
    activation: Activation = Activation.GELU
    residual: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", LayerKind(self.kind))
        object.__setattr__(self, "activation", Activation(self.activation))

    @property
    def periodic_dim(self) -> int:
        """d_p for FAN kinds; defaults to floor(d_out / 4)."""
        return self.d_out // 4 if self.d_p is None else self.d_p

    @property
    def nonperiodic_dim(self) -> int:
        return self.d_out - 2 * self.periodic_dim

    @property
    def terms(self) -> int:
        return max(1, self.d_out // 2) if self.n_terms is None else self.n_terms

    def validate(self) -> None:
        if self.d_in < 1 or self.d_out < 1:
            raise SpecError(f"layer dimensions must be positive: {self.d_in}->{self.d_out}")
        if self.kind in FAN_KINDS:
            if self.periodic_dim < 0 or self.nonperiodic_dim < 0:
                raise SpecError(f"d_p={self.periodic_dim} leaves negative d_pbar for d_out={self.d_out}")
        if self.kind is LayerKind.FSNN and self.terms < 1:
            raise SpecError("FSNN layer needs at least one term")
        if self.residual and self.d_in != self.d_out:
            raise SpecError(f"residual needs d_in == d_out, got {self.d_in}->{self.d_out}")


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))

    @property
    def d_in(self) -> int:
        return self.layers[0].d_in

    @property
    def d_out(self) -> int:
        return self.layers[-1].d_out

    def validate(self) -> None:
        if not self.layers:
            raise SpecError("network needs at least one layer")
        if self.layers[-1].kind is not LayerKind.LINEAR:
            raise SpecError("the last layer must be linear")
        for i, layer in enumerate(self.layers):
            layer.validate()
            if i and self.layers[i - 1].d_out != layer.d_in:
                raise SpecError(
                    f"layer {i} expects {layer.d_in} inputs but layer {i - 1} emits {self.layers[i - 1].d_out}")


def model_spec(kind, d_in: int = 1, d_out: int = 1, hidden: int = 256, depth: int = 3,
               dp_ratio: float = 0.25, activation=Activation.GELU, residual: bool = False,
               n_terms: int | None = None) -> NetworkSpec:
    """Standard stack: ``depth - 1`` hidden layers of ``kind`` then a linear head.

    ``residual`` is applied to every hidden layer whose input and output
    widths match (all but the first when ``d_in != hidden``).
    """
    kind = LayerKind(kind)
    if depth < 1:
        raise SpecError("depth must be >= 1")
    if kind is LayerKind.LINEAR:
        return NetworkSpec((LayerSpec(LayerKind.LINEAR, d_in, d_out),))
    d_p = int(np.floor(dp_ratio * hidden)) if kind in FAN_KINDS else None
    layers = []
    width = d_in
    for _ in range(depth - 1):
        layers.append(LayerSpec(kind, width, hidden, d_p=d_p, n_terms=n_terms,
                                activation=activation, residual=residual and width == hidden))
        width = hidden
    layers.append(LayerSpec(LayerKind.LINEAR, width, d_out))
    spec = NetworkSpec(tuple(layers))
    spec.validate()
    return spec


class Network:
    def __init__(self, spec: NetworkSpec, layers):
        self.spec = spec
        self.layers = list(layers)

    def __call__(self, x: Tensor, tape: Tape | None = None) -> Tensor:
        for spec, layer in zip(self.spec.layers, self.layers):
            out = layer(x, tape)
            x = ag.add(out, x, tape) if spec.residual else out
        return x

    def predict(self, x) -> np.ndarray:
        return self(x if isinstance(x, Tensor) else Tensor(x)).data

    def named_parameters(self) -> list[tuple[str, Parameter]]:
        return [(f"{i}.{name}", p)
                for i, layer in enumerate(self.layers)
                for name, p in layer.named_parameters()]

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def snapshot_id(self) -> str:
        """Short content hash of all parameter values."""
        h = hashlib.sha256()
        for name, p in self.named_parameters():
            h.update(name.encode())
            h.update(np.ascontiguousarray(p.data).tobytes())
        return h.hexdigest()[:16]


def _uniform(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(cols)
    return rng.uniform(-bound, bound, size=(rows, cols))


def init_layer(spec: LayerSpec, rng: np.random.Generator):
    if spec.kind in FAN_KINDS:
        d_p, d_pbar = spec.periodic_dim, spec.nonperiodic_dim
        args = (_uniform(rng, d_p, spec.d_in), _uniform(rng, d_pbar, spec.d_in), np.zeros((d_pbar, 1)))
        if spec.kind is LayerKind.GATED_FAN:
            return GatedFanLayer(*args, raw_gate=0.0, activation=spec.activation)
        return FanLayer(*args, activation=spec.activation)
    if spec.kind is LayerKind.FSNN:
        n = spec.terms
        return FsnnLayer(_uniform(rng, n, spec.d_in), _uniform(rng, spec.d_out, 2 * n),
                         np.zeros((spec.d_out, 1)))
    return AffineLayer(_uniform(rng, spec.d_out, spec.d_in), np.zeros((spec.d_out, 1)),
                       spec.kind, spec.activation)


def build_network(spec: NetworkSpec, seed: int) -> Network:
    spec.validate()
    rng = np.random.default_rng(seed)
    return Network(spec, [init_layer(layer, rng) for layer in spec.layers])


# ---------------------------------------------------------------------------
# accounting


@dataclass(frozen=True)
class CostReport:
    """Exact counts next to the closed-form formulas for MLP and FAN layers.

    ``*_matmul_flops`` isolate the weight-product term (2 per multiply-add);
    the full ``*_flops`` add nonlinear evaluations and, for the exact
    count, bias/residual/gate arithmetic.
    """

    exact_params: int
    table1_params: int
    exact_flops: int
    table1_flops: int
    flops_nonlinear: int = 1
    exact_matmul_flops: int = 0
    table1_matmul_flops: int = 0
    layers: tuple = field(default=(), compare=False, repr=False)

    @property
    def param_gap(self) -> int:
        return self.table1_params - self.exact_params


def layer_costs(layer: LayerSpec, flops_nonlinear: int = 1) -> CostReport:
    F = flops_nonlinear
    d_in, d_out = layer.d_in, layer.d_out
    act_cost = 0 if layer.activation is Activation.IDENTITY else F
    residual = d_out if layer.residual else 0

    if layer.kind in FAN_KINDS:
        d_p, d_pbar = layer.periodic_dim, layer.nonperiodic_dim
        params = (d_p + d_pbar) * d_in + d_pbar
        mm = 2 * d_in * (d_p + d_pbar)
        flops = mm + F * 2 * d_p + act_cost * d_pbar + d_pbar
        # (1 - d_p/d_out) * X kept in integers as (d_out - d_p) * X / d_out
        t1_params = (d_out - d_p) * (d_in + 1)
        t1_mm = 2 * d_in * (d_out - d_p)
        if layer.kind is LayerKind.GATED_FAN:
            params += 1
            flops += d_out + F + 1  # gate products, sigmoid, 1 - g
        return CostReport(params, t1_params, flops + residual, t1_mm + F * d_out, F, mm, t1_mm)

    if layer.kind is LayerKind.FSNN:
        n = layer.terms
        params = n * d_in + 2 * n * d_out + d_out
        mm = 2 * d_in * n + 2 * 2 * n * d_out
        flops = mm + F * 2 * n + d_out + residual
        return CostReport(params, params, flops, flops, F, mm, mm)

    params = d_in * d_out + d_out
    mm = 2 * d_in * d_out
    if layer.kind is LayerKind.LINEAR:
        nl, t1_nl = 0, 0
    elif layer.kind is LayerKind.MLP:
        nl, t1_nl = act_cost, F
    else:
        nl, t1_nl = F, F
    return CostReport(params, params, mm + nl * d_out + d_out + residual, mm + t1_nl * d_out, F, mm, mm)


def count_costs(spec: NetworkSpec, flops_nonlinear: int = 1) -> CostReport:
    spec.validate()
    per_layer = tuple(layer_costs(layer, flops_nonlinear) for layer in spec.layers)
    return CostReport(
        exact_params=sum(c.exact_params for c in per_layer),
        table1_params=sum(c.table1_params for c in per_layer),
        exact_flops=sum(c.exact_flops for c in per_layer),
        table1_flops=sum(c.table1_flops for c in per_layer),
        flops_nonlinear=flops_nonlinear,
        exact_matmul_flops=sum(c.exact_matmul_flops for c in per_layer),
        table1_matmul_flops=sum(c.table1_matmul_flops for c in per_layer),
        layers=per_layer,
    )


def match_hidden(kind, target_params: int, **spec_kwargs) -> int:
    """Hidden width whose ``model_spec(kind, hidden=h)`` parameter count is closest to
    ``target_params`` (ties go to the smaller width)."""
    best_h, best_gap = 1, None
    lo, hi = 1, 2
    while count_costs(model_spec(kind, hidden=hi, **spec_kwargs)).exact_params < target_params:
        lo, hi = hi, hi * 2
    for h in range(max(1, lo // 2), hi + 1):
        if LayerKind(kind) in FAN_KINDS and h < 2:
            continue
        gap = abs(count_costs(model_spec(kind, hidden=h, **spec_kwargs)).exact_params - target_params)
        if best_gap is None or gap < best_gap:
            best_h, best_gap = h, gap
    return best_h


def with_dp(spec: NetworkSpec, ratio: float) -> NetworkSpec:
    """Copy of ``spec`` with every FAN layer's d_p set to floor(ratio * d_out)."""
    if not 0.0 <= ratio <= 0.5:
        raise SpecError(f"d_p ratio must be in [0, 0.5], got {ratio}")
    layers = tuple(replace(l, d_p=int(np.floor(ratio * l.d_out))) if l.kind in FAN_KINDS else l
                   for l in spec.layers)
    out = NetworkSpec(layers)
    out.validate()
    return out
