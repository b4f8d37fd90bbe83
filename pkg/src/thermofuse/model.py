"""Wavelet-structured encoder/decoder network: builder, runner, weights file.

The architecture has three sections. An input encoder/decoder compresses the
thermal image through five stride-2 stages and decodes back to half
resolution. A wavelet-layout section slices that tensor into four planes,
pushes the approximation plane through chains of ReLU blocks (two rounds,
mirroring a two-level DWT), runs each detail plane through a small
encoder/decoder, and tiles all outputs into the classic quadrant layout at
full resolution (`op1`). An output encoder/decoder then refines `op1` with
skip concatenations from the four input-encoder stages and ends in a
single-channel stride-1 convolution with sigmoid activation.

Blocks follow a fixed internal order: convolution, activation, then optional
batch normalization and optional dropout. Detail/encoder blocks use leaky
ReLU; the approximation ("LL") blocks use plain ReLU, matching the
non-negative range of repeated approximation filtering.

Weights serialize to a small tagged binary format ("TOFW"): 32-bit float
payloads with explicit names and extents, so a save/load/save round trip is
byte-identical.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import tensor
from .errors import FormatError, ShapeError, StateError
from .nn.layers import LayerSpec, make_layer

# Planes produced by slicing one DWT stage: approximation plus three details.
# Equals the base filter count dwf at the published dwf=4; kept fixed so the
# slice stages stay well-formed for other dwf values.
SUBBANDS = 4

WEIGHTS_MAGIC = b"TOFW"
WEIGHTS_VERSION = 1

_BLOCK_CONV = {
    "same": ("conv", 1),
    "half": ("conv", 2),
    "double": ("conv_transpose", 2),
    "ll": ("conv", 1),
    "final": ("conv", 1),
}
_BLOCK_ACT = {
    "same": "leaky_relu",
    "half": "leaky_relu",
    "double": "leaky_relu",
    "ll": "relu",
    "final": "sigmoid",
}


@dataclass(frozen=True)
class ModelConfig:
    """Build-time knobs: base filter count and input extents.

    Spatial extents must be positive multiples of 32 so the five stride-2
    encoder stages and the quarter-resolution tiling all land on whole
    pixels.
    """

    dwf: int = 4
    height: int = 128
    width: int = 128

    def __post_init__(self):
        if self.dwf < 1:
            raise ShapeError(f"dwf must be >= 1, got {self.dwf}")
        for label, extent in (("height", self.height), ("width", self.width)):
            if extent < 32 or extent % 32:
                raise ShapeError(
                    f"{label} must be a positive multiple of 32, got {extent}"
                )


class Block:
    """One named network block: conv, activation, optional batchnorm/dropout.

    `kind` picks the convolution and activation: "same" / "half" / "double"
    are stride-1 conv / stride-2 conv / stride-2 transpose conv with leaky
    ReLU, "ll" is a stride-1 conv with plain ReLU, and "final" is a stride-1
    conv with sigmoid.
    """

    def __init__(
        self,
        name: str,
        kind: str,
        in_channels: int,
        filters: int,
        rng=None,
        dropout: bool = True,
        normalization: bool = True,
    ):
        if kind not in _BLOCK_CONV:
            raise ShapeError(f"unknown block kind {kind!r}")
        conv_kind, stride = _BLOCK_CONV[kind]
        self.name = name
        self.kind = kind
        self.in_channels = in_channels
        self.filters = filters
        self.activation = _BLOCK_ACT[kind]
        self.normalization = normalization
        self.dropout = dropout

        specs = [
            LayerSpec(
                conv_kind,
                stride=stride,
                filters=filters,
                normalization=normalization,
                dropout=dropout,
            ),
            LayerSpec(self.activation),
        ]
        if normalization:
            specs.append(LayerSpec("batchnorm"))
        if dropout:
            specs.append(LayerSpec("dropout"))
        self.specs = tuple(specs)
        self.layers = [
            make_layer(spec, in_channels if i == 0 else filters, rng)
            for i, spec in enumerate(specs)
        ]

    def forward(self, x, training: bool = False, rng=None):
        for layer in self.layers:
            x = layer.forward(x, training=training, rng=rng)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def _tagged_layers(self):
        for spec, layer in zip(self.specs, self.layers):
            if spec.kind in ("conv", "conv_transpose"):
                yield "conv", layer
            elif spec.kind == "batchnorm":
                yield "bn", layer

    def param_items(self):
        for tag, layer in self._tagged_layers():
            for pname, arr in layer.params.items():
                yield f"{self.name}/{tag}/{pname}", arr

    def grad_items(self):
        for tag, layer in self._tagged_layers():
            for pname, arr in layer.grads.items():
                yield f"{self.name}/{tag}/{pname}", arr

    def buffer_items(self):
        for tag, layer in self._tagged_layers():
            if tag == "bn":
                for bname, arr in layer.buffers.items():
                    yield f"{self.name}/{tag}/{bname}", arr


@dataclass
class Node:
    """One graph node: an input feed, a block, a channel slice or a concat."""

    name: str
    op: str  # "input" | "block" | "slice" | "concat"
    inputs: tuple[str, ...] = ()
    block: Block | None = None
    channel: int = 0  # slice: source channel index
    axis: int = 0  # concat: 1 = rows, 2 = columns, 3 = channels
    table_label: str | None = field(default=None, repr=False)


class Model:
    """Executable graph: ordered nodes, shared parameter store, audit trail.

    `forward` accepts a single image (h, w) / (h, w, 1) or a batch
    (n, h, w, 1) and returns the mask with matching rank. After a forward
    pass `last_audit` holds (label, extent) for every labelled node and
    `activation(name)` exposes cached intermediates; `backward` then
    accumulates parameter gradients, handling the skip and tiling fan-out.
    """

    def __init__(self, cfg: ModelConfig, nodes: list[Node]):
        self.cfg = cfg
        self.nodes = nodes
        self.training = False
        self._by_name: dict[str, Node] = {}
        for node in nodes:
            if node.name in self._by_name:
                raise StateError(f"duplicate node name {node.name!r}")
            self._by_name[node.name] = node
        self._params = {
            name: arr for node in nodes if node.block
            for name, arr in node.block.param_items()
        }
        self._cache: dict[str, np.ndarray] = {}
        self._unbatch = 0
        self.last_audit: list[tuple[str, tuple[int, ...]]] = []

    # -- introspection -------------------------------------------------

    def node(self, name: str) -> Node:
        try:
            return self._by_name[name]
        except KeyError:
            raise StateError(f"no node named {name!r}") from None

    @property
    def blocks(self) -> list[Block]:
        return [n.block for n in self.nodes if n.block is not None]

    def parameters(self) -> dict[str, np.ndarray]:
        """Live parameter arrays keyed by '<node>/<layer>/<tensor>'."""
        return self._params

    def gradients(self) -> dict[str, np.ndarray]:
        grads = {}
        for node in self.nodes:
            if node.block is not None:
                grads.update(node.block.grad_items())
        return grads

    def state_items(self) -> list[tuple[str, np.ndarray]]:
        """Parameters plus batchnorm running statistics, in graph order."""
        items: list[tuple[str, np.ndarray]] = []
        for node in self.nodes:
            if node.block is not None:
                items.extend(node.block.param_items())
                items.extend(node.block.buffer_items())
        return items

    def parameter_count(self) -> int:
        return sum(arr.size for arr in self._params.values())

    def activation(self, name: str) -> np.ndarray:
        if name not in self._cache:
            raise StateError(f"no cached activation for {name!r}; run forward first")
        return self._cache[name]

    # -- execution -----------------------------------------------------

    def _to_batch(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            self._unbatch = 2
            x = x[None, :, :, None]
        elif x.ndim == 3:
            self._unbatch = 3
            x = x[None]
        elif x.ndim == 4:
            self._unbatch = 0
        else:
            raise ShapeError(f"expected an image or image batch, got shape {x.shape}")
        n, h, w, c = x.shape
        if (h, w) != (self.cfg.height, self.cfg.width) or c != 1:
            raise ShapeError(
                f"input must be {self.cfg.height}x{self.cfg.width}x1, "
                f"got {h}x{w}x{c}"
            )
        return x

    def forward(self, x, training: bool | None = None, rng=None, overrides=None):
        """Run the graph; `overrides` maps node names to injected outputs."""
        training = self.training if training is None else training
        x = self._to_batch(x)
        n = x.shape[0]
        out: dict[str, np.ndarray] = {"input": x}
        audit: list[tuple[str, tuple[int, ...]]] = []
        for node in self.nodes:
            if node.op == "input":
                y = x
            elif overrides is not None and node.name in overrides:
                y = np.asarray(overrides[node.name], dtype=np.float64)
                if y.ndim == 3:
                    y = np.repeat(y[None], n, axis=0)
                if y.ndim != 4 or y.shape[0] != n:
                    raise ShapeError(
                        f"override for {node.name!r} has shape {y.shape}"
                    )
            elif node.op == "block":
                y = node.block.forward(out[node.inputs[0]], training, rng)
            elif node.op == "slice":
                src = out[node.inputs[0]]
                y = src[:, :, :, node.channel : node.channel + 1].copy()
            else:  # concat
                y = tensor.concat(out[node.inputs[0]], out[node.inputs[1]], node.axis)
            out[node.name] = y
            if node.table_label is not None:
                audit.append((node.table_label, tuple(y.shape[1:])))
        self._cache = out
        self.last_audit = audit
        y = out[self.nodes[-1].name]
        if self._unbatch == 2:
            return y[0, :, :, 0]
        if self._unbatch == 3:
            return y[0]
        return y

    def backward(self, dout) -> np.ndarray:
        """Backpropagate from the final output; returns d(input)."""
        if not self._cache:
            raise StateError("backward needs a preceding forward pass")
        dout = np.asarray(dout, dtype=np.float64)
        if self._unbatch == 2:
            dout = dout[None, :, :, None]
        elif self._unbatch == 3:
            dout = dout[None]
        final = self.nodes[-1].name
        if dout.shape != self._cache[final].shape:
            raise ShapeError(
                f"gradient shape {dout.shape} does not match output "
                f"{self._cache[final].shape}"
            )
        grads: dict[str, np.ndarray] = {final: dout.copy()}
        dinput = None
        for node in reversed(self.nodes):
            g = grads.pop(node.name, None)
            if g is None:
                continue
            if node.op == "input":
                dinput = g
            elif node.op == "block":
                self._accumulate(grads, node.inputs[0], node.block.backward(g))
            elif node.op == "slice":
                src = node.inputs[0]
                if src not in grads:
                    grads[src] = np.zeros(self._cache[src].shape)
                grads[src][:, :, :, node.channel : node.channel + 1] += g
            else:  # concat
                a, b = node.inputs
                split = self._cache[a].shape[node.axis]
                index: list[slice] = [slice(None)] * 4
                index[node.axis] = slice(0, split)
                ga = g[tuple(index)].copy()
                index[node.axis] = slice(split, None)
                gb = g[tuple(index)].copy()
                self._accumulate(grads, a, ga)
                self._accumulate(grads, b, gb)
        if self._unbatch == 2:
            return dinput[0, :, :, 0]
        if self._unbatch == 3:
            return dinput[0]
        return dinput

    @staticmethod
    def _accumulate(grads: dict, name: str, g: np.ndarray):
        if name in grads:
            grads[name] += g
        else:
            grads[name] = g


class _Builder:
    def __init__(self, cfg: ModelConfig, rng):
        self.cfg = cfg
        self.rng = rng
        self.nodes = [Node("input", "input")]
        self.channels = {"input": 1}

    def block(self, name, kind, src, filters, dropout=True, normalization=True,
              label=None):
        blk = Block(
            name, kind, self.channels[src], filters, self.rng,
            dropout=dropout, normalization=normalization,
        )
        # label=None -> audit row under the node's own name; "" -> unlabelled.
        table_label = name if label is None else (label or None)
        self.nodes.append(
            Node(name, "block", (src,), block=blk, table_label=table_label)
        )
        self.channels[name] = filters
        return name

    def slices(self, src, names):
        if self.channels[src] != len(names):
            raise StateError(
                f"{src!r} has {self.channels[src]} channels, cannot slice "
                f"into {len(names)} planes"
            )
        for i, plane in enumerate(names):
            label = ", ".join(names) if i == len(names) - 1 else None
            self.nodes.append(
                Node(plane, "slice", (src,), channel=i, table_label=label)
            )
            self.channels[plane] = 1

    def concat(self, name, a, b, axis, label=None):
        self.nodes.append(
            Node(name, "concat", (a, b), axis=axis,
                 table_label=name if label is None else label)
        )
        if axis == 3:
            self.channels[name] = self.channels[a] + self.channels[b]
        else:
            if self.channels[a] != self.channels[b]:
                raise StateError(
                    f"spatial concat of {a!r} and {b!r} needs matching depths"
                )
            self.channels[name] = self.channels[a]
        return name

    def enc_dec(self, name, src, dwf):
        """Detail-plane encoder/decoder: same/half/half/same then mirrored
        transpose decode, ending at a single channel."""
        chain = [
            ("same", dwf, True, True),
            ("half", dwf * 4, True, True),
            ("half", dwf * 16, True, True),
            ("same", dwf * 64, True, True),
            ("double", dwf * 16, True, True),
            ("double", dwf * 4, False, True),
            ("same", 1, False, False),
        ]
        prev = src
        for i, (kind, filters, drop, norm) in enumerate(chain):
            last = i == len(chain) - 1
            prev = self.block(
                name if last else f"{name}_{i}",
                kind, prev, filters, dropout=drop, normalization=norm,
                label=name if last else "",
            )
        return prev


def build_model(cfg: ModelConfig | None = None, seed: int = 0, rng=None) -> Model:
    """Assemble the full network graph for `cfg` with fresh parameters."""
    cfg = ModelConfig() if cfg is None else cfg
    if rng is None:
        rng = np.random.default_rng(seed)
    dwf = cfg.dwf
    g = _Builder(cfg, rng)

    # Input encoder: five stride-2 stages down to extent/32, then decode
    # back up to half resolution with a slice-ready depth.
    g.block("inp", "same", "input", dwf, dropout=False, normalization=False)
    g.block("d0", "half", "inp", dwf * 4)
    g.block("d1", "half", "d0", dwf * 16)
    g.block("d2", "half", "d1", dwf * 64)
    g.block("d3", "half", "d2", dwf * 128)
    g.block("d4", "half", "d3", dwf * 256)
    g.block("d5", "double", "d4", dwf * 128)
    g.block("d6", "double", "d5", dwf * 64)
    g.block("d7", "same", "d6", dwf * 64)
    g.block("d8", "double", "d7", dwf * 16)
    g.block("d9", "double", "d8", dwf * 4)
    g.block("d10", "same", "d9", SUBBANDS)

    # Wavelet-layout section. First-level planes at extent/2.
    g.slices("d10", ("ca1", "ch1", "cv1", "cd1"))
    ll1 = "ca1"
    ll1_chain = [
        ("ll", dwf, True, True),
        ("ll", dwf * 4, True, True),
        ("ll", dwf * 16, True, True),
        ("ll", dwf * 32, True, True),
        ("half", dwf * 64, True, True),
        ("same", dwf * 16, True, True),
        ("same", dwf * 4, True, True),
        ("same", SUBBANDS, True, True),
    ]
    for i, (kind, filters, drop, norm) in enumerate(ll1_chain):
        ll1 = g.block(f"ll1_blk{i}", kind, ll1, filters,
                      dropout=drop, normalization=norm, label="ll1")

    # Second-level planes at extent/4.
    g.slices(ll1, ("ca2", "ch2", "cv2", "cd2"))
    ll2 = "ca2"
    ll2_chain = [
        ("ll", dwf, True, True),
        ("ll", dwf * 4, True, True),
        ("ll", dwf * 16, True, True),
        ("ll", dwf * 64, True, True),
        ("ll", dwf * 16, True, True),
        ("ll", dwf * 4, False, True),
        ("ll", 1, False, False),
    ]
    for i, (kind, filters, drop, norm) in enumerate(ll2_chain):
        ll2 = g.block(f"ll2_blk{i}", kind, ll2, filters,
                      dropout=drop, normalization=norm, label="ll2")

    g.enc_dec("hl2", "ch2", dwf)
    g.enc_dec("lh2", "cv2", dwf)
    g.enc_dec("hh2", "cd2", dwf)
    g.enc_dec("hl1", "ch1", dwf)
    g.enc_dec("lh1", "cv1", dwf)
    g.enc_dec("hh1", "cd1", dwf)

    # Tile the seven single-channel planes into the quadrant layout:
    # approximation top-left, details right/below/diagonal, level 2 nested
    # inside the level-1 approximation slot.
    g.concat("ll2_1", ll2, "hl2", axis=2)
    g.concat("ll2_2", "lh2", "hh2", axis=2)
    g.concat("ll1_tile", "ll2_1", "ll2_2", axis=1, label="ll1")
    g.concat("a", "ll1_tile", "hl1", axis=2)
    g.concat("b", "lh1", "hh1", axis=2)
    g.concat("op1", "a", "b", axis=1)

    # Output encoder/decoder with skip concatenations from the input encoder.
    g.block("op2_0", "same", "op1", dwf * 4, label="op2")
    g.block("op2_1", "half", "op2_0", dwf * 16, label="op2")
    g.concat("op2_2", "op2_1", "d0", axis=3, label="op2")
    g.block("op2_3", "half", "op2_2", dwf * 64, label="op2")
    g.concat("op2_4", "op2_3", "d1", axis=3, label="op2")
    g.block("op2_5", "half", "op2_4", dwf * 128, label="op2")
    g.concat("op2_6", "op2_5", "d2", axis=3, label="op2")
    g.block("op2_7", "half", "op2_6", dwf * 256, label="op2")
    g.concat("op2_8", "op2_7", "d3", axis=3, label="op2")
    g.block("op2_9", "same", "op2_8", dwf * 256, label="op2")
    g.block("op2_10", "double", "op2_9", dwf * 128, label="op2")
    g.block("op2_11", "double", "op2_10", dwf * 64, label="op2")
    g.block("op2_12", "double", "op2_11", dwf * 16, label="op2")
    g.block("op2_13", "double", "op2_12", dwf * 4, dropout=False, label="op2")
    g.block("output", "final", "op2_13", 1, dropout=False, normalization=False)

    return Model(cfg, g.nodes)


# -- weights file ------------------------------------------------------


def save_weights(model: Model, path) -> None:
    """Write every parameter and batchnorm statistic as 32-bit floats."""
    items = model.state_items()
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<II", WEIGHTS_VERSION, len(items)))
        for name, arr in items:
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_weights_file(path) -> dict[str, np.ndarray]:
    """Parse a weights file into name -> float64 array, order preserved."""
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 0

    def take(count: int) -> bytes:
        nonlocal pos
        if pos + count > len(data):
            raise FormatError("truncated weights file")
        chunk = data[pos : pos + count]
        pos += count
        return chunk

    if take(4) != WEIGHTS_MAGIC:
        raise FormatError("not a weights file (bad magic)")
    version, count = struct.unpack("<II", take(8))
    if version != WEIGHTS_VERSION:
        raise FormatError(f"unsupported weights version {version}")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        if name in tensors:
            raise FormatError(f"duplicate tensor name {name!r}")
        (rank,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(shape, dtype=np.int64)) if rank else 1
        values = np.frombuffer(take(4 * size), dtype="<f4")
        tensors[name] = values.astype(np.float64).reshape(shape)
    if pos != len(data):
        raise FormatError("trailing bytes after last tensor")
    return tensors


def load_weights(path, extents: tuple[int, int] | None = None) -> Model:
    """Rebuild a model from a weights file.

    The base filter count is recovered from the input-stage kernel; spatial
    extents are free at load time (every layer is extent-agnostic) and
    default to 128x128.
    """
    tensors = read_weights_file(path)
    first = tensors.get("inp/conv/w")
    if first is None or first.ndim != 4:
        raise FormatError("weights file lacks the input-stage convolution")
    height, width = extents if extents is not None else (128, 128)
    try:
        cfg = ModelConfig(dwf=int(first.shape[3]), height=height, width=width)
    except ShapeError as exc:
        raise FormatError(f"weights file implies an invalid model: {exc}") from exc
    model = build_model(cfg)
    expected = dict(model.state_items())
    missing = sorted(set(expected) - set(tensors))
    surplus = sorted(set(tensors) - set(expected))
    if missing or surplus:
        detail = []
        if missing:
            detail.append(f"missing {missing[0]!r} and {len(missing) - 1} more")
        if surplus:
            detail.append(f"unexpected {surplus[0]!r} and {len(surplus) - 1} more")
        raise FormatError("weights do not match the architecture: " + "; ".join(detail))
    for name, arr in tensors.items():
        target = expected[name]
        if arr.shape != target.shape:
            raise FormatError(
                f"tensor {name!r} has extents {arr.shape}, expected {target.shape}"
            )
        target[...] = arr
    return model
