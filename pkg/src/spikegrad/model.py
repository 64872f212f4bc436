"""Architecture descriptions, presets, and the assembled network.

An architecture is an ordered list of layer specs ending in exactly one
readout.  Shapes are chained and validated before any weight is allocated.
Three desk-scale presets cover the structural elements of interest:

    mlp64    flatten -> dense 64 -> dense 64 -> readout
    convs    conv 8 -> conv 16 -> avgpool -> flatten -> readout
    minires  conv 16 -> resblock 16 -> resblock 32 (stride 2)
             -> avgpool -> flatten -> dense 32 -> readout

The first weighted layer consumes real-valued frames directly (rate
encoding is not used); every hidden stage is linear map -> normalize ->
membrane unroll, and the readout accumulates without firing.
"""

from __future__ import annotations

import numpy as np

from .layers import AvgPool2, Flatten, Readout, ResidualBlock, SpikingConv, SpikingDense
from .rng import Rng
from .surrogate import SgConfig
from .tensorops import ShapeError

PRESETS = ("mlp64", "convs", "minires")


def preset_spec(name: str) -> list[dict]:
    if name == "mlp64":
        return [
            {"kind": "flatten"},
            {"kind": "dense", "out": 64},
            {"kind": "dense", "out": 64},
            {"kind": "readout"},
        ]
    if name == "convs":
        return [
            {"kind": "conv", "out": 8, "kernel": 3, "stride": 1, "padding": 1},
            {"kind": "conv", "out": 16, "kernel": 3, "stride": 1, "padding": 1},
            {"kind": "pool"},
            {"kind": "flatten"},
            {"kind": "readout"},
        ]
    if name == "minires":
        # stride-2 stages need odd spatial extents for integral output sizes,
        # so the pool runs before the residual pair (10 -> 5 -> 3)
        return [
            {"kind": "conv", "out": 16, "kernel": 3, "stride": 1, "padding": 1},
            {"kind": "pool"},
            {"kind": "res", "out": 16, "stride": 1},
            {"kind": "res", "out": 32, "stride": 2},
            {"kind": "flatten"},
            {"kind": "dense", "out": 32},
            {"kind": "readout"},
        ]
    raise ValueError(f"unknown preset {name!r}; choose from {PRESETS}")


class Network:
    """A validated chain of layers with named parameters."""

    def __init__(self, spec: list[dict], input_shape: tuple[int, ...], classes: int,
                 rng: Rng, v_th: float = 0.5, tau_init: float = 0.2):
        if not spec or spec[-1]["kind"] != "readout":
            raise ShapeError("architecture must end with exactly one readout layer")
        if any(entry["kind"] == "readout" for entry in spec[:-1]):
            raise ShapeError("readout must be the last layer")
        self.input_shape = tuple(input_shape)
        self.classes = classes
        self.v_th = float(v_th)
        self.tau_init = float(tau_init)

        # chain shapes first so bad architectures fail before allocation
        shape = self.input_shape
        shapes = [shape]
        for i, entry in enumerate(spec):
            shape = self._probe_shape(entry, shape, i)
            shapes.append(shape)

        self.layers = []
        shape = self.input_shape
        for i, entry in enumerate(spec):
            layer = self._build(entry, shape, i, rng)
            self.layers.append(layer)
            shape = layer.out_shape(shape)
        self.shapes = shapes

    def _probe_shape(self, entry: dict, in_shape, i: int):
        kind = entry["kind"]
        if kind == "flatten":
            return (int(np.prod(in_shape)),)
        if kind == "pool":
            if len(in_shape) != 3:
                raise ShapeError(f"layer {i}: pool needs (C,H,W) input, got {in_shape}")
            c, h, w = in_shape
            if h % 2 or w % 2:
                raise ShapeError(f"layer {i}: pool needs even spatial dims, got {in_shape}")
            return (c, h // 2, w // 2)
        if kind == "dense":
            if len(in_shape) != 1:
                raise ShapeError(f"layer {i}: dense needs flat input, got {in_shape}")
            return (entry["out"],)
        if kind == "conv":
            if len(in_shape) != 3:
                raise ShapeError(f"layer {i}: conv needs (C,H,W) input, got {in_shape}")
            k = entry.get("kernel", 3)
            s = entry.get("stride", 1)
            p = entry.get("padding", 1)
            h, w = in_shape[1], in_shape[2]
            if (h + 2 * p - k) % s or (w + 2 * p - k) % s or h + 2 * p < k or w + 2 * p < k:
                raise ShapeError(f"layer {i}: conv geometry invalid for input {in_shape}")
            return (entry["out"], (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1)
        if kind == "res":
            if len(in_shape) != 3:
                raise ShapeError(f"layer {i}: residual block needs (C,H,W) input, got {in_shape}")
            s = entry.get("stride", 1)
            h, w = in_shape[1], in_shape[2]
            if (h - 1) % s or (w - 1) % s:
                raise ShapeError(f"layer {i}: residual stride invalid for input {in_shape}")
            return (entry["out"], (h - 1) // s + 1, (w - 1) // s + 1)
        if kind == "readout":
            if len(in_shape) != 1:
                raise ShapeError(f"layer {i}: readout needs flat input, got {in_shape}")
            return (self.classes,)
        raise ShapeError(f"layer {i}: unknown kind {kind!r}")

    def _build(self, entry: dict, in_shape, i: int, rng: Rng):
        kind = entry["kind"]
        name = entry.get("name", f"l{i}_{kind}")
        if kind == "flatten":
            return Flatten(name)
        if kind == "pool":
            return AvgPool2(name)
        if kind == "dense":
            return SpikingDense(name, in_shape[0], entry["out"], rng,
                                v_th=self.v_th, tau_init=self.tau_init)
        if kind == "conv":
            return SpikingConv(name, in_shape[0], entry["out"], rng,
                               kernel=entry.get("kernel", 3), stride=entry.get("stride", 1),
                               padding=entry.get("padding", 1),
                               v_th=self.v_th, tau_init=self.tau_init)
        if kind == "res":
            return ResidualBlock(name, in_shape[0], entry["out"], rng,
                                 stride=entry.get("stride", 1),
                                 v_th=self.v_th, tau_init=self.tau_init)
        if kind == "readout":
            return Readout(name, in_shape[0], self.classes, rng)
        raise ShapeError(f"unknown layer kind {kind!r}")

    def forward(self, x: np.ndarray, sg: SgConfig, training: bool = True,
                relaxed: bool = False):
        """Run x[T, N, ...] through the chain; returns (logits, tape)."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[2:] != self.input_shape:
            raise ShapeError(f"input features {x.shape[2:]} != expected {self.input_shape}")
        tape = []
        out = x
        for layer in self.layers:
            out, cache = layer.forward(out, sg, training=training, relaxed=relaxed)
            tape.append(cache)
        return out, tape

    def params(self):
        """All (name, array, weight_decay_flag) triples, in layer order."""
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def param_dict(self) -> dict:
        return {name: arr for name, arr, _ in self.params()}

    def load_param_dict(self, values: dict) -> None:
        own = self.param_dict()
        if set(own) != set(values):
            missing = set(own) ^ set(values)
            raise KeyError(f"parameter name mismatch: {sorted(missing)}")
        for name, arr in own.items():
            if arr.shape != values[name].shape:
                raise ShapeError(f"{name}: shape {values[name].shape} != {arr.shape}")
            arr[...] = values[name]

    def spiking_sites(self, tape):
        """Flat list of (site_name, record) for every membrane unroll in a tape."""
        sites = []
        for cache in tape:
            layer = cache["layer"]
            if not getattr(layer, "spiking", False):
                continue
            if layer.kind == "res":
                for sub in cache["sites"]:
                    sites.append((f"{layer.name}.{sub['suffix']}", sub))
            else:
                sites.append((layer.name, cache))
        return sites

    def norm_layers(self):
        """(site_name, TdBN, rho array) for every normalization in the chain."""
        out = []
        for layer in self.layers:
            if layer.kind in ("dense", "conv"):
                out.append((layer.name, layer.norm, layer.rho))
            elif layer.kind == "res":
                out.append((f"{layer.name}.a", layer.norm1, layer.rho1))
                out.append((f"{layer.name}.b", layer.norm2, layer.rho2))
        return out

    def layer_op_counts(self):
        """Iso-architecture multiply-accumulate counts per sample, one row
        per spiking site (residual blocks split into their two stages so
        each row has a firing rate), plus encode/readout/passive rows.

        Returns (site_name, kind, macs, role); role is 'encode' for the
        first weighted stage, 'readout' for the last layer, 'hidden' for
        spike-driven stages, 'passive' for pool/flatten.
        """
        weighted = [l for l in self.layers if getattr(l, "spiking", False) or l.kind == "readout"]
        first = weighted[0] if weighted else None
        rows = []
        shape = self.input_shape
        for layer in self.layers:
            if layer.kind == "res":
                out = layer.out_shape(shape)
                macs_a = layer.out_channels * layer.in_channels * 9 * out[1] * out[2]
                macs_b = layer.ann_macs(shape) - macs_a
                role_a = "encode" if layer is first else "hidden"
                rows.append((f"{layer.name}.a", "conv", int(macs_a), role_a))
                rows.append((f"{layer.name}.b", "conv", int(macs_b), "hidden"))
            else:
                macs = layer.ann_macs(shape)
                if layer.kind == "readout":
                    role = "readout"
                elif layer is first:
                    role = "encode"
                elif layer.kind in ("dense", "conv"):
                    role = "hidden"
                else:
                    role = "passive"
                rows.append((layer.name, layer.kind, int(macs), role))
            shape = layer.out_shape(shape)
        return rows


def build_network(arch: str | list[dict], input_shape, classes: int, rng: Rng,
                  v_th: float = 0.5, tau_init: float = 0.2) -> Network:
    spec = preset_spec(arch) if isinstance(arch, str) else arch
    return Network(spec, input_shape, classes, rng, v_th=v_th, tau_init=tau_init)
