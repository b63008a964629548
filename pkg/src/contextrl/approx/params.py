"""Named parameter collections, MLP construction, and checkpoint files.

Parameters live in float64 while training (finite-difference checks need
the headroom); checkpoints are written as raw little-endian float32 with a
plain-text manifest, one `<name> float32 <dims...>` line per array.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping

import numpy as np

from . import autodiff as ad
from ..errors import ConfigurationError, ShapeError


class ParamSet:
    """An ordered mapping of parameter names to float64 arrays."""

    def __init__(self, arrays: Mapping[str, np.ndarray] | None = None):
        self._arrays: dict[str, np.ndarray] = {}
        if arrays:
            for name, arr in arrays.items():
                self[name] = arr

    def __setitem__(self, name: str, arr) -> None:
        self._arrays[name] = np.array(arr, dtype=np.float64)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __contains__(self, name: str) -> bool:
        return name in self._arrays

    def __iter__(self) -> Iterator[str]:
        return iter(self._arrays)

    def __len__(self) -> int:
        return len(self._arrays)

    def names(self) -> list[str]:
        return list(self._arrays)

    def items(self):
        return self._arrays.items()

    def total_count(self) -> int:
        return sum(a.size for a in self._arrays.values())

    def copy(self) -> "ParamSet":
        return ParamSet({k: v.copy() for k, v in self._arrays.items()})

    def prefixed(self, prefix: str) -> "ParamSet":
        """Sub-collection of entries under `prefix.`, prefix stripped."""
        head = prefix + "."
        return ParamSet(
            {k[len(head):]: v for k, v in self._arrays.items() if k.startswith(head)}
        )

    def merge(self, prefix: str, other: "ParamSet") -> None:
        """Absorb `other` under `prefix.` names, in `other`'s order."""
        for k, v in other.items():
            self[prefix + "." + k] = v


@dataclass(frozen=True)
class MlpSpec:
    """Shape and nonlinearity of a fully connected network."""

    layer_sizes: tuple[int, ...]
    activation: str = "relu"
    output_activation: str = "none"

    def __post_init__(self):
        if len(self.layer_sizes) < 3:
            raise ConfigurationError(
                "an MLP needs at least one hidden layer; "
                f"got layer_sizes={self.layer_sizes}"
            )
        if self.activation not in ("relu", "tanh"):
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        if self.output_activation not in ("none", "tanh"):
            raise ConfigurationError(
                f"unknown output activation {self.output_activation!r}"
            )


_ACTS: dict[str, Callable] = {"relu": ad.relu, "tanh": ad.tanh}
_ACTS_PLAIN: dict[str, Callable] = {
    "relu": lambda x: np.maximum(x, 0.0),
    "tanh": np.tanh,
}


def mlp_init(spec: MlpSpec, seed: int) -> ParamSet:
    """Fan-in uniform weights, zero biases; names w0, b0, w1, b1, ..."""
    rng = np.random.default_rng(seed)
    params = ParamSet()
    for i, (d_in, d_out) in enumerate(zip(spec.layer_sizes, spec.layer_sizes[1:])):
        bound = np.sqrt(6.0 / d_in)
        params[f"w{i}"] = rng.uniform(-bound, bound, size=(d_in, d_out))
        params[f"b{i}"] = np.zeros(d_out)
    return params


def mlp_forward(spec: MlpSpec, params: Mapping[str, np.ndarray], x: np.ndarray) -> np.ndarray:
    """Untraced forward pass; accepts (d,) or (n, d) inputs."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.shape[1] != spec.layer_sizes[0]:
        raise ShapeError(
            f"input width {x.shape[1]} does not match layer_sizes[0]={spec.layer_sizes[0]}"
        )
    act = _ACTS_PLAIN[spec.activation]
    n_layers = len(spec.layer_sizes) - 1
    for i in range(n_layers):
        x = x @ params[f"w{i}"] + params[f"b{i}"]
        if i < n_layers - 1:
            x = act(x)
    if spec.output_activation == "tanh":
        x = np.tanh(x)
    return x[0] if squeeze else x


def mlp_forward_nodes(
    spec: MlpSpec, nodes: Mapping[str, ad.Node], x: ad.Node
) -> ad.Node:
    """Traced forward pass over parameter nodes; expects (n, d) input."""
    if x.value.ndim != 2 or x.value.shape[1] != spec.layer_sizes[0]:
        raise ShapeError(
            f"traced input shape {x.value.shape} does not match "
            f"layer_sizes[0]={spec.layer_sizes[0]}"
        )
    act = _ACTS[spec.activation]
    n_layers = len(spec.layer_sizes) - 1
    for i in range(n_layers):
        x = ad.affine(x, nodes[f"w{i}"], nodes[f"b{i}"])
        if i < n_layers - 1:
            x = act(x)
    if spec.output_activation == "tanh":
        x = ad.tanh(x)
    return x


# -- checkpoint files ----------------------------------------------------


def save_params(params: ParamSet, directory: str) -> None:
    """Write one raw float32 `.bin` per array plus `manifest.txt`."""
    os.makedirs(directory, exist_ok=True)
    lines = []
    for name, arr in params.items():
        fname = name.replace("/", "_") + ".bin"
        arr.astype("<f4").tofile(os.path.join(directory, fname))
        dims = " ".join(str(d) for d in arr.shape)
        lines.append(f"{name} float32 {dims}".rstrip())
    with open(os.path.join(directory, "manifest.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_params(directory: str) -> ParamSet:
    """Read a checkpoint written by `save_params`, preserving order."""
    manifest = os.path.join(directory, "manifest.txt")
    if not os.path.exists(manifest):
        raise ConfigurationError(f"no manifest.txt under {directory}")
    params = ParamSet()
    with open(manifest) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            fields = line.split()
            name, dtype = fields[0], fields[1]
            if dtype != "float32":
                raise ConfigurationError(f"unsupported dtype {dtype!r} in manifest")
            shape = tuple(int(d) for d in fields[2:])
            fname = name.replace("/", "_") + ".bin"
            raw = np.fromfile(os.path.join(directory, fname), dtype="<f4")
            expected = int(np.prod(shape)) if shape else 1
            if raw.size != expected:
                raise ShapeError(
                    f"{fname} holds {raw.size} values, manifest says {expected}"
                )
            params[name] = raw.reshape(shape).astype(np.float64)
    return params
