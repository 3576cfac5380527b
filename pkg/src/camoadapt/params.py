"""Named parameter storage split into a frozen backbone and a trainable set."""
from __future__ import annotations

import numpy as np

from .numcore import Value


class ParamStore:
    """Ordered mapping of dotted names to leaf Values.

    Trainability is carried by ``Value.requires_grad``: frozen entries never
    accumulate gradient and are skipped by the optimizer.
    """

    def __init__(self):
        self._values: dict[str, Value] = {}

    def add(self, name: str, array, trainable: bool) -> Value:
        if name in self._values:
            raise KeyError(f"parameter {name!r} already registered")
        v = Value(np.asarray(array, dtype=np.float32), requires_grad=trainable, name=name)
        self._values[name] = v
        return v

    def __getitem__(self, name: str) -> Value:
        return self._values[name]

    def __contains__(self, name: str) -> bool:
        return name in self._values

    def __iter__(self):
        return iter(self._values)

    def __len__(self):
        return len(self._values)

    def items(self):
        return self._values.items()

    def names(self):
        return list(self._values)

    def trainable(self) -> dict[str, Value]:
        return {k: v for k, v in self._values.items() if v.requires_grad}

    def frozen(self) -> dict[str, Value]:
        return {k: v for k, v in self._values.items() if not v.requires_grad}

    def zero_grad(self):
        for v in self._values.values():
            v.grad = None

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self._values.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]):
        """Replace parameter contents in place; shapes and names must match exactly."""
        missing = [k for k in self._values if k not in arrays]
        extra = [k for k in arrays if k not in self._values]
        if missing or extra:
            raise KeyError(f"parameter set mismatch: missing {missing[:5]}, unexpected {extra[:5]}")
        for k, v in self._values.items():
            arr = arrays[k]
            if arr.shape != v.shape:
                raise ValueError(f"shape mismatch for {k}: expected {v.shape}, got {arr.shape}")
        for k, v in self._values.items():
            v.data = np.array(arrays[k], dtype=np.float32, copy=True)

    def view(self, prefix: str) -> "ParamView":
        return ParamView(self, prefix)


class ParamView:
    """Prefix-scoped read access into a ParamStore."""

    def __init__(self, store: ParamStore, prefix: str):
        self.store = store
        self.prefix = prefix

    def __getitem__(self, key: str) -> Value:
        return self.store[f"{self.prefix}.{key}"]

    def __contains__(self, key: str) -> bool:
        return f"{self.prefix}.{key}" in self.store

    def view(self, sub: str) -> "ParamView":
        return ParamView(self.store, f"{self.prefix}.{sub}")


def init_linear(store: ParamStore, name: str, fan_in: int, fan_out: int, rng, trainable: bool,
                gain: float = 1.0, bias: bool = True, zero: bool = False):
    if zero:
        w = np.zeros((fan_in, fan_out))
    else:
        w = rng.normal(0.0, gain / np.sqrt(fan_in), size=(fan_in, fan_out))
    store.add(f"{name}.weight", w, trainable)
    if bias:
        store.add(f"{name}.bias", np.zeros(fan_out), trainable)


def init_norm(store: ParamStore, name: str, dim: int, trainable: bool):
    store.add(f"{name}.gain", np.ones(dim), trainable)
    store.add(f"{name}.bias", np.zeros(dim), trainable)
