from typing import Dict, Iterator, List, Tuple

import numpy as np

from ..exceptions import DimensionMismatchError, NonFiniteError


class ParamStore:
    """
    Named binary64 tensors, each paired with a gradient accumulator of the
    same shape. Declaration order is preserved (checkpoints rely on it).
    """

    def __init__(self) -> None:
        self._values: Dict[str, np.ndarray] = {}
        self._grads: Dict[str, np.ndarray] = {}

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self._values:
            raise ValueError(f"parameter {name} already declared")
        value = np.array(value, dtype=np.float64, copy=True)
        if not np.all(np.isfinite(value)):
            raise NonFiniteError(f"parameter {name} has non-finite values")
        self._values[name] = value
        self._grads[name] = np.zeros_like(value)
        return value

    def __contains__(self, name: str) -> bool:
        return name in self._values

    def __len__(self) -> int:
        return len(self._values)

    def names(self) -> List[str]:
        return list(self._values)

    def value(self, name: str) -> np.ndarray:
        try:
            return self._values[name]
        except KeyError:
            raise KeyError(f"unknown parameter {name}") from None

    def grad(self, name: str) -> np.ndarray:
        try:
            return self._grads[name]
        except KeyError:
            raise KeyError(f"unknown parameter {name}") from None

    def items(self) -> Iterator[Tuple[str, np.ndarray]]:
        return iter(self._values.items())

    def set_value(self, name: str, value: np.ndarray) -> None:
        current = self.value(name)
        value = np.asarray(value, dtype=np.float64)
        if value.shape != current.shape:
            raise DimensionMismatchError(f"{name}: shape {value.shape} != {current.shape}")
        current[...] = value

    def zero_grad(self) -> None:
        for grad in self._grads.values():
            grad.fill(0.0)

    def size(self, prefix: str = "") -> int:
        return int(sum(v.size for n, v in self._values.items() if n.startswith(prefix)))

    def grad_shadow(self) -> "ParamStore":
        """A store sharing these values with its own zeroed gradients."""
        shadow = ParamStore()
        shadow._values = self._values
        shadow._grads = {name: np.zeros_like(v) for name, v in self._values.items()}
        return shadow

    def accumulate_grads(self, other: "ParamStore") -> None:
        for name, grad in self._grads.items():
            grad += other.grad(name)

    def global_grad_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(g * g)) for g in self._grads.values())))

    def copy(self) -> "ParamStore":
        clone = ParamStore()
        for name, value in self._values.items():
            clone.add(name, value)
        return clone

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {name: value.copy() for name, value in self._values.items()}

    def load_snapshot(self, snapshot: Dict[str, np.ndarray]) -> None:
        for name, value in snapshot.items():
            self.set_value(name, value)
