"""Named parameter tensors with Adam state.

A ParameterStore owns every weight of one network, keyed by name and
created in a fixed order so seeded initialization is reproducible.  The
update rule is standard Adam with bias correction; gradients are cleared
after each step.  Moment buffers are allocated lazily on first use.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor
from .errors import ContractError, NumericError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class Parameter:
    __slots__ = ("name", "tensor", "m", "v", "step")

    def __init__(self, name: str, tensor: Tensor):
        self.name = name
        self.tensor = tensor
        self.m: np.ndarray | None = None
        self.v: np.ndarray | None = None
        self.step = 0

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @property
    def grad(self) -> np.ndarray | None:
        return self.tensor.grad


class ParameterStore:
    """Ordered collection of parameters sharing one storage dtype."""

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._params: dict[str, Parameter] = {}

    def create(self, name: str, shape: tuple[int, ...], rng: np.random.Generator,
               init_range: float = 0.1) -> Parameter:
        """New parameter initialized uniformly in [-init_range, init_range]."""
        if name in self._params:
            raise ContractError(f"parameter {name!r} already exists")
        data = rng.uniform(-init_range, init_range, size=shape).astype(self.dtype)
        p = Parameter(name, Tensor(data))
        self._params[name] = p
        return p

    def add(self, name: str, values: np.ndarray) -> Parameter:
        """Register a parameter with explicit values (checkpoint load, tests)."""
        if name in self._params:
            raise ContractError(f"parameter {name!r} already exists")
        arr = np.asarray(values, dtype=self.dtype)
        if not np.isfinite(arr).all():
            raise NumericError(f"non-finite values for parameter {name!r}")
        p = Parameter(name, Tensor(arr.copy()))
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def parameters(self) -> list[Parameter]:
        return list(self._params.values())

    def tensors(self) -> list[Tensor]:
        return [p.tensor for p in self._params.values()]

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.tensor.grad = None

    def adam_step(self, lr: float, beta1: float = ADAM_BETA1,
                  beta2: float = ADAM_BETA2, eps: float = ADAM_EPS) -> None:
        """Bias-corrected Adam update; missing gradients count as zero."""
        for p in self._params.values():
            g = p.tensor.grad
            if g is None:
                g = np.zeros_like(p.data)
            if p.m is None:
                p.m = np.zeros_like(p.data)
                p.v = np.zeros_like(p.data)
            p.step += 1
            p.m += (1.0 - beta1) * (g - p.m)
            p.v += (1.0 - beta2) * (g * g - p.v)
            m_hat = p.m / (1.0 - beta1 ** p.step)
            v_hat = p.v / (1.0 - beta2 ** p.step)
            upd = (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.data.dtype)
            np.subtract(p.data, upd, out=p.data)
            if not np.isfinite(p.data).all():
                raise NumericError(f"non-finite parameter {p.name!r} after update")
            p.tensor.grad = None

    def clone(self) -> "ParameterStore":
        """Deep copy of values and optimizer state."""
        out = ParameterStore(self.dtype)
        for p in self._params.values():
            q = out.add(p.name, p.data)
            q.step = p.step
            q.m = None if p.m is None else p.m.copy()
            q.v = None if p.v is None else p.v.copy()
        return out
