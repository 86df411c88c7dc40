"""AdamW and SGD with momentum over ``Parameter`` lists (updates in place)."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from fanlab.autograd import Parameter
from fanlab.errors import ContractError


def zero_grad(params: Sequence[Parameter]) -> None:
    for p in params:
        p.zero_grad()


class AdamW:
    """Adam with decoupled weight decay.

    Each step first shrinks every parameter by ``1 - lr * weight_decay`` and
    then applies the bias-corrected Adam update.
    """

    def __init__(self, params: Sequence[Parameter], lr: float = 1e-3, betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.01):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        if len(self.m) != len(self.params):
            raise ContractError("optimizer state does not match its parameter list")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if self.weight_decay:
                p.data *= 1.0 - self.lr * self.weight_decay
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def zero_grad(self) -> None:
        zero_grad(self.params)


class SGDM:
    """``v <- momentum * v + g``; ``p <- p - lr * v``."""

    def __init__(self, params: Sequence[Parameter], lr: float = 0.01, momentum: float = 0.9):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        for p, vel in zip(self.params, self.velocity):
            vel *= self.momentum
            vel += p.grad
            p.data -= self.lr * vel

    def zero_grad(self) -> None:
        zero_grad(self.params)


def adamw_step(state: AdamW, params: Sequence[Parameter] | None = None) -> None:
    if state is None:
        raise ContractError("AdamW state is not initialized")
    if params is not None and [id(p) for p in params] != [id(p) for p in state.params]:
        raise ContractError("AdamW state was built for a different parameter list")
    state.step()


def sgdm_step(state: SGDM, params: Sequence[Parameter] | None = None) -> None:
    state.step()


def make_optimizer(kind: str, params, **hyper):
    kind = kind.lower()
    if kind == "adamw":
        return AdamW(params, **hyper)
    if kind in ("sgdm", "sgd"):
        return SGDM(params, **hyper)
    raise ContractError(f"unknown optimizer {kind!r}")
