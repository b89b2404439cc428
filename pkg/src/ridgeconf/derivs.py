"""Container for a density value and its partial derivatives up to order 4."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .indexing import vech


@dataclass(frozen=True)
class DerivPack:
    """Derivatives of a scalar field at one or many points.

    Arrays carry an arbitrary leading batch shape ``B``: ``value`` is ``B``,
    ``grad`` is ``B + (d,)``, ``hess`` is ``B + (d, d)``, and the optional
    ``third``/``fourth`` are full symmetric tensors ``B + (d,)*3`` and
    ``B + (d,)*4``.
    """

    value: np.ndarray
    grad: np.ndarray
    hess: np.ndarray
    third: np.ndarray | None = None
    fourth: np.ndarray | None = None

    @property
    def d(self) -> int:
        return self.grad.shape[-1]

    @property
    def max_order(self) -> int:
        if self.fourth is not None:
            return 4
        if self.third is not None:
            return 3
        return 2

    @property
    def d2(self) -> np.ndarray:
        """Half-vectorized Hessian, ``B + (d(d+1)/2,)``."""
        return vech(self.hess)

    def laplacian_grad(self) -> np.ndarray:
        """Laplacian applied to each gradient component."""
        if self.third is None:
            raise ValueError("pack has no third derivatives")
        return np.einsum("...ikk->...i", self.third)

    def laplacian_hess(self) -> np.ndarray:
        """Laplacian applied to each Hessian entry, as a d x d matrix."""
        if self.fourth is None:
            raise ValueError("pack has no fourth derivatives")
        return np.einsum("...ijkk->...ij", self.fourth)

    def __getitem__(self, idx) -> "DerivPack":
        return DerivPack(
            self.value[idx],
            self.grad[idx],
            self.hess[idx],
            None if self.third is None else self.third[idx],
            None if self.fourth is None else self.fourth[idx],
        )

    def __len__(self) -> int:
        return len(self.value)

    def scaled(self, s: float) -> "DerivPack":
        return DerivPack(
            s * self.value,
            s * self.grad,
            s * self.hess,
            None if self.third is None else s * self.third,
            None if self.fourth is None else s * self.fourth,
        )

    @staticmethod
    def zeros(batch: tuple, d: int, max_order: int) -> "DerivPack":
        b = tuple(batch)
        return DerivPack(
            np.zeros(b),
            np.zeros(b + (d,)),
            np.zeros(b + (d, d)),
            np.zeros(b + (d,) * 3) if max_order >= 3 else None,
            np.zeros(b + (d,) * 4) if max_order >= 4 else None,
        )

    def tensors(self) -> list:
        out = [self.value, self.grad, self.hess]
        if self.third is not None:
            out.append(self.third)
        if self.fourth is not None:
            out.append(self.fourth)
        return out

    @staticmethod
    def from_tensors(tensors: list) -> "DerivPack":
        t = list(tensors) + [None] * (5 - len(tensors))
        return DerivPack(*t[:5])

    def derivative(self, gamma) -> np.ndarray:
        """Entry for a multi-index ``gamma`` (tuple of per-axis orders)."""
        gamma = tuple(int(g) for g in gamma)
        order = sum(gamma)
        idx = tuple(i for i, g in enumerate(gamma) for _ in range(g))
        tens = self.tensors()
        if order >= len(tens):
            raise ValueError(f"pack holds derivatives up to order {len(tens) - 1}")
        return tens[order][(Ellipsis,) + idx]
