"""Quadrature rules on the unit ball, the unit sphere and the cube.

The ball rule is a product of a Gauss-Jacobi radial rule with a recursive
Gauss-Gegenbauer rule on the sphere, so it integrates polynomials exactly up
to a degree that grows with ``level``. The composite cube rule does not know
about the ball and is kept as an independent check.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@lru_cache(maxsize=64)
def _sphere_rule(dim: int, level: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights on S^{dim-1} in R^dim, total weight = surface area."""
    if dim < 1:
        raise ValueError("sphere dimension must be >= 1")
    if dim == 1:
        return np.array([[-1.0], [1.0]]), np.array([1.0, 1.0])
    if dim == 2:
        m = 2 * level + 2
        theta = 2.0 * np.pi * np.arange(m) / m
        nodes = np.column_stack([np.cos(theta), np.sin(theta)])
        return nodes, np.full(m, 2.0 * np.pi / m)
    a = 0.5 * (dim - 3)
    t, wt = roots_jacobi(level, a, a)
    sub_nodes, sub_w = _sphere_rule(dim - 1, level)
    s = np.sqrt(1.0 - t**2)
    nodes = np.concatenate(
        [np.column_stack([np.full(len(sub_w), ti), si * sub_nodes]) for ti, si in zip(t, s)]
    )
    weights = np.concatenate([wi * sub_w for wi in wt])
    return nodes, weights


def sphere_rule(dim: int, level: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature for the unit sphere S^{dim-1} embedded in R^dim.

    ``dim == 1`` gives the two-point counting measure {-1, +1}.
    """
    nodes, weights = _sphere_rule(dim, level)
    return nodes.copy(), weights.copy()


@lru_cache(maxsize=64)
def _ball_rule(d: int, level: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = roots_jacobi(level, 0.0, d - 1.0)
    r = 0.5 * (1.0 + x)
    wr = w / 2.0**d
    s_nodes, s_w = _sphere_rule(d, level)
    nodes = (r[:, None, None] * s_nodes[None, :, :]).reshape(-1, d)
    weights = (wr[:, None] * s_w[None, :]).reshape(-1)
    return nodes, weights


def ball_rule(d: int, level: int = 12) -> tuple[np.ndarray, np.ndarray]:
    """Product rule on the closed unit ball of R^d.

    Exact for polynomials of total degree <= 2*level - 1.
    """
    if d < 2:
        raise ValueError("ball rule needs d >= 2")
    if level < 1:
        raise ValueError("quadrature level must be positive")
    nodes, weights = _ball_rule(d, level)
    return nodes.copy(), weights.copy()


def cube_rule(d: int, panels: int, order: int = 4):
    """Composite Gauss-Legendre rule on [-1, 1]^d, yielded in chunks.

    The full tensor grid gets large quickly in d >= 3, so this yields
    ``(nodes, weights)`` blocks, one per first-axis panel.
    """
    t, w = roots_legendre(order)
    edges = np.linspace(-1.0, 1.0, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x1 = (mid[:, None] + half[:, None] * t[None, :]).reshape(-1)
    w1 = (half[:, None] * w[None, :]).reshape(-1)
    if d == 1:
        yield x1[:, None], w1
        return
    rest = np.stack(np.meshgrid(*([x1] * (d - 1)), indexing="ij"), axis=-1).reshape(-1, d - 1)
    wrest = np.prod(np.stack(np.meshgrid(*([w1] * (d - 1)), indexing="ij"), axis=-1), axis=-1).reshape(-1)
    for p in range(panels):
        sl = slice(p * order, (p + 1) * order)
        first = x1[sl]
        nodes = np.concatenate([np.column_stack([np.full(len(rest), a), rest]) for a in first])
        weights = np.concatenate([wa * wrest for wa in w1[sl]])
        yield nodes, weights
