"""Reference models used by the examples and the acceptance suite."""

from __future__ import annotations

import numpy as np

from .density import Component, DensityModel


def arc_mixture(
    sigma_normal: float = 0.3,
    sigma_tangent: float = 0.2,
    tilt: float = 0.8,
    k: int = 7,
    half_angle: float = np.pi / 3,
    box=((0.2, 1.25), (-0.9, 0.5)),
) -> DensityModel:
    """Gaussian components on the unit arc |theta| <= half_angle.

    Component j has weight proportional to exp(tilt * j), so the density
    increases along the arc. The default box stops short of the mode near
    the heaviest component and of a second, weakly curved ridge branch
    outside radius 1.4, leaving a single curved ridge near the unit circle
    without critical points.
    """
    theta = np.linspace(-half_angle, half_angle, k)
    w = np.exp(tilt * np.arange(k))
    w /= w.sum()
    comps = []
    for wi, t in zip(w, theta):
        tangent = np.array([-np.sin(t), np.cos(t)])
        normal = np.array([np.cos(t), np.sin(t)])
        cov = sigma_tangent**2 * np.outer(tangent, tangent) + sigma_normal**2 * np.outer(normal, normal)
        comps.append(Component(float(wi), normal, cov))
    return DensityModel(tuple(comps), np.asarray(box, float))


def anisotropic_gaussian(box=((-3.0, 3.0), (-3.0, 3.0))) -> DensityModel:
    """N(0, diag(4, 1)).

    Its 1-ridge is the x1-axis plus, wherever |x2| > sqrt(3)/2, the x2-axis:
    past that point the x2-curvature exceeds the x1-curvature, e1 becomes
    the normal direction and d f / d x1 = 0 holds on x1 = 0.
    """
    return DensityModel((Component(1.0, np.zeros(2), np.diag([4.0, 1.0])),), np.asarray(box, float))
