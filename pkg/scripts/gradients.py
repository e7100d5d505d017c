"""
First-order gradient magnitude of an image plane and its min-max normalization.

Stencil: central differences (v[i+1] - v[i-1]) / 2 at interior pixels,
one-sided full steps v[1] - v[0] and v[n-1] - v[n-2] on the two border lines.
An axis of length 1 has zero derivative.
"""

import numpy as np

from imagecore import ImagePlane, as_plane, save_plane

GradMap = np.ndarray


def central_difference(plane: ImagePlane, axis: int) -> np.ndarray:
    """Derivative along one axis with the pinned border stencil."""
    plane = np.asarray(plane, dtype=np.float64)
    n = plane.shape[axis]
    out = np.zeros_like(plane)
    if n < 2:
        return out

    def take(start, stop):
        index = [slice(None)] * plane.ndim
        index[axis] = slice(start, stop)
        return tuple(index)

    if n > 2:
        out[take(1, n - 1)] = (plane[take(2, n)] - plane[take(0, n - 2)]) / 2.0
    out[take(0, 1)] = plane[take(1, 2)] - plane[take(0, 1)]
    out[take(n - 1, n)] = plane[take(n - 1, n)] - plane[take(n - 2, n - 1)]
    return out


def grad_magnitude(plane: ImagePlane) -> GradMap:
    """sqrt(da^2 + db^2) per pixel; same shape as the input."""
    plane = as_plane(plane)
    da = central_difference(plane, axis=1)
    db = central_difference(plane, axis=0)
    return np.sqrt(da * da + db * db)


def normalize(g: GradMap) -> GradMap:
    """(g - min) / (max - min) over the whole map; all zeros when max == min."""
    g = np.asarray(g, dtype=np.float64)
    g_min = g.min()
    g_max = g.max()
    if g_max == g_min:
        return np.zeros_like(g)
    return (g - g_min) / (g_max - g_min)


def export_gradmap(g: GradMap, path) -> None:
    save_plane(normalize(g), path)
