"""
Total variation minimization (ROF model) with Chambolle's dual projection.

Per channel, minimizes  ||u - f||^2 / (2 * w) + TV(u)  with isotropic discrete TV,
forward differences and Neumann boundaries. The weight w is given on the 8-bit
scale and divided by 255 before use.
"""

import logging

import numpy as np
from pydantic import BaseModel, ConfigDict

from imagecore import ImageRGB, as_image

logger = logging.getLogger(__name__)

TAU = 0.125
DEFAULT_MAX_ITERS = 200
DEFAULT_TOL = 2e-4


class TvmResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    image: np.ndarray
    iterations: list[int]
    converged: list[bool]
    energy: list[float]
    residuals: list[list[float]]

    @property
    def all_converged(self) -> bool:
        return all(self.converged)


def grad(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences; zero on the last row/column."""
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[:, :-1] = u[:, 1:] - u[:, :-1]
    gy[:-1, :] = u[1:, :] - u[:-1, :]
    return gx, gy


def div(px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Negative adjoint of grad."""
    d = np.zeros_like(px)
    d[:, 0] += px[:, 0]
    d[:, 1:-1] += px[:, 1:-1] - px[:, :-2]
    d[:, -1] -= px[:, -2] if px.shape[1] > 1 else 0.0
    d[0, :] += py[0, :]
    d[1:-1, :] += py[1:-1, :] - py[:-2, :]
    d[-1, :] -= py[-2, :] if py.shape[0] > 1 else 0.0
    return d


def total_variation(u: np.ndarray) -> float:
    gx, gy = grad(u)
    return float(np.sqrt(gx * gx + gy * gy).sum())


def rof_energy(u: np.ndarray, f: np.ndarray, weight: float) -> float:
    diff = u - f
    return float((diff * diff).sum() / (2.0 * weight) + total_variation(u))


def _chambolle_channel(f: np.ndarray, weight: float, max_iters: int, tol: float):
    px = np.zeros_like(f)
    py = np.zeros_like(f)

    best = f.copy()
    best_energy = total_variation(f)
    residuals = [float((f * f).sum())]
    converged = False
    iterations = 0

    for iterations in range(1, max_iters + 1):
        gx, gy = grad(div(px, py) - f / weight)
        norm = np.sqrt(gx * gx + gy * gy)
        px = (px + TAU * gx) / (1.0 + TAU * norm)
        py = (py + TAU * gy) / (1.0 + TAU * norm)

        u = f - weight * div(px, py)
        residual = float((u * u).sum())
        energy = rof_energy(u, f, weight)
        if energy < best_energy:
            best = u
            best_energy = energy

        previous = residuals[-1]
        residuals.append(residual)
        if abs(previous - residual) <= tol * max(previous, 1e-12):
            converged = True
            break

    return best, iterations, converged, best_energy, residuals


def tvm_denoise_with_info(img: ImageRGB, weight: float = 10.0,
                          max_iters: int = DEFAULT_MAX_ITERS, tol: float = DEFAULT_TOL) -> TvmResult:
    if weight <= 0:
        raise ValueError(f"TVM weight must be > 0, got {weight}")
    if max_iters < 1:
        raise ValueError(f"max_iters must be >= 1, got {max_iters}")
    if tol < 0:
        raise ValueError(f"tol must be >= 0, got {tol}")

    img = as_image(img)
    weight_eff = weight / 255.0

    out = np.empty_like(img)
    iterations, converged, energies, residuals = [], [], [], []
    for c in range(3):
        u, n, ok, energy, history = _chambolle_channel(img[:, :, c], weight_eff, max_iters, tol)
        out[:, :, c] = u
        iterations.append(n)
        converged.append(ok)
        energies.append(energy)
        residuals.append(history)

    return TvmResult(
        image=np.clip(out, 0.0, 1.0),
        iterations=iterations,
        converged=converged,
        energy=energies,
        residuals=residuals,
    )


def tvm_denoise(img: ImageRGB, weight: float = 10.0,
                max_iters: int = DEFAULT_MAX_ITERS, tol: float = DEFAULT_TOL) -> ImageRGB:
    result = tvm_denoise_with_info(img, weight, max_iters, tol)
    if not result.all_converged:
        logger.warning("TVM (weight=%g) stopped at max_iters=%d before reaching tol=%g; returning best iterate",
                       weight, max_iters, tol)
    return result.image
