"""SPARKLING MRI: Plots"""
from __future__ import annotations

import logging
import os
from pathlib import Path
import tempfile
from typing import Optional, Union

import matplotlib

matplotlib.use("Agg")

from matplotlib import pyplot as plt  # pylint: disable=wrong-import-position
from matplotlib.figure import Figure  # pylint: disable=wrong-import-position
import numpy as np  # pylint: disable=wrong-import-position

from ..exceptions import FormatException
from .tensor import read_tensor

HIGHLIGHT_COLOR = "red"
SHOT_COLOR = "0.35"
DPI = 150

logger = logging.getLogger(__name__)


def _save(figure: Figure, output: Union[str, Path]) -> None:
    """Render to a temporary file next to `output`, then rename"""
    output = Path(output)
    suffix = output.suffix or ".png"
    handle, temp_path = tempfile.mkstemp(
        dir=output.parent if str(output.parent) else ".",
        prefix=f".{output.name}.",
        suffix=suffix,
    )
    os.close(handle)
    try:
        figure.savefig(temp_path, dpi=DPI, bbox_inches="tight")
        os.replace(temp_path, output)
    except BaseException:
        if os.path.exists(temp_path):
            os.remove(temp_path)
        raise
    finally:
        plt.close(figure)
    logger.info("Wrote plot %s", output)


def _heatmap(
    values: np.ndarray,
    title: str,
    cmap: str = "gray",
    extent: Optional[tuple[float, float, float, float]] = None,
) -> Figure:
    figure, axes = plt.subplots(figsize=(5, 5))
    # Rows of the stored grids are x, so transpose for an image with x horizontal
    image = axes.imshow(
        values.T,
        origin="lower",
        extent=extent,
        cmap=cmap,
    )
    figure.colorbar(image, ax=axes, fraction=0.046)
    axes.set_title(title)
    return figure


def plot_density(source: Union[str, Path], output: Union[str, Path]) -> None:
    """Heatmap of a density grid on a log scale"""
    values = read_tensor(source).data
    if values.ndim != 2 or np.iscomplexobj(values):
        raise FormatException(f"Expected a real [n][n] density, got {values.shape}")
    floor = max(float(np.max(values)) * 1e-12, np.finfo(float).tiny)
    figure = _heatmap(
        np.log10(np.maximum(values, floor)),
        "Target density (log10)",
        cmap="viridis",
        extent=(-1, 1, -1, 1),
    )
    _save(figure, output)


def plot_trajectory(source: Union[str, Path], output: Union[str, Path]) -> None:
    """Every shot as a polyline with the first one highlighted"""
    points = read_tensor(source).data
    if points.ndim != 3 or points.shape[-1] != 2 or np.iscomplexobj(points):
        raise FormatException(f"Expected a real [Nc][Ns][2] trajectory, got {points.shape}")
    figure, axes = plt.subplots(figsize=(5, 5))
    for shot in range(1, points.shape[0]):
        axes.plot(points[shot, :, 0], points[shot, :, 1], color=SHOT_COLOR, linewidth=0.4)
    axes.plot(points[0, :, 0], points[0, :, 1], color=HIGHLIGHT_COLOR, linewidth=1.0)
    axes.set_xlim(-1, 1)
    axes.set_ylim(-1, 1)
    axes.set_aspect("equal")
    axes.set_xlabel("kx")
    axes.set_ylabel("ky")
    axes.set_title(f"{points.shape[0]} shots x {points.shape[1]} samples")
    _save(figure, output)


def plot_image(source: Union[str, Path], output: Union[str, Path]) -> None:
    """Magnitude image, coil images are combined by root-sum-of-squares"""
    data = read_tensor(source).data
    if data.ndim == 3:
        data = np.sqrt(np.sum(np.abs(data) ** 2, axis=0))
    if data.ndim != 2:
        raise FormatException(f"Expected an [n][n] or [L][n][n] image, got {data.shape}")
    _save(_heatmap(np.abs(data), "Magnitude"), output)
