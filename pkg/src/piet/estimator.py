"""scikit-learn style wrapper around the overlay build."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .engine import parse_sublevel
from .errors import InvalidGeometryError
from .geom import BBox
from .layer import Layer
from .subdivision import DEFAULT_MAX_LINES, CellKind, GridSpec, build_overlay

FEATURES = ("nodes", "lines", "polygons", "length", "area")


def _check_layers(X) -> list[Layer]:
    if isinstance(X, Layer):
        X = [X]
    layers = list(X)
    if not layers:
        raise InvalidGeometryError("need at least one layer")
    for l in layers:
        if not isinstance(l, Layer):
            raise TypeError(f"expected Layer objects, got {type(l).__name__}")
    return layers


class PietOverlay(TransformerMixin, BaseEstimator):
    """Build the common sub-polygonization of a list of layers.

    ``fit`` computes the overlay. ``transform`` turns ``(layer, gid)``
    pairs, or every geometry of the given layers, into one row per
    geometry: node, line and polygon cell counts, then the length of a
    polyline and the area of a polygon summed over its cells.
    """

    def __init__(self, grid: str = "1x1", box: tuple | None = None, max_lines: int = DEFAULT_MAX_LINES, n_jobs: int = 1):
        self.grid = grid
        self.box = box
        self.max_lines = max_lines
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        layers = _check_layers(X)
        grid = self.grid if isinstance(self.grid, GridSpec) else GridSpec.parse(str(self.grid))
        box = None if self.box is None else (self.box if isinstance(self.box, BBox) else BBox(*self.box))
        self.overlay_ = build_overlay(layers, box=box, grid=grid, max_lines=self.max_lines, n_jobs=self.n_jobs)
        self.layer_names_ = tuple(l.name for l in layers)
        self.n_cells_ = len(self.overlay_.cells)
        return self

    def _keys(self, X) -> list[tuple[str, int]]:
        if X is None:
            X = [self.overlay_.layers[n] for n in self.layer_names_]
        if isinstance(X, Layer):
            X = [X]
        keys = []
        for item in X:
            if isinstance(item, Layer):
                keys.extend((item.name, g) for g in sorted(item.geometries))
            else:
                name, gid = item
                keys.append((str(name), int(gid)))
        return keys

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "overlay_")
        ov = self.overlay_
        rows = []
        for name, gid in self._keys(X):
            if name not in ov.layers or gid not in ov.layers[name]:
                raise KeyError(f"geometry {name}.{gid} is not part of the fitted overlay")
            kind = ov.layers[name][gid].kind
            cells = {k: ov.cells_of(name, gid, k) for k in CellKind}
            rows.append(
                (
                    len(cells[CellKind.NODE]),
                    len(cells[CellKind.LINE]),
                    len(cells[CellKind.POLYGON]),
                    sum(ov.cells[c].length for c in cells[CellKind.LINE]) if kind == "polyline" else 0.0,
                    sum(ov.cells[c].area for c in cells[CellKind.POLYGON]) if kind == "polygon" else 0.0,
                )
            )
        return np.asarray(rows, dtype=float).reshape(-1, len(FEATURES))

    def get_feature_names_out(self, input_features: Sequence[str] | None = None) -> np.ndarray:
        return np.asarray(FEATURES, dtype=object)

    def cells_of(self, layer: str, gid: int, kind: str | CellKind | None = None) -> frozenset[int]:
        check_is_fitted(self, "overlay_")
        k = parse_sublevel(kind) if kind is not None else None
        return self.overlay_.cells_of(layer, gid, k)


def fit_overlay(layers: Iterable[Layer], **params) -> PietOverlay:
    return PietOverlay(**params).fit(list(layers))
