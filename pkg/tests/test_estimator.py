import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from oracles import rand_map

from piet.estimator import FEATURES, PietOverlay, fit_overlay
from piet.geom import Polygon, Polyline
from piet.layer import Layer
from piet.subdivision import CellKind


def _layers():
    land = Layer("land")
    land.add(Polygon(0, [(0, 0), (4, 0), (4, 4), (0, 4)]))
    river = Layer("river")
    river.add(Polyline(0, [(-1, 2), (5, 2)]))
    return [land, river]


def test_params_and_clone():
    est = PietOverlay(grid="2x3", box=(-2, -2, 6, 6))
    assert est.get_params() == {"grid": "2x3", "box": (-2, -2, 6, 6), "max_lines": est.max_lines, "n_jobs": 1}
    c = clone(est)
    assert c.get_params() == est.get_params() and not hasattr(c, "overlay_")
    est.set_params(grid="1x1")
    assert est.grid == "1x1"


def test_transform():
    est = PietOverlay(box=(-2, -2, 6, 6)).fit(_layers())
    X = est.transform(None)
    assert X.shape == (2, len(FEATURES))
    assert list(est.get_feature_names_out()) == list(FEATURES)
    land, river = X
    assert land[4] == pytest.approx(16.0) and land[3] == 0.0
    assert river[3] == pytest.approx(6.0) and river[4] == 0.0
    # the river splits the square in two
    assert land[2] == 2
    assert np.array_equal(est.transform([("river", 0)]), X[1:])
    assert est.cells_of("land", 0, "polygon") == est.overlay_.cells_of("land", 0, CellKind.POLYGON)
    assert est.cells_of("river", 0, "SubPLevel.LineString") == est.overlay_.cells_of("river", 0, CellKind.LINE)
    assert est.cells_of("land", 0) == est.overlay_.cells_of("land", 0)


def test_fit_transform_matches():
    layers = rand_map(4)
    est = PietOverlay(box=(-3, -3, 13, 13))
    a = est.fit_transform(layers)
    b = fit_overlay(layers, box=(-3, -3, 13, 13)).transform(layers)
    assert np.array_equal(a, b)
    assert a.shape[0] == sum(len(l) for l in layers)


def test_errors():
    with pytest.raises(NotFittedError):
        PietOverlay().transform(None)
    with pytest.raises(TypeError):
        PietOverlay().fit(["not a layer"])
    with pytest.raises(Exception):
        PietOverlay().fit([])
    est = PietOverlay(box=(-2, -2, 6, 6)).fit(_layers())
    with pytest.raises(KeyError):
        est.transform([("land", 9)])
