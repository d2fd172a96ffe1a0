import numpy as np
import pytest

from flowseg import bench


def test_synthetic_points_on_lattice():
    pts = bench.synthetic_points(50)
    assert len(pts) == 50
    assert np.all(pts.xs % 3 == 1) and np.all(pts.ys % 3 == 1)


def test_slope_fit_exact():
    ns = [100, 200, 400]
    assert bench.loglog_slope(ns, [n**2 * 1e-6 for n in ns]) == pytest.approx(2.0)
    assert bench.loglog_slope(ns, [n * 1e-4 for n in ns]) == pytest.approx(1.0)


def test_run_shape():
    t = bench.run([50, 100], repetitions=1)
    assert [(x.stage, x.n) for x in t] == [("cfsfdp", 50), ("gbis", 50), ("cfsfdp", 100), ("gbis", 100)]
    with pytest.raises(ValueError):
        bench.run([50], 1)
