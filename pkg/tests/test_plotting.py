import matplotlib.pyplot as plt
import numpy as np
import pytest

from fsq.plotting import degree_histogram, landscape_slices
from fsq.volume import FuzzyVolume

PNG = b"\x89PNG\r\n\x1a\n"


def test_degree_histogram(tmp_path):
    out = degree_histogram([0.0, 0.2, 0.55, 0.9, 1.0], 0.5, tmp_path / "h.png")
    assert out.read_bytes()[:8] == PNG
    assert plt.get_fignums() == []


def test_degree_histogram_empty(tmp_path):
    assert degree_histogram([], 0.5, tmp_path / "e.png").stat().st_size > 0


@pytest.mark.parametrize("index", [None, (0, 0, 0)])
def test_landscape_slices(tmp_path, index):
    vals = np.zeros((6, 7, 5))
    vals[2:4, 3:6, 1:3] = 0.8
    vol = FuzzyVolume(vals, spacing=(1.0, 0.5, 2.0))
    out = landscape_slices(vol, tmp_path / "s.png", index=index, title="near(A)")
    assert out.read_bytes()[:8] == PNG


def test_landscape_slices_all_zero(tmp_path):
    out = landscape_slices(FuzzyVolume(np.zeros((3, 3, 3))), tmp_path / "z.png")
    assert out.read_bytes()[:8] == PNG


def test_bad_extension_closes_figure(tmp_path):
    with pytest.raises(ValueError):
        degree_histogram([0.5], 0.5, tmp_path / "x.notaformat")
    assert plt.get_fignums() == []
