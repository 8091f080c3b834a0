import numpy as np
import pytest

from hybridkp import kernels
from hybridkp._accel import HAS_NUMBA

SVDS = [kernels.svd3_numpy, kernels.svd3_loops]
MAXIMA = [kernels.local_maxima_numpy, kernels.local_maxima_loops]
RENDER = [kernels.render_star_numpy, kernels.render_star_loops]
GEODESIC = [kernels.geodesic_angles_numpy, kernels.geodesic_angles_loops]


def test_dispatch_matches_backend():
    expected = "loops" if HAS_NUMBA else "numpy"
    assert kernels.svd3.__name__.endswith(expected)
    assert kernels.local_maxima.__name__.endswith(expected)


def _test_matrices(rng):
    mats = [rng.normal(size=(3, 3)) for _ in range(300)]
    for _ in range(50):
        m = rng.normal(size=(3, 3))
        m[:, 2] = 0.3 * m[:, 0] - 2.0 * m[:, 1]  # rank 2
        mats.append(m)
    for _ in range(20):
        mats.append(np.outer(rng.normal(size=3), rng.normal(size=3)))  # rank 1
    mats += [np.zeros((3, 3)), np.eye(3), np.diag([3.0, 3.0, 1.0]), -np.eye(3)]
    return mats


@pytest.mark.parametrize("svd", SVDS)
def test_svd3_reconstructs_and_matches_lapack(svd, rng):
    for m in _test_matrices(rng):
        u, s, vt = svd(m)
        np.testing.assert_allclose(u @ np.diag(s) @ vt, m, atol=1e-13)
        np.testing.assert_allclose(u.T @ u, np.eye(3), atol=1e-13)
        np.testing.assert_allclose(vt @ vt.T, np.eye(3), atol=1e-13)
        np.testing.assert_allclose(s, np.linalg.svd(m, compute_uv=False), atol=1e-13)
        assert np.all(np.diff(s) <= 0)


@pytest.mark.parametrize("find", MAXIMA)
def test_local_maxima_flavours_agree(find, rng):
    for _ in range(50):
        grid = np.round(rng.random((17, 23)), 1)  # coarse values -> many plateaus
        np.testing.assert_array_equal(find(grid, 0.05), kernels.local_maxima_numpy(grid, 0.05))
        np.testing.assert_array_equal(find(grid, 0.05), kernels.local_maxima_loops(grid, 0.05))


@pytest.mark.parametrize("render", RENDER)
def test_render_star_flavours_agree(render, rng):
    rows = rng.integers(0, 30, 6)
    cols = rng.integers(0, 40, 6)
    ref = kernels.render_star_numpy(rows, cols, 30, 40, 1.3)
    np.testing.assert_allclose(render(rows, cols, 30, 40, 1.3), ref, rtol=1e-14, atol=1e-300)


def test_render_star_empty():
    empty = np.zeros(0, dtype=np.int64)
    for render in RENDER:
        assert not render(empty, empty, 4, 5, 1.0).any()


@pytest.mark.parametrize("geo", GEODESIC)
def test_geodesic_flavours_agree(geo, rng):
    from conftest import random_rotations

    a = random_rotations(rng, 200)
    b = random_rotations(rng, 200)
    np.testing.assert_allclose(geo(a, b), kernels.geodesic_angles_numpy(a, b), atol=1e-14)


@pytest.mark.parametrize("render", RENDER)
def test_render_window_is_bit_exact(render, rng):
    # untruncated Gaussian over the whole grid
    for sigma in (0.4, 1.0, 2.7):
        rows = rng.integers(0, 140, 5)
        cols = rng.integers(0, 150, 5)
        rr, cc = np.mgrid[0:140, 0:150].astype(float)
        ref = np.zeros((140, 150))
        for r0, c0 in zip(rows, cols):
            ref = np.maximum(ref, np.exp(-((rr - r0) ** 2 + (cc - c0) ** 2) * (1.0 / (2.0 * sigma * sigma))))
        got = render(rows, cols, 140, 150, sigma)
        assert np.array_equal(got > 0, ref > 0)
        if render is kernels.render_star_numpy:
            assert np.array_equal(got, ref)
        else:  # compiled exp may differ from numpy's in the last bit
            np.testing.assert_allclose(got, ref, rtol=1e-14, atol=0)


def test_benchmark_script_runs(capsys):
    import importlib.util
    from pathlib import Path

    path = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    spec = importlib.util.spec_from_file_location("bench_kernels", path)
    bench = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(bench)
    bench.main(["--repeat", "1"])
    out = capsys.readouterr().out
    assert "svd3" in out and "geodesic" in out


@pytest.mark.parametrize("svd", SVDS)
def test_svd3_extreme_scales(svd, rng):
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("error")
        for scale in (1e-150, 1e-30, 1e30, 1e150):
            m = rng.normal(size=(3, 3)) * scale
            u, s, vt = svd(m)
            np.testing.assert_allclose(u @ np.diag(s) @ vt, m, rtol=0, atol=1e-13 * np.abs(m).max())
        # columns that are almost orthogonal already
        m = np.diag([3.0, 2.0, 1.0])
        m[0, 1] = 1e-300
        u, s, vt = svd(m)
        np.testing.assert_allclose(s, [3, 2, 1], rtol=1e-15)
