import numpy as np
import pytest

from spl_uda.dataio import SOURCE, TARGET, FeatureSample
from spl_uda.report import (DegenerateProjectionError, ExperimentReport, ExperimentRow, pca_axes,
                            pca_project, projection_csv)
from spl_uda.tensor_core import RngStream


def samples_from(X):
    return [FeatureSample(i, np.asarray(x, dtype=float), SOURCE, 0) for i, x in enumerate(X)]


def test_axis_aligned_2d_projection_is_centred_data():
    rng = RngStream(0)
    X = np.column_stack([rng.normal(50) * 5.0, rng.normal(50) * 1.0]) + [3.0, -1.0]
    rows = pca_project(samples_from(X))
    coords = np.array([[r[4], r[5]] for r in rows])
    centred = X - X.mean(0)
    # first axis follows the wide x direction; signs are fixed by the convention
    mean, axes, _ = pca_axes(X)
    np.testing.assert_allclose(np.abs(axes), np.eye(2), atol=0.1)
    np.testing.assert_allclose(coords, centred @ axes, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(coords, axis=1), np.linalg.norm(centred, axis=1), rtol=1e-12)


def test_exactly_aligned_data():
    X = np.array([[-2.0, 0.0], [2.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    coords = np.array([r[4:] for r in pca_project(samples_from(X))])
    np.testing.assert_allclose(coords, X, atol=1e-12)


def test_antipodal_points():
    X = np.array([[1.0, 2.0, 3.0], [3.0, 4.0, 5.0], [1.0, 2.0, 3.0], [3.0, 4.0, 5.0]])
    coords = np.array([r[4:] for r in pca_project(samples_from(X))])
    half = np.linalg.norm(X[1] - X.mean(0))
    np.testing.assert_allclose(np.abs(coords[:, 0]), half, rtol=1e-12)
    np.testing.assert_allclose(coords[:, 1], 0.0, atol=1e-12)
    assert coords[0, 0] == -coords[1, 0]


def test_reconstruction_error_equals_discarded_eigenvalues():
    X = RngStream(2).normal((200, 5)) * [3.0, 2.0, 1.0, 0.5, 0.2]
    mean, axes, evals = pca_axes(X)
    Xc = X - mean
    recon = (Xc @ axes) @ axes.T
    err = np.mean(np.sum((Xc - recon) ** 2, axis=1))
    # independent oracle: singular values of the centred matrix
    sv = np.linalg.svd(Xc, compute_uv=False)
    assert err == pytest.approx(np.sum(sv[2:] ** 2) / len(X), rel=1e-10)
    assert err == pytest.approx(evals[2:].sum(), rel=1e-10)


def test_sign_convention():
    _, axes, _ = pca_axes(RngStream(3).normal((30, 4)))
    for j in range(2):
        assert axes[np.argmax(np.abs(axes[:, j])), j] > 0


@pytest.mark.parametrize("X", [np.ones((5, 3)), np.zeros((2, 3)), np.zeros((4, 1))])
def test_degenerate_projection(X):
    with pytest.raises(DegenerateProjectionError):
        pca_axes(X)


def test_projection_csv_columns():
    samples = [FeatureSample(0, np.array([0.0, 1.0]), SOURCE, 1),
               FeatureSample(1, np.array([1.0, 0.0]), TARGET, None),
               FeatureSample(2, np.array([2.0, 2.0]), TARGET, 0, synthetic=True, origin=SOURCE)]
    lines = projection_csv(pca_project(samples)).splitlines()
    assert lines[0] == "id,domain,label,synthetic,pc1,pc2"
    assert lines[2].startswith("1,T,-,0,") and lines[3].startswith("2,T,0,1,")


def make_report():
    rep = ExperimentReport()
    for task in ("A", "B"):
        for method, base in (("naive_spl", 0.8), ("baseline", 0.6)):
            for seed in range(3):
                rep.add(ExperimentRow(task, method, seed, 10, 0.5, base + 0.01 * seed))
    return rep


def test_aggregates_are_arithmetic_means():
    agg = make_report().aggregates()
    init, final, n = agg[("A", "naive_spl", 10)]
    assert n == 3 and init == 0.5
    assert final == pytest.approx((0.80 + 0.81 + 0.82) / 3, abs=1e-15)
    assert make_report().mean_final("baseline") == pytest.approx(0.61)


def test_csv_has_seed_rows_then_means():
    lines = make_report().to_csv().splitlines()
    assert lines[0] == "task,method,seed,T,initial_accuracy,final_accuracy"
    assert len(lines) == 1 + 12 + 4
    assert lines[-1].startswith("B,baseline,mean,10,")


def test_markdown_layout_keeps_method_order():
    md = make_report().to_markdown().splitlines()
    assert md[0] == "| Method | A | B | Average |"
    assert md[2] == "| naive_spl | 81.0 | 81.0 | 81.0 |"
    assert md[3].startswith("| baseline |")


def test_markdown_labels_rows_by_T_when_several():
    rep = ExperimentReport([ExperimentRow("A", "naive_spl", 0, 10, 0.5, 0.9),
                            ExperimentRow("A", "naive_spl", 0, 20, 0.5, 0.8)])
    md = rep.to_markdown()
    assert "naive_spl (T=10)" in md and "naive_spl (T=20)" in md


def test_pca_beats_random_rank2_projections():
    # total squared pairwise distance kept by a projection P is n * sum ||(x_i - mean) P||^2
    X = RngStream(5).normal((40, 6)) * [4.0, 2.0, 1.5, 1.0, 0.5, 0.1]
    mean, axes, _ = pca_axes(X)
    Xc = X - mean
    kept = np.sum((Xc @ axes) ** 2)
    rng = RngStream(6)
    for _ in range(200):
        q, _ = np.linalg.qr(rng.normal((6, 2)))
        assert np.sum((Xc @ q) ** 2) <= kept + 1e-9
    i, j = np.triu_indices(len(X), 1)
    proj = Xc @ axes
    pair_kept = np.sum((proj[i] - proj[j]) ** 2)
    assert pair_kept == pytest.approx(len(X) * kept, rel=1e-10)
