import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gnssjam.uncert import (
    EmptyEnsemble,
    EnsembleBatch,
    EnsemblePrediction,
    conditioned_maps,
    decompose,
    decompose_probs,
    write_uncertainty_csv,
)
from oracles import kwon_loop


def dirichlet_ensemble(rng, m, c):
    return rng.dirichlet(np.full(c, rng.uniform(0.2, 3.0)), size=m)


def test_two_member_example():
    r = decompose(EnsemblePrediction([[1.0, 0.0], [0.0, 1.0]], [0, 1]))
    assert np.array_equal(r.aleatoric, np.zeros((2, 2)))
    assert np.allclose(r.epistemic, [[0.25, -0.25], [-0.25, 0.25]], atol=0, rtol=0)


def test_identical_members_example():
    r = decompose(EnsemblePrediction([[0.5, 0.5]] * 3, [0, 1, 2]))
    assert np.array_equal(r.epistemic, np.zeros((2, 2)))
    assert np.allclose(r.aleatoric, [[0.25, -0.25], [-0.25, 0.25]], atol=1e-15)


@given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 16), c=st.integers(2, 10))
def test_decomposition_matches_loop_oracle(seed, m, c):
    p = dirichlet_ensemble(np.random.default_rng(seed), m, c)
    r = decompose(EnsemblePrediction(p, list(range(m))))
    ale, epi = kwon_loop(p)
    assert np.allclose(r.aleatoric, ale, atol=1e-14)
    assert np.allclose(r.epistemic, epi, atol=1e-14)
    pbar = p.mean(axis=0)
    assert np.max(np.abs(r.total - (np.diag(pbar) - np.outer(pbar, pbar)))) <= 1e-12
    for mat in (r.aleatoric, r.epistemic):
        assert np.allclose(mat, mat.T, atol=1e-15)
        assert np.all(np.diag(mat) >= -1e-15) and np.all(np.diag(mat) <= 0.25 + 1e-15)
    if m == 1:
        assert np.all(r.epistemic == 0)


@given(seed=st.integers(0, 2**32 - 1), m=st.integers(2, 8), c=st.integers(2, 6))
def test_epistemic_zero_iff_identical_rows(seed, m, c):
    rng = np.random.default_rng(seed)
    row = rng.dirichlet(np.ones(c))
    same = decompose(EnsemblePrediction(np.tile(row, (m, 1)), list(range(m))))
    assert np.max(np.abs(same.epistemic)) <= 1e-12
    p = dirichlet_ensemble(rng, m, c)
    if np.max(np.abs(p - p[0])) > 1e-6:
        assert np.max(np.abs(decompose(EnsemblePrediction(p, list(range(m)))).epistemic)) > 1e-12


@given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 8), c=st.integers(2, 7))
def test_class_permutation_equivariance(seed, m, c):
    rng = np.random.default_rng(seed)
    p = dirichlet_ensemble(rng, m, c)
    perm = rng.permutation(c)
    a = decompose_probs(p)
    b = decompose_probs(p[:, perm])
    assert np.allclose(b.aleatoric, a.aleatoric[np.ix_(perm, perm)], atol=1e-15)
    assert np.allclose(b.epistemic, a.epistemic[np.ix_(perm, perm)], atol=1e-15)


def test_batched_equals_per_sample():
    rng = np.random.default_rng(1)
    probs = np.stack([dirichlet_ensemble(rng, 5, 4) for _ in range(20)])
    batch = decompose_probs(probs)
    for i in range(20):
        one = decompose_probs(probs[i])
        assert np.allclose(batch.aleatoric[i], one.aleatoric, atol=1e-15)
        assert np.allclose(batch.epistemic[i], one.epistemic, atol=1e-15)


def test_prediction_examples():
    ens = EnsemblePrediction([[0.6, 0.4], [0.2, 0.8]], [0, 1])
    assert np.allclose(ens.mean_probs, [0.4, 0.6])
    assert ens.prediction == 1
    swapped = EnsemblePrediction([[0.2, 0.8], [0.6, 0.4]], [1, 0])
    assert np.array_equal(swapped.mean_probs, ens.mean_probs) and swapped.prediction == 1
    assert EnsemblePrediction([[0.5, 0.5]], [0]).prediction == 0  # tie -> lowest index
    single = EnsemblePrediction([[0.1, 0.7, 0.2]], [3])
    assert single.prediction == 1


def test_invalid_ensembles():
    with pytest.raises(EmptyEnsemble):
        EnsemblePrediction(np.zeros((0, 3)), [])
    with pytest.raises(ValueError):
        EnsemblePrediction([[0.5, 0.6]], [0])
    with pytest.raises(EmptyEnsemble):
        decompose_probs(np.zeros((0, 3)))


def test_conditioned_maps_and_csv(tmp_path):
    rng = np.random.default_rng(2)
    probs = np.stack([dirichlet_ensemble(rng, 3, 3) for _ in range(30)])
    batch = EnsembleBatch(probs, [0, 1, 2])
    truth = rng.integers(0, 3, 30)
    report = batch.report()
    maps = conditioned_maps(truth, batch.predictions, report, 3)
    assert set(maps) == {"aleatoric_trace", "epistemic_trace", "aleatoric_diag", "epistemic_diag"}
    ale_trace = np.trace(report.aleatoric, axis1=1, axis2=2)
    for t in range(3):
        for p in range(3):
            sel = (truth == t) & (batch.predictions == p)
            if sel.any():
                assert maps["aleatoric_trace"][t, p] == pytest.approx(ale_trace[sel].mean())
            else:
                assert np.isnan(maps["aleatoric_trace"][t, p])
    path = tmp_path / "u.csv"
    write_uncertainty_csv(path, truth, batch.predictions, report)
    lines = path.read_text().splitlines()
    assert lines[0].split(",")[:3] == ["sample", "true", "pred"] and len(lines) == 31
    row = lines[1].split(",")
    assert float(row[3]) == report.per_class_aleatoric[0, 0]
