import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracle
from fi2i.fisher import (
    FisherModality,
    FisherModel,
    SampleSet,
    fc_score,
    fc_scores,
    fd_scores,
    fisher_distance,
    fisher_kernel,
    fisher_score_single,
    fisher_vector,
    fit_modality,
    select_samples,
)
from fi2i.similarity import SimilarityKind

from conftest import MatrixDistance, random_distances


def test_select_samples_by_frequency():
    assert select_samples([5, 9, 1, 7], 2).items.tolist() == [1, 3]
    # ties go to the lower index
    assert select_samples([3, 3, 3], 2).items.tolist() == [0, 1]


@pytest.mark.parametrize("n", [0, 5])
def test_select_samples_bounds(n):
    with pytest.raises(ValueError):
        select_samples([1, 2, 3], n)


def test_sample_set_validation():
    with pytest.raises(ValueError):
        SampleSet([1, 1])
    with pytest.raises(ValueError):
        SampleSet([])


def test_fit_mean_and_std_example():
    # distances to the single sample: 0.2, 0.4, 0.3 (sample itself is item 3)
    d = np.array(
        [
            [0.0, 0.5, 0.5, 0.2],
            [0.5, 0.0, 0.5, 0.4],
            [0.5, 0.5, 0.0, 0.3],
            [0.2, 0.4, 0.3, 0.0],
        ]
    )
    m = fit_modality(MatrixDistance(d), SampleSet([3]))
    assert m.mean[0] == pytest.approx(0.225)
    assert m.std[0] == pytest.approx(np.std([0.2, 0.4, 0.3, 0.0]))
    fit = fit_modality(MatrixDistance(d), SampleSet([3]), population=[0, 1, 2])
    assert fit.mean[0] == pytest.approx(0.3)
    assert fit.std[0] == pytest.approx(np.sqrt(2 / 300))


def test_constant_distance_floors_std(caplog):
    d = np.ones((4, 4))
    np.fill_diagonal(d, 0)
    with caplog.at_level(logging.WARNING, logger="fi2i.fisher"):
        m = fit_modality(MatrixDistance(d), SampleSet([0]), population=[1, 2, 3])
    assert m.std[0] == 1e-6
    assert "floored" in caplog.text


def test_pair_mean_exact_and_sampled(rng):
    d = random_distances(rng, 30)
    exact = fit_modality(MatrixDistance(d), SampleSet([0]))
    assert exact.pair_mean == pytest.approx(d.sum() / (30 * 29))
    a = fit_modality(MatrixDistance(d), SampleSet([0]), pair_samples=500, seed=4)
    b = fit_modality(MatrixDistance(d), SampleSet([0]), pair_samples=500, seed=4)
    assert a.pair_mean == b.pair_mean
    assert a.pair_mean == pytest.approx(exact.pair_mean, abs=0.03)


def test_score_and_vector_examples():
    m = FisherModality(SimilarityKind.JACCARD, SampleSet([0, 1]), [0.5, 0.6], [0.1, 0.2], 0.4)
    d = np.array([[0.0, 0.3, 0.9], [0.3, 0.0, 0.8], [0.9, 0.8, 0.0]])
    m.bind(MatrixDistance(d))
    assert fisher_score_single(2, m) == pytest.approx([-0.4, -0.2])
    assert fisher_vector(2, m) == pytest.approx([-4.0, -1.0])
    assert fisher_kernel(2, 2, m) == pytest.approx(17.0)


def test_bind_rejects_other_kind():
    m = FisherModality(SimilarityKind.JACCARD, SampleSet([0]), [0.5], [0.1], 0.4)
    with pytest.raises(ValueError):
        m.bind(MatrixDistance(np.zeros((2, 2)), SimilarityKind.COSINE))
    with pytest.raises(RuntimeError):
        m.sample_distances()


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 25), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_vectors_standardised(m, n, seed):
    rng = np.random.default_rng(seed)
    fit = fit_modality(MatrixDistance(random_distances(rng, m)), SampleSet(rng.choice(m, n, replace=False)))
    v = fit.vectors()
    assert np.allclose(v.mean(axis=0), 0, atol=1e-9)
    assert np.allclose(v.var(axis=0), 1, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 15), st.integers(0, 2**32 - 1))
def test_kernel_symmetric_psd(m, seed):
    rng = np.random.default_rng(seed)
    fit = fit_modality(MatrixDistance(random_distances(rng, m)), SampleSet(rng.choice(m, min(m, 4), replace=False)))
    gram = np.array([[fisher_kernel(a, b, fit) for b in range(m)] for a in range(m)])
    assert np.allclose(gram, gram.T)
    assert np.linalg.eigvalsh(gram).min() >= -1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 12), st.integers(0, 2**32 - 1))
def test_fisher_distance_is_a_pseudometric(m, seed):
    rng = np.random.default_rng(seed)
    fit = fit_modality(MatrixDistance(random_distances(rng, m)), SampleSet(rng.choice(m, min(m, 3), replace=False)))
    fd = np.array([[fisher_distance(a, b, fit) for b in range(m)] for a in range(m)])
    assert np.allclose(np.diag(fd), 0, atol=1e-6)
    assert np.allclose(fd, fd.T)
    for a in range(m):
        assert np.all(fd[a][:, None] <= fd[a][None, :] + fd + 1e-9)
    # identical to the Euclidean distance of the vectors
    v = fit.vectors()
    assert np.allclose(fd, np.linalg.norm(v[:, None] - v[None], axis=2), atol=1e-6)


def test_fd_scores_match_scalar(rng):
    fit = fit_modality(MatrixDistance(random_distances(rng, 10)), SampleSet([0, 4]))
    cands = [1, 2, 3, 9]
    assert fd_scores(5, cands, fit) == pytest.approx([fisher_distance(5, c, fit) for c in cands])


def test_fc_example():
    # one sample s=0, mu=0.5, mu_pair=0.4, dist(j, s)=0.3, dist(i, j)=0.2
    d = np.array([[0.0, 0.9, 0.3], [0.9, 0.0, 0.2], [0.3, 0.2, 0.0]])
    m = FisherModality(SimilarityKind.JACCARD, SampleSet([0]), [0.5], [1.0], 0.4).bind(MatrixDistance(d))
    assert fc_score(2, 1, m) == pytest.approx(0.4)


def test_fc_rejects_self():
    m = FisherModality(SimilarityKind.JACCARD, SampleSet([0]), [0.5], [1.0], 0.4).bind(MatrixDistance(np.zeros((3, 3))))
    with pytest.raises(ValueError):
        fc_score(1, 1, m)
    with pytest.raises(ValueError):
        fc_scores(1, [0, 1], m)
    with pytest.raises(ValueError):
        fc_scores(1, [0], m, combine="max")


def test_fc_uses_directed_distance(rng):
    d = random_distances(rng, 8, symmetric=False)
    fit = fit_modality(MatrixDistance(d, SimilarityKind.ECP), SampleSet([0, 1]))
    i, j = 3, 6
    g = fit.mean + fit.pair_mean - (d[j, [0, 1]] + d[i, j])
    assert fc_score(j, i, fit) == pytest.approx(np.linalg.norm(g))


def _two_modalities(rng, m=9):
    a = fit_modality(MatrixDistance(random_distances(rng, m)), SampleSet([0, 1]), name="a")
    b = fit_modality(MatrixDistance(random_distances(rng, m), SimilarityKind.CONTENT), SampleSet([2]), name="b")
    return a, b


def test_multimodal_additivity(rng):
    a, b = _two_modalities(rng)
    model = FisherModel([a, b])
    for i, j in [(0, 1), (3, 7), (5, 5)]:
        assert fisher_kernel(i, j, model) == fisher_kernel(i, j, a) + fisher_kernel(i, j, b)
    cands = [1, 4, 8]
    assert np.array_equal(fc_scores(3, cands, model), fc_scores(3, cands, a) + fc_scores(3, cands, b))
    rss = fc_scores(3, cands, model, combine="rss")
    assert rss == pytest.approx(np.hypot(fc_scores(3, cands, a), fc_scores(3, cands, b)))


def test_model_names_and_subset(rng):
    a, b = _two_modalities(rng)
    model = FisherModel([a, b])
    assert model.names() == ["a", "b"]
    assert model.subset(["b"]).names() == ["b"]
    with pytest.raises(KeyError):
        model["c"]
    with pytest.raises(ValueError):
        FisherModel([a, a])


def test_save_load_round_trip(tmp_path, rng):
    a, b = _two_modalities(rng)
    model = FisherModel([a, b])
    model.save(tmp_path / "f")
    assert (tmp_path / "f").read_bytes().startswith(b"FI2I1 fisher\n")
    dists = {a.kind: a.distance, b.kind: b.distance}
    back = FisherModel.load(tmp_path / "f", resolve=dists.__getitem__)
    assert fisher_kernel(2, 6, back) == fisher_kernel(2, 6, model)
    assert np.array_equal(fc_scores(2, [0, 5], back), fc_scores(2, [0, 5], model))
    back.save(tmp_path / "g")
    assert (tmp_path / "f").read_bytes() == (tmp_path / "g").read_bytes()


def test_matches_brute_force_oracle(rng):
    for _ in range(20):
        m = int(rng.integers(3, 10))
        d = random_distances(rng, m, symmetric=bool(rng.integers(2)))
        samples = rng.choice(m, int(rng.integers(1, min(m, 4) + 1)), replace=False).tolist()
        fit = fit_modality(MatrixDistance(d), SampleSet(samples))
        dl = d.tolist()
        for i in range(m):
            assert fisher_vector(i, fit) == pytest.approx(oracle.fisher_vector(dl, samples, i), abs=1e-9)
            for j in range(m):
                assert fisher_distance(i, j, fit) == pytest.approx(oracle.fisher_distance(dl, samples, i, j), abs=1e-9)
                if i != j:
                    assert fc_score(j, i, fit) == pytest.approx(oracle.conditional_score(dl, samples, i, j), abs=1e-9)
