import numpy as np
import pytest

from cbcoreset import errors
from cbcoreset.bench import SyntheticSpec, generate_synthetic
from cbcoreset.scorer import (
    TrainConfig,
    ce_loss_and_grad,
    compute_aum,
    concept_similarity,
    score_dataset,
    softmax,
    train_bottleneck,
    zero_shot_pseudo_labels,
)
from cbcoreset.tensor_io import EmbeddingMatrix, LabelVector, write_scores


def em(rows, normalized=False):
    return EmbeddingMatrix(np.asarray(rows, dtype=np.float32), normalized=normalized)


# --- concept similarity ---

def test_similarity_orthonormal_identity():
    visual = em(np.eye(3)[:2], normalized=True)
    ec = em(np.eye(3), normalized=True)
    np.testing.assert_array_equal(
        concept_similarity(visual, ec), [[1, 0, 0], [0, 1, 0]]
    )


def test_similarity_matching_unit_rows_give_one():
    row = np.array([0.6, 0.8], dtype=np.float32)
    sim = concept_similarity(em([row], normalized=True), em([row], normalized=True))
    assert sim[0, 0] == pytest.approx(1.0, abs=1e-6)


def test_similarity_hand_computed_dot_products():
    # oracle: dot([1,2],[3,4]) = 11, dot([1,2],[-1,0]) = -1, by hand
    sim = concept_similarity(em([[1, 2]]), em([[3, 4], [-1, 0]]))
    np.testing.assert_array_equal(sim, [[11.0, -1.0]])


def test_similarity_dimension_mismatch():
    with pytest.raises(errors.DimensionMismatch):
        concept_similarity(em([[1, 2]]), em([[1, 2, 3]]))


# --- pseudo-labels ---

def test_pseudo_label_exact_prompt_match():
    prompts = em(np.eye(4)[:3], normalized=True)
    visual = em([np.eye(4)[2]], normalized=True)
    assert zero_shot_pseudo_labels(visual, prompts).labels.tolist() == [2]


def test_pseudo_label_scale_invariance():
    rng = np.random.default_rng(0)
    prompts = em(rng.standard_normal((4, 6)))
    base = rng.standard_normal((5, 6))
    l1 = zero_shot_pseudo_labels(em(base), prompts)
    l2 = zero_shot_pseudo_labels(em(base * 37.5), prompts)
    assert np.array_equal(l1.labels, l2.labels)


def test_pseudo_label_matches_bruteforce_argmax():
    rng = np.random.default_rng(42)
    visual = rng.standard_normal((5, 8)).astype(np.float32)
    prompts = rng.standard_normal((3, 8)).astype(np.float32)
    got = zero_shot_pseudo_labels(em(visual), em(prompts)).labels
    for i in range(5):
        best, best_dot = 0, -np.inf
        for j in range(3):
            dot = float(np.dot(visual[i].astype(np.float64), prompts[j].astype(np.float64)))
            if dot > best_dot:
                best, best_dot = j, dot
        assert got[i] == best


def test_pseudo_label_num_classes_comes_from_prompts():
    labels = zero_shot_pseudo_labels(em(np.eye(3)), em(np.eye(3)))
    assert labels.num_classes == 3


# --- gradient and loss ---

def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    sim = rng.standard_normal((12, 6))
    y = rng.integers(0, 3, size=12)
    W = rng.standard_normal((3, 6)) * 0.1
    _, grad = ce_loss_and_grad(W, sim, y, weight_decay=5e-4)
    eps = 1e-6
    for idx in np.ndindex(W.shape):
        Wp, Wm = W.copy(), W.copy()
        Wp[idx] += eps
        Wm[idx] -= eps
        lp, _ = ce_loss_and_grad(Wp, sim, y, weight_decay=5e-4)
        lm, _ = ce_loss_and_grad(Wm, sim, y, weight_decay=5e-4)
        fd = (lp - lm) / (2 * eps)
        assert grad[idx] == pytest.approx(fd, rel=1e-4, abs=1e-8)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(3)
    p = softmax(rng.standard_normal((40, 7)) * 10)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)


def test_loss_stays_finite_for_saturated_logits():
    sim = np.array([[1000.0, -1000.0]])
    W = np.eye(2) * 10
    loss, grad = ce_loss_and_grad(W, sim, np.array([1]), 0.0)
    assert np.isfinite(loss) and np.isfinite(grad).all()


# --- training ---

def separable_toy(n_per=40, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n_per, 2)) * 0.3 + [2.0, 0.0]
    b = rng.standard_normal((n_per, 2)) * 0.3 + [-2.0, 0.0]
    sim = np.vstack([a, b])
    labels = LabelVector(
        np.array([0] * n_per + [1] * n_per, dtype=np.uint32), num_classes=2
    )
    return sim, labels


def full_batch_gd_oracle(sim, y, num_classes, lr=0.5, iters=400):
    # independent reference trainer: plain full-batch gradient descent on CE
    W = np.zeros((num_classes, sim.shape[1]))
    n = sim.shape[0]
    for _ in range(iters):
        logits = sim @ W.T
        z = logits - logits.max(axis=1, keepdims=True)
        p = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
        p[np.arange(n), y] -= 1.0
        W -= lr * (p.T @ sim) / n
    return W


def test_zero_init_margin_is_exactly_zero():
    sim, labels = separable_toy()
    result = train_bottleneck(sim, labels, TrainConfig(epochs=1, lr=0.0, seed=0))
    assert np.all(result.margins[:, 0] == 0.0)
    assert np.all(compute_aum(result.margins) == 0.0)


def test_training_defaults_match_published_values():
    cfg = TrainConfig()
    assert cfg.lr == 1e-3
    assert cfg.momentum == 0.9
    assert cfg.weight_decay == 5e-4
    assert cfg.epochs == 100
    assert cfg.batch_size == 256


def test_separable_toy_converges_like_oracle():
    sim, labels = separable_toy()
    y = labels.labels.astype(np.int64)
    cfg = TrainConfig(epochs=50, lr=0.05, batch_size=16, seed=1)
    result = train_bottleneck(sim, labels, cfg)

    loss_start, _ = ce_loss_and_grad(np.zeros_like(result.layer.weights), sim, y)
    loss_end, _ = ce_loss_and_grad(result.layer.weights, sim, y)
    assert loss_end < loss_start

    final_margins = result.margins[:, -1]
    assert np.mean(final_margins > 0) >= 0.95

    W_oracle = full_batch_gd_oracle(sim, y, 2)
    acc_oracle = np.mean(np.argmax(sim @ W_oracle.T, axis=1) == y)
    acc_ours = np.mean(np.argmax(sim @ result.layer.weights.T, axis=1) == y)
    assert acc_ours == acc_oracle


def test_margins_bounded_in_softmax_mode():
    sim, labels = separable_toy(seed=5)
    result = train_bottleneck(sim, labels, TrainConfig(epochs=10, lr=0.5, seed=2))
    assert np.all(result.margins >= -1.0) and np.all(result.margins <= 1.0)


def test_logit_mode_margins_can_exceed_one():
    sim, labels = separable_toy(seed=6)
    cfg = TrainConfig(epochs=30, lr=1.0, likelihood="logit", seed=3)
    result = train_bottleneck(sim, labels, cfg)
    assert result.margins.max() > 1.0


def test_training_is_deterministic():
    sim, labels = separable_toy(seed=7)
    cfg = TrainConfig(epochs=5, seed=11)
    r1 = train_bottleneck(sim, labels, cfg)
    r2 = train_bottleneck(sim, labels, cfg)
    assert np.array_equal(r1.layer.weights, r2.layer.weights)
    assert np.array_equal(r1.margins, r2.margins)


def test_non_finite_loss_aborts_with_epoch():
    sim, labels = separable_toy(seed=8)
    with pytest.raises(errors.NonFiniteLoss) as info:
        train_bottleneck(sim * 1e150, labels, TrainConfig(epochs=5, lr=1e200, seed=0))
    assert info.value.epoch >= 0


def test_empty_dataset_rejected():
    with pytest.raises(errors.EmptyDataset):
        train_bottleneck(np.zeros((0, 3)), LabelVector(np.zeros(0, dtype=np.uint32), 2))


def test_snapshots_align_with_margins():
    sim, labels = separable_toy(seed=9)
    cfg = TrainConfig(epochs=4, seed=5)
    result = train_bottleneck(sim, labels, cfg, record_snapshots=True)
    assert len(result.snapshots) == 4
    y = labels.labels.astype(np.int64)
    for t, W in enumerate(result.snapshots):
        p = softmax(sim @ W.T)
        assigned = p[np.arange(len(y)), y]
        rival = p.copy()
        rival[np.arange(len(y)), y] = -np.inf
        np.testing.assert_allclose(
            assigned - rival.max(axis=1), result.margins[:, t], atol=1e-12
        )


# --- AUM ---

def test_aum_constant_margin():
    assert compute_aum(np.full((3, 17), 0.3)).tolist() == pytest.approx([0.3] * 3)


def test_aum_single_epoch():
    np.testing.assert_array_equal(compute_aum(np.array([[0.42]])), [0.42])


def test_aum_hand_mean():
    margins = np.array([[0.2, 0.4, 0.6]])
    total = 0.0
    for m in margins[0]:
        total += m
    assert compute_aum(margins)[0] == pytest.approx(total / 3) == pytest.approx(0.4)


def test_aum_empty_trajectory():
    with pytest.raises(errors.EmptyTrajectory):
        compute_aum(np.zeros((4, 0)))


# --- score_dataset ---

@pytest.fixture(scope="module")
def toy_dataset():
    ds = generate_synthetic(SyntheticSpec(num_classes=3, per_class=10, dim=16, seed=13))
    return ds, ds.build_bottleneck(k=3)


def test_score_dataset_labeled_composition(toy_dataset):
    ds, bneck = toy_dataset
    cfg = TrainConfig(epochs=6, seed=2)
    table = score_dataset(ds.visual, bneck, cfg, labels=ds.labels, keep_margins=True)
    assert len(table) == 30
    for e in table.entries:
        assert e.pseudo_label is None
        assert e.label == int(ds.labels.labels[e.index])
        assert e.aum == pytest.approx(np.mean(e.margins), abs=1e-9)


def test_score_dataset_label_free_fields(toy_dataset):
    ds, bneck = toy_dataset
    cfg = TrainConfig(epochs=4, seed=2)
    table = score_dataset(ds.visual, bneck, cfg, prompt_embeddings=ds.prompt_embeddings)
    assert all(e.label is None and e.pseudo_label is not None for e in table.entries)


def test_score_dataset_same_seed_identical_bytes(toy_dataset, tmp_path):
    ds, bneck = toy_dataset
    cfg = TrainConfig(epochs=5, seed=4)
    for name in ("a", "b"):
        table = score_dataset(ds.visual, bneck, cfg, labels=ds.labels)
        write_scores(tmp_path / name, table)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_score_dataset_requires_exactly_one_mode(toy_dataset):
    ds, bneck = toy_dataset
    with pytest.raises(errors.InvalidSpec):
        score_dataset(ds.visual, bneck, TrainConfig(epochs=1))
    with pytest.raises(errors.InvalidSpec):
        score_dataset(
            ds.visual,
            bneck,
            TrainConfig(epochs=1),
            labels=ds.labels,
            prompt_embeddings=ds.prompt_embeddings,
        )
