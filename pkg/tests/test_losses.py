import math

import numpy as np
import pytest
import torch

from intentrec import losses as L
from intentrec.intent import PrototypeSet, fit_prototypes
from oracles import (finite_difference_grads, masked_nce_oracle,
                     masked_nce_terms, max_relative_error, softmax_ce_oracle,
                     unmasked_nce_oracle)


def nce(v1, v2, labels, tau=1.0, **kw):
    batch = L.ContrastiveBatch(
        view1=torch.as_tensor(v1, dtype=torch.float64),
        view2=torch.as_tensor(v2, dtype=torch.float64),
        labels=torch.as_tensor(labels, dtype=torch.long),
        temperature=tau,
    )
    return float(L.masked_info_nce(batch, **kw))


def random_batch(rng, b, d):
    v1 = rng.normal(size=(b, d))
    v2 = rng.normal(size=(b, d))
    labels = rng.integers(1, max(2, b), size=b)  # collisions likely
    return v1, v2, labels


class TestSimilarity:
    def test_orthogonal(self):
        assert float(L.similarity(torch.tensor([1.0, 0.0]), torch.tensor([0.0, 1.0]))) == 0.0

    def test_arithmetic(self):
        assert float(L.similarity(torch.tensor([1.0, 2.0]), torch.tensor([3.0, 4.0]))) == 11.0

    def test_symmetry(self, rng):
        x = torch.as_tensor(rng.normal(size=6))
        y = torch.as_tensor(rng.normal(size=6))
        assert float(L.similarity(x, y)) == pytest.approx(float(L.similarity(y, x)))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            L.similarity(torch.zeros(3), torch.zeros(4))


class TestMaskedInfoNCE:
    def test_hand_case(self):
        loss = nce([[1.0], [-1.0]], [[1.0], [-1.0]], [5, 7])
        assert loss == pytest.approx(0.4791, abs=1e-4)
        closed_form = 2 * math.log(1 + 2 * math.exp(-2))
        assert loss == pytest.approx(closed_form, abs=1e-12)

    def test_single_pair_is_zero(self, rng):
        v1, v2, _ = random_batch(rng, 1, 4)
        assert nce(v1, v2, [3]) == pytest.approx(0.0, abs=1e-12)

    def test_all_labels_equal_is_zero(self, rng):
        v1, v2, _ = random_batch(rng, 5, 3)
        assert nce(v1, v2, [9] * 5) == pytest.approx(0.0, abs=1e-12)

    def test_shared_label_matches_mask_enumeration(self, rng):
        v1, v2, _ = random_batch(rng, 3, 2)
        labels = [4, 4, 8]
        assert nce(v1, v2, labels) == pytest.approx(
            masked_nce_oracle(v1, v2, labels, 1.0), rel=1e-12)

    def test_matches_oracle_on_random_batches(self, rng):
        for _ in range(50):
            b = int(rng.integers(1, 7))
            d = int(rng.integers(1, 9))
            tau = float(rng.choice([0.5, 1.0, 2.0]))
            v1, v2, labels = random_batch(rng, b, d)
            expected = masked_nce_oracle(v1, v2, labels, tau)
            got = nce(v1, v2, labels, tau)
            assert got == pytest.approx(expected, rel=1e-10, abs=1e-12)

    def test_swap_views_symmetry(self, rng):
        v1, v2, labels = random_batch(rng, 4, 3)
        assert nce(v1, v2, labels) == pytest.approx(nce(v2, v1, labels), rel=1e-12)

    def test_same_label_view_leaves_directed_terms_unchanged(self, rng):
        v1, v2, labels = random_batch(rng, 3, 4)
        base = masked_nce_terms(v1, v2, labels, 1.0)
        intruder = rng.normal(size=4)
        with_extra = masked_nce_terms(v1, v2, labels, 1.0,
                                      extra=[(intruder, int(labels[0]))])
        # pairs sharing the intruder's label keep their terms; production code
        # agrees with the oracle on the extended pool
        for pair, terms in enumerate(base):
            if labels[pair] == labels[0]:
                assert with_extra[pair] == pytest.approx(terms, rel=1e-12)
        got = nce(v1, v2, labels, extra_views=torch.as_tensor(intruder).unsqueeze(0),
                  extra_labels=torch.tensor([int(labels[0])]))
        assert got == pytest.approx(
            masked_nce_oracle(v1, v2, labels, 1.0, extra=[(intruder, int(labels[0]))]),
            rel=1e-10)

    def test_duplicate_pair_appended_keeps_original_pools(self, rng):
        v1, v2, labels = random_batch(rng, 3, 3)
        base = masked_nce_terms(v1, v2, labels, 1.0)
        v1x = np.concatenate([v1, v1[:1]])
        v2x = np.concatenate([v2, v2[:1]])
        labels_x = np.concatenate([labels, labels[:1]])
        extended = masked_nce_terms(v1x, v2x, labels_x, 1.0)
        assert extended[0] == pytest.approx(base[0], rel=1e-12)
        assert nce(v1x, v2x, labels_x) == pytest.approx(
            masked_nce_oracle(v1x, v2x, labels_x, 1.0), rel=1e-10)

    def test_non_negative(self, rng):
        for _ in range(20):
            v1, v2, labels = random_batch(rng, int(rng.integers(1, 6)), 3)
            assert nce(v1, v2, labels) >= -1e-12

    def test_sum_reduction(self, rng):
        v1, v2, labels = random_batch(rng, 4, 3)
        assert nce(v1, v2, labels, reduction="sum") == pytest.approx(
            4 * nce(v1, v2, labels), rel=1e-12)

    def test_temperature_must_be_positive(self, rng):
        v1, v2, labels = random_batch(rng, 2, 2)
        with pytest.raises(ValueError):
            nce(v1, v2, labels, tau=0.0)

    def test_extreme_scores_stay_finite(self):
        big = 1e4
        loss = nce([[big], [-big]], [[1.0], [-1.0]], [1, 2])
        assert math.isfinite(loss)

    def test_gradients_match_finite_differences(self, rng):
        v1 = torch.tensor(rng.normal(size=(3, 4)), requires_grad=True)
        v2 = torch.tensor(rng.normal(size=(3, 4)), requires_grad=True)
        labels = torch.tensor([2, 5, 2])

        def run():
            return L.masked_info_nce(
                L.ContrastiveBatch(view1=v1, view2=v2, labels=labels, temperature=0.7))

        loss = run()
        loss.backward()
        numeric = finite_difference_grads(run, [v1, v2])
        assert max_relative_error([v1.grad, v2.grad], numeric) < 1e-4


class TestCicl:
    def test_distinct_targets_equal_unmasked(self, rng):
        v1, v2, _ = random_batch(rng, 4, 3)
        targets = torch.tensor([1, 2, 3, 4])
        got = L.cicl_loss(torch.as_tensor(v1), torch.as_tensor(v2), targets, 1.0)
        assert float(got) == pytest.approx(unmasked_nce_oracle(v1, v2, 1.0), rel=1e-10)

    def test_matches_masked_oracle_with_collisions(self, rng):
        v1, v2, _ = random_batch(rng, 5, 4)
        targets = [3, 3, 7, 9, 7]
        got = L.cicl_loss(torch.as_tensor(v1), torch.as_tensor(v2),
                          torch.tensor(targets), 2.0)
        assert float(got) == pytest.approx(masked_nce_oracle(v1, v2, targets, 2.0),
                                           rel=1e-10)


class TestFicl:
    def _prototypes(self, centroids):
        c = np.asarray(centroids, dtype=np.float64)
        return PrototypeSet(centroids=c, fitted_on=len(c), iterations_run=1,
                            inertia=0.0, seed=0)

    def test_single_pair_is_zero(self):
        protos = self._prototypes([[0.0, 0.0], [10.0, 10.0]])
        h = torch.tensor([[0.1, 0.0]], dtype=torch.float64)
        loss, ids1, ids2 = L.ficl_loss(h, h.clone(), protos)
        assert float(loss) == pytest.approx(0.0, abs=1e-12)
        assert ids1.tolist() == [0] and ids2.tolist() == [0]

    def test_matches_mask_enumeration(self, rng):
        protos = self._prototypes(rng.normal(size=(4, 3)) * 3)
        h1 = torch.as_tensor(rng.normal(size=(5, 3)))
        h2 = torch.as_tensor(rng.normal(size=(5, 3)))
        loss, ids1, ids2 = L.ficl_loss(h1, h2, protos, temperature=0.8)
        c1 = protos.centroids[ids1.numpy()]
        c2 = protos.centroids[ids2.numpy()]
        expected = (masked_nce_oracle(h1.numpy(), c1, ids1.tolist(), 0.8)
                    + masked_nce_oracle(h2.numpy(), c2, ids2.tolist(), 0.8))
        assert float(loss) == pytest.approx(expected, rel=1e-10)

    def test_same_cluster_rows_masked(self, rng):
        protos = self._prototypes([[0.0, 0.0], [100.0, 100.0]])
        h1 = torch.tensor([[0.2, 0.1], [0.1, -0.1], [99.0, 99.5]], dtype=torch.float64)
        h2 = h1 + 0.01
        loss, ids1, _ = L.ficl_loss(h1, h2, protos)
        assert ids1.tolist() == [0, 0, 1]
        c1 = protos.centroids[ids1.numpy()]
        expected_first = masked_nce_oracle(h1.numpy(), c1, ids1.tolist(), 1.0)
        loss1 = L.masked_info_nce(L.ContrastiveBatch(
            view1=h1, view2=torch.as_tensor(c1, dtype=h1.dtype),
            labels=ids1, temperature=1.0))
        assert float(loss1) == pytest.approx(expected_first, rel=1e-10)

    def test_loss_decreases_with_separation(self):
        h = torch.tensor([[1.0, 0.0], [-1.0, 0.0]], dtype=torch.float64)
        losses = []
        for scale in (1.0, 3.0, 9.0):
            protos = self._prototypes([[scale, 0.0], [-scale, 0.0]])
            hs = h * scale
            val, _, _ = L.ficl_loss(hs, hs.clone(), protos)
            losses.append(float(val))
        assert losses[0] > losses[1] > losses[2]

    def test_prototypes_receive_no_gradient(self, rng):
        protos = self._prototypes(rng.normal(size=(3, 2)))
        h1 = torch.tensor(rng.normal(size=(2, 2)), requires_grad=True)
        h2 = torch.tensor(rng.normal(size=(2, 2)), requires_grad=True)
        loss, _, _ = L.ficl_loss(h1, h2, protos)
        loss.backward()
        assert h1.grad is not None and h2.grad is not None

    def test_unfitted_prototypes_rejected(self):
        h = torch.zeros(2, 2, dtype=torch.float64)
        with pytest.raises(ValueError):
            L.ficl_loss(h, h, PrototypeSet())


class TestRecLoss:
    def test_uniform_scores_log4(self):
        intent = torch.zeros(3)
        table = torch.randn(5, 3)  # 4 items + padding row
        loss = L.rec_loss(intent, table, 2)
        assert float(loss) == pytest.approx(math.log(4), rel=1e-6)

    def test_saturated_correct_score(self):
        # score gap 20 over 99 distractors: exact loss is log(1 + 99 e^-20)
        item_count = 100
        table = torch.full((item_count + 1, 1), -10.0, dtype=torch.float64)
        table[7, 0] = 10.0
        intent = torch.tensor([1.0], dtype=torch.float64)
        loss = float(L.rec_loss(intent, table, 7))
        assert loss == pytest.approx(math.log(1 + 99 * math.exp(-20)), rel=1e-6)
        assert loss < 1e-6
        # a wider gap drives the loss below 1e-8
        table *= 3.0
        assert float(L.rec_loss(intent, table, 7)) < 1e-8

    def test_matches_softmax_oracle(self, rng):
        for _ in range(50):
            d = int(rng.integers(1, 6))
            m = int(rng.integers(2, 12))
            table = torch.tensor(rng.normal(size=(m + 1, d)))
            intent = torch.tensor(rng.normal(size=d))
            target = int(rng.integers(1, m + 1))
            scores = (intent @ table[1:].T).tolist()
            expected = softmax_ce_oracle(scores, target - 1)
            assert float(L.rec_loss(intent, table, target)) == pytest.approx(
                expected, rel=1e-10, abs=1e-12)

    def test_shift_invariance(self, rng):
        d, m = 4, 8
        table = torch.tensor(rng.normal(size=(m + 1, d)))
        intent = torch.tensor(rng.normal(size=d))
        base = float(L.rec_loss(intent, table, 3))
        # extra coordinate adds the same constant to every item score
        intent_aug = torch.cat([intent, torch.tensor([1.0], dtype=intent.dtype)])
        table_aug = torch.cat([table, torch.full((m + 1, 1), 17.0, dtype=table.dtype)], dim=1)
        shifted = float(L.rec_loss(intent_aug, table_aug, 3))
        assert shifted == pytest.approx(base, abs=1e-6)

    def test_batch_mean(self, rng):
        d, m = 3, 6
        table = torch.tensor(rng.normal(size=(m + 1, d)))
        intents = torch.tensor(rng.normal(size=(4, d)))
        targets = torch.tensor([1, 2, 3, 4])
        batched = float(L.rec_loss(intents, table, targets))
        singles = [float(L.rec_loss(intents[i], table, int(targets[i])))
                   for i in range(4)]
        assert batched == pytest.approx(sum(singles) / 4, rel=1e-10)

    def test_target_out_of_range(self):
        table = torch.randn(5, 2)
        with pytest.raises(ValueError):
            L.rec_loss(torch.zeros(2), table, 0)
        with pytest.raises(ValueError):
            L.rec_loss(torch.zeros(2), table, 5)

    def test_huge_scores_stay_finite(self):
        table = torch.zeros(4, 1)
        table[1:, 0] = torch.tensor([1e4, -1e4, 0.5])
        loss = L.rec_loss(torch.tensor([1.0]), table, 2)
        assert math.isfinite(float(loss))

    def test_gradients_match_finite_differences(self, rng):
        table = torch.tensor(rng.normal(size=(7, 4)), requires_grad=True)
        intent = torch.tensor(rng.normal(size=(2, 4)), requires_grad=True)
        targets = torch.tensor([2, 6])

        def run():
            return L.rec_loss(intent, table, targets)

        run().backward()
        numeric = finite_difference_grads(run, [intent, table])
        assert max_relative_error([intent.grad, table.grad], numeric) < 1e-4


class TestTotalLoss:
    def test_arithmetic(self):
        out = L.total_loss(1.0, 2.0, 3.0, lam=0.3, beta=0.1)
        assert out.total == pytest.approx(1.9)

    def test_backbone_weights(self):
        out = L.total_loss(1.7, 5.0, 9.0, lam=0.0, beta=0.0)
        assert out.total == 1.7

    def test_sports_defaults_validate(self):
        from intentrec.trainer import TrainConfig
        config = TrainConfig(lam=0.3, beta=0.1)
        assert config.lam == 0.3 and config.beta == 0.1

    def test_negative_weights_rejected(self):
        with pytest.raises(ValueError):
            L.total_loss(1.0, 1.0, 1.0, lam=-0.1, beta=0.0)

    def test_accepts_zero_dim_tensors(self):
        out = L.total_loss(torch.tensor(1.0), torch.tensor(2.0), torch.tensor(0.0),
                           lam=0.5, beta=0.2)
        assert out.total == pytest.approx(2.0)
