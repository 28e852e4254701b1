"""Memory bank: pseudo-label records, blending, reliability filtering,
and the per-epoch rebuild."""

import numpy as np
import pytest
import torch

from dcpnet import (
    DegenerateInputError,
    MemoryBank,
    PseudoLabelRecord,
    blend_pseudo_probs,
    confidence_mask,
    filter_negatives,
    rebuild_bank,
)

from _oracles import filter_oracle


def record(probs) -> PseudoLabelRecord:
    return PseudoLabelRecord(np.asarray(probs, dtype=np.float64))


def make_bank(prob_rows, dim=4, epoch=1) -> MemoryBank:
    records = [record(p) for p in prob_rows]
    feats = torch.eye(max(len(records), dim))[: len(records), :dim].double() + 0.01
    return rebuild_bank(feats, records, epoch)


class TestPseudoLabelRecord:
    def test_label_and_confidence(self):
        r = record([0.1, 0.7, 0.2])
        assert (r.label, r.confidence) == (1, pytest.approx(0.7))

    def test_argmax_tie_goes_to_lowest_class(self):
        assert record([0.4, 0.4, 0.2]).label == 0

    def test_rejects_non_distributions(self):
        with pytest.raises(ValueError):
            record([0.5, 0.6])
        with pytest.raises(ValueError):
            record([[0.5, 0.5]])
        with pytest.raises(ValueError):
            record([1.2, -0.2])


class TestBlend:
    def test_halfway_blend_example(self):
        r = blend_pseudo_probs(np.array([0.8, 0.2]), np.array([0.4, 0.6]), c=0.5)
        assert np.allclose(r.probs, [0.6, 0.4], atol=1e-12)
        assert r.label == 0
        assert r.confidence == pytest.approx(0.6, abs=1e-12)

    def test_endpoints_return_each_view(self):
        p_w, p_s = np.array([0.9, 0.1]), np.array([0.3, 0.7])
        assert np.allclose(blend_pseudo_probs(p_w, p_s, 1.0).probs, p_w)
        assert np.allclose(blend_pseudo_probs(p_w, p_s, 0.0).probs, p_s)

    def test_validates_inputs(self):
        with pytest.raises(ValueError):
            blend_pseudo_probs(np.array([1.0, 0.0]), np.array([1.0, 0.0, 0.0]), 0.5)
        with pytest.raises(ValueError):
            blend_pseudo_probs(np.array([1.0, 0.0]), np.array([1.0, 0.0]), 1.5)


class TestConfidenceMask:
    def test_threshold_boundary_is_inclusive(self):
        assert confidence_mask(record([0.95, 0.05]), 0.95) is True
        assert confidence_mask(record([0.9499, 0.0501]), 0.95) is False

    def test_threshold_validation(self):
        r = record([1.0, 0.0])
        for bad in (0.0, 1.0, -0.5):
            with pytest.raises(ValueError):
                confidence_mask(r, bad)


class TestFilterNegatives:
    def test_reliable_anchor_drops_only_matching_reliable_entries(self):
        # anchor: class 2, confident; bank: confident class 2, confident
        # class 1, unsure class 2 -> only the first entry is eliminated
        anchor = record([0.005, 0.005, 0.99])
        bank = make_bank(
            [[0.005, 0.005, 0.99], [0.005, 0.99, 0.005], [0.3, 0.3, 0.4]]
        )
        kept = filter_negatives(anchor, bank, threshold=0.95)
        assert kept.tolist() == [1, 2]

    def test_unreliable_anchor_keeps_everything(self):
        anchor = record([0.5, 0.4, 0.1])
        bank = make_bank([[0.005, 0.005, 0.99], [0.005, 0.99, 0.005]])
        assert filter_negatives(anchor, bank, 0.95).tolist() == [0, 1]

    def test_total_elimination_returns_empty(self):
        anchor = record([0.99, 0.01])
        bank = make_bank([[0.99, 0.01], [0.98, 0.02]])
        assert filter_negatives(anchor, bank, 0.95).size == 0

    def test_empty_bank_rejected(self):
        empty = MemoryBank(torch.zeros(0, 3), [], source_epoch=1)
        with pytest.raises(ValueError):
            filter_negatives(record([1.0, 0.0]), empty, 0.95)

    def test_matches_exhaustive_predicate_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            m = int(rng.integers(2, 6))
            k = int(rng.integers(1, 33))
            rows = rng.dirichlet(np.full(m, 0.3), size=k + 1)
            threshold = float(rng.uniform(0.3, 0.99))
            anchor = record(rows[0])
            bank = make_bank(rows[1:], dim=3)
            got = filter_negatives(anchor, bank, threshold).tolist()
            want = filter_oracle(
                anchor.label, anchor.confidence, bank.labels, bank.confidences, threshold
            )
            assert got == want


class TestRebuild:
    def test_rows_come_back_unit_norm(self):
        rng = np.random.default_rng(12)
        feats = torch.as_tensor(rng.normal(size=(6, 5)))
        bank = rebuild_bank(feats, [record([1.0, 0.0])] * 6, epoch=2)
        assert bank.size == 6 and len(bank) == 6
        assert bank.source_epoch == 2
        assert torch.allclose(bank.features.norm(dim=1), torch.ones(6), atol=1e-6)

    def test_rescaled_row_normalizes_to_the_same_vector(self):
        base = torch.tensor([[0.3, 0.4, 0.0], [0.0, 1.0, 0.0]])
        recs = [record([1.0, 0.0])] * 2
        a = rebuild_bank(base, recs, 1)
        b = rebuild_bank(base * 3.0, recs, 1)
        assert torch.allclose(a.features, b.features, atol=1e-6)

    def test_rejects_zero_rows_and_misalignment(self):
        with pytest.raises(DegenerateInputError):
            rebuild_bank(torch.zeros(2, 3), [record([1.0, 0.0])] * 2, 1)
        with pytest.raises(ValueError):
            rebuild_bank(torch.ones(2, 3), [record([1.0, 0.0])], 1)

    def test_gradient_history_is_dropped(self):
        feats = torch.ones(2, 3, requires_grad=True)
        bank = rebuild_bank(feats, [record([1.0, 0.0])] * 2, 1)
        assert not bank.features.requires_grad
