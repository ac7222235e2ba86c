import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hamqa import tensor as tn
from hamqa.errors import ContractViolation
from hamqa.heads import (
    SpanPrediction,
    aggregate_windows,
    decode_span,
    dialog_act_logits,
    dialog_act_loss,
    span_distributions,
    span_loss,
    span_loss_from_logits,
)
from hamqa.tensor import Tensor

from oracles import brute_force_span, random_span_instance


def act_params(yesno=None, followup=None, h=2):
    z = np.zeros((3, h))
    return {
        "act.yesno.weight": Tensor(z if yesno is None else yesno),
        "act.yesno.bias": Tensor(np.zeros(3)),
        "act.followup.weight": Tensor(z if followup is None else followup),
        "act.followup.bias": Tensor(np.zeros(3)),
    }


class TestSpanDistributions:
    def test_zero_vector_uniform(self, rng):
        T = Tensor(rng.normal(size=(6, 4)))
        mask = np.array([0, 1, 1, 1, 1, 0], dtype=bool)
        pb, pe = span_distributions(T, Tensor(np.zeros(4)), Tensor(np.zeros(4)), mask)
        np.testing.assert_allclose(pb.data, [0, 0.25, 0.25, 0.25, 0.25, 0], atol=1e-7)

    def test_single_position(self, rng):
        T = Tensor(rng.normal(size=(3, 4)))
        pb, _ = span_distributions(T, Tensor(rng.normal(size=4)), Tensor(rng.normal(size=4)), [False, True, False])
        np.testing.assert_allclose(pb.data, [0, 1, 0], atol=1e-7)

    def test_analytic(self, f64):
        T = Tensor([[0.0], [math.log(2)]])
        pb, _ = span_distributions(T, Tensor([1.0]), Tensor([1.0]), [True, True])
        np.testing.assert_allclose(pb.data, [1 / 3, 2 / 3])

    def test_all_masked(self, rng):
        with pytest.raises(ContractViolation):
            span_distributions(Tensor(np.ones((3, 2))), Tensor(np.ones(2)), Tensor(np.ones(2)), [False] * 3)


class TestSpanLoss:
    def test_perfect(self):
        assert span_loss(Tensor([0.0, 1.0]), Tensor([1.0, 0.0]), 1, 0).item() == 0.0

    def test_half(self, f64):
        assert span_loss(Tensor([0.5, 0.5]), Tensor([0.5, 0.5]), 0, 1).item() == pytest.approx(math.log(2))

    def test_half_quarter(self, f64):
        loss = span_loss(Tensor([0.5, 0.5]), Tensor([0.25, 0.75]), 0, 0).item()
        assert loss == pytest.approx(0.5 * (math.log(2) + math.log(4)), abs=1e-12)
        assert loss == pytest.approx(1.0397, abs=1e-4)

    def test_masked_label(self):
        with pytest.raises(ContractViolation):
            span_loss(Tensor([0.5, 0.5, 0.0]), Tensor([0.5, 0.5, 0.0]), 2, 0, mask=[True, True, False])

    def test_logit_route_matches(self, f64, rng):
        lb, le = rng.normal(size=(3, 7)), rng.normal(size=(3, 7))
        mask = rng.random((3, 7)) < 0.7
        mask[:, 2] = True
        pb = tn.masked_softmax(Tensor(lb), mask)
        pe = tn.masked_softmax(Tensor(le), mask)
        a = span_loss(pb, pe, [2, 2, 2], [2, 2, 2], mask).item()
        b = span_loss_from_logits(Tensor(lb), Tensor(le), mask, [2, 2, 2], [2, 2, 2]).item()
        assert a == pytest.approx(b, rel=1e-12)


class TestDialogAct:
    def test_zero_weights_ln3(self, f64):
        la, lc = dialog_act_loss(Tensor([[1.0, -2.0]]), act_params(), [0], [2])
        assert la.item() == pytest.approx(math.log(3))
        assert lc.item() == pytest.approx(math.log(3))

    def test_analytic_ln2(self, f64):
        # logits (0, ln 2, 0) with s = [1, 0]
        A = np.array([[0.0, 0.0], [math.log(2), 0.0], [0.0, 0.0]])
        la, _ = dialog_act_loss(Tensor([[1.0, 0.0]]), act_params(yesno=A), [1], [0])
        assert la.item() == pytest.approx(math.log(2))

    def test_large_margin(self, f64):
        A = np.array([[0.0, 0.0], [0.0, 0.0], [200.0, 0.0]])
        la, _ = dialog_act_loss(Tensor([[1.0, 0.0]]), act_params(yesno=A), [2], [0])
        assert la.item() < 1e-12

    def test_label_out_of_range(self):
        with pytest.raises(IndexError):
            dialog_act_loss(Tensor([[1.0, 0.0]]), act_params(), [3], [0])
        with pytest.raises(IndexError):
            dialog_act_loss(Tensor([[1.0, 0.0]]), act_params(), [0], [-1])

    @given(st.floats(-50, 50))
    def test_prediction_shift_invariant(self, c):
        rng = np.random.default_rng(3)
        s = Tensor(rng.normal(size=(4, 5)))
        W = Tensor(rng.normal(size=(3, 5)))
        logits = dialog_act_logits(s, W, Tensor(np.zeros(3))).data
        shifted = dialog_act_logits(s, W, Tensor(np.full(3, c))).data
        np.testing.assert_array_equal(logits.argmax(-1), shifted.argmax(-1))


class TestDecodeSpan:
    def test_unconstrained_peaks(self):
        pb = np.full(10, 0.01)
        pe = np.full(10, 0.01)
        pb[3], pe[5] = 0.9, 0.9
        p = decode_span(pb, pe, 1, 8, 40)
        assert (p.begin, p.end) == (3, 5)

    def test_end_before_begin(self):
        pb = np.array([0, 0.05, 0.05, 0.05, 0.8, 0.05])
        pe = np.array([0, 0.05, 0.8, 0.05, 0.05, 0.05])
        p = decode_span(pb, pe, 1, 5, 40)
        _, b, e = brute_force_span(pb, pe, 1, 5, 40)
        assert (p.begin, p.end) == (b, e)
        assert p.begin <= p.end and (p.begin, p.end) != (4, 2)

    def test_max_length(self):
        M = 60
        pb = np.full(M, 1e-3)
        pe = np.full(M, 1e-3)
        pb[2], pe[50] = 0.9, 0.9
        p = decode_span(pb, pe, 1, M - 1, 40)
        _, b, e = brute_force_span(pb, pe, 1, M - 1, 40)
        assert (p.begin, p.end) == (b, e)
        assert p.end - p.begin + 1 <= 40

    def test_cannot_answer(self):
        pb = np.array([0.0, 0.1, 0.1, 0.8])
        pe = np.array([0.0, 0.1, 0.1, 0.8])
        p = decode_span(pb, pe, 1, 3, 40, cannot_answer_position=3)
        assert p.is_cannot_answer and (p.begin, p.end) == (3, 3)

    def test_sentinel_never_ends_a_longer_span(self):
        pb = np.array([0.0, 0.9, 0.05, 0.05])
        pe = np.array([0.0, 0.05, 0.05, 0.9])
        p = decode_span(pb, pe, 1, 3, 40, cannot_answer_position=3)
        assert p.end < 3 or p.begin == 3

    def test_random_agreement_with_brute_force(self):
        rng = np.random.default_rng(11)
        for _ in range(300):
            pb, pe, start, end, L, c = random_span_instance(rng)
            p = decode_span(pb, pe, start, end, L, cannot_answer_position=c)
            score, b, e = brute_force_span(pb, pe, start, end, L, c)
            assert (p.begin, p.end) == (b, e)
            assert p.score == pytest.approx(score, abs=1e-9)

    @settings(max_examples=100)
    @given(st.integers(0, 10_000))
    def test_validity(self, seed):
        rng = np.random.default_rng(seed)
        pb, pe, start, end, L, c = random_span_instance(rng)
        p = decode_span(pb, pe, start, end, L, cannot_answer_position=c)
        assert start <= p.begin <= p.end <= end
        assert p.end - p.begin + 1 <= L
        assert p.is_cannot_answer == (c is not None and p.begin == c)

    @given(st.integers(0, 1000), st.floats(0.1, 10.0))
    def test_logit_rescale_invariance(self, seed, c):
        rng = np.random.default_rng(seed)
        lb, le = rng.normal(size=20), rng.normal(size=20)

        def soft(x):
            x = np.exp(x - x.max())
            return x / x.sum()

        a = decode_span(soft(lb), soft(le), 1, 18, 5)
        b = decode_span(soft(c * lb), soft(c * le), 1, 18, 5)
        assert (a.begin, a.end) == (b.begin, b.end)


class TestAggregateWindows:
    def test_single(self):
        p = SpanPrediction(3, 4, -1.0)
        assert aggregate_windows([p]) is p

    def test_max(self):
        a, b = SpanPrediction(3, 4, -1.2), SpanPrediction(1, 2, -0.7)
        assert aggregate_windows([a, b]) is b

    def test_tie_first_window(self):
        a, b = SpanPrediction(5, 6, -1.0), SpanPrediction(1, 2, -1.0)
        assert aggregate_windows([a, b]) is a

    def test_tie_prefers_real_answer(self):
        a = SpanPrediction(9, 9, -1.0, is_cannot_answer=True)
        b = SpanPrediction(1, 2, -1.0)
        assert aggregate_windows([a, b]) is b

    def test_empty(self):
        with pytest.raises(ContractViolation):
            aggregate_windows([])
