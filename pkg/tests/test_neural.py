import math

import numpy as np
import pytest

from synthnotes.corpus import Corpus, EON_TOKEN, Note, UNK_TOKEN, Vocabulary
from synthnotes import lm
from synthnotes.neural import (
    CharTaggerConfig,
    DivergenceError,
    LstmLmConfig,
    batchify,
    clip_gradients,
    core,
    global_norm,
    train_char_classifier,
    train_lstm_lm,
)


def tiny_setup(seed=42, init_scale=0.8, tied=True, steps=7, batch=3, vocab=12, hidden=8):
    rng = np.random.default_rng(seed)
    params = core.init_stack(rng, vocab, hidden, hidden, 2, tied=tied,
                             out_dim=None if tied else vocab, init_scale=init_scale)
    x = rng.integers(0, vocab, size=(steps, batch))
    y = rng.integers(0, vocab, size=(steps, batch))
    return rng, params, x, y


def finite_difference_check(params, loss_fn, grads, n_coords, seed=7, eps=1e-5, floor=1e-6):
    """Max relative error between analytic gradients and central differences
    over randomly chosen parameter coordinates."""
    rng = np.random.default_rng(seed)
    named_p = params.named_arrays()
    named_g = grads.named_arrays()
    worst = 0.0
    for _ in range(n_coords):
        gi = rng.integers(0, len(named_p))
        arr = named_p[gi][1]
        garr = named_g[gi][1]
        idx = np.unravel_index(rng.integers(0, arr.size), arr.shape)
        orig = arr[idx]
        arr[idx] = orig + eps
        hi = loss_fn()
        arr[idx] = orig - eps
        lo = loss_fn()
        arr[idx] = orig
        numeric = (hi - lo) / (2 * eps)
        analytic = garr[idx]
        worst = max(worst, abs(numeric - analytic) / max(abs(numeric), abs(analytic), floor))
    return worst


class TestForward:
    def test_zero_weights_give_uniform(self):
        _, params, x, _ = tiny_setup()
        for _, arr in params.named_arrays():
            arr[...] = 0.0
        logits, _, _ = core.stack_forward(params, x, core.zero_state(params, x.shape[1]))
        probs = core.softmax(logits)
        np.testing.assert_allclose(probs, 1.0 / 12, atol=1e-12)

    def test_eval_deterministic(self):
        _, params, x, _ = tiny_setup()
        state = core.zero_state(params, x.shape[1])
        a, _, _ = core.stack_forward(params, x, state)
        b, _, _ = core.stack_forward(params, x, state)
        assert np.array_equal(a, b)

    def test_distributions_normalize_on_random_weights(self):
        rng, params, _, _ = tiny_setup(seed=3)
        for _ in range(20):
            x = rng.integers(0, 12, size=(5, 4))
            logits, _, _ = core.stack_forward(params, x, core.zero_state(params, 4))
            sums = core.softmax(logits).sum(axis=-1)
            np.testing.assert_allclose(sums, 1.0, atol=1e-9)

    def test_dimension_mismatch_rejected(self):
        _, params, _, _ = tiny_setup()
        with pytest.raises(ValueError):
            core.stack_forward(params, np.zeros(5, dtype=int), core.zero_state(params, 1))


class TestGradients:
    def test_against_finite_differences(self):
        _, params, x, y = tiny_setup()
        state = core.zero_state(params, x.shape[1])

        def loss_fn():
            logits, _, _ = core.stack_forward(params, x, state)
            return core.xent_loss(logits, y)[0]

        logits, _, cache = core.stack_forward(params, x, state, want_cache=True)
        _, dlogits = core.xent_loss(logits, y)
        grads = core.stack_backward(params, cache, dlogits)
        assert finite_difference_check(params, loss_fn, grads, 60) < 1e-4

    def test_with_dropout_masks_and_resets(self):
        rng, params, x, y = tiny_setup(seed=11)
        state = [(rng.standard_normal((3, 8)) * 0.3, rng.standard_normal((3, 8)) * 0.3)
                 for _ in range(2)]
        masks = core.make_dropout_masks(rng, 0.3, 7, 3, params)
        reset = rng.random((7, 3)) < 0.25

        def loss_fn():
            logits, _, _ = core.stack_forward(params, x, state, masks, reset_mask=reset)
            return core.xent_loss(logits, y)[0]

        logits, _, cache = core.stack_forward(params, x, state, masks,
                                              want_cache=True, reset_mask=reset)
        _, dlogits = core.xent_loss(logits, y)
        grads = core.stack_backward(params, cache, dlogits)
        assert finite_difference_check(params, loss_fn, grads, 60) < 1e-4

    def test_untied_head(self):
        _, params, x, y = tiny_setup(tied=False)
        state = core.zero_state(params, x.shape[1])

        def loss_fn():
            logits, _, _ = core.stack_forward(params, x, state)
            return core.xent_loss(logits, y)[0]

        logits, _, cache = core.stack_forward(params, x, state, want_cache=True)
        _, dlogits = core.xent_loss(logits, y)
        grads = core.stack_backward(params, cache, dlogits)
        assert finite_difference_check(params, loss_fn, grads, 60) < 1e-4

    def test_masked_positions_get_zero_gradient(self):
        _, params, x, y = tiny_setup()
        logits, _, _ = core.stack_forward(params, x, core.zero_state(params, 3))
        mask = np.zeros(x.shape, dtype=bool)
        loss, dlogits = core.xent_loss(logits, y, mask)
        assert loss == 0.0
        assert not dlogits.any()

    def test_descent_for_small_enough_lr(self):
        _, params, x, y = tiny_setup(seed=5)
        state = core.zero_state(params, 3)
        logits, _, cache = core.stack_forward(params, x, state, want_cache=True)
        loss0, dlogits = core.xent_loss(logits, y)
        grads = core.stack_backward(params, cache, dlogits)
        decreased = False
        for lr in (1.0, 0.1, 0.01, 0.001):
            trial = params.copy()
            core.sgd_step(trial, grads, lr)
            logits, _, _ = core.stack_forward(trial, x, state)
            if core.xent_loss(logits, y)[0] < loss0:
                decreased = True
                break
        assert decreased

    def test_clipping_bounds_global_norm(self):
        _, params, x, y = tiny_setup(seed=9, init_scale=2.0)
        logits, _, cache = core.stack_forward(params, x, core.zero_state(params, 3),
                                              want_cache=True)
        _, dlogits = core.xent_loss(logits, y)
        grads = core.stack_backward(params, cache, dlogits)
        clip_gradients(grads, 0.25)
        assert global_norm(grads) <= 0.25 + 1e-12

    def test_inverted_dropout_expectation(self):
        rng, params, x, _ = tiny_setup(seed=21)
        state = core.zero_state(params, 3)
        plain, _, _ = core.stack_forward(params, x, state)
        acc = np.zeros_like(plain)
        n = 400
        for _ in range(n):
            masks = core.make_dropout_masks(rng, 0.3, 7, 3, params)
            out, _, _ = core.stack_forward(params, x, state, masks)
            acc += out
        # evaluation output approximates the mean training-mode output
        assert np.mean(np.abs(acc / n - plain)) < 0.05


def repeated_sentence_corpus(n_notes=20):
    sent = tuple(f"w{i}" for i in range(9)) + (".",)
    notes = tuple(Note(f"n{i}", (sent,)) for i in range(n_notes))
    vocab = Vocabulary(tokens=(UNK_TOKEN, EON_TOKEN) + sent, counts={}, min_count=1)
    return Corpus(notes, "train"), vocab


class TestTrainLstm:
    def test_same_seed_identical_parameters(self):
        corpus, vocab = repeated_sentence_corpus()
        config = LstmLmConfig(hidden_size=8, layers=2, epochs=3, seed=12,
                              initial_lr=1.0, batch_size=2, bptt=10)
        a = train_lstm_lm(corpus, corpus, vocab, config)
        b = train_lstm_lm(corpus, corpus, vocab, config)
        for (_, pa), (_, pb) in zip(a.params.named_arrays(), b.params.named_arrays()):
            assert np.array_equal(pa, pb)

    def test_dropout_one_rejected(self):
        with pytest.raises(ValueError):
            LstmLmConfig(dropout=1.0)

    def test_tied_embedding_is_single_storage(self):
        corpus, vocab = repeated_sentence_corpus()
        config = LstmLmConfig(hidden_size=8, layers=2, epochs=1, seed=0,
                              initial_lr=0.5, batch_size=2, bptt=10)
        model = train_lstm_lm(corpus, corpus, vocab, config)
        assert model.params.out_w is None

    def test_divergence_reported_with_location(self):
        corpus, vocab = repeated_sentence_corpus()
        config = LstmLmConfig(hidden_size=8, layers=2, epochs=2, seed=0,
                              initial_lr=1e18, grad_clip=1e18, batch_size=2, bptt=10)
        with pytest.raises(DivergenceError, match="epoch"):
            train_lstm_lm(corpus, corpus, vocab, config)

    def test_history_and_lr_policy(self):
        corpus, vocab = repeated_sentence_corpus()
        config = LstmLmConfig(hidden_size=8, layers=2, epochs=6, seed=1,
                              initial_lr=2.0, batch_size=2, bptt=10,
                              lr_decay_policy="medtext2")
        model = train_lstm_lm(corpus, corpus, vocab, config)
        lrs = [h["lr"] for h in model.history]
        assert len(lrs) == 6
        assert all(b <= a for a, b in zip(lrs, lrs[1:]))  # non-increasing
        for a, b in zip(lrs, lrs[1:]):
            assert b == a or b == pytest.approx(a / 4.0)

    def test_sequence_log_probs_match_step_scoring(self):
        corpus, vocab = repeated_sentence_corpus()
        config = LstmLmConfig(hidden_size=8, layers=2, epochs=2, seed=4,
                              initial_lr=1.0, batch_size=2, bptt=10)
        model = train_lstm_lm(corpus, corpus, vocab, config)
        ids = model.encode_note(corpus.notes[0])
        fast = model.sequence_log_probs(ids)
        state = model.start_state()
        prev = model.eon_id
        slow = []
        for tok in ids:
            dist, state = model.step(prev, state)
            slow.append(math.log(dist[tok]))
            prev = tok
        np.testing.assert_allclose(fast, slow, atol=1e-10)

    def test_batchify_rejects_tiny_streams(self):
        with pytest.raises(ValueError):
            batchify([1, 2, 3], batch_size=4)


class TestCharTagger:
    def test_memorizes_single_pair(self):
        seq = [1, 2, 3, 4, 2, 1, 5, 3]
        labels = [0, 1, 0, 1, 1, 0, 0, 1]
        config = CharTaggerConfig(hidden=24, emb_dim=8, epochs=150, lr=1.0,
                                  batch_size=1, seed=2)
        tagger = train_char_classifier([seq], [labels], n_symbols=6, config=config)
        assert list(tagger.predict(seq)) == labels

    def test_distributions_sum_to_one(self):
        config = CharTaggerConfig(hidden=8, emb_dim=4, epochs=2, seed=0)
        tagger = train_char_classifier([[1, 2, 1]], [[0, 1, 0]], n_symbols=3, config=config)
        dist = tagger.label_distributions([1, 2, 2, 1])
        np.testing.assert_allclose(dist.sum(axis=1), 1.0, atol=1e-9)

    def test_deterministic_under_seed(self):
        config = CharTaggerConfig(hidden=8, emb_dim=4, epochs=3, seed=6)
        a = train_char_classifier([[1, 2, 1]], [[0, 1, 0]], n_symbols=3, config=config)
        b = train_char_classifier([[1, 2, 1]], [[0, 1, 0]], n_symbols=3, config=config)
        for (_, pa), (_, pb) in zip(a.params.named_arrays(), b.params.named_arrays()):
            assert np.array_equal(pa, pb)

    def test_misaligned_labels_rejected(self):
        config = CharTaggerConfig(hidden=8, emb_dim=4, epochs=1, seed=0)
        with pytest.raises(ValueError):
            train_char_classifier([[1, 2]], [[0]], n_symbols=3, config=config)
