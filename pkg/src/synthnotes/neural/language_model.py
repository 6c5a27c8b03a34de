"""Word-level LSTM language model: config, model wrapper and trainer.

Training follows the classic recipe: the corpus is concatenated into one
token stream with an end-of-note token closing every note, folded into
batch_size parallel streams, and optimized by truncated BPTT with
gradient-clipped SGD under one of two plateau learning-rate policies.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from ..corpus import Corpus, EON_TOKEN
from ..lm import LanguageModel
from . import core

log = logging.getLogger(__name__)

LR_POLICIES = ("medtext2", "medtext103")


class DivergenceError(RuntimeError):
    """Training loss became non-finite."""


@dataclass
class LstmLmConfig:
    hidden_size: int = 650
    layers: int = 2
    dropout: float = 0.0
    initial_lr: float = 20.0
    lr_decay_policy: str = "medtext2"
    epochs: int = 20
    grad_clip: float = 0.25
    bptt: int = 35
    batch_size: int = 20
    tied_embeddings: bool = True
    seed: int = 0
    min_lr: float = 0.1          # floor applied by the medtext103 policy
    min_improvement: float = 0.1  # medtext103 plateau threshold (valid NLL)
    dtype: str = "float64"       # "float32" is a speed option, not conformant

    def __post_init__(self):
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.lr_decay_policy not in LR_POLICIES:
            raise ValueError(f"unknown lr policy {self.lr_decay_policy!r}")
        if self.layers < 1 or self.hidden_size < 1 or self.epochs < 1:
            raise ValueError("layers, hidden_size and epochs must be >= 1")
        if self.bptt < 1 or self.batch_size < 1:
            raise ValueError("bptt and batch_size must be >= 1")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64


class LstmLmModel(LanguageModel):
    """Trained LSTM language model over a token space containing <eon>."""

    def __init__(self, vocab, config: LstmLmConfig, params: core.StackParams):
        super().__init__(vocab)
        if self.eon_id is None:
            raise ValueError(f"LSTM language models need the {EON_TOKEN!r} token in the vocabulary")
        self.config = config
        self.params = params
        self.history: list[dict] = []

    def start_state(self):
        return core.zero_state(self.params, 1)

    def step(self, token_id: int, state):
        if token_id == self.eon_id:
            state = self.start_state()  # note boundary: fresh context
        return core.lstm_step(self.params, token_id, state)

    def next_distribution(self, context) -> np.ndarray:
        ids = [self.eon_id] + list(context)
        x = np.array(ids, dtype=np.int64).reshape(-1, 1)
        logits, _, _ = core.stack_forward(self.params, x, core.zero_state(self.params, 1))
        return core.softmax(logits[-1, 0])

    def sequence_log_probs(self, ids) -> np.ndarray:
        if len(ids) == 0:
            return np.zeros(0)
        total, _, per_token = batched_note_nll(self.params, [list(ids)], self.eon_id)
        return per_token[0]


def batchify(stream: list[int], batch_size: int) -> np.ndarray:
    """Fold a token stream into batch_size parallel columns, shape (L, B)."""
    usable = (len(stream) // batch_size) * batch_size
    if usable // batch_size < 2:
        raise ValueError(
            f"stream of {len(stream)} tokens is too short for batch size {batch_size}")
    data = np.asarray(stream[:usable], dtype=np.int64)
    return data.reshape(batch_size, -1).T


def bptt_chunks(data: np.ndarray, bptt: int):
    for start in range(0, data.shape[0] - 1, bptt):
        steps = min(bptt, data.shape[0] - 1 - start)
        yield data[start : start + steps], data[start + 1 : start + 1 + steps]


def batched_note_nll(params: core.StackParams, notes_ids: list[list[int]], eon_id: int,
                     batch: int = 64):
    """Per-note NLL with state reset at every note start.

    The recurrence is seeded by the end-of-note token from a zero state, so
    position i is conditioned on exactly the note's own first i-1 tokens.
    Returns (total nll, token count, per-note log-prob arrays).
    """
    total = 0.0
    count = 0
    per_note: list[np.ndarray] = []
    for lo in range(0, len(notes_ids), batch):
        group = notes_ids[lo : lo + batch]
        steps = max(len(ids) for ids in group)
        width = len(group)
        x = np.zeros((steps, width), dtype=np.int64)
        y = np.zeros((steps, width), dtype=np.int64)
        mask = np.zeros((steps, width), dtype=bool)
        for j, ids in enumerate(group):
            n = len(ids)
            x[0, j] = eon_id
            if n > 1:
                x[1:n, j] = ids[:-1]
            y[:n, j] = ids
            mask[:n, j] = True
        logits, _, _ = core.stack_forward(params, x, core.zero_state(params, width))
        lsm = core.log_softmax(logits)
        lp = np.take_along_axis(lsm, y[..., None], axis=2)[..., 0]
        for j, ids in enumerate(group):
            per_note.append(lp[: len(ids), j].astype(np.float64))
        total += -float(lp[mask].sum())
        count += int(mask.sum())
    return total, count, per_note


def _valid_nll(params: core.StackParams, notes_ids: list[list[int]], eon_id: int) -> float:
    total, count, _ = batched_note_nll(params, notes_ids, eon_id)
    return total / count


def train_lstm_lm(train: Corpus, valid: Corpus, vocab, config: LstmLmConfig) -> LstmLmModel:
    """Train on the eon-joined train stream; keep the parameters from the
    epoch with the best per-note validation loss."""
    rng = np.random.default_rng(config.seed)
    model = LstmLmModel(vocab, config, params=None)  # validates the token space
    n_vocab = model.vocab_size
    params = core.init_stack(
        rng, n_vocab, config.hidden_size, config.hidden_size, config.layers,
        out_dim=None if config.tied_embeddings else n_vocab,
        tied=config.tied_embeddings, dtype=config.np_dtype,
    )
    model.params = params

    stream = model.corpus_stream(train)
    data = batchify(stream, config.batch_size)
    valid_ids = [model.encode_note(n) for n in valid]
    if not valid_ids:
        raise ValueError("validation corpus is empty")

    lr = config.initial_lr
    best_nll = math.inf
    best_params = params.copy()
    n_chunks = max(1, (data.shape[0] - 1 + config.bptt - 1) // config.bptt)
    check_every = max(1, n_chunks // 40)  # medtext103 validates ~40x per epoch
    last_check_nll = math.inf

    for epoch in range(1, config.epochs + 1):
        state = core.zero_state(params, config.batch_size)
        epoch_loss = 0.0
        epoch_positions = 0
        for chunk_idx, (x, y) in enumerate(bptt_chunks(data, config.bptt)):
            masks = core.make_dropout_masks(rng, config.dropout, x.shape[0],
                                            config.batch_size, params)
            logits, state, cache = core.stack_forward(params, x, state, masks,
                                                      want_cache=True,
                                                      reset_mask=(x == model.eon_id))
            loss, dlogits = core.xent_loss(logits, y)
            if not math.isfinite(loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, chunk {chunk_idx}")
            grads = core.stack_backward(params, cache, dlogits)
            core.clip_gradients(grads, config.grad_clip)
            core.sgd_step(params, grads, lr)
            epoch_loss += loss * x.size
            epoch_positions += x.size

            if config.lr_decay_policy == "medtext103" and (chunk_idx + 1) % check_every == 0:
                nll = _valid_nll(params, valid_ids, model.eon_id)
                if nll < best_nll:
                    best_nll = nll
                    best_params = params.copy()
                if last_check_nll - nll < config.min_improvement:
                    lr = max(lr / 1.2, config.min_lr)
                last_check_nll = nll

        valid_nll = _valid_nll(params, valid_ids, model.eon_id)
        if valid_nll < best_nll:
            best_nll = valid_nll
            best_params = params.copy()
        elif config.lr_decay_policy == "medtext2":
            lr = lr / 4.0
        train_nll = epoch_loss / max(epoch_positions, 1)
        model.history.append({
            "epoch": epoch,
            "lr": lr,
            "train_ppl": math.exp(train_nll),
            "valid_ppl": math.exp(valid_nll),
        })
        log.info("epoch %d: train ppl %.3f, valid ppl %.3f, lr %.4g",
                 epoch, math.exp(train_nll), math.exp(valid_nll), lr)

    model.params = best_params
    return model
