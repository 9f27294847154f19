"""Two-layer LSTM decoder with input feeding, dual attention (rows, then
records within rows) and conditional copy, plus beam-search inference.

Copy events emit the matched record's value string, so generated token
sequences may contain strings outside the vocabulary; such tokens are fed
back as the unknown id. Scoring marginalizes the copy switch: a target
receives (1 - p_copy) * generation probability plus p_copy * the combined
attention mass of records whose value equals it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ContractError, Tensor
from .data import BOS, EOS, Vocabulary
from .encoder import EncodedTables
from .model import ModelParams


@dataclass
class DecoderState:
    h: list[Tensor]
    c: list[Tensor]
    input_feed: Tensor

    def detach(self) -> "DecoderState":
        """Values carry forward, gradient flow is cut (truncated BPTT)."""
        return DecoderState(h=[t.detach() for t in self.h],
                            c=[t.detach() for t in self.c],
                            input_feed=self.input_feed.detach())


@dataclass
class StepTensors:
    """Differentiable per-step outputs used for training and scoring."""

    d_t: Tensor
    d_tilde: Tensor
    beta: Tensor            # [R_total]
    gammas: list[Tensor]    # per table, [n_rows, n_cols]
    alpha: Tensor           # [N_total]
    p_copy: Tensor          # scalar
    gen_dist: Tensor        # [vocab]


@dataclass
class DecodeStep:
    """Inspection-friendly view of one decoding step."""

    d_t: np.ndarray
    d_tilde: np.ndarray
    beta: np.ndarray
    gamma: list[np.ndarray]
    alpha: np.ndarray
    p_copy: float
    gen_dist: np.ndarray


@dataclass
class Hypothesis:
    tokens: list[str]
    log_prob: float
    state: DecoderState | None = None
    finished_at: int | None = None


def init_state(enc: EncodedTables, params: ModelParams) -> DecoderState:
    """Both LSTM layers start from an affine map of the mean gated row."""
    m = ad.mean_over_axis(enc.gated_rows, axis=0)
    h, c = [], []
    for layer in (0, 1):
        h.append(ad.add(ad.matmul(m, params[f"dec.init_h{layer}_w"]),
                        params[f"dec.init_h{layer}_b"]))
        c.append(ad.add(ad.matmul(m, params[f"dec.init_c{layer}_w"]),
                        params[f"dec.init_c{layer}_b"]))
    return DecoderState(h=h, c=c, input_feed=ad.zeros(params.config.hidden))


def _lstm_cell(x: Tensor, h: Tensor, c: Tensor, params: ModelParams, layer: int):
    hidden = params.config.hidden
    gates = ad.add(ad.add(ad.matmul(x, params[f"dec.lstm{layer}_wx"]),
                          ad.matmul(h, params[f"dec.lstm{layer}_wh"])),
                   params[f"dec.lstm{layer}_b"])
    i = ad.sigmoid(ad.slice1d(gates, 0, hidden))
    f = ad.sigmoid(ad.slice1d(gates, hidden, 2 * hidden))
    g = ad.tanh(ad.slice1d(gates, 2 * hidden, 3 * hidden))
    o = ad.sigmoid(ad.slice1d(gates, 3 * hidden, 4 * hidden))
    c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
    h_new = ad.mul(o, ad.tanh(c_new))
    return h_new, c_new


def _attention(d_t: Tensor, enc: EncodedTables, params: ModelParams):
    """Row-level weights over all tables' gated rows, record weights
    normalized within each row, and their product."""
    q_row = ad.add(ad.matmul(d_t, params["dec.row_score_wd"]), params["dec.row_score_b"])
    row_scores = ad.matmul(ad.tanh(ad.add(ad.matmul(enc.gated_rows,
                                                    params["dec.row_score_wr"]), q_row)),
                           params["dec.row_score_v"])
    beta = ad.softmax(row_scores)

    q_rec = ad.add(ad.matmul(d_t, params["dec.rec_score_wd"]), params["dec.rec_score_b"])
    rec_scores = ad.matmul(ad.tanh(ad.add(ad.matmul(enc.fused_all,
                                                    params["dec.rec_score_wr"]), q_rec)),
                           params["dec.rec_score_v"])
    gammas, alpha_parts = [], []
    n0 = 0
    for g, (r0, r1) in zip(enc.grids, enc.row_offsets):
        n = g.n_rows * g.n_cols
        gamma = ad.softmax(ad.reshape(ad.slice1d(rec_scores, n0, n0 + n),
                                      (g.n_rows, g.n_cols)), axis=1)
        gammas.append(gamma)
        beta_seg = ad.slice1d(beta, r0, r1)
        alpha_parts.append(ad.reshape(ad.scale_rows(gamma, beta_seg), (n,)))
        n0 += n
    alpha = alpha_parts[0] if len(alpha_parts) == 1 else ad.concat(alpha_parts, axis=0)
    context = ad.matmul(alpha, enc.fused_all)
    return beta, gammas, alpha, context


def dual_attention(d_t: Tensor, enc: EncodedTables, params: ModelParams):
    """(beta, per-table gamma, alpha) as numpy arrays for a given decoder state."""
    beta, gammas, alpha, _ = _attention(d_t, enc, params)
    return beta.data, [g.data for g in gammas], alpha.data


def _step(prev_id: int, state: DecoderState, enc: EncodedTables, params: ModelParams,
          dropout: float = 0.0, rng: np.random.Generator | None = None):
    vocab_size = params.config.vocab_size
    if not 0 <= prev_id < vocab_size:
        raise ContractError(f"token id {prev_id} outside vocabulary of size {vocab_size}")
    train = dropout > 0.0 and rng is not None
    w = ad.reshape(ad.take_rows(params["dec.word_emb"], [prev_id]),
                   (params.config.hidden,))
    x0 = ad.concat([w, state.input_feed], axis=0)
    if train:
        x0 = ad.dropout(x0, dropout, rng)
    h0, c0 = _lstm_cell(x0, state.h[0], state.c[0], params, 0)
    x1 = ad.dropout(h0, dropout, rng) if train else h0
    h1, c1 = _lstm_cell(x1, state.h[1], state.c[1], params, 1)
    d_t = h1

    beta, gammas, alpha, context = _attention(d_t, enc, params)
    d_tilde = ad.tanh(ad.matmul(ad.concat([d_t, context], axis=0), params["dec.merge_w"]))
    proj_in = ad.dropout(d_tilde, dropout, rng) if train else d_tilde
    gen_dist = ad.softmax(ad.add(ad.matmul(proj_in, params["dec.out_w"]),
                                 params["dec.out_b"]))
    p_copy = ad.sigmoid(ad.add(ad.dot(params["dec.copy_w"], d_t), params["dec.copy_b"]))
    step = StepTensors(d_t=d_t, d_tilde=d_tilde, beta=beta, gammas=gammas, alpha=alpha,
                       p_copy=p_copy, gen_dist=gen_dist)
    next_state = DecoderState(h=[h0, h1], c=[c0, c1], input_feed=d_tilde)
    return step, next_state


def decode_step(prev_token: int, state: DecoderState, enc: EncodedTables,
                params: ModelParams):
    """One inference step; returns (DecodeStep, next state)."""
    step, next_state = _step(prev_token, state, enc, params)
    view = DecodeStep(d_t=step.d_t.data, d_tilde=step.d_tilde.data, beta=step.beta.data,
                      gamma=[g.data for g in step.gammas], alpha=step.alpha.data,
                      p_copy=step.p_copy.item(), gen_dist=step.gen_dist.data)
    return view, next_state


def token_log_prob(step: StepTensors, token: str, vocab: Vocabulary,
                   enc: EncodedTables) -> Tensor:
    """log P(token) under the copy/generate mixture (marginal over the switch)."""
    gen_p = ad.pick(step.gen_dist, vocab.id(token))
    keep = ad.add(ad.mul(step.p_copy, -1.0), 1.0)
    total = ad.mul(gen_p, keep)
    match = enc.value_index.get(token)
    if match is not None:
        total = ad.add(total, ad.mul(ad.gather_sum(step.alpha, match), step.p_copy))
    return ad.log(total)


def teacher_forced_log_probs(summary: list[str], enc: EncodedTables, params: ModelParams,
                             vocab: Vocabulary, dropout: float = 0.0,
                             rng: np.random.Generator | None = None,
                             bptt_block: int | None = None) -> list[Tensor]:
    """Per-step log-probabilities of a reference summary plus its terminator.

    With a bptt_block, the recurrent state is detached every block so
    gradients do not flow across block boundaries (encoder gradients still
    accumulate from every block).
    """
    state = init_state(enc, params)
    prev = vocab.id(BOS)
    terms: list[Tensor] = []
    for t, token in enumerate(list(summary) + [EOS]):
        if bptt_block is not None and t > 0 and t % bptt_block == 0:
            state = state.detach()
        step, state = _step(prev, state, enc, params, dropout=dropout, rng=rng)
        terms.append(token_log_prob(step, token, vocab, enc))
        prev = vocab.id(token)
    return terms


def sequence_log_prob(summary: list[str], enc: EncodedTables, params: ModelParams,
                      vocab: Vocabulary) -> float:
    """Teacher-forced log P(summary, end | tables); empty input scores 0."""
    if not summary:
        return 0.0
    terms = teacher_forced_log_probs(summary, enc, params, vocab)
    return float(sum(t.item() for t in terms))


def extended_tokens(enc: EncodedTables, vocab: Vocabulary) -> tuple[list[str], np.ndarray]:
    """Vocabulary plus out-of-vocabulary copyable values, and the mapping
    from flat record positions to extended token ids."""
    extra = sorted(v for v in enc.value_index if v not in vocab)
    tokens = list(vocab.tokens) + extra
    ids = {t: i for i, t in enumerate(tokens)}
    rec_ids = np.array([ids[r.value] for r in enc.records], dtype=np.intp)
    return tokens, rec_ids


def mixture_distribution(gen_dist: np.ndarray, alpha: np.ndarray, p_copy: float,
                         rec_token_ids: np.ndarray, n_ext: int) -> np.ndarray:
    """Full output distribution over vocabulary plus copy-only tokens."""
    mix = np.zeros(n_ext)
    mix[:gen_dist.shape[0]] = (1.0 - p_copy) * gen_dist
    mix += p_copy * np.bincount(rec_token_ids, weights=alpha, minlength=n_ext)
    return mix


def beam_search(enc: EncodedTables, params: ModelParams, vocab: Vocabulary,
                beam: int = 5, max_len: int = 160) -> Hypothesis:
    """Standard beam search over the mixture distribution.

    Returns the best completed hypothesis; ties break toward earlier
    completion, then lexicographically smaller extended token ids. The
    returned tokens exclude the terminator.
    """
    if beam < 1 or max_len < 1:
        raise ContractError(f"beam and max_len must be >= 1, got {beam}, {max_len}")
    ext_tokens, rec_ids = extended_tokens(enc, vocab)
    n_ext = len(ext_tokens)
    eos_id = vocab.id(EOS)

    live: list[tuple[list[int], float, DecoderState]] = [
        ([], 0.0, init_state(enc, params))]
    finished: list[Hypothesis] = []
    for t in range(max_len):
        candidates: list[tuple[float, int, int]] = []  # (score, hyp index, ext token id)
        stepped = []
        for hi, (toks, lp, state) in enumerate(live):
            prev_ext = toks[-1] if toks else vocab.id(BOS)
            prev = prev_ext if prev_ext < len(vocab) else 1  # UNK feeds copied OOV tokens
            step, nstate = _step(prev, state, enc, params)
            mix = mixture_distribution(step.gen_dist.data, step.alpha.data,
                                       step.p_copy.item(), rec_ids, n_ext)
            with np.errstate(divide="ignore"):
                scores = lp + np.log(mix)
            stepped.append((toks, nstate))
            candidates.extend((float(scores[k]), hi, k) for k in np.flatnonzero(mix > 0.0))
        candidates.sort(key=lambda c: (-c[0], c[2], c[1]))
        next_live = []
        for score, hi, k in candidates:
            if len(next_live) >= beam:
                break
            toks, nstate = stepped[hi]
            if k == eos_id:
                finished.append(Hypothesis(tokens=[ext_tokens[i] for i in toks],
                                           log_prob=score, finished_at=t))
            else:
                next_live.append((toks + [k], score, nstate))
        live = next_live
        if not live:
            break
        if finished:
            best_done = max(f.log_prob for f in finished)
            if all(lp <= best_done for _, lp, _ in live):
                break
    for toks, lp, _ in live:  # hitting max_len force-completes
        finished.append(Hypothesis(tokens=[ext_tokens[i] for i in toks],
                                   log_prob=lp, finished_at=max_len))

    def rank(hyp: Hypothesis):
        ids = tuple(ext_tokens.index(t) for t in hyp.tokens)
        return (-hyp.log_prob, hyp.finished_at, ids)

    return min(finished, key=rank)
