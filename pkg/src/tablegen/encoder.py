"""Three-layer hierarchical table encoder.

Layer 1 builds a record embedding and re-encodes it along three
dimensions: against the other records of its row, of its column, and of
its own history timeline (with trainable position embeddings). Layer 2
fuses the three views through a saliency gate. Layer 3 mean-pools each
row and applies a content-selection gate over rows of the same table.

Empty attention sets (single-column rows, single-row tables or columns,
empty history) contribute a zero context vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import (HOME, Record, TABLE_IDS, TableSet, TimelineStore, Vocabulary,
                   history_window)
from .model import ModelParams


@dataclass
class EncodedGrid:
    """Per-table encoder outputs; tensors are [n_rows * n_cols, hidden],
    row-major, aligned with `records`."""

    table_id: str
    n_rows: int
    n_cols: int
    records: list[Record]
    base: Tensor
    row_dim: Tensor
    col_dim: Tensor
    time_dim: Tensor
    general: Tensor
    fused: Tensor
    fuse_weights: Tensor  # [N, 3] softmax over (row, col, time)
    attention: dict[str, list] = field(default_factory=dict)


@dataclass
class EncodedTables:
    """Whole-game encoding consumed by the decoder."""

    grids: list[EncodedGrid]
    rows: Tensor          # [R_total, hidden], ungated row means
    gated_rows: Tensor    # [R_total, hidden]
    gate_values: Tensor   # [R_total, hidden], sigmoid gates
    row_offsets: list[tuple[int, int]]   # row span of each table in `rows`
    records: list[Record]                # flat, aligned with fused_all
    fused_all: Tensor                    # [N_total, hidden]
    value_index: dict[str, np.ndarray]   # record value -> flat record positions
    gate_attention: list


def _field_ids(records: list[Record], vocab: Vocabulary):
    ent = np.array([vocab.id(r.entity) for r in records], dtype=np.intp)
    typ = np.array([vocab.id(r.rtype) for r in records], dtype=np.intp)
    val = np.array([vocab.id(r.value) for r in records], dtype=np.intp)
    feat = np.array([0 if r.feature == HOME else 1 for r in records], dtype=np.intp)
    return ent, typ, val, feat


def embed_records(records: list[Record], vocab: Vocabulary, params: ModelParams) -> Tensor:
    """ReLU MLP over the concatenated entity/type/value/feature embeddings."""
    ent, typ, val, feat = _field_ids(records, vocab)
    parts = [
        ad.take_rows(params["enc.emb_entity"], ent),
        ad.take_rows(params["enc.emb_type"], typ),
        ad.take_rows(params["enc.emb_value"], val),
        ad.take_rows(params["enc.emb_feature"], feat),
    ]
    pre = ad.add(ad.matmul(ad.concat(parts, axis=1), params["enc.record_w"]),
                 params["enc.record_b"])
    return ad.relu(pre)


def embed_record(record: Record, vocab: Vocabulary, params: ModelParams) -> Tensor:
    return ad.reshape(embed_records([record], vocab, params), (params.config.hidden,))


def _zero_context_merge(embs: Tensor, merge_w: Tensor) -> Tensor:
    ctx = ad.zeros(embs.shape)
    return ad.tanh(ad.matmul(ad.concat([embs, ctx], axis=1), merge_w))


def _set_attention_encode(embs: Tensor, att_w: Tensor, merge_w: Tensor):
    """Shared row/column self-attention: bilinear scores over the other
    members of the set, zero context when alone."""
    n = embs.shape[0]
    if n == 1:
        return _zero_context_merge(embs, merge_w), None
    scores = ad.matmul(ad.matmul(embs, att_w), ad.transpose(embs))
    weights = ad.masked_row_softmax(scores)
    ctx = ad.matmul_sorted(weights, embs)
    out = ad.tanh(ad.matmul(ad.concat([embs, ctx], axis=1), merge_w))
    return out, weights.data


def encode_row_dim(row_embeddings: Tensor, params: ModelParams):
    """Encode the records of one row against each other.

    Takes and returns [n_cols, hidden]; the attention matrix (or None for
    a single-record row) is returned for inspection.
    """
    return _set_attention_encode(row_embeddings, params["enc.row_att_w"],
                                 params["enc.row_merge_w"])


def encode_col_dim(column_embeddings: Tensor, params: ModelParams):
    """Encode the records of one column against each other ([n_rows, hidden])."""
    return _set_attention_encode(column_embeddings, params["enc.col_att_w"],
                                 params["enc.col_merge_w"])


def _pos_row(params: ModelParams, index: int) -> Tensor:
    return ad.reshape(ad.take_rows(params["enc.pos_emb"], [index]),
                      (params.config.hidden,))


def _time_encode_group(embs: Tensor, hist_slots: list[Tensor], params: ModelParams):
    """Time attention for a group of records sharing history length h >= 1.

    embs is [G, hidden]; hist_slots[s] is [G, hidden], oldest slot first
    (position index s); the querying record itself sits at position w.
    """
    w = params.config.window
    h = len(hist_slots)
    query = ad.add(embs, _pos_row(params, w))
    keys = [ad.add(hist_slots[s], _pos_row(params, s)) for s in range(h)]
    q_proj = ad.add(ad.matmul(query, params["enc.time_score_wq"]),
                    params["enc.time_score_b"])
    cols = []
    for k in keys:
        s = ad.matmul(ad.tanh(ad.add(ad.matmul(k, params["enc.time_score_wk"]), q_proj)),
                      params["enc.time_score_v"])
        cols.append(ad.reshape(s, (embs.shape[0], 1)))
    weights = ad.softmax(ad.concat(cols, axis=1), axis=1)
    wt = ad.transpose(weights)
    ctx = None
    for s, k in enumerate(keys):
        a_s = ad.reshape(ad.take_rows(wt, [s]), (embs.shape[0],))
        term = ad.scale_rows(k, a_s)
        ctx = term if ctx is None else ad.add(ctx, term)
    out = ad.tanh(ad.matmul(ad.concat([embs, ctx], axis=1), params["enc.time_merge_w"]))
    return out, weights.data


def encode_time_dim(record_embedding: Tensor, history_embeddings: Tensor | None,
                    params: ModelParams):
    """Encode one record against its history window.

    record_embedding is [hidden]; history_embeddings is [h, hidden] in
    date-ascending order or None/empty for no history. Returns the
    [hidden] representation and the attention weights over the window.
    """
    h = 0 if history_embeddings is None else history_embeddings.shape[0]
    emb2d = ad.reshape(record_embedding, (1, params.config.hidden))
    if h == 0:
        out = _zero_context_merge(emb2d, params["enc.time_merge_w"])
        weights = None
    else:
        slots = [ad.take_rows(history_embeddings, [s]) for s in range(h)]
        out, weights = _time_encode_group(emb2d, slots, params)
        weights = weights[0]
    return ad.reshape(out, (params.config.hidden,)), weights


def _fuse_score(rep: Tensor, general: Tensor, params: ModelParams, dim: str) -> Tensor:
    inner = ad.add(ad.add(ad.matmul(rep, params[f"enc.fuse_{dim}_wa"]),
                          ad.matmul(general, params[f"enc.fuse_{dim}_wb"])),
                   params[f"enc.fuse_{dim}_b"])
    return ad.matmul(ad.tanh(inner), params[f"enc.fuse_{dim}_v"])


def fuse_batch(r_row: Tensor, r_col: Tensor, r_time: Tensor, params: ModelParams):
    """Record fusion gate over [N, hidden] batches.

    Returns (fused, weights [N,3], general representation)."""
    general = ad.tanh(ad.add(ad.matmul(ad.concat([r_row, r_col, r_time], axis=1),
                                       params["enc.fuse_gen_w"]),
                             params["enc.fuse_gen_b"]))
    n = r_row.shape[0]
    cols = [ad.reshape(_fuse_score(rep, general, params, dim), (n, 1))
            for dim, rep in (("row", r_row), ("col", r_col), ("time", r_time))]
    weights = ad.softmax(ad.concat(cols, axis=1), axis=1)
    wt = ad.transpose(weights)
    fused = None
    for i, rep in enumerate((r_row, r_col, r_time)):
        a = ad.reshape(ad.take_rows(wt, [i]), (n,))
        term = ad.scale_rows(rep, a)
        fused = term if fused is None else ad.add(fused, term)
    return fused, weights, general


def fuse(r_row: Tensor, r_col: Tensor, r_time: Tensor, params: ModelParams):
    """Single-record fusion; returns the fused vector and the weight triple."""
    h = params.config.hidden
    as2d = lambda t: ad.reshape(t, (1, h))
    fused, weights, _ = fuse_batch(as2d(r_row), as2d(r_col), as2d(r_time), params)
    w = weights.data[0]
    return ad.reshape(fused, (h,)), (float(w[0]), float(w[1]), float(w[2]))


def encode_rows(fused: Tensor, n_rows: int, n_cols: int, params: ModelParams):
    """Row-level representations for one table: mean pooling over each
    row's fused records, then a content-selection gate against the other
    rows of the same table.

    Returns (rows, gated_rows, gate_values, gate_attention)."""
    n = n_rows * n_cols
    pool = np.zeros((n_rows, n))
    for i in range(n_rows):
        pool[i, i * n_cols:(i + 1) * n_cols] = 1.0 / n_cols
    rows = ad.matmul(ad.constant(pool), fused)
    if n_rows == 1:
        ctx = ad.zeros(rows.shape)
        gate_attn = None
    else:
        scores = ad.matmul(ad.matmul(rows, params["enc.gate_att_w"]), ad.transpose(rows))
        attn = ad.masked_row_softmax(scores)
        ctx = ad.matmul(attn, rows)
        gate_attn = attn.data
    gate = ad.sigmoid(ad.add(ad.matmul(ad.concat([rows, ctx], axis=1), params["enc.gate_w"]),
                             params["enc.gate_b"]))
    return rows, ad.mul(gate, rows), gate, gate_attn


def _encode_grid(table_id: str, grid: list[list[Record]], store: TimelineStore,
                 vocab: Vocabulary, params: ModelParams) -> EncodedGrid:
    n_rows, n_cols = len(grid), len(grid[0])
    records = [r for row in grid for r in row]
    n = len(records)
    base = embed_records(records, vocab, params)

    row_parts, row_attn = [], []
    for i in range(n_rows):
        part, attn = encode_row_dim(ad.take_rows(base, range(i * n_cols, (i + 1) * n_cols)),
                                    params)
        row_parts.append(part)
        row_attn.append(attn)
    row_dim = row_parts[0] if n_rows == 1 else ad.concat(row_parts, axis=0)

    col_parts, col_attn = [], []
    for j in range(n_cols):
        part, attn = encode_col_dim(ad.take_rows(base, range(j, n, n_cols)), params)
        col_parts.append(part)
        col_attn.append(attn)
    col_major = col_parts[0] if n_cols == 1 else ad.concat(col_parts, axis=0)
    perm = np.array([j * n_rows + i for i in range(n_rows) for j in range(n_cols)],
                    dtype=np.intp)
    col_dim = ad.take_rows(col_major, perm)

    # Time dimension: group records by history length so each group is
    # one batched attention; histories are embedded with the same record MLP.
    histories = [history_window(r, store, params.config.window) for r in records]
    flat_hist = [h for hs in histories for h in hs]
    offsets = np.cumsum([0] + [len(hs) for hs in histories])
    hist_embs = embed_records(flat_hist, vocab, params) if flat_hist else None
    groups: dict[int, list[int]] = {}
    for idx, hs in enumerate(histories):
        groups.setdefault(len(hs), []).append(idx)
    time_parts, time_order = [], []
    time_attn: list = [None] * n
    for h, members in sorted(groups.items()):
        sub = base if len(members) == n else ad.take_rows(base, members)
        if h == 0:
            part = _zero_context_merge(sub, params["enc.time_merge_w"])
        else:
            slots = [ad.take_rows(hist_embs, [offsets[m] + s for m in members])
                     for s in range(h)]
            part, w = _time_encode_group(sub, slots, params)
            for pos, m in enumerate(members):
                time_attn[m] = w[pos]
        time_parts.append(part)
        time_order.extend(members)
    stacked = time_parts[0] if len(time_parts) == 1 else ad.concat(time_parts, axis=0)
    inv = np.empty(n, dtype=np.intp)
    inv[np.array(time_order, dtype=np.intp)] = np.arange(n, dtype=np.intp)
    time_dim = stacked if len(time_parts) == 1 else ad.take_rows(stacked, inv)

    fused, fuse_w, general = fuse_batch(row_dim, col_dim, time_dim, params)
    return EncodedGrid(table_id=table_id, n_rows=n_rows, n_cols=n_cols, records=records,
                       base=base, row_dim=row_dim, col_dim=col_dim, time_dim=time_dim,
                       general=general, fused=fused, fuse_weights=fuse_w,
                       attention={"row": row_attn, "col": col_attn, "time": time_attn})


def encode_tables(tables: TableSet, store: TimelineStore, vocab: Vocabulary,
                  params: ModelParams) -> EncodedTables:
    """Full hierarchical encoding of one game's three tables."""
    grids = [_encode_grid(tid, tables.grids[tid], store, vocab, params)
             for tid in TABLE_IDS]
    all_rows, all_gated, all_gates, gate_attn = [], [], [], []
    row_offsets = []
    r0 = 0
    for g in grids:
        rows, gated, gate, attn = encode_rows(g.fused, g.n_rows, g.n_cols, params)
        all_rows.append(rows)
        all_gated.append(gated)
        all_gates.append(gate)
        gate_attn.append(attn)
        row_offsets.append((r0, r0 + g.n_rows))
        r0 += g.n_rows
    records = [r for g in grids for r in g.records]
    value_index: dict[str, list[int]] = {}
    for i, r in enumerate(records):
        value_index.setdefault(r.value, []).append(i)
    return EncodedTables(
        grids=grids,
        rows=ad.concat(all_rows, axis=0),
        gated_rows=ad.concat(all_gated, axis=0),
        gate_values=ad.concat(all_gates, axis=0),
        row_offsets=row_offsets,
        records=records,
        fused_all=ad.concat([g.fused for g in grids], axis=0),
        value_index={v: np.array(ix, dtype=np.intp) for v, ix in value_index.items()},
        gate_attention=gate_attn,
    )
