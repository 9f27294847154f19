"""Trainable parameter registry for the encoder and decoder.

All weights are initialized uniformly in [-0.1, 0.1] from a run-level
seed; embedding width equals the hidden size. Parameter names are stable
and form the checkpoint schema.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Parameter, Tensor


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    hidden: int = 32
    window: int = 3

    def __post_init__(self):
        if self.vocab_size < 5 or self.hidden < 1 or self.window < 1:
            raise ValueError(f"bad model dimensions: {self}")


def _shapes(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    v, h, w = cfg.vocab_size, cfg.hidden, cfg.window
    d = h  # embedding width
    shapes: list[tuple[str, tuple[int, ...]]] = [
        ("enc.emb_entity", (v, d)),
        ("enc.emb_type", (v, d)),
        ("enc.emb_value", (v, d)),
        ("enc.emb_feature", (2, d)),
        ("enc.record_w", (4 * d, h)),
        ("enc.record_b", (h,)),
        ("enc.row_att_w", (h, h)),
        ("enc.row_merge_w", (2 * h, h)),
        ("enc.col_att_w", (h, h)),
        ("enc.col_merge_w", (2 * h, h)),
        ("enc.pos_emb", (w + 1, h)),  # history slots 0..w-1 plus slot w for the current record
        ("enc.time_score_wq", (h, h)),
        ("enc.time_score_wk", (h, h)),
        ("enc.time_score_b", (h,)),
        ("enc.time_score_v", (h,)),
        ("enc.time_merge_w", (2 * h, h)),
        ("enc.fuse_gen_w", (3 * h, h)),
        ("enc.fuse_gen_b", (h,)),
    ]
    for dim in ("row", "col", "time"):
        shapes += [
            (f"enc.fuse_{dim}_wa", (h, h)),
            (f"enc.fuse_{dim}_wb", (h, h)),
            (f"enc.fuse_{dim}_b", (h,)),
            (f"enc.fuse_{dim}_v", (h,)),
        ]
    shapes += [
        ("enc.gate_att_w", (h, h)),
        ("enc.gate_w", (2 * h, h)),
        ("enc.gate_b", (h,)),
        ("dec.word_emb", (v, d)),
        ("dec.lstm0_wx", (d + h, 4 * h)),
        ("dec.lstm0_wh", (h, 4 * h)),
        ("dec.lstm0_b", (4 * h,)),
        ("dec.lstm1_wx", (h, 4 * h)),
        ("dec.lstm1_wh", (h, 4 * h)),
        ("dec.lstm1_b", (4 * h,)),
        ("dec.row_score_wd", (h, h)),
        ("dec.row_score_wr", (h, h)),
        ("dec.row_score_b", (h,)),
        ("dec.row_score_v", (h,)),
        ("dec.rec_score_wd", (h, h)),
        ("dec.rec_score_wr", (h, h)),
        ("dec.rec_score_b", (h,)),
        ("dec.rec_score_v", (h,)),
        ("dec.merge_w", (2 * h, h)),
        ("dec.out_w", (h, v)),
        ("dec.out_b", (v,)),
        ("dec.copy_w", (h,)),
        ("dec.copy_b", ()),
    ]
    for layer in (0, 1):
        for part in ("h", "c"):
            shapes += [
                (f"dec.init_{part}{layer}_w", (h, h)),
                (f"dec.init_{part}{layer}_b", (h,)),
            ]
    return shapes


class ModelParams:
    """Every trainable weight of embeddings, encoders, gates and decoder."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        self._params: dict[str, Parameter] = {}
        for name, shape in _shapes(config):
            self._params[name] = Parameter(name, rng.uniform(-0.1, 0.1, size=shape))

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name].tensor

    def param(self, name: str) -> Parameter:
        return self._params[name]

    def parameters(self) -> list[Parameter]:
        return list(self._params.values())

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.zero_grad()

    def n_coordinates(self) -> int:
        return sum(p.data.size for p in self._params.values())
