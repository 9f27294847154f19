"""Extractive evaluation metrics (RG, CS, CO) and corpus BLEU.

Facts are pulled from token sequences by a deterministic rule extractor:
a numeric token is attributed to the nearest entity mentioned in the
preceding attribution span, and its record type is read off the lexical
cue that follows it ("points", "rebounds", "assists", "x of y field
goals"). The extractor is exact on template-style text, which is what
desk-scale acceptance relies on.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from .data import TableSet

DEFAULT_SPAN = 15

# Record type signalled by the token immediately after a number.
_UNIGRAM_CUES = {"points": "PTS", "rebounds": "REB", "assists": "AST"}


@dataclass(frozen=True)
class ExtractedFact:
    entity: str
    rtype: str
    value: str
    position: int  # token index of the value mention


@dataclass
class MetricsReport:
    rg_p: float
    rg_count: float
    cs_p: float
    cs_r: float
    cs_f1: float
    co_dld: float
    bleu: float

    def to_json_dict(self) -> dict:
        return {
            "RG-P%": self.rg_p, "RG-#": self.rg_count,
            "CS-P%": self.cs_p, "CS-R%": self.cs_r, "CS-F1%": self.cs_f1,
            "CO-DLD%": self.co_dld, "BLEU": self.bleu,
        }


def _is_number(tok: str) -> bool:
    return bool(tok) and (tok.isdigit() or (tok[0] == "-" and tok[1:].isdigit()))


def _entity_mentions(text: list[str], entities: set[str]) -> list[tuple[int, str]]:
    """(index of last mention token, entity) for each mention, in text order.
    Multi-token entity names match greedily, longest first."""
    by_first: dict[str, list[tuple[str, ...]]] = {}
    for e in entities:
        parts = tuple(e.split())
        by_first.setdefault(parts[0], []).append(parts)
    for options in by_first.values():
        options.sort(key=len, reverse=True)
    mentions = []
    i = 0
    while i < len(text):
        for parts in by_first.get(text[i], ()):
            if tuple(text[i:i + len(parts)]) == parts:
                mentions.append((i + len(parts) - 1, " ".join(parts)))
                i += len(parts) - 1
                break
        i += 1
    return mentions


def extract_records(text: list[str], tables: TableSet, span: int = DEFAULT_SPAN) -> list[ExtractedFact]:
    """Scan a token sequence for (entity, rtype, value) facts.

    Each numeric token within `span` tokens after an entity mention is
    attributed to the nearest preceding mention; its rtype comes from the
    lexical cue following the number. Each (entity, rtype) pair is emitted
    at most once, keeping the first mention.
    """
    entities = {r.entity for r in tables.records()}
    mentions = _entity_mentions(text, entities)
    facts: list[ExtractedFact] = []
    seen: set[tuple[str, str]] = set()
    m = 0
    for i, tok in enumerate(text):
        if not _is_number(tok):
            continue
        # Nearest mention ending before the number, within the span.
        while m < len(mentions) and mentions[m][0] < i:
            m += 1
        cand = mentions[m - 1] if m > 0 else None
        if cand is None or i - cand[0] > span:
            continue
        entity = cand[1]
        rtype = None
        nxt = text[i + 1] if i + 1 < len(text) else ""
        if nxt in _UNIGRAM_CUES:
            rtype = _UNIGRAM_CUES[nxt]
        elif (nxt == "of" and i + 4 < len(text) and _is_number(text[i + 2])
              and text[i + 3] == "field" and text[i + 4] == "goals"):
            rtype = "FGM"
        elif (nxt == "field" and i + 2 < len(text) and text[i + 2] == "goals"):
            rtype = "FGA"
        if rtype is None or (entity, rtype) in seen:
            continue
        seen.add((entity, rtype))
        facts.append(ExtractedFact(entity=entity, rtype=rtype, value=tok, position=i))
    return facts


def rg(generated: list[str], tables: TableSet, span: int = DEFAULT_SPAN) -> tuple[float, int]:
    """Relation generation: precision% of extracted facts against the tables,
    plus the number of extracted facts. No facts -> precision 0."""
    facts = extract_records(generated, tables, span)
    if not facts:
        return 0.0, 0
    correct = sum(1 for f in facts if tables.value_of(f.entity, f.rtype) == f.value)
    return 100.0 * correct / len(facts), len(facts)


def cs(generated: list[str], reference: list[str], tables: TableSet,
       span: int = DEFAULT_SPAN) -> tuple[float, float, float]:
    """Content selection P/R/F1 (%) over (entity, rtype, value) fact sets."""
    a = {(f.entity, f.rtype, f.value) for f in extract_records(generated, tables, span)}
    b = {(f.entity, f.rtype, f.value) for f in extract_records(reference, tables, span)}
    p = 100.0 * len(a & b) / len(a) if a else 0.0
    r = 100.0 * len(a & b) / len(b) if b else 0.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


def damerau_levenshtein(a, b) -> int:
    """Unrestricted Damerau-Levenshtein distance (insert, delete, substitute,
    transpose adjacent), allowing edits between transposed elements."""
    if a == b:
        return 0
    la, lb = len(a), len(b)
    inf = la + lb
    last_row: dict = {}
    # (la+2) x (lb+2) table with a sentinel row/column of `inf`.
    d = [[inf] * (lb + 2) for _ in range(la + 2)]
    for i in range(la + 1):
        d[i + 1][1] = i
    for j in range(lb + 1):
        d[1][j + 1] = j
    for i in range(1, la + 1):
        last_col = 0
        for j in range(1, lb + 1):
            k = last_row.get(b[j - 1], 0)
            l = last_col
            if a[i - 1] == b[j - 1]:
                cost = 0
                last_col = j
            else:
                cost = 1
            d[i + 1][j + 1] = min(
                d[i][j] + cost,          # substitute / match
                d[i + 1][j] + 1,         # insert
                d[i][j + 1] + 1,         # delete
                d[k][l] + (i - k - 1) + 1 + (j - l - 1),  # transpose
            )
        last_row[a[i - 1]] = i
    return d[la + 1][lb + 1]


def co(generated: list[str], reference: list[str], tables: TableSet,
       span: int = DEFAULT_SPAN) -> float:
    """Content ordering: 100 * (1 - normalized DL distance) between the
    position-ordered (entity, rtype) sequences of the two texts."""
    a = [(f.entity, f.rtype) for f in extract_records(generated, tables, span)]
    b = [(f.entity, f.rtype) for f in extract_records(reference, tables, span)]
    if not a and not b:
        return 100.0
    dist = damerau_levenshtein(a, b)
    return 100.0 * (1.0 - dist / max(len(a), len(b)))


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidates: list[list[str]], references: list[list[str]], max_n: int = 4) -> float:
    """Corpus-level BLEU-4 (modified n-gram precision, brevity penalty,
    no smoothing) on a 0-100 scale."""
    if len(candidates) != len(references):
        raise ValueError("candidates and references must pair up")
    if not candidates:
        return 0.0
    matched = [0] * max_n
    total = [0] * max_n
    cand_len = ref_len = 0
    for cand, ref in zip(candidates, references):
        cand_len += len(cand)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            cg = _ngrams(cand, n)
            rg_ = _ngrams(ref, n)
            total[n - 1] += sum(cg.values())
            matched[n - 1] += sum(min(c, rg_[g]) for g, c in cg.items())
    if any(t == 0 or m == 0 for m, t in zip(matched, total)):
        return 0.0
    log_prec = sum(math.log(m / t) for m, t in zip(matched, total)) / max_n
    bp = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len) if cand_len > 0 else 0.0
    return 100.0 * bp * math.exp(log_prec)


def evaluate(generated: dict[str, list[str]], examples: list[TableSet],
             span: int = DEFAULT_SPAN) -> MetricsReport:
    """Corpus-level report for generated summaries keyed by game_id.

    RG precision and CS are micro-averaged over facts; RG-# is the mean
    facts per summary; CO is the mean per-example score.
    """
    total_facts = correct_facts = 0
    inter = gen_facts = ref_facts = 0
    co_scores = []
    cands, refs = [], []
    n = 0
    for ts in examples:
        if ts.game_id not in generated:
            raise KeyError(f"no generated summary for game {ts.game_id}")
        cand = generated[ts.game_id]
        n += 1
        cands.append(cand)
        refs.append(ts.summary)
        facts = extract_records(cand, ts, span)
        total_facts += len(facts)
        correct_facts += sum(1 for f in facts if ts.value_of(f.entity, f.rtype) == f.value)
        a = {(f.entity, f.rtype, f.value) for f in facts}
        b = {(f.entity, f.rtype, f.value) for f in extract_records(ts.summary, ts, span)}
        inter += len(a & b)
        gen_facts += len(a)
        ref_facts += len(b)
        co_scores.append(co(cand, ts.summary, ts, span))
    rg_p = 100.0 * correct_facts / total_facts if total_facts else 0.0
    cs_p = 100.0 * inter / gen_facts if gen_facts else 0.0
    cs_r = 100.0 * inter / ref_facts if ref_facts else 0.0
    cs_f1 = 2 * cs_p * cs_r / (cs_p + cs_r) if cs_p + cs_r > 0 else 0.0
    return MetricsReport(
        rg_p=rg_p, rg_count=total_facts / n if n else 0.0,
        cs_p=cs_p, cs_r=cs_r, cs_f1=cs_f1,
        co_dld=sum(co_scores) / n if n else 100.0,
        bleu=bleu(cands, refs),
    )
