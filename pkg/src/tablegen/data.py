"""Corpus ingestion, the record/table data model, and timelines.

Each game is three grids of records (home players, visiting players,
teams) plus a pre-tokenized reference summary. Timelines are date-sorted
sequences of all records sharing one (entity, type) pair across the
whole corpus.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date as _date
from pathlib import Path

import numpy as np

TABLE_IDS = ("home_players", "vis_players", "teams")
HOME = "home"
VISITING = "visiting"

PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<s>", "</s>"
RESERVED_TOKENS = (PAD, UNK, BOS, EOS)


class SchemaError(ValueError):
    """A corpus example violates the expected structure."""


@dataclass(frozen=True)
class Record:
    """One table cell: entity/type/value plus its home-court feature,
    the game date (ordinal day), and its grid position."""

    entity: str
    rtype: str
    value: str
    feature: str  # HOME or VISITING
    date: int
    table_id: str
    row: int
    col: int

    def __post_init__(self):
        if not self.entity or not self.value:
            raise SchemaError(f"record ({self.entity!r}, {self.rtype!r}) has an empty field")
        if self.feature not in (HOME, VISITING):
            raise SchemaError(f"record feature must be home/visiting, got {self.feature!r}")


@dataclass
class TableSet:
    """The three tables of one game plus its reference summary."""

    game_id: str
    date: int
    grids: dict[str, list[list[Record]]]
    summary: list[str]

    def records(self):
        for tid in TABLE_IDS:
            for row in self.grids[tid]:
                yield from row

    def grid_shape(self, table_id: str) -> tuple[int, int]:
        grid = self.grids[table_id]
        return (len(grid), len(grid[0]) if grid else 0)

    def value_of(self, entity: str, rtype: str) -> str | None:
        for r in self.records():
            if r.entity == entity and r.rtype == rtype:
                return r.value
        return None


class Vocabulary:
    """Token <-> dense-id bijection with reserved padding/unknown/start/end ids."""

    def __init__(self, tokens: list[str]):
        if list(tokens[:4]) != list(RESERVED_TOKENS):
            raise SchemaError("vocabulary must start with the reserved tokens")
        self.tokens = list(tokens)
        self._index = {t: i for i, t in enumerate(self.tokens)}
        if len(self._index) != len(self.tokens):
            raise SchemaError("vocabulary contains duplicate tokens")

    @classmethod
    def build(cls, tokens) -> "Vocabulary":
        seen = sorted(set(tokens) - set(RESERVED_TOKENS))
        return cls(list(RESERVED_TOKENS) + seen)

    def id(self, token: str) -> int:
        return self._index.get(token, 1)  # UNK

    def token(self, idx: int) -> str:
        return self.tokens[idx]

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens


@dataclass
class Dataset:
    train: list[TableSet]
    dev: list[TableSet]
    test: list[TableSet]
    vocabulary: Vocabulary

    def split(self, name: str) -> list[TableSet]:
        if name not in ("train", "dev", "test"):
            raise SchemaError(f"unknown split {name!r}")
        return getattr(self, name)

    def examples(self):
        yield from self.train
        yield from self.dev
        yield from self.test

    def __eq__(self, other) -> bool:
        return (isinstance(other, Dataset)
                and self.train == other.train and self.dev == other.dev
                and self.test == other.test and self.vocabulary == other.vocabulary)


@dataclass(frozen=True)
class CorpusSchema:
    """Names of the per-split JSON files inside a corpus directory."""

    train: str = "train.json"
    dev: str = "dev.json"
    test: str = "test.json"


def _parse_grid(game_id: str, table_id: str, obj: dict, day: int) -> list[list[Record]]:
    rows = []
    columns: list[str] | None = None
    for i, (entity, cells) in enumerate(obj.items()):
        if not isinstance(cells, dict):
            raise SchemaError(f"game {game_id}: row {entity!r} of {table_id} is not an object")
        if columns is None:
            columns = list(cells.keys())
        elif set(cells.keys()) != set(columns):
            raise SchemaError(f"game {game_id}: rows of {table_id} have differing columns")
        if table_id == "home_players":
            feature = HOME
        elif table_id == "vis_players":
            feature = VISITING
        else:
            feature = HOME if i == 0 else VISITING  # first team row is the home team
        rows.append([Record(entity=entity, rtype=c, value=str(cells[c]), feature=feature,
                            date=day, table_id=table_id, row=i, col=j)
                     for j, c in enumerate(columns)])
    return rows


def _parse_example(obj: dict) -> TableSet:
    game_id = obj.get("game_id")
    if not game_id:
        raise SchemaError("example without a game_id")
    if "date" not in obj:
        raise SchemaError(f"game {game_id}: missing date")
    try:
        day = _date.fromisoformat(obj["date"]).toordinal()
    except ValueError as e:
        raise SchemaError(f"game {game_id}: bad date {obj['date']!r}") from e
    grids = {}
    for tid in TABLE_IDS:
        if tid not in obj:
            raise SchemaError(f"game {game_id}: missing table {tid!r}")
        grids[tid] = _parse_grid(game_id, tid, obj[tid], day)
    summary = obj.get("summary")
    if summary is None or not isinstance(summary, list):
        raise SchemaError(f"game {game_id}: missing summary token list")
    return TableSet(game_id=game_id, date=day, grids=grids, summary=[str(t) for t in summary])


def build_vocabulary(train: list[TableSet]) -> Vocabulary:
    tokens = set()
    for ts in train:
        tokens.update(ts.summary)
        for r in ts.records():
            tokens.update((r.value, r.entity, r.rtype))
    return Vocabulary.build(tokens)


def load_corpus(path, schema: CorpusSchema = CorpusSchema()) -> Dataset:
    """Load a corpus directory holding one JSON file per split.

    A missing train file is an error; missing dev/test files yield empty
    splits. The vocabulary is built from training summaries plus all
    record values, entities and types in training tables.
    """
    root = Path(path)
    if not root.exists():
        raise FileNotFoundError(f"corpus path does not exist: {root}")

    def read_split(fname: str, required: bool) -> list[TableSet]:
        f = root / fname
        if not f.exists():
            if required:
                raise FileNotFoundError(f"missing split file: {f}")
            return []
        with open(f, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, list):
            raise SchemaError(f"{f} does not contain a list of examples")
        return [_parse_example(obj) for obj in raw]

    train = read_split(schema.train, required=True)
    dev = read_split(schema.dev, required=False)
    test = read_split(schema.test, required=False)

    seen: dict[str, str] = {}
    for name, split in (("train", train), ("dev", dev), ("test", test)):
        for ts in split:
            if ts.game_id in seen:
                raise SchemaError(f"game {ts.game_id} appears in both {seen[ts.game_id]} and {name}")
            seen[ts.game_id] = name
    for ts in train:
        if len(ts.summary) < 1:
            raise SchemaError(f"game {ts.game_id}: training example with empty summary")

    return Dataset(train=train, dev=dev, test=test, vocabulary=build_vocabulary(train))


def _example_to_obj(ts: TableSet) -> dict:
    obj = {"game_id": ts.game_id, "date": _date.fromordinal(ts.date).isoformat()}
    for tid in TABLE_IDS:
        table = {}
        for row in ts.grids[tid]:
            table[row[0].entity] = {r.rtype: r.value for r in row}
        obj[tid] = table
    obj["summary"] = list(ts.summary)
    return obj


def save_corpus(dataset: Dataset, path, schema: CorpusSchema = CorpusSchema()) -> None:
    """Write the three split files using the same schema load_corpus reads."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    for fname, split in ((schema.train, dataset.train), (schema.dev, dataset.dev),
                         (schema.test, dataset.test)):
        with open(root / fname, "w", encoding="utf-8") as fh:
            json.dump([_example_to_obj(ts) for ts in split], fh, indent=1)
            fh.write("\n")


@dataclass
class TimelineStore:
    """Date-sorted record sequences keyed by (entity, rtype)."""

    index: dict[tuple[str, str], list[Record]]
    num_entities: int
    num_types: int


def build_timelines(dataset: Dataset) -> TimelineStore:
    """Collect every record of the corpus into per-(entity, type) timelines,
    sorted by date ascending with ties broken by game_id."""
    keyed: dict[tuple[str, str], list[tuple[int, str, Record]]] = {}
    for ts in dataset.examples():
        for r in ts.records():
            keyed.setdefault((r.entity, r.rtype), []).append((r.date, ts.game_id, r))
    index = {}
    for k, items in keyed.items():
        items.sort(key=lambda t: (t[0], t[1]))
        index[k] = [r for _, _, r in items]
    entities = {e for e, _ in index}
    types = {c for _, c in index}
    return TimelineStore(index=index, num_entities=len(entities), num_types=len(types))


def history_window(record: Record, store: TimelineStore, w: int) -> list[Record]:
    """The w most recent records of the same (entity, rtype) strictly before
    record.date, date-ascending. Unknown keys yield an empty list."""
    if w < 1:
        raise ValueError(f"history window must be >= 1, got {w}")
    timeline = store.index.get((record.entity, record.rtype))
    if not timeline:
        return []
    earlier = [r for r in timeline if r.date < record.date]
    return earlier[-w:]


# ---------------------------------------------------------------------------
# Synthetic toy corpora

_TEAM_POOL = ("Sharks", "Wolves", "Falcons", "Comets", "Rhinos", "Pumas",
              "Vipers", "Bisons")
_PLAYER_POOL = ("Avery", "Blake", "Casey", "Devon", "Ellis", "Frankie", "Gray",
                "Hollis", "Indigo", "Jules", "Kendall", "Lane", "Marlow", "Noor",
                "Oakley", "Parker", "Quinn", "Reese", "Sawyer", "Tatum", "Umber",
                "Vesper", "Winter", "Xen", "Yael", "Zephyr")

PLAYER_COLUMNS = ("PTS", "AST", "REB", "FGM", "FGA")
TEAM_COLUMNS = ("PTS", "WIN")
TOY_EPOCH = _date(2023, 1, 1).toordinal()


def gen_toy_corpus(seed: int, games: int, players_per_team: int) -> Dataset:
    """Deterministic synthetic corpus with a fixed two-team roster playing
    consecutive-date games; summaries come from the template generator so
    they are consistent with the tables by construction. All games land in
    the train split.
    """
    if games < 1 or players_per_team < 1:
        raise ValueError("games and players_per_team must be >= 1")
    if 2 * players_per_team > len(_PLAYER_POOL):
        raise ValueError(f"at most {len(_PLAYER_POOL) // 2} players per team supported")
    from .baseline import generate_template  # avoid import cycle at module load

    rng = np.random.default_rng(seed)
    teams = list(rng.choice(_TEAM_POOL, size=2, replace=False))
    players = list(rng.choice(_PLAYER_POOL, size=2 * players_per_team, replace=False))
    rosters = {HOME: players[:players_per_team], VISITING: players[players_per_team:]}

    examples = []
    for g in range(games):
        day = TOY_EPOCH + g
        game_id = f"toy{seed}-g{g:04d}"
        grids: dict[str, list[list[Record]]] = {}
        team_pts = {}
        for tid, side in (("home_players", HOME), ("vis_players", VISITING)):
            rows = []
            total = 0
            for i, name in enumerate(rosters[side]):
                fgm = int(rng.integers(1, 13))
                fga = fgm + int(rng.integers(0, 11))
                pts = int(rng.integers(2, 33))
                ast = int(rng.integers(0, 12))
                reb = int(rng.integers(0, 15))
                total += pts
                stats = {"PTS": pts, "AST": ast, "REB": reb, "FGM": fgm, "FGA": fga}
                rows.append([Record(entity=name, rtype=c, value=str(stats[c]), feature=side,
                                    date=day, table_id=tid, row=i, col=j)
                             for j, c in enumerate(PLAYER_COLUMNS)])
            grids[tid] = rows
            team_pts[side] = total
        team_rows = []
        for i, side in enumerate((HOME, VISITING)):
            other = VISITING if side == HOME else HOME
            stats = {"PTS": team_pts[side], "WIN": int(team_pts[side] > team_pts[other])}
            team_rows.append([Record(entity=teams[i], rtype=c, value=str(stats[c]), feature=side,
                                     date=day, table_id="teams", row=i, col=j)
                              for j, c in enumerate(TEAM_COLUMNS)])
        grids["teams"] = team_rows
        ts = TableSet(game_id=game_id, date=day, grids=grids, summary=[])
        ts.summary = generate_template(ts)
        examples.append(ts)

    return Dataset(train=examples, dev=[], test=[],
                   vocabulary=build_vocabulary(examples))
