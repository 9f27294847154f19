"""Deterministic template summarizer: an introduction with both teams'
points and the winner, the six top scorers' stat lines, and a closing
sentence. Every number it emits is a table value, which makes it both a
comparison system and a consistent summary source for synthetic corpora.
"""

from __future__ import annotations

from dataclasses import dataclass

from .data import HOME, TableSet


class TemplateSchemaError(ValueError):
    """The tables lack a column the template patterns need."""


@dataclass(frozen=True)
class TemplateConfig:
    top_k_players: int = 6
    intro_pattern: str = ("The {home} scored {home_pts} points and the {vis} scored "
                          "{vis_pts} points , with the {winner} taking the win .")
    intro_tie_pattern: str = ("The {home} scored {home_pts} points and the {vis} scored "
                              "{vis_pts} points , and the game ended in a tie .")
    player_pattern: str = ("{name} scored {PTS} points with {REB} rebounds and {AST} "
                           "assists , making {FGM} of {FGA} field goals .")
    conclusion_pattern: str = "The two teams will meet again soon ."


_META_SLOTS = {"home", "vis", "home_pts", "vis_pts", "winner", "name"}


def _fill(pattern: str, values: dict[str, str]) -> list[str]:
    out = []
    for tok in pattern.split():
        if tok.startswith("{") and tok.endswith("}"):
            out.append(values[tok[1:-1]])
        else:
            out.append(tok)
    return out


def _pattern_slots(pattern: str) -> set[str]:
    return {tok[1:-1] for tok in pattern.split() if tok.startswith("{") and tok.endswith("}")}


def generate_template(tables: TableSet, config: TemplateConfig = TemplateConfig()) -> list[str]:
    """Emit the template summary for one game as a token list.

    Players are ranked by points descending, ties broken by entity name
    ascending; when fewer than top_k_players exist, all are described.
    """
    team_grid = tables.grids["teams"]
    if len(team_grid) != 2:
        raise TemplateSchemaError(f"game {tables.game_id}: team grid must have exactly 2 rows")

    def stats_of(row):
        return {r.rtype: r.value for r in row}

    player_rows = tables.grids["home_players"] + tables.grids["vis_players"]
    player_cols = {r.rtype for row in player_rows for r in row}
    needed = _pattern_slots(config.player_pattern) - _META_SLOTS
    missing = sorted(needed - player_cols) if player_rows else []
    if player_rows and missing:
        raise TemplateSchemaError(
            f"game {tables.game_id}: player tables lack column(s) {missing}")
    if "PTS" not in stats_of(team_grid[0]) or "PTS" not in stats_of(team_grid[1]):
        raise TemplateSchemaError(f"game {tables.game_id}: team grid lacks a PTS column")

    home_row = team_grid[0] if team_grid[0][0].feature == HOME else team_grid[1]
    vis_row = team_grid[1] if home_row is team_grid[0] else team_grid[0]
    home_pts = int(stats_of(home_row)["PTS"])
    vis_pts = int(stats_of(vis_row)["PTS"])
    slots = {
        "home": home_row[0].entity, "vis": vis_row[0].entity,
        "home_pts": str(home_pts), "vis_pts": str(vis_pts),
    }
    if home_pts == vis_pts:
        tokens = _fill(config.intro_tie_pattern, slots)
    else:
        slots["winner"] = slots["home"] if home_pts > vis_pts else slots["vis"]
        tokens = _fill(config.intro_pattern, slots)

    def sort_key(row):
        st = stats_of(row)
        try:
            pts = int(st["PTS"])
        except (KeyError, ValueError) as e:
            raise TemplateSchemaError(
                f"game {tables.game_id}: player {row[0].entity!r} lacks numeric PTS") from e
        return (-pts, row[0].entity)

    for row in sorted(player_rows, key=sort_key)[:config.top_k_players]:
        st = stats_of(row)
        st["name"] = row[0].entity
        tokens += _fill(config.player_pattern, st)

    tokens += _fill(config.conclusion_pattern, {})
    return tokens
