import numpy as np
import pytest

from tablegen.data import HOME, VISITING, Record, TableSet


def make_tableset(game_id="g1", date=738521, home=None, vis=None, teams=None, summary=None):
    """Hand-build a TableSet from {entity: {col: value}} dicts (insertion order kept)."""
    home = home if home is not None else {
        "Avery": {"PTS": "18", "AST": "4", "REB": "7", "FGM": "7", "FGA": "15"},
        "Blake": {"PTS": "11", "AST": "2", "REB": "3", "FGM": "4", "FGA": "9"},
    }
    vis = vis if vis is not None else {
        "Casey": {"PTS": "22", "AST": "6", "REB": "5", "FGM": "9", "FGA": "17"},
        "Devon": {"PTS": "8", "AST": "1", "REB": "9", "FGM": "3", "FGA": "8"},
    }
    teams = teams if teams is not None else {
        "Sharks": {"PTS": "101", "WIN": "1"},
        "Wolves": {"PTS": "98", "WIN": "0"},
    }

    def grid(obj, table_id, feature_fn):
        rows = []
        for i, (entity, cells) in enumerate(obj.items()):
            cols = list(cells.keys())
            rows.append([Record(entity=entity, rtype=c, value=str(cells[c]),
                                feature=feature_fn(i), date=date, table_id=table_id,
                                row=i, col=j)
                         for j, c in enumerate(cols)])
        return rows

    grids = {
        "home_players": grid(home, "home_players", lambda i: HOME),
        "vis_players": grid(vis, "vis_players", lambda i: VISITING),
        "teams": grid(teams, "teams", lambda i: HOME if i == 0 else VISITING),
    }
    return TableSet(game_id=game_id, date=date, grids=grids,
                    summary=summary if summary is not None else ["placeholder", "."])


@pytest.fixture
def fixture_game():
    return make_tableset()


@pytest.fixture(scope="session")
def toy_dataset():
    from tablegen.data import gen_toy_corpus
    return gen_toy_corpus(seed=7, games=4, players_per_team=2)
