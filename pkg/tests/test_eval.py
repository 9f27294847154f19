"""Tests for the rule extractor, RG/CS/CO, Damerau-Levenshtein and BLEU."""

import itertools
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tablegen.baseline import generate_template
from tablegen import evalmetrics as ev

from conftest import make_tableset


def toks(s):
    return s.split()


class TestExtractRecords:
    def test_basic_points_mention(self, fixture_game):
        facts = ev.extract_records(toks("Avery scored 18 points ."), fixture_game)
        assert facts == [ev.ExtractedFact("Avery", "PTS", "18", 2)]

    def test_empty_text(self, fixture_game):
        assert ev.extract_records([], fixture_game) == []

    def test_template_output_recovers_inserted_facts(self, fixture_game):
        tokens = generate_template(fixture_game)
        facts = ev.extract_records(tokens, fixture_game)
        keys = {(f.entity, f.rtype) for f in facts}
        expected = {("Sharks", "PTS"), ("Wolves", "PTS")}
        for p in ("Avery", "Blake", "Casey", "Devon"):
            expected |= {(p, t) for t in ("PTS", "REB", "AST", "FGM", "FGA")}
        assert keys == expected
        assert all(fixture_game.value_of(f.entity, f.rtype) == f.value for f in facts)

    def test_attribution_goes_to_nearest_entity(self, fixture_game):
        facts = ev.extract_records(
            toks("Avery and Casey played . Casey scored 22 points ."), fixture_game)
        assert facts == [ev.ExtractedFact("Casey", "PTS", "22", 7)]

    def test_number_outside_span_is_ignored(self, fixture_game):
        filler = ["then"] * 16
        facts = ev.extract_records(["Avery"] + filler + toks("18 points ."), fixture_game)
        assert facts == []

    def test_number_without_cue_is_ignored(self, fixture_game):
        assert ev.extract_records(toks("Avery wore 18 ."), fixture_game) == []

    def test_each_entity_rtype_pair_kept_once(self, fixture_game):
        facts = ev.extract_records(
            toks("Avery scored 18 points . Avery scored 11 points ."), fixture_game)
        assert len(facts) == 1 and facts[0].value == "18"

    def test_field_goal_pair_cue(self, fixture_game):
        facts = ev.extract_records(toks("Avery made 7 of 15 field goals ."), fixture_game)
        assert {(f.rtype, f.value) for f in facts} == {("FGM", "7"), ("FGA", "15")}

    def test_multi_token_entities_match(self):
        ts = make_tableset(home={"Al Jefferson": {"PTS": "18", "AST": "4", "REB": "7",
                                                  "FGM": "9", "FGA": "19"}})
        facts = ev.extract_records(toks("Al Jefferson scored 18 points ."), ts)
        assert facts[0].entity == "Al Jefferson" and facts[0].value == "18"


class TestRG:
    def test_template_is_100(self, fixture_game):
        p, _ = ev.rg(generate_template(fixture_game), fixture_game)
        assert p == 100.0

    def test_one_correct_one_contradicted_is_50(self, fixture_game):
        text = toks("Avery scored 18 points and grabbed 99 rebounds .")
        p, count = ev.rg(text, fixture_game)
        assert count == 2
        assert p == 50.0

    def test_no_facts_is_zero(self, fixture_game):
        assert ev.rg(toks("nothing to see here"), fixture_game) == (0.0, 0)


class TestCS:
    def test_identical_texts(self, fixture_game):
        text = generate_template(fixture_game)
        assert ev.cs(text, text, fixture_game) == (100.0, 100.0, 100.0)

    def test_disjoint_fact_sets(self, fixture_game):
        a = toks("Avery scored 18 points .")
        b = toks("Casey scored 22 points .")
        assert ev.cs(a, b, fixture_game) == (0.0, 0.0, 0.0)

    def test_subset_two_of_four(self, fixture_game):
        gen = toks("Avery scored 18 points with 7 rebounds .")
        ref = toks("Avery scored 18 points with 7 rebounds . Avery had 4 assists "
                   "and Blake scored 11 points .")
        p, r, f1 = ev.cs(gen, ref, fixture_game)
        assert (p, r) == (100.0, 50.0)
        assert abs(f1 - 200.0 / 3.0) < 1e-9

    def test_symmetry_swaps_p_and_r(self, fixture_game):
        a = toks("Avery scored 18 points .")
        b = toks("Avery scored 18 points with 7 rebounds .")
        pa, ra, _ = ev.cs(a, b, fixture_game)
        pb, rb, _ = ev.cs(b, a, fixture_game)
        assert (pa, ra) == (rb, pb)


class TestDamerauLevenshtein:
    def test_transposition_is_one(self):
        assert ev.damerau_levenshtein(list("abc"), list("acb")) == 1

    def test_classic_cases(self):
        assert ev.damerau_levenshtein("kitten", "sitting") == 3
        assert ev.damerau_levenshtein("", "abc") == 3
        assert ev.damerau_levenshtein("abc", "abc") == 0
        # Edit between transposed elements: ca -> ac -> abc.
        assert ev.damerau_levenshtein("ca", "abc") == 2

    @given(st.text(alphabet="abc", max_size=6), st.text(alphabet="abc", max_size=6))
    @settings(max_examples=300, deadline=None)
    def test_metric_properties(self, a, b):
        dist = ev.damerau_levenshtein(a, b)
        assert dist == ev.damerau_levenshtein(b, a)
        assert (dist == 0) == (a == b)
        assert dist <= max(len(a), len(b))


class TestCO:
    def test_identical_sequences(self, fixture_game):
        text = generate_template(fixture_game)
        assert ev.co(text, text, fixture_game) == 100.0

    def test_single_transposition(self, fixture_game):
        # Fact key sequences [Avery-PTS, Avery-REB, Avery-AST] vs the last
        # two swapped: one transposition, score (1 - 1/3) * 100.
        a = toks("Avery scored 18 points with 7 rebounds and 4 assists .")
        b = toks("Avery scored 18 points with 4 assists and 7 rebounds .")
        assert abs(ev.co(a, b, fixture_game) - 200.0 / 3.0) < 1e-9

    def test_both_empty_is_100(self, fixture_game):
        assert ev.co(["x"], ["y"], fixture_game) == 100.0

    def test_symmetric(self, fixture_game):
        a = toks("Avery scored 18 points .")
        b = toks("Casey scored 22 points and Avery scored 18 points .")
        assert ev.co(a, b, fixture_game) == ev.co(b, a, fixture_game)


class TestBLEU:
    def test_identity_is_100(self):
        corpus = [toks("the cat sat on the mat"), toks("a stitch in time saves nine")]
        assert ev.bleu(corpus, corpus) == pytest.approx(100.0)

    def test_zero_unigram_overlap_is_0(self):
        assert ev.bleu([toks("a b c d")], [toks("w x y z")]) == 0.0

    def test_hand_case_two_sentence_corpus(self):
        # p1=8/10, p2=5/8, p3=3/6, p4=1/4; geometric mean = (1/16)^(1/4) = 1/2.
        # BP = exp(1 - 11/10). BLEU = 100 * 0.5 * exp(-0.1).
        cands = [toks("the cat sat on the mat"), toks("a quick brown fox")]
        refs = [toks("the cat sat on a mat"), toks("the quick brown fox jumps")]
        expected = 100.0 * 0.5 * math.exp(-0.1)
        assert ev.bleu(cands, refs) == pytest.approx(expected, abs=1e-4)

    def test_hand_case_no_brevity_penalty(self):
        # Candidate longer than reference: BP = 1.
        # p1=4/5, p2=3/4, p3=2/3, p4=1/2 -> (0.2)^(1/4).
        got = ev.bleu([toks("a b c d e")], [toks("a b c d")])
        assert got == pytest.approx(100.0 * 0.2 ** 0.25, abs=1e-4)

    def test_hand_case_zero_fourgram_overlap(self):
        # All lower orders overlap but no 4-gram matches: BLEU = 0, no smoothing.
        assert ev.bleu([toks("x y z w")], [toks("x q y w")]) == 0.0

    def test_invariant_to_candidate_ordering(self):
        cands = [toks("a b c d e"), toks("the cat sat on the mat")]
        refs = [toks("a b c d"), toks("the cat sat on a mat")]
        flipped = ev.bleu(cands[::-1], refs[::-1])
        assert ev.bleu(cands, refs) == pytest.approx(flipped)


class TestEvaluate:
    def test_references_against_themselves(self, toy_dataset):
        generated = {ts.game_id: list(ts.summary) for ts in toy_dataset.train}
        report = ev.evaluate(generated, toy_dataset.train)
        assert report.bleu == pytest.approx(100.0)
        assert report.cs_f1 == pytest.approx(100.0)
        assert report.rg_p == pytest.approx(100.0)
        assert report.co_dld == pytest.approx(100.0)

    def test_json_column_names(self, toy_dataset):
        generated = {ts.game_id: list(ts.summary) for ts in toy_dataset.train}
        d = ev.evaluate(generated, toy_dataset.train).to_json_dict()
        assert set(d) == {"RG-P%", "RG-#", "CS-P%", "CS-R%", "CS-F1%", "CO-DLD%", "BLEU"}

    def test_missing_game_raises(self, toy_dataset):
        with pytest.raises(KeyError):
            ev.evaluate({}, toy_dataset.train)
