import json
import random

from oracles import naive_matches
from termweave.corpus import Segment
from termweave.glossary import Glossary, GlossaryEntry, load_glossary
from termweave.retrieval import (
    Retriever,
    matches_to_jsonl,
    retrieve,
    retrieve_document,
)


def seg(text, sid="s", ordinal=0):
    return Segment(sid, ordinal, text)


def make_glossary(*sources):
    return Glossary(tuple(
        GlossaryEntry(f"e{i}", src, f"t{i}") for i, src in enumerate(sources)))


class TestRetrieve:
    def test_match_carries_original_surface(self):
        g = make_glossary("estación")
        matches = retrieve(seg("La ESTACIÓN central."), g)
        assert len(matches) == 1
        m = matches[0]
        assert (m.entry_id, m.start, m.end) == ("e0", 3, 11)
        assert m.matched_surface == "ESTACIÓN"

    def test_nested_terms_both_retrieved(self):
        g = make_glossary("pinturas rupestres", "pintura")
        matches = retrieve(seg("Las pinturas rupestres."), g)
        # "pintura" is blocked inside "pinturas" (letter follows), so
        # only the long term fires here.
        assert [m.entry_id for m in matches] == ["e0"]

        matches = retrieve(seg("La pintura y las pinturas rupestres."), g)
        assert [m.entry_id for m in matches] == ["e1", "e0"]

    def test_noise_entries_retrieved_alike(self, shared_data_dir):
        g = load_glossary(shared_data_dir / "glossary.tsv")
        matches = retrieve(seg("Cerca de la estación."), g)
        assert [m.entry_id for m in matches] == ["n06"]

    def test_fixture_document_summary(self, shared_data_dir):
        g = load_glossary(shared_data_dir / "glossary.tsv")
        from termweave.corpus import load_segments
        segments = load_segments(shared_data_dir / "segments.jsonl")
        by_segment, summary = retrieve_document(segments, g)
        assert summary.relevant_matches == 19
        assert summary.distinct_relevant_entries == 15
        assert summary.total_matches == 20  # + the noise station hit
        assert summary.distinct_entries == 16
        assert by_segment["s8"] == []

    def test_empty_glossary(self):
        g = Glossary(())
        assert Retriever(g).retrieve(seg("texto")) == []

    def test_match_ordering_within_segment(self):
        g = make_glossary("figura antropomorfa", "figura")
        matches = retrieve(seg("Una figura antropomorfa y una figura."), g)
        assert [(m.entry_id, m.start) for m in matches] == [
            ("e0", 4), ("e1", 4), ("e1", 30)]

    def test_jsonl_rendering(self):
        g = make_glossary("sol")
        lines = matches_to_jsonl(retrieve(seg("sol"), g)).splitlines()
        assert json.loads(lines[0]) == {
            "entry_id": "e0", "segment_id": "s", "start": 0, "end": 3,
            "matched_surface": "sol"}


WORDS = ["sol", "mar", "pinturas", "rupestres", "pinturas rupestres",
         "ocre", "ocre rojo", "cal", "datación", "estación", "ñu",
         "straße", "x7", "a-b"]
FILLER = ["el", "la", "de", "y", "7", "-", ",", ".", "(", ")", "EL",
          "SOL", "PINTURAS", "OCRE", "DATACIÓN"]


class TestOracleEquivalence:
    def test_thousand_random_pairs(self):
        """Automaton output equals the quadratic reference matcher on
        1200 randomized (glossary, segment) pairs."""
        rng = random.Random(99)
        checked = 0
        while checked < 1200:
            n_terms = rng.randint(1, 6)
            sources = rng.sample(WORDS, n_terms)
            folded = sorted({s.casefold() for s in sources})
            g = Glossary(tuple(
                GlossaryEntry(f"e{i}", src, f"t{i}")
                for i, src in enumerate(folded)))
            tokens = [rng.choice(WORDS + FILLER)
                      for _ in range(rng.randint(0, 12))]
            glue = rng.choice([" ", "", ", ", "-"])
            text = glue.join(tokens)
            expected = naive_matches(folded, text)
            got = [(folded.index(g.entry(m.entry_id).source_term), m.start, m.end)
                   for m in Retriever(g).retrieve(seg(text))]
            assert got == expected, (folded, text)
            checked += 1

    def test_surface_always_folds_to_source_key(self):
        rng = random.Random(7)
        g = make_glossary(*sorted({w.casefold() for w in WORDS}))
        retriever = Retriever(g)
        by_id = {e.entry_id: e for e in g}
        for _ in range(300):
            text = " ".join(rng.choice(WORDS + FILLER) for _ in range(10))
            for m in retriever.retrieve(seg(text)):
                assert m.matched_surface.casefold() == by_id[m.entry_id].source_key
