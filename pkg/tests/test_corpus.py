import pytest

from wmm import corpus
from wmm.cli import main
from wmm.explorer import explore
from wmm.pipeline import analyse

MANIFEST = corpus.corpus_manifest()


class TestManifest:
    def test_contents(self):
        assert set(corpus.names()) == {
            "sb", "sb+fence", "lb", "mp", "mp+lwfence", "mp+lwfences", "iriw", "iriw+dps",
            "pgsql", "pgsql+patch",
        }
        assert len(MANIFEST) == 50

    @pytest.mark.parametrize("row", [("sb", "tso", "violated"), ("iriw+dps", "rmo", "safe"),
                                     ("pgsql+patch", "power", "safe")])
    def test_examples(self, row):
        assert row in MANIFEST

    def test_metadata(self):
        meta = corpus.metadata("pgsql")
        assert meta["unwind"] == 2 and meta["description"]


@pytest.mark.parametrize("name,model,expected", MANIFEST)
@pytest.mark.parametrize("strategy", ["all", "one_per_cycle"])
def test_expected_verdict(name, model, expected, strategy):
    if name == "pgsql" and model == "power" and strategy == "all":
        pytest.skip("covered by the acceptance suite (slow)")
    res = analyse(corpus.load(name), model, strategy)
    v = explore(res.transformed, loop_unwind=corpus.metadata(name)["unwind"])
    assert v.status == expected
    assert v.kind != "bound"


def test_cli_corpus_run(capsys):
    assert main(["--pairs", "one-per-cycle", "corpus"]) == 0
    out = capsys.readouterr().out
    assert out.count("ok") == 50 and "FAIL" not in out
