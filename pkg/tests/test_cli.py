import io
import json
from pathlib import Path

import pytest

from artifact.cli import main
from artifact.series import from_document

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
NARAIN = ["--lattice", str(CONFIGS / "narain_lattice.json"),
          "--projection", str(CONFIGS / "narain_projection.json")]
A1 = ["--lattice", str(CONFIGS / "a1_lattice.json")]


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out)
    return code, out.getvalue()


def test_spectrum_lists_the_narain_ground_states():
    code, text = run("spectrum", *NARAIN, "--max-energy", "1/2", "--box", "1")
    assert code == 0
    rows = [line.split("\t") for line in text.strip().splitlines()[1:]]
    assert ["0", "0", "[0, 0]", "1"] in rows
    quarter = [r for r in rows if r[:2] == ["1/4", "1/4"]]
    assert len(quarter) == 4


def test_spectrum_json_has_rational_strings():
    code, text = run("spectrum", *NARAIN, "--max-energy", "1", "--box", "1", "--format", "json")
    assert code == 0
    rows = json.loads(text)
    assert {"h": "0", "hbar": "1", "alpha": [0, 0], "dim": 1} in rows


def test_expand_free_term_json_round_trip():
    code, text = run("expand", "--cor4", str(CONFIGS / "free_term.json"),
                     "--paren", "1(2(34))", "--order", "2", "--format", "json")
    assert code == 0
    g = from_document(json.loads(text))
    assert len(g.terms) == 2 and set(g.terms.values()) == {1, -1}


def test_correlator_text_output():
    code, text = run("correlator", *NARAIN, "--states", str(CONFIGS / "narain_states.json"),
                     "--paren", "1(2(3(4*)))", "--order", "1")
    assert code == 0
    assert text.startswith("# region")


def test_check_passes_and_mutation_fails():
    code, text = run("check", *A1, "--skew", "--order", "2")
    assert code == 0 and text.startswith("PASS skew")
    code, text = run("check", *A1, "--skew", "--order", "2", "--mutate", "negate_sign")
    assert code == 1 and text.startswith("FAIL skew")


def test_check_json_reports():
    code, text = run("check", *A1, "--skew", "--order", "2", "--format", "json")
    assert code == 0
    (rep,) = json.loads(text)
    assert rep["status"] == "pass" and rep["witnesses"] == []


@pytest.mark.parametrize("argv", [
    ["check", "--lattice", "no-such-file.json", "--skew"],
    ["expand", "--cor4", str(CONFIGS / "free_term.json"), "--paren", "1(2(34", "--order", "2"],
    ["check", *A1, "--suite", "bogus"],
])
def test_bad_input_exits_with_status_two(argv, capsys):
    code, _ = run(*argv)
    assert code == 2
    assert capsys.readouterr().err.startswith("error:")


def test_malformed_lattice_file(tmp_path, capsys):
    bad = tmp_path / "lat.json"
    bad.write_text('{"rank": 2, "gram": [[2]]}')
    code, _ = run("spectrum", "--lattice", str(bad), "--max-energy", "1")
    assert code == 2
    assert "rank" in capsys.readouterr().err


def test_negative_order_is_a_usage_error():
    with pytest.raises(SystemExit) as info:
        run("expand", "--cor4", "x.json", "--paren", "1(2(34))", "--order", "-1")
    assert info.value.code == 2
