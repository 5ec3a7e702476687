from pathlib import Path

import pytest

from regen_goldens import BOTTLENECK, CASES, FIXTURE, GOLDEN

from nfcongest.cli import main


@pytest.mark.parametrize("name, args", CASES, ids=[c[0] for c in CASES])
def test_table_matches_golden(capsys, name, args):
    assert main(["analyze", str(FIXTURE), *args]) == 0
    assert capsys.readouterr().out == (GOLDEN / f"{name}.txt").read_text()


def test_bottleneck_matches_golden(capsys):
    assert main(["trace-bottleneck", str(FIXTURE), *BOTTLENECK]) == 0
    assert capsys.readouterr().out == (GOLDEN / "bottleneck.txt").read_text()


def test_fixture_is_committed():
    assert FIXTURE.stat().st_size > 0
    assert isinstance(FIXTURE, Path)
