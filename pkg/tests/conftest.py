import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sokoshape.levels import parse_xsb  # noqa: E402

CORRIDOR = "#####\n#@$.#\n#####"
OPEN_ROOM = "#######\n#@    #\n#     #\n#  $  #\n#    .#\n#     #\n#######"
TWO_BOX = "#######\n#     #\n# $.  #\n#  @  #\n# $.  #\n#     #\n#######"
CORNER_DEAD = "######\n#$  .#\n#  @ #\n######"


@pytest.fixture
def corridor():
    return parse_xsb(CORRIDOR, "corridor")


@pytest.fixture
def open_room():
    return parse_xsb(OPEN_ROOM, "open")


@pytest.fixture
def two_box():
    return parse_xsb(TWO_BOX, "two-box")


@pytest.fixture
def corner_dead():
    return parse_xsb(CORNER_DEAD, "corner")


# acceptance results, filled by test_acceptance.py and echoed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        name, passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(
            f"criterion {number} {name}: {'PASS' if passed else 'FAIL'} ({detail})")
