from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from _meshes import fixture_meshes  # noqa: E402
from corpus import corpus_texts  # noqa: E402

REPO_ROOT = Path(__file__).resolve().parent.parent
CHECKER_SCRIPT = REPO_ROOT / "scripts" / "box_checker.py"


@pytest.fixture(scope="session")
def meshes():
    return fixture_meshes()


@pytest.fixture(scope="session")
def corpus():
    return corpus_texts(count=50, seed=2024)


@pytest.fixture(scope="session")
def checker_cmd():
    return f"{sys.executable} {CHECKER_SCRIPT} {{input}} {{output}}"


def box_step_text(dx: float, dy: float, dz: float, shift=None) -> str:
    """A valid STEP file carrying the toy-checker BOX convention."""
    lines = [
        "ISO-10303-21;",
        "HEADER;",
        "FILE_NAME('box.step','',(''),(''),'','','');",
        "ENDSEC;",
        "DATA;",
        f"#1=BOX('',{dx},{dy},{dz});",
    ]
    if shift is not None:
        lines.append(f"#2=SHIFT('',{shift[0]},{shift[1]},{shift[2]});")
    lines += ["ENDSEC;", "END-ISO-10303-21;", ""]
    return "\n".join(lines)
