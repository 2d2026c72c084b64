"""Regenerate tests/golden/cli_chain.json from the reference CLI chain.

    python scripts/make_golden.py
"""

import json
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
from clichain import GOLDEN, run_chain  # noqa: E402


def main():
    with tempfile.TemporaryDirectory() as tmp:
        values = run_chain(Path(tmp))
    GOLDEN.write_text(json.dumps(values, indent=2, sort_keys=True) + "\n")
    print(json.dumps(values))


if __name__ == "__main__":
    main()
