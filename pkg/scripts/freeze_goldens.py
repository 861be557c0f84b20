"""Regenerate corpus/goldens.json from the tag-blind bounds oracle.

Run once when the corpus changes; the tests compare against the frozen file.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

from tagstack.harness.oracle import run_oracle
from tagstack.ir import parse_program

CORPUS = Path(__file__).resolve().parents[1] / "src" / "tagstack" / "corpus"
INPUTS = ([0, 0, 0], [3, 5, 7], [40, -2, 9], [-7, 100, 1])


def main() -> int:
    goldens = {}
    for path in sorted([*CORPUS.glob("benign/*.ir"), *CORPUS.glob("special/*.ir")]):
        p = parse_program(path.read_text())
        arity = len(p.function(p.entry).params)
        runs = []
        for full in INPUTS:
            args = full[:arity]
            rep = run_oracle(p, args)
            if rep.status != "finished" or rep.violations:
                print(f"{path.name} {args}: not benign ({rep.status}, {len(rep.violations)} violations)", file=sys.stderr)
                return 1
            runs.append({"args": args, "value": rep.value, "output": rep.output})
        goldens[str(path.relative_to(CORPUS))] = runs
    (CORPUS / "goldens.json").write_text(json.dumps({"schema": 1, "programs": goldens}, indent=1) + "\n")
    print(f"froze {len(goldens)} programs")
    return 0


if __name__ == "__main__":
    sys.exit(main())
