#!/usr/bin/env python3
"""Generate the toy evaluation fixture (300 TP / 11 FP / 15 FN) under a
directory and score it with the eval CLI.

    python scripts/make_eval_fixture.py --out /tmp/eval_toy
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from cashsight.cli import main as cli_main
from fixtures_eval import write_eval_fixture


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", required=True)
    args = parser.parse_args()
    root = Path(args.out)
    root.mkdir(parents=True, exist_ok=True)
    gt_dir, preds = write_eval_fixture(root)
    code = cli_main(
        ["eval", "--preds", str(preds), "--gt", str(gt_dir), "--out", str(root / "report.json"), "--curves", str(root / "curves")]
    )
    print(f"fixture in {root}, eval exit code {code}")
    return code


if __name__ == "__main__":
    sys.exit(main())
