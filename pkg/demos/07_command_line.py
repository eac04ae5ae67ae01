"""
The command-line workflow
=========================

simulate -> classify -> evaluate, using the bundled walking scene. The same
calls work from a shell as ``dynakey simulate ...`` and so on.
"""

import json
import tempfile
from pathlib import Path

from dynakey.cli import main

root = Path(__file__).resolve().parent.parent
with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    main(["simulate", str(root / "configs" / "walking.toml"), str(tmp / "walking")])
    main(["classify", str(tmp / "walking"), str(tmp / "walking.csv"), "--seed", "1"])
    summary = json.loads((tmp / "walking.summary.json").read_text())
    print("point-level metrics:", summary["metrics"]["points"])
    print("first rows of the per-keypoint table:")
    print("".join((tmp / "walking.csv").read_text().splitlines(keepends=True)[:4]))
    # the ground truth against itself scores zero everywhere
    gt = tmp / "walking" / "groundtruth.txt"
    main(["evaluate", str(gt), str(gt), "--sequence", "walking"])
