"""
Command-line walkthrough
========================

Runs the ``seqcrf`` commands end to end on a freshly generated synthetic
dataset inside a temporary directory. The same calls work from a shell, e.g.
``seqcrf train --manifest data/manifest.csv --fold u3 --out model``.
"""

import tempfile
from pathlib import Path

from seqcrf.cli import main

work = Path(tempfile.mkdtemp(prefix="seqcrf-demo-"))
small = ["--m", "20", "--L", "7", "--d", "3", "--epochs", "15"]

main(["synth", "--out", str(work / "data")])
manifest = str(work / "data" / "manifest.csv")

main(["train", "--manifest", manifest, "--fold", "u3", "--out", str(work / "model")] + small)
print((work / "model" / "manifest").read_text())

main(["evaluate", "--model", str(work / "model"), "--manifest", manifest, "--fold", "u3",
      "--csv", str(work / "scores.csv")])

main(["predict", "--model", str(work / "model"), "--sequence", str(work / "data" / "data" / "seq003.csv"),
      "--segments", "--median", "5", "--out", str(work / "seq003.segments")])
print("first segments:", (work / "seq003.segments").read_text().splitlines()[:4])

main(["crossval", "--manifest", manifest, "--runs", "2", "--epochs", "5", "--m", "20", "--L", "7", "--d", "3"])
print("outputs in", work)
