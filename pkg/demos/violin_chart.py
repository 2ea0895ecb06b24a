"""
Violin summaries of model scores by gold level
==============================================

Groups predicted scores by integer gold star, summarizes each group
with quartiles and a kernel density outline, and renders a standalone
SVG. Articles with non-integer gold scores are discarded and counted.
"""
import tempfile
from pathlib import Path

import numpy as np

from refscore.violin import emit_violin_svg, silverman_bandwidth, violin_summary

rng = np.random.default_rng(6)

# model scores centred near the gold level, with spread that grows
# toward the middle of the scale
scores, gold = {}, {}
i = 0
for level, n, sd in ((1, 25, 0.45), (2, 60, 0.6), (3, 70, 0.55), (4, 30, 0.4)):
    for _ in range(n):
        art = f"a{i:03d}"
        scores[art] = float(np.clip(level + rng.normal(0.0, sd), 1.0, 4.0))
        gold[art] = float(level)
        i += 1

# a few departmental-proxy style non-integer golds get dropped
for j in range(7):
    art = f"x{j:02d}"
    scores[art] = 2.5
    gold[art] = 2.3

summary = violin_summary(scores, gold)
print("discarded non-integer gold:", summary.discarded_non_integer)
for level, group in sorted(summary.groups.items()):
    print(
        f"{level}*  n={group.count:3d}  "
        f"q1={group.q1:.2f} median={group.median:.2f} q3={group.q3:.2f}"
    )

# bandwidth follows the usual normal-reference rule
sample = np.array([scores[a] for a in scores if gold[a] == 3.0])
print(f"bandwidth for the 3* group: {silverman_bandwidth(sample):.4f}")

svg = emit_violin_svg(summary, title="mock model vs integer gold")
out = Path(tempfile.mkdtemp(prefix="refscore-demo-")) / "violins.svg"
out.write_text(svg)
print("wrote", out, f"({len(svg)} bytes)")
