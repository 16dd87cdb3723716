"""
Segment-level scores
====================

Frame accuracy ignores over-segmentation; the edit score and segmental F1
punish it. A single wrong frame in the middle of a long segment barely moves
accuracy but splits one segment into three.
"""

import numpy as np

from seqcrf import edit_score, frame_accuracy, median_filter, segmental_f1, segments_from_labels

truth = np.array([0] * 20 + [1] * 30 + [2] * 20)
pred = truth.copy()
pred[35] = 2  # one stray frame
pred[50:54] = 1  # boundary four frames late

for name, y in (("prediction", pred), ("median filtered", median_filter(pred, 5))):
    print(f"{name:<16} acc={frame_accuracy(y, truth):6.2f}  edit={edit_score(y, truth):6.2f}  "
          f"f1@10={segmental_f1(y, truth, 10):6.2f}  segments={len(segments_from_labels(y))}")

# a stricter overlap threshold turns shifted segments into misses
for k in (10, 50, 90):
    print(f"F1@{k}: {segmental_f1(pred, truth, k):.2f}")
