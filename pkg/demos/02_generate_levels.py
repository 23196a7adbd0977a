"""Generate level sets by reverse play and compare their difficulty.

Run with ``python demos/02_generate_levels.py [out_dir]``.
"""

import sys
import tempfile
from pathlib import Path

from sokoshape import generate_set, load_level_set, serialize_xsb
from sokoshape.harness import shortest_path_stats
from sokoshape.levels import save_level_set

out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())

one_box = generate_set(seed=0, count=30, n_boxes=1)
two_box = generate_set(seed=0, count=30, n_boxes=2)
print("first 1-box level:")
print(serialize_xsb(one_box[0]))

manifest = save_level_set(two_box, out_dir / "two_box", header="demo set")
again = load_level_set(manifest)
assert all(a.walls == b.walls and a.initial_boxes == b.initial_boxes
           for a, b in zip(two_box, again))
print(f"\nsaved and reloaded {len(again)} levels via {manifest}")

for name, level_set in (("1-box", one_box), ("2-box", two_box)):
    stats = shortest_path_stats(level_set)
    bars = " ".join(f"{k}:{'#' * v}" for k, v in stats.histogram().items())
    print(f"{name}: mean optimal length {stats.mean:.2f}  {bars}")
