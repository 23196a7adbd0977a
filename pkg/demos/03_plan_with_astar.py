"""Solve levels with A* under the three Manhattan heuristics.

``all_pairs`` sums every box-target distance and can overestimate, so its plans
may be longer than optimal; ``min_matching`` and ``nearest_target`` never do.

Run with ``python demos/03_plan_with_astar.py``.
"""

from sokoshape import generate, heuristic, parse_xsb
from sokoshape.planner import HEURISTIC_MODES, dead_cells, plan_to_string, solve_astar

level = generate(seed=61, n_boxes=2)
start = level.initial_state()
for mode in HEURISTIC_MODES:
    result = solve_astar(start, mode, node_budget=None)
    print(f"{mode:15s} h(start)={heuristic(start, mode):3d}  length {result.length:3d}  "
          f"nodes {result.nodes_expanded:5d}  plan {plan_to_string(result.plan)}")

# Cells where a lone box can never reach a target.
room = parse_xsb("""
########
#      #
# $  @ #
#   .  #
########
""")
dead = dead_cells(room)
for r in range(room.height):
    print("".join("#" if (r, c) in room.walls else "x" if (r, c) in dead else "."
                  for c in range(room.width)))
