"""Play a small level by hand and look at rewards and observations.

Run with ``python demos/01_play_a_level.py``.
"""

import numpy as np

from sokoshape import Action, encode, parse_xsb, step

level = parse_xsb("""
#######
#@    #
#  $  #
#    .#
#######
""", "demo")
state = level.initial_state()
print(f"{level.height}x{level.width} level, {level.n_boxes} box, player at {state.player}")

# Walk down, then push the box right twice and down once onto the target.
moves = [Action.DOWN, Action.RIGHT, Action.RIGHT, Action.RIGHT, Action.UP,
         Action.RIGHT, Action.DOWN]
total = 0.0
for a in moves:
    out = step(state, a)
    total += out.reward
    events = ", ".join(sorted(e.name for e in out.events)) or "-"
    print(f"{a.name:5s} reward {out.reward:+.1f}  events {events}")
    state = out.next_state
    if out.solved:
        break
print(f"solved={out.solved} after {state.steps_taken} steps, return {total:+.1f}")

# Symbolic observation: one channel per tile type.
obs = encode(level.initial_state())
names = ["wall", "floor", "target", "box", "box on target", "player", "player on target"]
for name, plane in zip(names, obs):
    print(f"{name:17s} {int(plane.sum()):2d} cells")

pixels = encode(level.initial_state(), "pixel")
print("pixel observation", pixels.shape, "value range", float(pixels.min()), float(pixels.max()))
print("distinct colours", len(np.unique(pixels.reshape(3, -1).T, axis=0)))
