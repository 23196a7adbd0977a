"""Shaped rewards along an optimal plan, and what a deadlocking push costs.

Run with ``python demos/04_shaping_along_a_plan.py``.
"""

from sokoshape import Action, ShapingConfig, generate, shaped_step, solve_astar
from sokoshape.planner import MIN_MATCHING

config = ShapingConfig(heuristic_mode=MIN_MATCHING)
cache = config.make_cache()
level = generate(seed=3, n_boxes=1)
state = level.initial_state()
plan = solve_astar(state, MIN_MATCHING).plan
print(f"optimal plan has {len(plan)} moves, d(start) = {cache.distance(state)}")

shaped_total = raw_total = 0.0
for a in plan:
    out = shaped_step(state, a, config, cache)
    shaped_total += out.shaped_reward
    raw_total += out.inner.reward
    print(f"{a.name:5s} d {cache.distance(state):2d} -> {cache.distance(out.next_state):2d}  "
          f"raw {out.inner.reward:+5.1f}  bonus {out.bonus:+d}")
    state = out.next_state
print(f"raw return {raw_total:+.1f}, shaped return {shaped_total:+.1f} "
      f"(the bonuses sum to d(start))")

# Random pushes until one makes the level unsolvable.
state = level.initial_state()
for a in [Action.UP, Action.LEFT, Action.UP, Action.LEFT, Action.DOWN, Action.RIGHT] * 10:
    out = shaped_step(state, a, config, cache)
    if out.s_solvable and not out.s_prime_solvable:
        print(f"{a.name} deadlocks the level from d={cache.distance(state)}: bonus {out.bonus}")
        break
    state = out.next_state
