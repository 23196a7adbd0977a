"""Train shaped and unshaped A2C agents briefly and print their learning curves.

A short run only shows the machinery working; the full experiments use
80k-150k environment steps per seed (see ``sokoshape train --help``).

Run with ``python demos/05_train_small_agent.py [env_steps]``.
"""

import sys

from sokoshape import ExperimentConfig, ShapingConfig, train

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 6000
for shaped in (True, False):
    config = ExperimentConfig(n_boxes=1, n_levels=20, total_env_steps=steps, eval_every=2000,
                              shaping=ShapingConfig(enabled=shaped))
    params, rows = train(config, seed=0)
    curve = "  ".join(f"{r.env_steps}:{r.solved_ratio:.2f}" for r in rows)
    print(f"{'shaped  ' if shaped else 'unshaped'} {curve}  "
          f"({rows[-1].wall_clock_sec:.0f}s, {params.n_params} parameters)")
