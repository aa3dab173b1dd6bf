"""Write the hand-built unstable T tower as a scene file.

Usage: python scripts/make_t_scene.py [path]   (default: t_unstable.scene)
"""

import sys

from stackkit.dataset_io import write_scene
from stackkit.planner import hand_t_task, task_scenario


def main(path="t_unstable.scene"):
    write_scene(path, task_scenario(hand_t_task()))
    print(f"wrote {path}")


if __name__ == "__main__":
    main(*sys.argv[1:2])
