"""Run the heat-index equity workflow: a thermal raster joins neighborhoods,
aggregates per area, and a linked chart/map pair propagates brushing.

    python scripts/scenario_heat_index.py [workdir]
"""

import sys
import tempfile
from pathlib import Path

from urbanflow.scenarios import scenario_heat_index
from urbanflow.workspace import Hub


def main() -> None:
    workdir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())
    workdir.mkdir(parents=True, exist_ok=True)
    hub = Hub(db_path=str(workdir / "state.db"), data_dir=workdir)
    user = hub.register_user("demo")["user_id"]
    out = scenario_heat_index(hub, user)
    ws = out["workspace"]
    ws.run(user)
    chart = ws.view(user, "chart")
    print("neighborhood summary (mean heat index vs mean elder population):")
    for m in chart["marks"][:8]:
        print(f"  record {m['record_id']:>2}  heat={m['x']:.2f}  elders={m['y']:.0f}")
    print("brushing the two hottest rows in the chart...")
    hottest = sorted(chart["marks"], key=lambda m: -m["x"])[:2]
    states = ws.post_selection(user, "i_table", [m["record_id"] for m in hottest],
                               "replace")
    print("  propagated to map records:", sorted(states["i_map"].selected))
    mv = ws.view(user, "map")
    flagged = [f["record_id"] for f in mv["features"] if f.get("interaction")]
    print("  map features flagged:", flagged)
    print(f"data and provenance kept under {workdir}")


if __name__ == "__main__":
    main()
