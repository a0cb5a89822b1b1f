"""Run the image-uncertainty triage workflow end to end and print its outputs.

Synthetic street-level images with model uncertainty scores are joined to
neighborhood polygons; the gallery sorts images by uncertainty, a map shows
their spatial spread, and a bar chart aggregates mean uncertainty per
neighborhood.

    python scripts/scenario_image_uncertainty.py [workdir]
"""

import sys
import tempfile
from pathlib import Path

from urbanflow.scenarios import scenario_image_uncertainty
from urbanflow.workspace import Hub


def main() -> None:
    workdir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())
    workdir.mkdir(parents=True, exist_ok=True)
    hub = Hub(db_path=str(workdir / "state.db"), data_dir=workdir)
    user = hub.register_user("demo")["user_id"]
    out = scenario_image_uncertainty(hub, user)
    ws = out["workspace"]
    results = ws.run(user)
    print(f"workspace {ws.id}: {len(results)} nodes")
    for r in results:
        print(f"  {r.node:<10} {r.status:<16} {r.duration_ms:7.1f} ms")
    gallery = ws.view(user, "gallery")
    print("gallery head (most uncertain first):")
    for item in gallery["items"][:5]:
        print(f"  {item['image_ref']:<12} uncertainty={item['sort_value']}")
    chart = ws.view(user, "chart")
    print("mean uncertainty per neighborhood (first 5):")
    for mark in chart["marks"][:5]:
        print(f"  {mark['x']:<5} {mark['y']:.4f}")
    print(f"data and provenance kept under {workdir}")


if __name__ == "__main__":
    main()
