#!/usr/bin/env python3
"""Launch a review service over a small fixture dataset for UI tests.

--build creates the fixture (4 instances, one per decision kind) before
serving; without it the harness resumes from the existing data directory,
replaying any decision log found there.
"""

import argparse
from pathlib import Path

import numpy as np
import uvicorn
from PIL import Image

from capforge.annotation_io import InstanceRecord, write_instances
from capforge.client import ChatClient, EndpointConfig
from capforge.geometry import ObbQuad
from capforge.store_api import create_app, open_store
from capforge.stubs import stub_annotator_transport

CAPTION = " ".join(
    [
        "The target sits near the center of the frame with a clear outline and",
        "steady tone across its full extent, separated from the surrounding",
        "ground by a visible margin on every side.",
    ]
    * 5
)


def build_fixture(data_dir: Path) -> None:
    images = data_dir / "images"
    images.mkdir(parents=True, exist_ok=True)
    records = []
    boxes = [
        [8, 8, 40, 8, 40, 30, 8, 30],
        [16, 4, 48, 4, 48, 28, 16, 28],
        [30, 10, 50, 30, 30, 50, 10, 30],  # rotated diamond
        [4, 20, 56, 20, 56, 44, 4, 44],
    ]
    for i, flat in enumerate(boxes):
        rng = np.random.default_rng(i)
        arr = rng.integers(30, 220, size=(64, 64, 3), dtype=np.uint8)
        Image.fromarray(arr, "RGB").save(images / f"img_{i}.png")
        records.append(
            InstanceRecord(
                instance_id=f"inst-{i}",
                image_ref=f"img_{i}.png",
                image_w=64,
                image_h=64,
                category="plane",
                obb=ObbQuad.from_flat(flat),
                description=CAPTION,
            )
        )
    write_instances(records, data_dir / "instances.jsonl")


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--data", required=True)
    parser.add_argument("--port", type=int, required=True)
    parser.add_argument("--build", action="store_true")
    args = parser.parse_args()

    data_dir = Path(args.data)
    if args.build:
        build_fixture(data_dir)
    annotator = ChatClient(
        EndpointConfig(kind="stub-annotator", model="stub", retry_backoff=0.0, seed=5),
        transport=stub_annotator_transport(5),
    )
    store = open_store(data_dir, fraction=1.0, seed=3, annotator=annotator)
    app = create_app(store)
    uvicorn.run(app, host="127.0.0.1", port=args.port, log_level="error")


if __name__ == "__main__":
    main()
