import math
import random

import numpy as np
import pytest
from PIL import Image

from capforge.annotation_io import InstanceRecord, Source
from capforge.geometry import ObbQuad


def rotated_rect(cx, cy, half_w, half_h, angle_rad) -> ObbQuad:
    """Corner points of a rectangle rotated about its center."""
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    corners = []
    for dx, dy in ((-half_w, -half_h), (half_w, -half_h), (half_w, half_h), (-half_w, half_h)):
        corners.append((cx + c * dx - s * dy, cy + s * dx + c * dy))
    return ObbQuad(tuple(corners))


def axis_rect(x0, y0, x1, y1) -> ObbQuad:
    return ObbQuad(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))


def make_record(
    instance_id="inst_0000",
    image_ref="img.png",
    image_w=1024,
    image_h=1024,
    category="plane",
    obb=None,
    description="",
    **kwargs,
) -> InstanceRecord:
    return InstanceRecord(
        instance_id=instance_id,
        image_ref=image_ref,
        image_w=image_w,
        image_h=image_h,
        category=category,
        obb=obb if obb is not None else axis_rect(100, 100, 200, 160),
        description=description,
        source=kwargs.pop("source", Source.OTHER),
        **kwargs,
    )


def synth_image(w, h, seed=0) -> Image.Image:
    """Deterministic RGB test image."""
    rng = np.random.default_rng(seed)
    arr = rng.integers(0, 255, size=(h, w, 3), dtype=np.uint8)
    return Image.fromarray(arr, "RGB")


@pytest.fixture
def fixture_dataset(tmp_path):
    """3 images x 4 instances with DOTA annotations; images under images/."""
    ann_dir = tmp_path / "annotations"
    img_dir = tmp_path / "images"
    ann_dir.mkdir()
    img_dir.mkdir()
    categories = ["plane", "ship", "harbor", "storage-tank"]
    rng = random.Random(11)
    for i in range(3):
        name = f"scene_{i}"
        synth_image(800, 600, seed=i).save(img_dir / f"{name}.png")
        lines = []
        for j, cat in enumerate(categories):
            x0 = 60 + 150 * j + rng.randint(0, 20)
            y0 = 80 + 90 * i + rng.randint(0, 20)
            w, h = 80 + 5 * j, 50 + 4 * i
            lines.append(
                f"{x0} {y0} {x0 + w} {y0} {x0 + w} {y0 + h} {x0} {y0 + h} {cat} 0"
            )
        (ann_dir / f"{name}.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return {"annotations": ann_dir, "images": img_dir, "root": tmp_path}


def pytest_runtest_logreport(report):
    # one visible pass/fail line per acceptance criterion
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        outcome = "PASS" if report.passed else "FAIL"
        print(f"\n[ACCEPTANCE] {name}: {outcome}", flush=True)


def write_stub_endpoint(path, kind="stub-annotator", seed=7, **extra):
    lines = [f'kind = "{kind}"', f"seed = {seed}", 'model = "stub"', "retry_backoff = 0.0"]
    for key, value in extra.items():
        if isinstance(value, str):
            lines.append(f'{key} = "{value}"')
        else:
            lines.append(f"{key} = {value}")
    path.write_text("[endpoint]\n" + "\n".join(lines) + "\n", encoding="utf-8")
    return path
