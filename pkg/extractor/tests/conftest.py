import numpy as np
import pytest
from PIL import Image


def paint_image(path, base_color, size=48, seed=0):
    """A small RGB image dominated by base_color with a seeded texture."""
    rng = np.random.default_rng(seed)
    img = np.tile(np.asarray(base_color, dtype=np.float64), (size, size, 1))
    img += rng.normal(0, 12, size=(size, size, 3))
    # a centered object blob so tiles differ
    img[size // 4 : 3 * size // 4, size // 4 : 3 * size // 4] += 40
    Image.fromarray(np.clip(img, 0, 255).astype(np.uint8)).save(path)


@pytest.fixture
def two_class_folder(tmp_path):
    """5 images across 2 classes (3 crimson, 2 teal)."""
    root = tmp_path / "images"
    for i in range(3):
        (root / "crimson").mkdir(parents=True, exist_ok=True)
        paint_image(root / "crimson" / f"img_{i}.png", (180, 40, 40), seed=i)
    for i in range(2):
        (root / "teal").mkdir(parents=True, exist_ok=True)
        paint_image(root / "teal" / f"img_{i}.png", (30, 140, 150), seed=10 + i)
    return root
