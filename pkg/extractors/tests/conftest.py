import numpy as np
import pytest
from PIL import Image, ImageColor, ImageDraw

CLASS_COLORS = ("red", "green", "blue", "yellow")


def paint_image(color: str, rng, size=48):
    """A shaded patch of the class color with a rectangle of a nearby shade."""
    base = np.array(ImageColor.getrgb(color), dtype=np.int64)
    jitter = rng.integers(-25, 26, size=3)
    bg = tuple(int(v) for v in np.clip(base + jitter, 0, 255))
    img = Image.new("RGB", (size, size), bg)
    draw = ImageDraw.Draw(img)
    shade = tuple(int(v) for v in np.clip(base + rng.integers(-60, 61, size=3), 0, 255))
    x0, y0 = rng.integers(0, size // 2, size=2)
    draw.rectangle([int(x0), int(y0), int(x0) + size // 3, int(y0) + size // 3], fill=shade)
    return img


@pytest.fixture(scope="session")
def color_dataset(tmp_path_factory):
    """100 PNG files in one subdirectory per class, plus the ground truth."""
    root = tmp_path_factory.mktemp("colors")
    rng = np.random.default_rng(1234)
    truth = []
    for label, color in enumerate(CLASS_COLORS):
        cls_dir = root / color
        cls_dir.mkdir()
        for i in range(25):
            paint_image(color, rng).save(cls_dir / f"{color}_{i:03d}.png")
            truth.append(label)
    return root, CLASS_COLORS, truth
