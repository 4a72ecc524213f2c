"""Regenerates the golden tool fixtures with Pillow.

Outputs are produced without visforge: sizes come from the reference
grid-rounding formula below, pixels from Pillow's resampler and numpy
slicing. Run from this directory: python3 make_golden.py
"""
import hashlib
import json
import math

import numpy as np
from PIL import Image

GRID = 28
TRAIN_MIN, TRAIN_MAX = 4 * 28 * 28, 1024 * 28 * 28


def round_by(x, f):
    return round(x / f) * f


def floor_by(x, f):
    return math.floor(x / f) * f


def ceil_by(x, f):
    return math.ceil(x / f) * f


def smart_resize(w, h, min_pixels=TRAIN_MIN, max_pixels=TRAIN_MAX):
    hb = max(GRID, round_by(h, GRID))
    wb = max(GRID, round_by(w, GRID))
    if hb * wb > max_pixels:
        beta = math.sqrt((h * w) / max_pixels)
        hb = max(GRID, floor_by(h / beta, GRID))
        wb = max(GRID, floor_by(w / beta, GRID))
    elif hb * wb < min_pixels:
        beta = math.sqrt(min_pixels / (h * w))
        hb = ceil_by(h * beta, GRID)
        wb = ceil_by(w * beta, GRID)
    return wb, hb


def pattern(w, h):
    y, x = np.mgrid[0:h, 0:w]
    r = (x * 255 // max(w - 1, 1)).astype(np.uint8)
    g = (y * 255 // max(h - 1, 1)).astype(np.uint8)
    b = (((x // 20) + (y // 20)) % 2 * 180 + 40).astype(np.uint8)
    img = np.stack([r, g, b], axis=-1)
    img[h // 3 : h // 2, w // 2 : 3 * w // 4] = (250, 250, 20)
    return img


def resize(a, size):
    return np.asarray(Image.fromarray(a).resize(size, Image.BICUBIC))


def draw_box(a, box):
    out = a.copy()
    h, w = out.shape[:2]
    x0, y0 = math.floor(box[0] * w), math.floor(box[1] * h)
    x1, y1 = math.ceil(box[2] * w), math.ceil(box[3] * h)
    s = max(2, math.ceil(0.003 * min(w, h)))
    red = (255, 0, 0)
    out[y0 : y0 + s, x0:x1] = red
    out[y1 - s : y1, x0:x1] = red
    out[y0:y1, x0 : x0 + s] = red
    out[y0:y1, x1 - s : x1] = red
    return out


def digest(a):
    h, w = a.shape[:2]
    return "sha256:" + hashlib.sha256(f"rgb8:{w}x{h}:".encode() + a.tobytes()).hexdigest()


def main():
    W, H = 400, 300
    box = [0.25, 0.25, 0.75, 0.75]
    src = pattern(W, H)
    view = resize(src, smart_resize(W, H))

    # Train-mode focus: outline drawn on the budget-resized image.
    focus_train = draw_box(view, box)
    # Infer-mode focus: crop the original, then fit the crop to the budget.
    x0, y0 = math.floor(box[0] * W), math.floor(box[1] * H)
    x1, y1 = math.ceil(box[2] * W), math.ceil(box[3] * H)
    crop = np.ascontiguousarray(src[y0:y1, x0:x1])
    focus_infer = resize(crop, smart_resize(x1 - x0, y1 - y0))
    # zoom_in x2: magnify, then fit to the budget.
    zoomed = resize(src, (round(W * 2), round(H * 2)))
    zoom = resize(zoomed, smart_resize(*zoomed.shape[1::-1]))

    fixtures = {
        "input": src,
        "view": view,
        "focus_train": focus_train,
        "focus_infer": focus_infer,
        "zoom": zoom,
    }
    meta = {"bbox": box, "zoom_factor": 2.0, "images": {}}
    for name, a in fixtures.items():
        Image.fromarray(a).save(f"{name}.png", optimize=True)
        meta["images"][name] = {"width": a.shape[1], "height": a.shape[0], "digest": digest(a)}
    with open("golden.json", "w") as f:
        json.dump(meta, f, indent=2)
        f.write("\n")
    write_driver_trace(src, focus_infer, zoom, box)


def image_record(a, tool=None, parent=None):
    d = digest(a)
    if tool is None:
        ident = "img-" + d[7:23]
        prov = {"kind": "original"}
    else:
        ident = "img-" + hashlib.sha256(f"{tool}|{parent}|{d}".encode()).hexdigest()[:16]
        prov = {"kind": "derived", "tool": tool, "parent": parent}
    return {"id": ident, "width": a.shape[1], "height": a.shape[0], "bytes_ref": d, "provenance": prov}


def write_driver_trace(src, focus_infer, zoom, box):
    """A two-tool inference episode and the chain it must produce."""
    focus_cmd = {"name": "focus_area", "params": {"bbox": box}}
    zoom_cmd = {"name": "zoom_in", "params": {"factor": 2.0}}
    call = lambda c: "<function>" + json.dumps(c, separators=(",", ":")) + "</function>"
    replies = [
        "<reasoning>The yellow panel sits right of center. Focus on the panel region.</reasoning>" + call(focus_cmd),
        "<reasoning>Its edges are soft. Zoom in to inspect the whole scene.</reasoning>" + call(zoom_cmd),
        "<reasoning>The panel is yellow.</reasoning><answer>yellow</answer>",
    ]
    root = image_record(src)
    expected = {
        "question": "What color is the panel?",
        "root_image": root,
        "steps": [
            {
                "reasoning": {
                    "atomic_step": "The yellow panel sits right of center.",
                    "visual_plan": "Focus on the panel region.",
                },
                "command": focus_cmd,
                "observation": image_record(focus_infer, "focus_area", root["id"]),
            },
            {
                "reasoning": {"atomic_step": "Its edges are soft.", "visual_plan": "Zoom in to inspect the whole scene."},
                "command": zoom_cmd,
                "observation": image_record(zoom, "zoom_in", root["id"]),
            },
        ],
        "final_reasoning": "The panel is yellow.",
        "answer": "yellow",
    }
    with open("driver_trace.json", "w") as f:
        json.dump({"question": expected["question"], "replies": replies, "expected": expected}, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
