"""Overlay rendering: target and prediction contours drawn onto the input image.

Follows the red/green/blue prediction + yellow target scheme; colors are
recorded in a legend file next to the rendered PNGs.
"""
import json
from pathlib import Path

import numpy as np
from PIL import Image

from ctxseg.metrics import boundary_mask

PREDICTION_COLORS = [(255, 0, 0), (0, 255, 0), (0, 0, 255), (255, 0, 255), (0, 255, 255)]
TARGET_COLOR = (255, 255, 0)


def _upscale(mask, scale):
    return np.kron(mask, np.ones((scale, scale), dtype=mask.dtype))


def render_overlay(image, target_label, predictions, scale=4):
    """RGB array: input image with the target contour and one contour per prediction.

    ``predictions`` is an ordered list of label maps; contours outline the
    union of foreground classes. Returns (rgb, empty_names_mask) where the
    second element flags predictions with no foreground to contour.
    """
    gray = (np.clip(np.asarray(image, dtype=np.float32), 0.0, 1.0) * 255).astype(np.uint8)
    rgb = np.repeat(_upscale(gray, scale)[..., None], 3, axis=2)
    empties = []
    for i, pred in enumerate(predictions):
        fg = np.asarray(pred) > 0
        empties.append(not fg.any())
        contour = boundary_mask(_upscale(fg.astype(np.uint8), scale).astype(bool))
        rgb[contour] = PREDICTION_COLORS[i % len(PREDICTION_COLORS)]
    target_contour = boundary_mask(_upscale((np.asarray(target_label) > 0).astype(np.uint8), scale).astype(bool))
    rgb[target_contour] = TARGET_COLOR
    return rgb, empties


def write_overlays(out_dir, samples, named_predictions, scale=4):
    """Render one PNG per sample plus legend.json.

    ``named_predictions`` maps checkpoint name -> list of predicted label
    maps aligned with ``samples``. Returns the list of written paths.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = list(named_predictions)
    legend = {
        "target_color": list(TARGET_COLOR),
        "predictions": [
            {"name": name, "color": list(PREDICTION_COLORS[i % len(PREDICTION_COLORS)])}
            for i, name in enumerate(names)
        ],
        "empty_predictions": {},
    }
    written = []
    for k, sample in enumerate(samples):
        preds = [named_predictions[name][k] for name in names]
        rgb, empties = render_overlay(sample.image, sample.label, preds, scale=scale)
        path = out_dir / f"overlay_{sample.id}.png"
        Image.fromarray(rgb).save(path)
        written.append(path)
        missing = [names[i] for i, e in enumerate(empties) if e]
        if missing:
            legend["empty_predictions"][path.name] = missing
    (out_dir / "legend.json").write_text(json.dumps(legend, indent=2, sort_keys=True) + "\n")
    return written
