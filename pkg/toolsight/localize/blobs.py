"""Connected-component labeling by two-pass union-find."""

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

NEIGHBORS_8 = ((-1, -1), (-1, 0), (-1, 1), (0, -1))
NEIGHBORS_4 = ((-1, 0), (0, -1))


@dataclass
class Blob:
    """One connected component."""

    class_id: int
    pixels: np.ndarray  # [n, 2] (row, col), row-major order
    first_index: int  # row-major index of the first pixel

    @property
    def area(self) -> int:
        return int(len(self.pixels))

    @property
    def centroid(self) -> Tuple[float, float]:
        """Mean (x, y) of the member pixel centers."""
        rows, cols = self.pixels[:, 0], self.pixels[:, 1]
        return float(cols.mean()), float(rows.mean())


def _find(parent: List[int], label: int) -> int:
    root = label
    while parent[root] != root:
        root = parent[root]
    while parent[label] != root:
        parent[label], label = root, parent[label]
    return root


def connected_components(mask: np.ndarray, connectivity: int = 8, class_id: int = 0) -> List[Blob]:
    """
    Label the maximal connected components of a binary mask.

    Args:
        mask: [H, W] binary mask
        connectivity: 8 (default) or 4
        class_id: Class stamped on the returned blobs

    Returns:
        Blobs ordered by their first pixel in row-major order
    """
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    mask = np.asarray(mask, dtype=bool)
    height, width = mask.shape
    offsets = NEIGHBORS_8 if connectivity == 8 else NEIGHBORS_4
    labels = np.zeros((height, width), dtype=np.int64)
    parent = [0]
    rows, cols = np.nonzero(mask)

    # First pass: provisional labels and equivalences
    for y, x in zip(rows.tolist(), cols.tolist()):
        neighbors = []
        for dy, dx in offsets:
            ny, nx = y + dy, x + dx
            if ny >= 0 and 0 <= nx < width and labels[ny, nx]:
                neighbors.append(_find(parent, int(labels[ny, nx])))
        if not neighbors:
            parent.append(len(parent))
            labels[y, x] = len(parent) - 1
            continue
        root = min(neighbors)
        labels[y, x] = root
        for other in neighbors:
            if other != root:
                parent[other] = root

    # Second pass: resolve every pixel to its root; the smallest label is the root
    pixel_labels = labels[rows, cols]
    roots = np.array([_find(parent, label) for label in range(len(parent))], dtype=np.int64)
    pixel_roots = roots[pixel_labels]
    blobs = []
    for root in np.unique(pixel_roots):
        members = np.nonzero(pixel_roots == root)[0]
        pixels = np.stack([rows[members], cols[members]], axis=1)
        blobs.append(
            Blob(class_id=class_id, pixels=pixels, first_index=int(pixels[0, 0] * width + pixels[0, 1]))
        )
    blobs.sort(key=lambda blob: blob.first_index)
    return blobs
