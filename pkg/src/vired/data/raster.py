"""Tiny uint8 drawing primitives for synthetic pages."""

from __future__ import annotations

import numpy as np


def line(img: np.ndarray, r0: float, c0: float, r1: float, c1: float, value: int = 0, width: int = 1) -> None:
    n = int(max(abs(r1 - r0), abs(c1 - c0))) + 1
    rr = np.rint(np.linspace(r0, r1, n)).astype(int)
    cc = np.rint(np.linspace(c0, c1, n)).astype(int)
    h, w = img.shape[:2]
    for d in range(width):
        rows = np.clip(rr + (d if abs(c1 - c0) >= abs(r1 - r0) else 0), 0, h - 1)
        cols = np.clip(cc + (0 if abs(c1 - c0) >= abs(r1 - r0) else d), 0, w - 1)
        img[rows, cols] = value


def fill(img: np.ndarray, x: int, y: int, w: int, h: int, value: int) -> None:
    img[y:y + h, x:x + w] = value


def outline(img: np.ndarray, x: int, y: int, w: int, h: int, value: int = 0) -> None:
    img[y, x:x + w] = value
    img[y + h - 1, x:x + w] = value
    img[y:y + h, x] = value
    img[y:y + h, x + w - 1] = value


def dot(img: np.ndarray, r: int, c: int, value: int = 0, size: int = 2) -> None:
    img[r:r + size, c:c + size] = value
