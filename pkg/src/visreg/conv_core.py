"""Same-size 2D convolution with center-relative kernels.

Output pixel ``(i, j)`` is ``sum_r a_r * img[(i, j) + r]`` over offsets ``r``
whose target pixel lies inside the image. Pixels outside the image contribute
nothing, so the output has the input's shape. This is cross-correlation in
signal-processing terms; the kernel is *not* flipped.

Images may carry leading batch axes: ``(..., H, W)``. Each trailing 2D plane is
convolved independently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

LAPLACIAN = np.array(
    [[-1.0, -1.0, -1.0],
     [-1.0, 8.0, -1.0],
     [-1.0, -1.0, -1.0]]
)


def as_matrix(img) -> np.ndarray:
    """Coerce to a float64 array with at least two axes and no empty axis."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim < 2:
        raise ValueError(f"expected an image with >= 2 axes, got shape {arr.shape}")
    if 0 in arr.shape:
        raise ValueError(f"image dimensions must be >= 1, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class RelKernel:
    """Odd-sided square kernel addressed relative to its central element.

    ``ker.at(0, 0)`` is the center; ``ker.at(-k, -k)`` the top-left entry.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] % 2 != 1:
            raise ValueError(f"kernel must be square with odd side, got shape {w.shape}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def k(self) -> int:
        return self.weights.shape[0] // 2

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    def at(self, i: int, j: int) -> float:
        k = self.k
        if abs(i) > k or abs(j) > k:
            raise IndexError(f"offset ({i}, {j}) outside kernel halfwidth {k}")
        return float(self.weights[i + k, j + k])

    def offsets(self):
        """Yield ``((di, dj), a)`` for every kernel entry, zeros included."""
        k = self.k
        for di in range(-k, k + 1):
            for dj in range(-k, k + 1):
                yield (di, dj), float(self.weights[di + k, dj + k])

    def __eq__(self, other):
        if not isinstance(other, RelKernel):
            return NotImplemented
        return np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash(self.weights.tobytes())

    def __repr__(self):
        return f"RelKernel(k={self.k}, weights={self.weights.tolist()})"

    @classmethod
    def from_offsets(cls, k: int, entries: dict) -> "RelKernel":
        """Build a kernel of halfwidth ``k`` from ``{(di, dj): value}``; missing entries are 0."""
        w = np.zeros((2 * k + 1, 2 * k + 1))
        for (di, dj), v in entries.items():
            if abs(di) > k or abs(dj) > k:
                raise IndexError(f"offset ({di}, {dj}) outside halfwidth {k}")
            w[di + k, dj + k] = v
        return cls(w)


def laplacian() -> RelKernel:
    return RelKernel(LAPLACIAN)


KERNELS = {"laplacian": laplacian}


def get_kernel(name: str) -> RelKernel:
    try:
        return KERNELS[name]()
    except KeyError:
        raise ValueError(f"unknown kernel {name!r}; known: {sorted(KERNELS)}") from None


def flip(ker: RelKernel) -> RelKernel:
    """Kernel reflected through its center: ``flip(K).at(i, j) == K.at(-i, -j)``."""
    return RelKernel(ker.weights[::-1, ::-1])


def conv_same(img, ker: RelKernel) -> np.ndarray:
    img = as_matrix(img)
    w = ker.weights.reshape((1,) * (img.ndim - 2) + ker.weights.shape)
    return ndimage.correlate(img, w, mode="constant", cval=0.0)


def conv_brute_oracle(img, ker: RelKernel) -> np.ndarray:
    """Reference for :func:`conv_same`: explicit loops and bounds checks. Tests only."""
    img = as_matrix(img)
    if img.ndim > 2:
        return np.stack([conv_brute_oracle(plane, ker) for plane in img])
    n, m = img.shape
    k = ker.k
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for di in range(-k, k + 1):
                for dj in range(-k, k + 1):
                    p, q = i + di, j + dj
                    if 0 <= p < n and 0 <= q < m:
                        acc += ker.weights[di + k, dj + k] * img[p, q]
            out[i, j] = acc
    return out
