"""Oracle suites run by ``visreg verify``.

Each suite compares a production code path against an independent reference
(brute-force summation, central finite differences, or the sparse Tikhonov
form) and reports the largest error it saw.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import conv_core, network, tikhonov, visloss
from .conv_core import RelKernel


@dataclass
class SuiteResult:
    name: str
    passed: bool
    max_error: float
    tolerance: float
    checks: int

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status}  {self.name:<22} max_err={self.max_error:.3e}  "
                f"tol={self.tolerance:.0e}  checks={self.checks}")


def rel_error(a, b) -> float:
    """``max|a - b| / max(max|a|, max|b|)``; 0 when both are zero."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0))
    diff = np.abs(a - b).max(initial=0.0)
    return 0.0 if scale == 0.0 else float(diff / scale)


def fd_image_grad(img, ker: RelKernel, norm: int, h: float = 1e-5) -> np.ndarray:
    """Central differences of the per-image loss, all pixels perturbed in one batch."""
    img = np.asarray(img, dtype=np.float64)
    n = img.size
    eye = np.eye(n).reshape((n,) + img.shape) * h
    plus = visloss.slab_losses(img[None] + eye, ker, norm)
    minus = visloss.slab_losses(img[None] - eye, ker, norm)
    return ((plus - minus) / (2.0 * h)).reshape(img.shape)


def fd_params(model, loss_fn, h: float = 1e-5) -> list:
    """Central differences of ``loss_fn()`` w.r.t. every parameter of ``model`` (in place)."""
    out = []
    for p in model.params:
        if p is None:
            out.append(None)
            continue
        g = {}
        for k, arr in p.items():
            num = np.zeros_like(arr)
            for idx in np.ndindex(arr.shape):
                orig = arr[idx]
                arr[idx] = orig + h
                fp = loss_fn()
                arr[idx] = orig - h
                fm = loss_fn()
                arr[idx] = orig
                num[idx] = (fp - fm) / (2.0 * h)
            g[k] = num
        out.append(g)
    return out


def random_kernel(rng, k: int) -> RelKernel:
    return RelKernel(rng.standard_normal((2 * k + 1, 2 * k + 1)))


def suite_conv_oracle(rng, trials=40) -> SuiteResult:
    worst = 0.0
    for _ in range(trials):
        k = int(rng.integers(0, 3))
        img = rng.standard_normal(tuple(rng.integers(1, 10, size=2)))
        ker = random_kernel(rng, k)
        err = np.abs(conv_core.conv_same(img, ker) - conv_core.conv_brute_oracle(img, ker)).max()
        worst = max(worst, float(err))
    return SuiteResult("conv_oracle", worst <= 1e-12, worst, 1e-12, trials)


def suite_grad_vl2(rng, trials=20) -> SuiteResult:
    worst = 0.0
    for t in range(trials):
        ker = conv_core.laplacian() if t % 2 == 0 else random_kernel(rng, 1 + t % 3 // 2)
        img = rng.standard_normal((8, 8))
        worst = max(worst, rel_error(visloss.grad_vl2(img, ker), fd_image_grad(img, ker, 2)))
    return SuiteResult("grad_vl2_fd", worst <= 1e-6, worst, 1e-6, trials)


def suite_grad_vl1(rng, trials=20) -> SuiteResult:
    worst = 0.0
    done = 0
    while done < trials:
        ker = conv_core.laplacian() if done % 2 == 0 else random_kernel(rng, 1)
        img = rng.standard_normal((8, 8))
        if np.abs(conv_core.conv_same(img, ker)).min() <= 1e-3:
            continue
        worst = max(worst, rel_error(visloss.grad_vl1(img, ker), fd_image_grad(img, ker, 1)))
        done += 1
    return SuiteResult("grad_vl1_fd", worst <= 1e-5, worst, 1e-5, trials)


def _random_geometry(rng):
    slabs = rng.standard_normal((int(rng.integers(1, 5)),) + tuple(rng.integers(3, 9, size=2)))
    return slabs, random_kernel(rng, int(rng.integers(1, 3)))


def suite_tikhonov_value(rng, trials=20) -> SuiteResult:
    worst = 0.0
    sparse_ok = True
    for _ in range(trials):
        slabs, ker = _random_geometry(rng)
        gamma = tikhonov.gamma_for(slabs, ker)
        ref = visloss.vl_model(slabs, ker, 2)
        worst = max(worst, abs(tikhonov.gamma_quadratic(gamma, slabs) - ref) / ref)
        sparse_ok &= gamma.nnz <= gamma.n_rows * ker.size ** 2
    return SuiteResult("tikhonov_value", worst <= 1e-10 and sparse_ok, worst, 1e-10, trials)


def suite_tikhonov_gradient(rng, trials=20) -> SuiteResult:
    worst = 0.0
    for _ in range(trials):
        slabs, ker = _random_geometry(rng)
        gamma = tikhonov.gamma_for(slabs, ker)
        conv_grad = visloss.grad_vl_model(slabs, ker, 2).reshape(-1)
        worst = max(worst, rel_error(tikhonov.gamma_gradient(gamma, slabs), conv_grad))
    return SuiteResult("tikhonov_gradient", worst <= 1e-9, worst, 1e-9, trials)


def suite_composite_backprop(rng) -> SuiteResult:
    ker = conv_core.laplacian()
    mu1, mu2, lam = 0.01, 0.02, 0.01
    cases = [
        ([network.dense(4, "tanh"), network.output(3)], (1, 3, 3)),
        ([network.conv(3, 2, "tanh"), network.maxpool(2), network.dense(5, "sigmoid"),
          network.output(3)], (1, 6, 6)),
    ]
    worst = 0.0
    for layers, shape in cases:
        model = network.build_model(layers, shape, seed=int(rng.integers(1 << 30)))
        for p in model.params:
            if p is not None:
                p["b"][:] = rng.normal(0.0, 0.1, p["b"].shape)
        batch = network.Batch(rng.random((4,) + shape), rng.integers(0, 3, 4))
        cache = network.forward(model, batch.inputs, "eval")
        grads = network.backward(model, batch, ker, mu1, mu2, lam, cache)
        num = fd_params(model, lambda: network.total_loss(model, batch, ker, mu1, mu2, lam))
        for g, n in zip(grads, num):
            if g is not None:
                worst = max(worst, *(rel_error(g[k], n[k]) for k in g))
    return SuiteResult("composite_backprop", worst <= 1e-5, worst, 1e-5, len(cases))


SUITES = {
    "conv_oracle": suite_conv_oracle,
    "grad_vl2_fd": suite_grad_vl2,
    "grad_vl1_fd": suite_grad_vl1,
    "tikhonov_value": suite_tikhonov_value,
    "tikhonov_gradient": suite_tikhonov_gradient,
    "composite_backprop": suite_composite_backprop,
}


def run_all(seed: int = 0, names=None) -> list[SuiteResult]:
    order = list(SUITES)
    results = []
    for name in names or order:
        rng = np.random.default_rng([seed, order.index(name)])
        results.append(SUITES[name](rng))
    return results
