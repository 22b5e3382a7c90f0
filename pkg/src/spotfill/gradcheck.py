"""Central finite-difference gradient checking.

Used by the test suite and by the `gradcheck` CLI command. The check compares
the analytic gradient of a scalar-valued function against (f(x+h)-f(x-h))/2h,
entry by entry, with a relative-error criterion floored at 1 so that
near-zero gradients are judged on absolute error.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .tensor import Tensor


@dataclass
class CheckResult:
    name: str
    max_err: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.max_err <= self.tol


def fd_gradient(f: Callable[[], Tensor], x: Tensor, h: float = 1e-5,
                entries: np.ndarray | None = None) -> np.ndarray:
    """Central finite differences of f() w.r.t. selected flat entries of x.

    f must rebuild its graph from x.data on every call. Returns a flat array
    aligned with `entries` (all entries when None).
    """
    flat = x.data.reshape(-1)
    if entries is None:
        entries = np.arange(flat.size)
    grads = np.empty(entries.size)
    for k, i in enumerate(entries):
        keep = flat[i]
        flat[i] = keep + h
        up = f().item()
        flat[i] = keep - h
        down = f().item()
        flat[i] = keep
        grads[k] = (up - down) / (2.0 * h)
    return grads


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    if analytic.size == 0:
        return 0.0
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float((np.abs(analytic - numeric) / denom).max())


def check_loss_grads(build_loss: Callable[[], Tensor], leaves: list[tuple[str, Tensor]],
                     tol: float, h: float = 1e-5, entries_per_leaf: int | None = None,
                     rng: np.random.Generator | None = None) -> list[CheckResult]:
    """Compare analytic vs finite-difference gradients for every leaf tensor.

    entries_per_leaf limits the check to a random subset of each leaf's
    entries (all entries when None). Leaves must have requires_grad set.
    """
    rng = rng or np.random.default_rng(0)
    for _, leaf in leaves:
        leaf.grad = None
    loss = build_loss()
    loss.backward()
    results = []
    for name, leaf in leaves:
        assert leaf.grad is not None, f"no gradient reached leaf {name}"
        analytic_full = leaf.grad.reshape(-1)
        n = analytic_full.size
        if entries_per_leaf is not None and entries_per_leaf < n:
            entries = np.sort(rng.choice(n, size=entries_per_leaf, replace=False))
        else:
            entries = np.arange(n)
        numeric = fd_gradient(build_loss, leaf, h=h, entries=entries)
        results.append(CheckResult(name, rel_error(analytic_full[entries], numeric), tol))
    return results


def op_gradient_suite(tol: float = 1e-5, h: float = 1e-5,
                      seed: int = 0) -> list[CheckResult]:
    """FD-check every differentiable operation on random inputs in [-2, 2]."""
    from . import tensor as T
    from .attention import AttentionWeights, local_augment_attention, vanilla_attention
    from .geometry import chamfer_distance

    rng = np.random.default_rng(seed)

    def rand(shape, margin=0.0):
        x = rng.uniform(-2, 2, shape)
        if margin:  # keep away from relu/max kinks
            x = np.where(np.abs(x) < margin, x + 2 * margin, x)
        return x

    results: list[CheckResult] = []

    def check(name, leaf, build, tol=tol):
        results.extend(CheckResult(r.name, r.max_err, r.tol) for r in
                       check_loss_grads(build, [(name, leaf)], tol=tol, h=h, rng=rng))

    w = rng.uniform(-1, 1, (5, 4))
    x = Tensor(rand((5, 4), margin=0.05), requires_grad=True)
    check("relu", x, lambda: T.tsum(T.mul(T.relu(x), Tensor(w))))
    check("tanh", x, lambda: T.tsum(T.mul(T.tanh(x), Tensor(w))))
    check("softmax", x, lambda: T.tsum(T.mul(T.softmax(x, axis=1), Tensor(w))))
    check("add_mul_sub", x, lambda: T.tsum(T.mul(T.mul(x, x) + x - Tensor(w), Tensor(w))))
    check("sqrt", x, lambda: T.tsum(T.sqrt(T.mul(x, x) + Tensor(np.full((5, 4), 0.5)))))
    check("max_pool", x, lambda: T.tsum(T.mul(T.max_pool(x, axis=0), Tensor(w[0]))))
    check("reshape_transpose", x,
          lambda: T.tsum(T.mul(T.transpose(T.reshape(x, (4, 5)), (1, 0)), Tensor(w))))
    check("mean_sum", x, lambda: T.tmean(x, axis=1).sum() + T.tsum(x, axis=0).mean())
    check("radial_tanh", x, lambda: T.tsum(T.mul(T.radial_tanh(x), Tensor(w))))
    idx = rng.integers(0, 5, (3, 2))
    wg = rng.uniform(-1, 1, (3, 2, 4))
    check("gather_rows", x, lambda: T.tsum(T.mul(T.gather_rows(x, idx), Tensor(wg))))
    wr = rng.uniform(-1, 1, (5, 3, 4))
    check("repeat", x,
          lambda: T.tsum(T.mul(T.repeat(T.reshape(x, (5, 1, 4)), 3, axis=1), Tensor(wr))))
    a = Tensor(rand((3, 4)), requires_grad=True)
    b = Tensor(rand((4, 2)), requires_grad=True)
    wm = rng.uniform(-1, 1, (3, 2))
    check("matmul_lhs", a, lambda: T.tsum(T.mul(T.matmul(a, b), Tensor(wm))))
    check("matmul_rhs", b, lambda: T.tsum(T.mul(T.matmul(a, b), Tensor(wm))))
    wc = rng.uniform(-1, 1, (3, 8))
    check("concat", a, lambda: T.tsum(T.mul(T.concat([a, a], axis=1), Tensor(wc))))
    layer = T.LinearLayer(rng, 4, 3)
    xl = Tensor(rand((6, 4)))
    check("linear_weight", layer.weight, lambda: T.tsum(layer(xl)))
    check("linear_bias", layer.bias, lambda: T.tsum(layer(xl)))
    aw = AttentionWeights.create(rng, 4, 4, 4, 2)
    fv = Tensor(rand((5, 4)), requires_grad=True)
    wv = rng.uniform(-1, 1, (5, 4))
    check("vanilla_attention", fv,
          lambda: T.tsum(T.mul(vanilla_attention(fv, aw), Tensor(wv))))
    qf = Tensor(rand((4, 4)), requires_grad=True)
    gf = Tensor(rand((4, 3, 4)), requires_grad=True)
    wl = rng.uniform(-1, 1, (4, 4))
    check("local_attention_query", qf,
          lambda: T.tsum(T.mul(local_augment_attention(qf, gf, aw), Tensor(wl))))
    check("local_attention_grouped", gf,
          lambda: T.tsum(T.mul(local_augment_attention(qf, gf, aw), Tensor(wl))))
    ca = Tensor(rand((8, 3)) * 0.4, requires_grad=True)
    cb = Tensor(rand((10, 3)) * 0.4, requires_grad=True)
    check("chamfer_squared", ca, lambda: chamfer_distance(ca, cb, squared=True))
    check("chamfer_norm", cb, lambda: chamfer_distance(ca, cb, squared=False))
    return results


def model_gradient_suite(cfg=None, tol: float = 1e-4, h: float = 1e-6,
                         entries_per_leaf: int | None = 2,
                         seed: int = 0) -> list[CheckResult]:
    """FD-check the whole network graph through the composite loss."""
    from .data import make_dataset
    from .geometry import LossWeights, composite_loss, farthest_point_sample
    from .network import CompletionModel, micro_config, prepare_geometry

    cfg = cfg or micro_config()
    model = CompletionModel(cfg, seed=9)
    sample = make_dataset(1, seed=17, input_n=cfg.input_n, out_n=cfg.out_n)[0]
    geom = prepare_geometry(cfg, sample.partial.xyz)
    gt = sample.complete.xyz
    n1, n2, n3 = cfg.level_ns
    subs = {"p1": farthest_point_sample(gt, n1), "p2": farthest_point_sample(gt, n2),
            "p3": farthest_point_sample(gt, n3)}
    weights = LossWeights(10.0, 0.5, 0.5, 1.0)

    def loss():
        out = model.forward(sample.partial.xyz, geom=geom)
        total, _ = composite_loss(out, Tensor(gt), weights, gt_subsets=subs)
        return total

    return check_loss_grads(loss, model.parameters(), tol=tol, h=h,
                            entries_per_leaf=entries_per_leaf,
                            rng=np.random.default_rng(seed))
