"""Independent numerical checks on synthetic data (no external files needed).

Each check compares a production code path against a separate route:
dense linear algebra, central finite differences, algebraic collapse, node
relabeling.  ``run_all`` is what ``bench selftest`` executes.
"""

from __future__ import annotations

from typing import Callable, List, NamedTuple

import numpy as np

from .data import Split, generate_synthetic
from .graph import (
    from_arrays,
    normalize_with_self_loops,
    permute,
    propagate_power,
    propagate_ppr,
    ppr_exact_dense,
)
from .models import (
    APPNP,
    APPNP_MLP,
    GCN,
    MODEL_KINDS,
    SGC,
    SGC_MLP,
    ModelParams,
    ModelSpec,
    build_network,
    forward,
    init_params,
    precompute_features,
    train_model,
)
from .nn import (
    Identity,
    Linear,
    Parameter,
    ReLU,
    TrainConfig,
    finite_diff_grad,
    masked_cross_entropy,
    masked_cross_entropy_grad,
    softmax_rows,
)


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str


def rel_error(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def random_graph(rng: np.random.Generator, n: int, p: float = None, weighted: bool = True):
    p = rng.uniform(0.01, 0.3) if p is None else p
    upper = np.triu(rng.random((n, n)) < p, k=1)
    src, dst = np.nonzero(upper)
    w = rng.uniform(0.1, 3.0, src.size) if weighted else np.ones(src.size)
    return from_arrays(src, dst, w, n)


def check_ppr_against_dense(n_graphs=100, max_nodes=200, tol=1e-6, seed=0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_graphs):
        n = int(rng.integers(1, max_nodes + 1))
        adj = normalize_with_self_loops(random_graph(rng, n))
        x = rng.standard_normal((n, int(rng.integers(1, 5))))
        alpha = float(rng.uniform(0.1, 1.0))
        res = propagate_ppr(adj, x, alpha, iters=100_000, tol=tol)
        if not res.converged or res.residual > tol:
            return CheckResult("ppr_vs_dense", False, f"no convergence on n={n}")
        err = float(np.max(np.abs(res.features - ppr_exact_dense(adj, x, alpha))))
        worst = max(worst, err)
    return CheckResult("ppr_vs_dense", worst <= 10 * tol,
                       f"max |iterative - dense| = {worst:.2e} over {n_graphs} graphs (bound {10 * tol:.0e})")


def check_spectrum(n_graphs=50, max_nodes=50, seed=1) -> CheckResult:
    rng = np.random.default_rng(seed)
    lo, hi = np.inf, -np.inf
    for _ in range(n_graphs):
        n = int(rng.integers(1, max_nodes + 1))
        dense = normalize_with_self_loops(random_graph(rng, n)).to_dense()
        eig = np.linalg.eigvalsh(dense)
        lo, hi = min(lo, eig.min()), max(hi, eig.max())
    ok = lo >= -1 - 1e-9 and hi <= 1 + 1e-9
    return CheckResult("spectrum_in_unit_interval", ok, f"eigenvalues within [{lo:.6f}, {hi:.6f}]")


def _param_grad_errors(net, params: ModelParams, inputs, labels, mask) -> List[float]:
    net.zero_grad()
    logits = net.forward(inputs, training=False)
    net.backward(masked_cross_entropy_grad(logits, labels, mask))
    errors = []
    for p in params.all():
        analytic = p.grad.copy()
        original = p.value

        def loss_at(w, p=p):
            p.value = w
            return masked_cross_entropy(net.forward(inputs, training=False), labels, mask)

        numeric = finite_diff_grad(loss_at, original)
        p.value = original
        errors.append(rel_error(analytic, numeric))
    return errors


def check_gradients(seed=2) -> CheckResult:
    rng = np.random.default_rng(seed)
    errors = {}

    # linear layer: gradient w.r.t. weights and inputs of sum(c * xW)
    x = rng.standard_normal((5, 4))
    w = Parameter(rng.standard_normal((4, 3)))
    coef = rng.standard_normal((5, 3))
    layer = Linear(w)
    layer.forward(x)
    gx = layer.backward(coef)
    errors["linear_w"] = rel_error(w.grad, finite_diff_grad(lambda v: float(np.sum(coef * (x @ v))), w.value))
    errors["linear_x"] = rel_error(gx, finite_diff_grad(lambda v: float(np.sum(coef * (v @ w.value))), x))

    # relu away from the kink
    z = rng.standard_normal((6, 3))
    z[np.abs(z) < 1e-3] = 0.5
    cz = rng.standard_normal(z.shape)
    act = ReLU()
    act.forward(z)
    errors["relu"] = rel_error(act.backward(cz),
                               finite_diff_grad(lambda v: float(np.sum(cz * np.maximum(v, 0))), z))

    # softmax + cross-entropy w.r.t. logits, with a repeated mask index
    logits = rng.standard_normal((7, 4))
    labels = rng.integers(0, 4, 7)
    mask = np.array([0, 2, 3, 3, 6])
    errors["softmax_xent"] = rel_error(
        masked_cross_entropy_grad(logits, labels, mask),
        finite_diff_grad(lambda v: masked_cross_entropy(v, labels, mask), logits),
    )

    # full models, dropout off
    ds = generate_synthetic(6, 3, 5, 0.5, 0.1, 1.0, rng=rng)
    adj = normalize_with_self_loops(ds.graph)
    mask = np.arange(0, ds.n_nodes, 2)
    for kind in MODEL_KINDS:
        spec = ModelSpec(kind, hidden_dim=4, dropout_p=0.0, ppr_iters=20)
        inputs = precompute_features(spec, adj, ds.features)
        params = init_params(spec, ds.n_features, ds.n_classes, rng)
        for b in params.biases:
            b.value = rng.standard_normal(b.shape) * 0.1
        net = build_network(spec, params, adj, rng)
        errors[kind] = max(_param_grad_errors(net, params, inputs, ds.labels, mask))

    worst = max(errors.values())
    detail = ", ".join(f"{k}={v:.1e}" for k, v in errors.items())
    return CheckResult("gradients_vs_finite_differences", worst < 1e-4, detail)


def check_collapse(n_cases=20, seed=3) -> CheckResult:
    """GCN with identity activation equals SGC with the product of its weights."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        n = int(rng.integers(2, 30))
        adj = normalize_with_self_loops(random_graph(rng, n))
        x = rng.standard_normal((n, int(rng.integers(1, 6))))
        gcn = ModelSpec(GCN, hidden_dim=int(rng.integers(1, 6)), dropout_p=0.0)
        params = init_params(gcn, x.shape[1], 3, rng)
        net = build_network(gcn, params, adj, rng, activation=Identity)
        gcn_probs = forward_probs(net, x)
        w = params.weights[0].value @ params.weights[1].value
        sgc = forward(ModelSpec(SGC, k_hops=2), adj, x, ModelParams([Parameter(w)]))
        worst = max(worst, float(np.max(np.abs(gcn_probs - sgc.probabilities))))
    return CheckResult("gcn_sgc_collapse", worst <= 1e-8, f"max deviation {worst:.1e}")


def forward_probs(net, x):
    return softmax_rows(net.forward(x, training=False))


def check_decoupling(seed=4) -> CheckResult:
    ds = generate_synthetic(15, 3, 8, 0.3, 0.02, 2.0, rng=seed)
    adj = normalize_with_self_loops(ds.graph)
    split = Split(np.arange(0, 45, 3), np.arange(1, 45, 3), np.arange(2, 45, 3))
    cfg = TrainConfig(max_epochs=30, patience=30)
    bad = []
    for kind in (SGC, SGC_MLP, APPNP, APPNP_MLP):
        spec = ModelSpec(kind)
        inline = train_model(spec, adj, ds.features, ds.labels, split, cfg, rng=7)
        cached = train_model(spec, adj, ds.features, ds.labels, split, cfg, rng=7,
                             precomputed=precompute_features(spec, adj, ds.features))
        same = inline.history == cached.history and all(
            np.array_equal(a, b) for a, b in zip(inline.params.values(), cached.params.values())
        )
        if not same:
            bad.append(kind)
    return CheckResult("decoupled_equals_inline", not bad,
                       "bitwise identical" if not bad else f"mismatch for {bad}")


def check_power_identity(seed=5) -> CheckResult:
    rng = np.random.default_rng(seed)
    adj = normalize_with_self_loops(random_graph(rng, 40))
    x = rng.standard_normal((40, 3))
    err = float(np.max(np.abs(propagate_power(adj, x, 5)
                              - propagate_power(adj, propagate_power(adj, x, 2), 3))))
    return CheckResult("power_identity", err <= 1e-10, f"max deviation {err:.1e}")


def check_permutation_equivariance(seed=6) -> CheckResult:
    rng = np.random.default_rng(seed)
    ds = generate_synthetic(8, 3, 5, 0.4, 0.05, 1.0, rng=rng)
    adj = normalize_with_self_loops(ds.graph)
    perm = rng.permutation(ds.n_nodes)
    adj_p = normalize_with_self_loops(permute(ds.graph, perm))
    worst = 0.0
    for kind in MODEL_KINDS:
        spec = ModelSpec(kind, ppr_iters=50)
        params = init_params(spec, ds.n_features, ds.n_classes, rng)
        base = forward(spec, adj, ds.features, params).probabilities
        moved = forward(spec, adj_p, ds.features[perm], params).probabilities
        worst = max(worst, float(np.max(np.abs(base[perm] - moved))))
    return CheckResult("permutation_equivariance", worst <= 1e-10, f"max deviation {worst:.1e}")


ALL_CHECKS: List[Callable[[], CheckResult]] = [
    check_ppr_against_dense,
    check_gradients,
    check_collapse,
    check_decoupling,
    check_spectrum,
    check_power_identity,
    check_permutation_equivariance,
]


def run_all() -> List[CheckResult]:
    return [check() for check in ALL_CHECKS]
