import os
from pathlib import Path

import numpy as np
import pytest

from graphcssl.graph import LabeledGraph, make_graph

DATA_DIR = Path(__file__).parent / "data"


def fig1_graph():
    """Four nodes, edges 1-2, 1-3, 1-4, 3-4 (nodes 1, 3, 4 form a triangle)."""
    return LabeledGraph((1, 2, 3, 4), frozenset({(1, 2), (1, 3), (1, 4), (3, 4)}),
                        np.eye(4), label=0, graph_id=7)


def random_graph(rng, n, p=0.3, d=3, graph_id=0, label=None):
    edges = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < p]
    return make_graph(n, edges, rng.normal(size=(n, d)), label=label, graph_id=graph_id)


def two_class_graphs(rng, count, n_range=(6, 14), d=4, start_id=0):
    """Label 0: cycle with chords; label 1: random tree.  Node features one-hot of degree."""
    graphs = []
    for i in range(count):
        label = i % 2
        n = int(rng.integers(*n_range))
        if label == 0:
            edges = {(j, (j + 1) % n) for j in range(n)}
            for _ in range(n // 3):
                a, b = rng.choice(n, 2, replace=False)
                edges.add((int(a), int(b)))
        else:
            edges = {(j, int(rng.integers(j))) for j in range(1, n)}
        edges = {(min(a, b), max(a, b)) for a, b in edges if a != b}
        deg = np.zeros(n, dtype=int)
        for a, b in edges:
            deg[a] += 1
            deg[b] += 1
        feats = np.eye(d)[np.minimum(deg, d - 1)]
        graphs.append(make_graph(n, edges, feats, label=label, graph_id=start_id + i))
    return graphs


def tu_root():
    """Directory holding full TU datasets, if the environment provides one."""
    root = os.environ.get("GRAPHCSSL_DATA_ROOT")
    return Path(root) if root else None


def require_tu(name):
    root = tu_root()
    if root is None or not (root / name / f"{name}_A.txt").is_file():
        pytest.skip(f"{name} not available: set GRAPHCSSL_DATA_ROOT to a directory "
                    f"containing {name}/{name}_A.txt")
    return root


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def finite_difference(f, params, eps=1e-5, names=None):
    """Central differences of scalar ``f(params)`` for every entry of ``params[name]``."""
    out = {}
    for name in names or sorted(params):
        p = params[name]
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            hi = f(params)
            flat[i] = old - eps
            lo = f(params)
            flat[i] = old
            gflat[i] = (hi - lo) / (2 * eps)
        out[name] = g
    return out


def max_rel_error(analytic, numeric, floor=1e-6):
    """Largest entrywise |a - n| / max(|a|, |n|, floor) over all parameters."""
    worst = 0.0
    for k, n in numeric.items():
        a = np.asarray(analytic.get(k, np.zeros_like(n)))
        den = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / den, initial=0.0)))
    return worst


def check_graph_invariants(g, d=None):
    assert len(set(g.nodes)) == len(g.nodes)
    node_set = set(g.nodes)
    for u, v in g.edges:
        assert u < v, "edge not stored canonically"
        assert u in node_set and v in node_set, "dangling endpoint"
    assert g.features.shape[0] == g.num_nodes
    if d is not None:
        assert g.features.shape[1] == d


def _reachable(g):
    a = g.adjacency().astype(bool) | np.eye(g.num_nodes, dtype=bool)
    for k in range(g.num_nodes):
        a |= a[:, [k]] & a[[k], :]
    return a


def check_step(before, op, after):
    """Independent check of one alteration: guard, node delta and edge delta."""
    from itertools import combinations

    from graphcssl.augment import OpKind
    from graphcssl.graph import find_cliques

    kind, args = op.kind, op.args
    if kind is OpKind.EDGE_DELETION:
        assert tuple(args) in before.edges
        assert after.num_nodes == before.num_nodes
        assert after.num_edges == before.num_edges - 1
        assert after.edges == before.edges - {tuple(args)}
    elif kind is OpKind.NODE_DELETION:
        (u,) = args
        assert before.num_nodes >= 2 and u in before.index
        assert after.num_nodes == before.num_nodes - 1
        assert after.num_edges == before.num_edges - before.degree(u)
        assert after.nodes == tuple(range(after.num_nodes))
    elif kind is OpKind.EDGE_INSERTION:
        u, v = args
        assert (u, v) not in before.edges and u != v
        reach = _reachable(before)
        assert reach[before.index[u], before.index[v]]
        assert after.num_nodes == before.num_nodes
        assert after.edges == before.edges | {(u, v)}
    elif kind is OpKind.NODE_INSERTION:
        s = list(args)
        assert len(s) >= 2
        assert all(e in before.edges for e in combinations(sorted(s), 2)), "operand not a clique"
        if find_cliques(before, 3):
            assert len(s) == 3, "a triangle exists but a smaller clique was chosen"
        else:
            assert len(s) == 2
        assert after.num_nodes == before.num_nodes + 1
        k = len(s)
        assert after.num_edges == before.num_edges + k - k * (k - 1) // 2
        hub = max(after.nodes)
        assert np.allclose(after.feature_of(hub), np.mean([before.feature_of(w) for w in s], 0))
    else:
        assert after == before
    assert after.label == before.label and after.graph_id == before.graph_id


def fuzz_augmentations(count, seed, node_range=(3, 50)):
    """Run ``count`` random A1/A3 sequences; returns (failures, kinds seen, exhausted)."""
    from graphcssl.augment import (ALTERATIONS, AugmentConfig, OpKind, apply_op, format_trace,
                                   parse_trace, replay, sample_augmentation)

    rng = np.random.default_rng(seed)
    failures, seen, exhausted = [], set(), 0
    for i in range(count):
        n = int(rng.integers(node_range[0], node_range[1] + 1))
        p = float(rng.choice([0.02, 0.1, 0.3, 0.7]))
        g = random_graph(rng, n, p=min(p, 6.0 / n) if p < 0.7 else p, d=2, graph_id=i,
                         label=int(rng.integers(3)))
        mask = rng.random(4) < 0.75
        whitelist = tuple(k for k, m in zip(ALTERATIONS, mask) if m) or ALTERATIONS
        cfg = AugmentConfig(num_steps=int(rng.choice([1, 3])), op_whitelist=whitelist)
        try:
            aug = sample_augmentation(g, cfg, np.random.default_rng([seed, i]))
            assert len(aug.trace) == cfg.num_steps and aug.origin_id == g.graph_id
            cur = g
            for op in aug.trace:
                assert op.kind in whitelist or op.kind is OpKind.NO_OP
                nxt = apply_op(cur, op)
                check_step(cur, op, nxt)
                check_graph_invariants(nxt, d=2)
                seen.add(op.kind)
                cur = nxt
            assert cur == aug.graph
            assert replay(g, aug.trace) == aug.graph
            assert replay(g, parse_trace(format_trace(aug.trace))) == aug.graph
            exhausted += aug.exhausted
        except AssertionError as exc:
            failures.append((i, str(exc)))
    return failures, seen, exhausted


# acceptance reporting: one line per criterion at the end of the run

ACCEPTANCE: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    rec = ACCEPTANCE.setdefault(number, {"title": title, "status": "PASS", "detail": ""})
    if report.skipped and call.when in ("setup", "call"):
        rec["status"] = "SKIP"
        reason = report.longrepr[2] if isinstance(report.longrepr, tuple) else str(report.longrepr)
        rec["detail"] = reason.replace("Skipped: ", "")
    elif report.failed:
        rec["status"] = "FAIL"
        rec["detail"] = rec["detail"] or str(call.excinfo.value).splitlines()[0][:160] \
            if call.excinfo else rec["detail"]


@pytest.fixture
def measured(request):
    """Let an acceptance test attach the numbers it measured to its report line."""
    marker = request.node.get_closest_marker("criterion")

    def note(text):
        rec = ACCEPTANCE.setdefault(marker.args[0], {"title": marker.args[1], "status": "PASS",
                                                     "detail": ""})
        rec["detail"] = (rec["detail"] + "; " if rec["detail"] else "") + text

    return note


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        rec = ACCEPTANCE[number]
        line = f"[{rec['status']}] {number}. {rec['title']}"
        if rec["detail"]:
            line += f" -- {rec['detail']}"
        terminalreporter.write_line(line)
