"""Relational message-passing Q-network with hand-written reverse-mode gradients.

Every node starts from a zero embedding. Each round, every atom sends one
message per argument position through its relation's combiner. Nodes
aggregate their incoming messages with a coordinate-wise smooth maximum and
take a residual step through the shared update perceptron. After the last
round, each action node's embedding is concatenated with a smooth-max pool
over all nodes of its graph and scored by the shared readout perceptron.

Each perceptron is two affine layers with a softplus in between. Arrays are
float64 throughout so finite-difference checks stay meaningful.
"""
from __future__ import annotations

import copy
import io
import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import EmptyInput, MissingRelation, NonFiniteTarget, ShapeMismatch
from .graph import RelationalGraph

CHECKPOINT_FORMAT = 1


@dataclass(frozen=True)
class NetConfig:
    dim: int = 32
    layers: int = 30
    alpha: float = 12.0
    comb_hidden: int | None = None  # None: output width d * arity
    update_hidden: int | None = None  # None: d
    readout_hidden: int | None = None  # None: d

    def __post_init__(self):
        if self.dim < 1 or self.layers < 1 or not self.alpha > 0:
            raise ValueError(f"invalid network config {self}")


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def smoothmax(values, alpha: float = 12.0, axis: int = 0):
    """Boltzmann-weighted mean ``sum v e^{a v} / sum e^{a v}`` along ``axis``."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0 or v.shape[axis] == 0:
        raise EmptyInput("smoothmax of an empty vector")
    shift = v.max(axis=axis, keepdims=True)
    e = np.exp(alpha * (v - shift))
    out = (v * e).sum(axis=axis) / e.sum(axis=axis)
    return float(out) if out.ndim == 0 else out


class _Segments:
    """Sorted grouping of rows by a key, for scatter-free segment reductions."""

    def __init__(self, keys: np.ndarray):
        self.perm = np.argsort(keys, kind="stable")
        sorted_keys = keys[self.perm]
        n = len(sorted_keys)
        if n:
            change = np.empty(n, dtype=bool)
            change[0] = True
            np.not_equal(sorted_keys[1:], sorted_keys[:-1], out=change[1:])
            starts = np.flatnonzero(change)
        else:
            starts = np.zeros(0, dtype=np.int64)
        self.starts = starts
        self.keys = sorted_keys[starts]
        counts = np.diff(np.append(starts, n))
        self.seg_of_row = np.repeat(np.arange(len(starts)), counts)

    def smoothmax(self, rows: np.ndarray, alpha: float):
        v = rows[self.perm]
        shift = np.maximum.reduceat(v, self.starts, axis=0)
        e = np.exp(alpha * (v - shift[self.seg_of_row]))
        total = np.add.reduceat(e, self.starts, axis=0)
        out = np.add.reduceat(v * e, self.starts, axis=0) / total
        return out, (v, e, total, out)

    def smoothmax_backward(self, cache, dout: np.ndarray, alpha: float) -> np.ndarray:
        v, e, total, out = cache
        seg = self.seg_of_row
        p = e / total[seg]
        dv = p * (1.0 + alpha * (v - out[seg])) * dout[seg]
        drows = np.empty_like(dv)
        drows[self.perm] = dv
        return drows

    def sum(self, rows: np.ndarray) -> np.ndarray:
        return np.add.reduceat(rows[self.perm], self.starts, axis=0)


class GraphBatch:
    """Disjoint union of relational graphs with precomputed index structure."""

    def __init__(self, graphs: list[RelationalGraph], relations: list[str]):
        self.graphs = graphs
        offsets = np.cumsum([0] + [g.num_nodes for g in graphs])
        self.offsets = offsets
        self.num_nodes = int(offsets[-1])
        self.node_graph = np.repeat(np.arange(len(graphs)), [g.num_nodes for g in graphs])
        known = set(relations)
        per_rel: dict[str, list[np.ndarray]] = {r: [] for r in relations}
        for gi, g in enumerate(graphs):
            for rel, arr in g.relation_arrays.items():
                if rel not in known:
                    raise MissingRelation(f"no combiner for relation {rel!r}")
                per_rel[rel].append(arr + offsets[gi])
        self.rel_atoms = [(r, np.concatenate(v, axis=0)) for r, v in per_rel.items() if v and v[0].shape[1] > 0]
        dest = [arr.ravel() for _, arr in self.rel_atoms]
        self.msg_dest = np.concatenate(dest) if dest else np.zeros(0, dtype=np.int64)
        self.msg_segments = _Segments(self.msg_dest)
        self.pool_segments = _Segments(self.node_graph)
        self.action_nodes = []  # per graph: global node index of each action node
        for gi, g in enumerate(graphs):
            base = offsets[gi] + g.num_objects
            self.action_nodes.append(np.arange(base, base + len(g.action_ids)))


def _matmul(x, W):
    # BLAS routes single-row or single-column products through a kernel with a
    # different summation order; padding keeps batched and per-graph results bit-equal
    if W.shape[1] == 1:
        return _matmul(x, np.concatenate([W, W], axis=1))[:, :1]
    if x.shape[0] == 1:
        return (np.concatenate([x, x]) @ W)[:1]
    return x @ W


def _mlp_forward(W1, b1, W2, b2, x):
    h = _matmul(x, W1) + b1
    a = softplus(h)
    return _matmul(a, W2) + b2, (x, h, a)


def _mlp_backward(W1, W2, cache, dy, gW1, gb1, gW2, gb2):
    x, h, a = cache
    gW2 += a.T @ dy
    gb2 += dy.sum(axis=0)
    dh = (dy @ W2.T) * sigmoid(h)
    gW1 += x.T @ dh
    gb1 += dh.sum(axis=0)
    return dh @ W1.T


class QNetwork:
    """Parameters plus forward/backward passes of the relational Q-network."""

    def __init__(self, signature: list[tuple[str, int]], config: NetConfig, params: dict[str, np.ndarray], version: int = 0):
        self.signature = list(signature)
        self.arity = dict(self.signature)
        self.config = config
        self.params = params
        self.version = version

    # -------------------------------------------------------------- creation

    @classmethod
    def init(cls, signature, config: NetConfig = NetConfig(), seed: int = 0) -> "QNetwork":
        """Fan-in scaled uniform weights ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``, zero biases."""
        rng = np.random.default_rng(seed)
        d = config.dim
        params: dict[str, np.ndarray] = {}

        def mlp(prefix, n_in, n_hidden, n_out):
            for name, (fi, fo) in (("1", (n_in, n_hidden)), ("2", (n_hidden, n_out))):
                bound = 1.0 / np.sqrt(fi)
                params[f"{prefix}/W{name}"] = rng.uniform(-bound, bound, size=(fi, fo))
                params[f"{prefix}/b{name}"] = np.zeros(fo)

        for rel, ar in signature:
            if ar == 0:
                continue  # nullary atoms carry no positions to message
            width = d * ar
            mlp(f"comb/{rel}", width, config.comb_hidden or width, width)
        mlp("update", 2 * d, config.update_hidden or d, d)
        mlp("readout", 2 * d, config.readout_hidden or d, 1)
        return cls(signature, config, params)

    def clone_frozen(self) -> "QNetwork":
        return QNetwork(self.signature, self.config, {k: v.copy() for k, v in self.params.items()}, self.version)

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def _mlp(self, prefix):
        p = self.params
        return p[prefix + "/W1"], p[prefix + "/b1"], p[prefix + "/W2"], p[prefix + "/b2"]

    # -------------------------------------------------------------- forward

    def batch(self, graphs: list[RelationalGraph]) -> GraphBatch:
        relations = [r for r, _ in self.signature]
        if len(graphs) == 1:
            # single-graph batches are rebuilt constantly during search; keep one per graph
            g = graphs[0]
            cached = g.__dict__.get("_single_batch")
            if cached is not None and cached[0] == relations:
                return cached[1]
            gb = GraphBatch(graphs, relations)
            g.__dict__["_single_batch"] = (relations, gb)
            return gb
        return GraphBatch(graphs, relations)

    def _embed(self, gb: GraphBatch, keep_cache: bool):
        d, alpha = self.config.dim, self.config.alpha
        X = np.zeros((gb.num_nodes, d))
        seg = gb.msg_segments
        caches = []
        for _ in range(self.config.layers):
            comb_caches, msgs = [], []
            for rel, arr in gb.rel_atoms:
                W1, b1, W2, b2 = self._mlp("comb/" + rel)
                z = X[arr].reshape(len(arr), -1)
                out, c = _mlp_forward(W1, b1, W2, b2, z)
                msgs.append(out.reshape(-1, d))
                comb_caches.append(c)
            m = np.zeros((gb.num_nodes, d))
            agg_cache = None
            if msgs:
                agg, agg_cache = seg.smoothmax(np.concatenate(msgs, axis=0), alpha)
                m[seg.keys] = agg
            W1, b1, W2, b2 = self._mlp("update")
            upd, upd_cache = _mlp_forward(W1, b1, W2, b2, np.concatenate([X, m], axis=1))
            if keep_cache:
                caches.append((comb_caches, agg_cache, upd_cache))
            X = X + upd
        pooled, pool_cache = gb.pool_segments.smoothmax(X, alpha)
        return X, pooled, caches, pool_cache

    def _readout(self, X, pooled, nodes, graph_idx):
        W1, b1, W2, b2 = self._mlp("readout")
        r_in = np.concatenate([X[nodes], pooled[graph_idx]], axis=1)
        out, cache = _mlp_forward(W1, b1, W2, b2, r_in)
        return out[:, 0], cache

    def forward_batch(self, graphs: list[RelationalGraph]) -> list[dict[int, float]]:
        """Q-values for every action node of every graph."""
        if not graphs:
            return []
        gb = self.batch(graphs)
        X, pooled, _, _ = self._embed(gb, keep_cache=False)
        nodes = np.concatenate(gb.action_nodes)
        if len(nodes) == 0:
            return [{} for _ in graphs]
        q, _ = self._readout(X, pooled, nodes, gb.node_graph[nodes])
        out, pos = [], 0
        for g in graphs:
            k = len(g.action_ids)
            out.append(dict(zip(g.action_ids, q[pos : pos + k].tolist())))
            pos += k
        return out

    def forward(self, graph: RelationalGraph) -> dict[int, float]:
        return self.forward_batch([graph])[0]

    # -------------------------------------------------------------- training

    def loss_and_grad(self, batch) -> tuple[float, dict[str, np.ndarray]]:
        """Mean squared error over ``(graph, action_id, target)`` triples and its exact gradient."""
        if not batch:
            raise EmptyInput("empty training batch")
        graphs, index = [], {}
        sel_graph, sel_action, targets = [], [], []
        for graph, action, y in batch:
            if not np.isfinite(y):
                raise NonFiniteTarget(f"target {y!r}")
            gi = index.get(id(graph))
            if gi is None:
                gi = index[id(graph)] = len(graphs)
                graphs.append(graph)
            sel_graph.append(gi)
            sel_action.append(graph.action_ids.index(action))
            targets.append(y)
        gb = self.batch(graphs)
        sel_graph = np.asarray(sel_graph)
        nodes = np.asarray([gb.action_nodes[g][a] for g, a in zip(sel_graph, sel_action)], dtype=np.int64)
        X, pooled, caches, pool_cache = self._embed(gb, keep_cache=True)
        q, r_cache = self._readout(X, pooled, nodes, sel_graph)
        err = q - np.asarray(targets, dtype=np.float64)
        n = len(batch)
        loss = float(np.mean(err**2))
        grads = self.zero_grads()
        d, alpha = self.config.dim, self.config.alpha

        dq = (2.0 / n) * err
        p = self.params
        dr = _mlp_backward(p["readout/W1"], p["readout/W2"], r_cache, dq[:, None],
                           grads["readout/W1"], grads["readout/b1"], grads["readout/W2"], grads["readout/b2"])
        dX = np.zeros_like(X)
        np.add.at(dX, nodes, dr[:, :d])
        dpool = np.zeros_like(pooled)
        np.add.at(dpool, sel_graph, dr[:, d:])
        dX += gb.pool_segments.smoothmax_backward(pool_cache, dpool, alpha)

        seg = gb.msg_segments
        for comb_caches, agg_cache, upd_cache in reversed(caches):
            du = _mlp_backward(p["update/W1"], p["update/W2"], upd_cache, dX,
                               grads["update/W1"], grads["update/b1"], grads["update/W2"], grads["update/b2"])
            dX = dX + du[:, :d]
            if agg_cache is None:
                continue
            dmsg = seg.smoothmax_backward(agg_cache, du[seg.keys, d:], alpha)
            pos = 0
            dz_rows = []
            for (rel, arr), c in zip(gb.rel_atoms, comb_caches):
                k = arr.size
                dout = dmsg[pos : pos + k].reshape(len(arr), -1)
                pos += k
                pre = "comb/" + rel
                dz = _mlp_backward(p[pre + "/W1"], p[pre + "/W2"], c, dout,
                                   grads[pre + "/W1"], grads[pre + "/b1"], grads[pre + "/W2"], grads[pre + "/b2"])
                dz_rows.append(dz.reshape(-1, d))
            dX[seg.keys] += seg.sum(np.concatenate(dz_rows, axis=0))
        return loss, grads

    def apply_update(self, grads: dict[str, np.ndarray], optimizer, lr_gnn: float = 1e-4, lr_readout: float = 1e-3) -> "QNetwork":
        """Step parameters in place: ``lr_readout`` for the readout, ``lr_gnn`` for the rest."""
        if grads.keys() != self.params.keys():
            raise ShapeMismatch("gradient tree does not match the network")
        for k, g in grads.items():
            if g.shape != self.params[k].shape:
                raise ShapeMismatch(f"{k}: {g.shape} vs {self.params[k].shape}")
        optimizer.step(self.params, grads, {k: lr_readout if k.startswith("readout/") else lr_gnn for k in grads})
        self.version += 1
        return self

    # -------------------------------------------------------------- checkpoints

    def to_bytes(self) -> bytes:
        meta = {
            "format": CHECKPOINT_FORMAT,
            "config": asdict(self.config),
            "signature": self.signature,
            "version": self.version,
        }
        buf = io.BytesIO()
        arrays = {f"p:{k}": v for k, v in self.params.items()}
        np.savez(buf, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "QNetwork":
        with np.load(io.BytesIO(data)) as z:
            meta = json.loads(z["__meta__"].tobytes().decode())
            if meta.get("format") != CHECKPOINT_FORMAT:
                raise ValueError(f"unsupported checkpoint format {meta.get('format')!r}")
            params = {k[2:]: z[k].copy() for k in z.files if k.startswith("p:")}
        sig = [(r, int(a)) for r, a in meta["signature"]]
        return cls(sig, NetConfig(**meta["config"]), params, meta["version"])

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "QNetwork":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def num_parameters(self) -> int:
        return sum(v.size for v in self.params.values())


class SGD:
    """Plain gradient descent, ``w <- w - lr * g``."""

    def step(self, params, grads, lrs):
        for k, g in grads.items():
            params[k] -= lrs[k] * g

    def copy(self):
        return SGD()


class Adam:
    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params, grads, lrs):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            params[k] -= lrs[k] * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def copy(self):
        return copy.deepcopy(self)


def make_optimizer(name: str):
    if name == "adam":
        return Adam()
    if name == "sgd":
        return SGD()
    raise ValueError(f"unknown optimizer {name!r}")
