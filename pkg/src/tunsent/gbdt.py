"""Histogram gradient-boosted decision trees for 3-class softmax classification.

Feature values are quantized once into per-feature bins; split search scans
bin boundaries of per-leaf (sum_g, sum_h, count) histograms, growing each
tree leaf-wise (largest gain first) under num_leaves / max_depth /
min_child_weight bounds. Leaf values and split gains use second-order
(Newton) estimates with L1 soft-thresholding (reg_alpha) and L2 damping
(reg_lambda). One tree per class per boosting round; class order is fixed
as [-1, 0, 1] everywhere.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field, fields

import numpy as np

from .balancing import FeatureMatrix

MAGIC = "TNZGBM01"

CLASSES = (-1, 0, 1)
_CLASS_INDEX = {label: i for i, label in enumerate(CLASSES)}
N_CLASSES = len(CLASSES)

_INT_FIELDS = {"num_leaves", "max_depth", "n_estimators", "max_bins", "seed"}


class GbdtError(ValueError):
    pass


@dataclass(frozen=True)
class GbdtConfig:
    num_leaves: int = 64
    max_depth: int = 8
    learning_rate: float = 0.1
    n_estimators: int = 1000
    min_child_weight: float = 10.0
    reg_alpha: float = 0.1
    reg_lambda: float = 1.0
    subsample: float = 0.6
    colsample_bytree: float = 1.0
    max_bins: int = 255
    seed: int = 1

    def validate(self) -> None:
        if self.num_leaves < 2:
            raise GbdtError("num_leaves must be >= 2")
        if self.max_depth < 1:
            raise GbdtError("max_depth must be >= 1")
        if self.learning_rate <= 0:
            raise GbdtError("learning_rate must be > 0")
        if self.n_estimators < 0:
            raise GbdtError("n_estimators must be >= 0")
        if self.min_child_weight < 0:
            raise GbdtError("min_child_weight must be >= 0")
        if self.reg_alpha < 0 or self.reg_lambda < 0:
            raise GbdtError("reg_alpha and reg_lambda must be >= 0")
        if not (0.0 < self.subsample <= 1.0):
            raise GbdtError("subsample must be in (0, 1]")
        if not (0.0 < self.colsample_bytree <= 1.0):
            raise GbdtError("colsample_bytree must be in (0, 1]")
        if self.max_bins < 2:
            raise GbdtError("max_bins must be >= 2")


# ---------------------------------------------------------------------------
# Binning


@dataclass
class FeatureBinning:
    """Per-feature ascending bin upper bounds built from training quantiles."""

    upper_bounds: list[np.ndarray]

    @property
    def n_features(self) -> int:
        return len(self.upper_bounds)

    @property
    def max_bin_count(self) -> int:
        return max(len(b) for b in self.upper_bounds)

    def transform(self, x: np.ndarray) -> np.ndarray:
        """Map values to bin codes; values beyond the last bound clamp to the
        last bin (the side of the max training value)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.n_features:
            raise GbdtError(
                f"expected {self.n_features} features, got {x.shape[1]}"
            )
        codes = np.empty(x.shape, dtype=np.int32)
        for f, bounds in enumerate(self.upper_bounds):
            codes[:, f] = np.minimum(
                np.searchsorted(bounds, x[:, f], side="left"), len(bounds) - 1
            )
        return codes


def build_binning(x: np.ndarray, max_bins: int) -> FeatureBinning:
    """Quantile binning over the distinct values of each training feature."""
    bounds = []
    for f in range(x.shape[1]):
        uniq = np.unique(x[:, f])
        if uniq.size > max_bins:
            picks = np.unique(
                np.round(np.linspace(0, uniq.size - 1, max_bins)).astype(np.int64)
            )
            uniq = uniq[picks]
        bounds.append(uniq)
    return FeatureBinning(upper_bounds=bounds)


# ---------------------------------------------------------------------------
# Gradients


def _softmax(raw: np.ndarray) -> np.ndarray:
    shifted = raw - raw.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def compute_gradients(raw_scores, true_label: int):
    """First and second order derivatives of softmax cross-entropy at one
    sample: g_k = p_k - 1[k == true], h_k = p_k * (1 - p_k)."""
    raw = np.asarray(raw_scores, dtype=np.float64)
    if raw.shape != (N_CLASSES,):
        raise GbdtError(f"expected {N_CLASSES} raw scores, got shape {raw.shape}")
    if not np.isfinite(raw).all():
        raise GbdtError("raw scores must be finite")
    p = _softmax(raw)
    g = p.copy()
    g[_CLASS_INDEX[true_label]] -= 1.0
    h = p * (1.0 - p)
    return g, h


def cross_entropy(raw: np.ndarray, class_idx: np.ndarray) -> float:
    """Mean multiclass cross-entropy of raw scores against true class indices."""
    shifted = raw - raw.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(class_idx)), class_idx].mean())


# ---------------------------------------------------------------------------
# Histograms and split search


def build_histograms(codes, rows, features, g, h, n_bins) -> np.ndarray:
    """Per-feature (sum_g, sum_h, count) histograms over the given rows.

    Returns an array of shape (len(features), n_bins, 3) with float64
    accumulators so the parent == left + right subtraction identity holds to
    tight tolerance.
    """
    rows = np.asarray(rows)
    features = np.asarray(features)
    sub = codes[np.ix_(rows, features)].astype(np.int64)
    flat = (sub + np.arange(len(features)) * n_bins).ravel()
    size = len(features) * n_bins
    weights_g = np.repeat(g[rows], len(features))
    weights_h = np.repeat(h[rows], len(features))
    hist = np.empty((len(features), n_bins, 3), dtype=np.float64)
    hist[:, :, 0] = np.bincount(flat, weights=weights_g, minlength=size).reshape(
        len(features), n_bins
    )
    hist[:, :, 1] = np.bincount(flat, weights=weights_h, minlength=size).reshape(
        len(features), n_bins
    )
    hist[:, :, 2] = np.bincount(flat, minlength=size).reshape(len(features), n_bins)
    return hist


def _threshold_l1(g, alpha):
    return np.sign(g) * np.maximum(np.abs(g) - alpha, 0.0)


def leaf_value(sum_g: float, sum_h: float, config: GbdtConfig) -> float:
    den = sum_h + config.reg_lambda
    if den <= 0.0:
        return 0.0
    return float(-_threshold_l1(sum_g, config.reg_alpha) / den)


def _leaf_score(g, h, config):
    den = h + config.reg_lambda
    t = _threshold_l1(g, config.reg_alpha)
    return np.where(den > 0.0, t * t / (2.0 * den), 0.0)


@dataclass(frozen=True)
class SplitCandidate:
    feature: int  # original feature id
    bin_threshold: int  # rows with code <= bin_threshold go left
    gain: float
    left_stats: tuple  # (sum_g, sum_h, count)
    right_stats: tuple


def best_split(hist, totals, features, config) -> SplitCandidate | None:
    """Scan every (feature, bin boundary) and return the max-gain candidate.

    Gain = score(L) + score(R) - score(parent) with score = T(G)^2/(2(H+l2)),
    T the L1 soft-threshold. Boundaries leaving an empty side or a side with
    hessian sum below min_child_weight are skipped; ties break toward the
    lower feature id, then the lower bin id. None when no gain is positive.
    """
    sum_g, sum_h, count = totals
    gl = np.cumsum(hist[:, :, 0], axis=1)
    hl = np.cumsum(hist[:, :, 1], axis=1)
    cl = np.cumsum(hist[:, :, 2], axis=1)
    gr = sum_g - gl
    hr = sum_h - hl
    cr = count - cl

    parent_score = _leaf_score(np.float64(sum_g), np.float64(sum_h), config)
    gains = _leaf_score(gl, hl, config) + _leaf_score(gr, hr, config) - parent_score
    valid = (
        (cl >= 1)
        & (cr >= 1)
        & (hl >= config.min_child_weight)
        & (hr >= config.min_child_weight)
    )
    gains = np.where(valid, gains, -np.inf)

    flat_best = int(np.argmax(gains))  # first max: lowest feature, lowest bin
    best_gain = gains.flat[flat_best]
    if not (best_gain > 0.0):
        return None
    f_pos, b = divmod(flat_best, hist.shape[1])
    return SplitCandidate(
        feature=int(features[f_pos]),
        bin_threshold=int(b),
        gain=float(best_gain),
        left_stats=(float(gl[f_pos, b]), float(hl[f_pos, b]), float(cl[f_pos, b])),
        right_stats=(float(gr[f_pos, b]), float(hr[f_pos, b]), float(cr[f_pos, b])),
    )


# ---------------------------------------------------------------------------
# Trees


@dataclass
class Tree:
    feature: np.ndarray  # int32; -1 marks a leaf
    threshold: np.ndarray  # int32 bin threshold for internal nodes
    left: np.ndarray  # int32 child ids; -1 for leaves
    right: np.ndarray
    value: np.ndarray  # float64; leaf outputs (0.0 on internal nodes)
    n_leaves: int
    depth: int

    def predict_codes(self, codes: np.ndarray) -> np.ndarray:
        """Route every (pre-binned) row from the root to its leaf value."""
        node = np.zeros(len(codes), dtype=np.int32)
        for _ in range(self.depth + 1):
            active = np.flatnonzero(self.feature[node] >= 0)
            if active.size == 0:
                break
            cur = node[active]
            feats = self.feature[cur]
            go_left = codes[active, feats] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
        return self.value[node]


class _TreeBuilder:
    def __init__(self):
        self.feature = [ -1 ]
        self.threshold = [ -1 ]
        self.left = [ -1 ]
        self.right = [ -1 ]
        self.value = [ 0.0 ]
        self.depth = [ 0 ]

    def add_leaf(self, value: float, depth: int) -> int:
        node_id = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(-1)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        self.depth.append(depth)
        return node_id

    def make_internal(self, node_id: int, feature: int, threshold: int, left: int, right: int):
        self.feature[node_id] = feature
        self.threshold[node_id] = threshold
        self.left[node_id] = left
        self.right[node_id] = right
        self.value[node_id] = 0.0

    def freeze(self, n_leaves: int) -> Tree:
        return Tree(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=np.int32),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            value=np.asarray(self.value, dtype=np.float64),
            n_leaves=n_leaves,
            depth=max(
                d for d, f in zip(self.depth, self.feature) if f < 0
            ),
        )


def grow_tree(codes, rows, g, h, features, config: GbdtConfig, n_bins: int) -> Tree:
    """Grow one tree leaf-wise: always split the leaf with the current
    largest gain, until num_leaves, max_depth, or no positive gain remains.

    Child histograms are built for the smaller child only; the sibling comes
    from parent - child subtraction.
    """
    rows = np.asarray(rows)
    builder = _TreeBuilder()

    root_hist = build_histograms(codes, rows, features, g, h, n_bins)
    root_totals = tuple(root_hist[0].sum(axis=0))
    builder.value[0] = leaf_value(root_totals[0], root_totals[1], config)
    builder.depth[0] = 0

    heap: list[tuple] = []
    counter = 0  # heap tie-break: earlier-created leaf first
    state = {0: (rows, root_hist, root_totals, 0)}

    if config.max_depth > 0 and rows.size >= 2:
        cand = best_split(root_hist, root_totals, features, config)
        if cand is not None:
            heapq.heappush(heap, (-cand.gain, counter, 0, cand))
            counter += 1

    n_leaves = 1
    while heap and n_leaves < config.num_leaves:
        _, _, node_id, cand = heapq.heappop(heap)
        node_rows, node_hist, _, node_depth = state.pop(node_id)

        mask = codes[node_rows, cand.feature] <= cand.bin_threshold
        left_rows = node_rows[mask]
        right_rows = node_rows[~mask]

        if left_rows.size <= right_rows.size:
            left_hist = build_histograms(codes, left_rows, features, g, h, n_bins)
            right_hist = node_hist - left_hist
        else:
            right_hist = build_histograms(codes, right_rows, features, g, h, n_bins)
            left_hist = node_hist - right_hist

        child_depth = node_depth + 1
        left_id = builder.add_leaf(
            leaf_value(cand.left_stats[0], cand.left_stats[1], config), child_depth
        )
        right_id = builder.add_leaf(
            leaf_value(cand.right_stats[0], cand.right_stats[1], config), child_depth
        )
        builder.make_internal(node_id, cand.feature, cand.bin_threshold, left_id, right_id)
        n_leaves += 1

        for child_id, child_rows, child_hist, child_stats in (
            (left_id, left_rows, left_hist, cand.left_stats),
            (right_id, right_rows, right_hist, cand.right_stats),
        ):
            if child_depth >= config.max_depth or child_rows.size < 2:
                continue
            child_cand = best_split(child_hist, child_stats, features, config)
            if child_cand is not None:
                state[child_id] = (child_rows, child_hist, child_stats, child_depth)
                heapq.heappush(heap, (-child_cand.gain, counter, child_id, child_cand))
                counter += 1

    return builder.freeze(n_leaves)


# ---------------------------------------------------------------------------
# Boosting


@dataclass
class GbdtModel:
    config: GbdtConfig
    binning: FeatureBinning
    init_scores: np.ndarray  # (3,) log class priors, class order [-1, 0, 1]
    trees: list[list[Tree]]  # [round][class]
    train_losses: list[float] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return self.binning.n_features


def fit(data: FeatureMatrix, config: GbdtConfig = GbdtConfig()) -> GbdtModel:
    """Train per-class tree ensembles by stagewise loss minimization.

    Initial scores are log empirical class priors. Each round computes
    softmax gradients/hessians from the current raw scores, bags rows once
    (shared by the round's three trees), optionally subsamples features per
    tree, grows one leaf-wise tree per class, and adds learning_rate * leaf
    values to the raw scores.
    """
    config.validate()
    x = np.asarray(data.rows, dtype=np.float64)
    y = np.asarray(data.labels)
    n = len(y)
    if n < 2:
        raise GbdtError("need at least 2 training rows")
    if not np.isfinite(x).all():
        raise GbdtError("training features contain non-finite values")
    present = np.unique(y)
    if present.size < 2:
        raise GbdtError("single-class training data")

    class_idx = np.array([_CLASS_INDEX[int(label)] for label in y])
    onehot = np.zeros((n, N_CLASSES))
    onehot[np.arange(n), class_idx] = 1.0
    counts = onehot.sum(axis=0)
    with np.errstate(divide="ignore"):
        init_scores = np.log(counts / n)

    binning = build_binning(x, config.max_bins)
    codes = binning.transform(x)
    n_bins = binning.max_bin_count
    n_features = x.shape[1]

    raw = np.tile(init_scores, (n, 1))
    rng = np.random.default_rng(config.seed)
    trees: list[list[Tree]] = []
    losses: list[float] = []

    bag_size = max(1, int(config.subsample * n))
    feat_size = max(1, int(config.colsample_bytree * n_features))
    all_rows = np.arange(n)
    all_feats = np.arange(n_features)

    for _ in range(config.n_estimators):
        loss = cross_entropy(raw, class_idx)
        if not np.isfinite(loss):
            raise GbdtError("training loss became non-finite")
        losses.append(loss)

        p = _softmax(raw)
        grad = p - onehot
        hess = p * (1.0 - p)

        if config.subsample < 1.0:
            bag = np.sort(rng.choice(n, size=bag_size, replace=False))
        else:
            bag = all_rows
        round_trees = []
        for k in range(N_CLASSES):
            if config.colsample_bytree < 1.0:
                feats = np.sort(rng.choice(n_features, size=feat_size, replace=False))
            else:
                feats = all_feats
            tree = grow_tree(codes, bag, grad[:, k], hess[:, k], feats, config, n_bins)
            raw[:, k] += config.learning_rate * tree.predict_codes(codes)
            round_trees.append(tree)
        trees.append(round_trees)

    losses.append(cross_entropy(raw, class_idx))
    return GbdtModel(
        config=config,
        binning=binning,
        init_scores=init_scores,
        trees=trees,
        train_losses=losses,
    )


def predict_raw(model: GbdtModel, x: np.ndarray) -> np.ndarray:
    codes = model.binning.transform(x)
    raw = np.tile(model.init_scores, (len(codes), 1))
    for round_trees in model.trees:
        for k, tree in enumerate(round_trees):
            raw[:, k] += model.config.learning_rate * tree.predict_codes(codes)
    return raw


def predict_proba(model: GbdtModel, x) -> np.ndarray:
    """Softmax class probabilities in class order [-1, 0, 1].

    Accepts a single vector or a matrix of rows.
    """
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    proba = _softmax(predict_raw(model, np.atleast_2d(arr)))
    return proba[0] if single else proba


def predict_label(model: GbdtModel, x):
    """Argmax class; exact ties resolve toward the more negative label."""
    proba = predict_proba(model, x)
    if proba.ndim == 1:
        return CLASSES[int(np.argmax(proba))]
    return np.array([CLASSES[i] for i in np.argmax(proba, axis=1)])


# ---------------------------------------------------------------------------
# Persistence (versioned textual format)


def _fmt(v: float) -> str:
    return repr(float(v))


def _write_tree(lines: list[str], tree: Tree) -> None:
    stack = [0]
    while stack:
        node = stack.pop()
        if tree.feature[node] < 0:
            lines.append(f"leaf {node} value {_fmt(tree.value[node])}")
        else:
            lines.append(
                f"node {node} feat {tree.feature[node]} bin {tree.threshold[node]} "
                f"L {tree.left[node]} R {tree.right[node]}"
            )
            stack.append(int(tree.right[node]))  # preorder: left subtree first
            stack.append(int(tree.left[node]))


def save_model(model: GbdtModel, path) -> None:
    cfg = model.config
    cfg_parts = []
    for f in fields(GbdtConfig):
        v = getattr(cfg, f.name)
        cfg_parts.append(f"{f.name}={v if f.name in _INT_FIELDS else _fmt(v)}")
    lines = [MAGIC, "config " + " ".join(cfg_parts)]
    lines.append("init_scores " + " ".join(_fmt(v) for v in model.init_scores))
    lines.append(f"binning {model.binning.n_features}")
    for f_id, bounds in enumerate(model.binning.upper_bounds):
        lines.append(f"feature {f_id} " + " ".join(_fmt(b) for b in bounds))
    for round_id, round_trees in enumerate(model.trees):
        for k, tree in enumerate(round_trees):
            lines.append(f"tree {round_id} {CLASSES[k]}")
            _write_tree(lines, tree)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> GbdtModel:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != MAGIC:
        found = lines[0] if lines else "<empty file>"
        raise GbdtError(f"bad classifier model magic: expected {MAGIC!r}, found {found!r}")

    pos = 1
    assert lines[pos].startswith("config ")
    cfg_kwargs = {}
    for part in lines[pos].split()[1:]:
        key, _, val = part.partition("=")
        cfg_kwargs[key] = int(val) if key in _INT_FIELDS else float(val)
    config = GbdtConfig(**cfg_kwargs)
    pos += 1

    assert lines[pos].startswith("init_scores ")
    init_scores = np.array([float(v) for v in lines[pos].split()[1:]])
    pos += 1

    assert lines[pos].startswith("binning ")
    n_features = int(lines[pos].split()[1])
    pos += 1
    bounds = []
    for _ in range(n_features):
        parts = lines[pos].split()
        bounds.append(np.array([float(v) for v in parts[2:]]))
        pos += 1
    binning = FeatureBinning(upper_bounds=bounds)

    trees: list[list[Tree]] = []
    while pos < len(lines):
        header = lines[pos].split()
        if header[0] != "tree":
            raise GbdtError(f"unexpected line in classifier model: {lines[pos]!r}")
        round_id, class_label = int(header[1]), int(header[2])
        pos += 1
        nodes = {}
        while pos < len(lines) and lines[pos].split()[0] in ("node", "leaf"):
            parts = lines[pos].split()
            if parts[0] == "leaf":
                nodes[int(parts[1])] = ("leaf", float(parts[3]))
            else:
                nodes[int(parts[1])] = (
                    "node",
                    int(parts[3]),
                    int(parts[5]),
                    int(parts[7]),
                    int(parts[9]),
                )
            pos += 1
        size = max(nodes) + 1
        feature = np.full(size, -1, dtype=np.int32)
        threshold = np.full(size, -1, dtype=np.int32)
        left = np.full(size, -1, dtype=np.int32)
        right = np.full(size, -1, dtype=np.int32)
        value = np.zeros(size, dtype=np.float64)
        for node_id, entry in nodes.items():
            if entry[0] == "leaf":
                value[node_id] = entry[1]
            else:
                feature[node_id] = entry[1]
                threshold[node_id] = entry[2]
                left[node_id] = entry[3]
                right[node_id] = entry[4]
        depth = np.zeros(size, dtype=np.int32)
        order = [0]
        while order:
            node = order.pop()
            if feature[node] >= 0:
                depth[left[node]] = depth[node] + 1
                depth[right[node]] = depth[node] + 1
                order.extend((int(left[node]), int(right[node])))
        tree = Tree(
            feature=feature,
            threshold=threshold,
            left=left,
            right=right,
            value=value,
            n_leaves=int((feature < 0).sum()),
            depth=int(depth[feature < 0].max()),
        )
        expected_class = CLASSES[len(trees[round_id]) if round_id < len(trees) else 0]
        if class_label != expected_class:
            raise GbdtError(
                f"tree for round {round_id} out of class order: "
                f"expected class {expected_class}, found {class_label}"
            )
        if round_id == len(trees):
            trees.append([])
        trees[round_id].append(tree)

    return GbdtModel(
        config=config,
        binning=binning,
        init_scores=init_scores,
        trees=trees,
    )
