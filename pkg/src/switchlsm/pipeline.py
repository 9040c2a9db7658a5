"""Data ingestion and text-based slant scoring.

File formats (CSV, UTF-8, header row required):
  edge list      i,j,t,w       t is a 1-based day index, w a nonnegative count
  leaning        i,t,leaning   values in [0, 1], clamped to the open interval
  token counts   token,entity,t,count
  scores         party,score

Node order is first-appearance order in the edge list and is persisted on the
layer; unseen (i, j, t) combinations are zero.
"""

from __future__ import annotations

import csv

import numpy as np

from .types import Layer
from .validation import IngestionError, ValidationError, clamp_leaning

__all__ = [
    "load_edge_list",
    "write_edge_list",
    "load_leaning",
    "write_leaning",
    "load_exposure",
    "attach_leaning",
    "project_bipartite",
    "filter_inactive",
    "slant_index",
    "pearson_correlation",
]


def _read_rows(path, expected_header):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file, expected header {expected_header}")
        header = [h.strip() for h in header]
        if header != list(expected_header):
            raise IngestionError(
                f"{path}: expected header {','.join(expected_header)}, got {','.join(header)}"
            )
        return list(reader)


def load_edge_list(path):
    """Read an i,j,t,w edge list into a Layer (without leaning data)."""
    rows = _read_rows(path, ("i", "j", "t", "w"))
    if not rows:
        raise IngestionError(f"{path}: no data rows, the panel would have zero periods")
    node_order = {}
    parsed = []
    max_t = 0
    seen = {}
    duplicates = []
    for ln, row in enumerate(rows, start=2):
        if len(row) != 4:
            raise IngestionError(f"{path}:{ln}: expected 4 fields, got {len(row)}")
        i, j, t_raw, w_raw = (f.strip() for f in row)
        try:
            t = int(t_raw)
            w = int(w_raw)
        except ValueError:
            raise IngestionError(f"{path}:{ln}: t and w must be integers")
        if t < 1:
            raise IngestionError(f"{path}:{ln}: day index must be >= 1, got {t}")
        if w < 0:
            raise IngestionError(f"{path}:{ln}: negative weight {w}")
        if i == j:
            raise IngestionError(f"{path}:{ln}: self edge {i!r}")
        for name in (i, j):
            if name not in node_order:
                node_order[name] = len(node_order)
        key = (t, *sorted((i, j)))
        if key in seen:
            duplicates.append(f"line {ln} duplicates line {seen[key]}: {key}")
        else:
            seen[key] = ln
        parsed.append((i, j, t, w))
        max_t = max(max_t, t)
    if duplicates:
        raise IngestionError(f"{path}: duplicate (i, j, t) rows: " + "; ".join(duplicates))
    names = list(node_order)
    N = len(names)
    weights = np.zeros((max_t, N, N), dtype=np.int64)
    for i, j, t, w in parsed:
        a, b = node_order[i], node_order[j]
        weights[t - 1, a, b] = w
        weights[t - 1, b, a] = w
    return Layer(weights=weights, node_names=tuple(names))


def write_edge_list(layer: Layer, path, include_zeros=False):
    """Write a layer's weights as an i,j,t,w edge list.

    Each pair is written once with the lexicographically smaller name first,
    so write(load(f)) reproduces f up to row order.
    """
    iu = np.triu_indices(layer.n_nodes, 1)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "t", "w"])
        for t in range(layer.n_periods):
            vals = layer.weights[t][iu]
            for a, b, w in zip(iu[0], iu[1], vals):
                if w or include_zeros:
                    na, nb = sorted((layer.node_names[a], layer.node_names[b]))
                    writer.writerow([na, nb, t + 1, int(w)])


def load_leaning(path, node_names, n_periods):
    """Read an i,t,leaning file into a (T, N) matrix aligned to node_names."""
    rows = _read_rows(path, ("i", "t", "leaning"))
    order = {name: idx for idx, name in enumerate(node_names)}
    lean = np.full((n_periods, len(node_names)), np.nan)
    for ln, row in enumerate(rows, start=2):
        if len(row) != 3:
            raise IngestionError(f"{path}:{ln}: expected 3 fields, got {len(row)}")
        name, t_raw, val_raw = (f.strip() for f in row)
        if name not in order:
            raise IngestionError(f"{path}:{ln}: unknown node {name!r}")
        try:
            t = int(t_raw)
            val = float(val_raw)
        except ValueError:
            raise IngestionError(f"{path}:{ln}: t must be an integer and leaning a real")
        if not 1 <= t <= n_periods:
            raise IngestionError(f"{path}:{ln}: day index {t} outside 1..{n_periods}")
        lean[t - 1, order[name]] = val
    if np.isnan(lean).any():
        missing = int(np.isnan(lean).sum())
        raise IngestionError(f"{path}: {missing} (node, day) leaning cells are missing")
    return clamp_leaning(lean)


def write_leaning(layer: Layer, path):
    if layer.leaning is None:
        raise ValidationError("layer has no leaning data to write")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "t", "leaning"])
        for t in range(layer.n_periods):
            for idx, name in enumerate(layer.node_names):
                writer.writerow([name, t + 1, repr(float(layer.leaning[t, idx]))])


def attach_leaning(layer: Layer, path):
    lean = load_leaning(path, layer.node_names, layer.n_periods)
    return Layer(weights=layer.weights, leaning=lean,
                 node_names=layer.node_names, exposure=layer.exposure)


def load_exposure(path, n_periods):
    """Read a t,total activity file into a strictly positive (T,) vector."""
    rows = _read_rows(path, ("t", "total"))
    out = np.full(n_periods, np.nan)
    for ln, row in enumerate(rows, start=2):
        if len(row) != 2:
            raise IngestionError(f"{path}:{ln}: expected 2 fields, got {len(row)}")
        try:
            t = int(row[0])
            total = float(row[1])
        except ValueError:
            raise IngestionError(f"{path}:{ln}: t must be an integer and total a real")
        if not 1 <= t <= n_periods:
            raise IngestionError(f"{path}:{ln}: day index {t} outside 1..{n_periods}")
        if total <= 0:
            raise IngestionError(f"{path}:{ln}: totals must be positive")
        out[t - 1] = total
    if np.isnan(out).any():
        raise IngestionError(f"{path}: missing totals for some days")
    return out


def project_bipartite(B):
    """One-mode projection A = B'B of a user-by-page interaction matrix.

    The diagonal of A holds each page's total interaction count; downstream
    consumers ignore it.
    """
    B = np.asarray(B, dtype=float)
    if B.ndim != 2:
        raise ValidationError(f"B must be 2-dimensional, got shape {B.shape}")
    if B.size and (not np.all(np.isfinite(B)) or B.min() < 0):
        raise ValidationError("B must be elementwise nonnegative and finite")
    return B.T @ B


def filter_inactive(layer: Layer, max_gap_days=15):
    """Drop nodes whose strength stays zero for more than ``max_gap_days``
    consecutive periods; returns the reduced layer and the removed names."""
    w = np.array(layer.weights, dtype=float)
    for t in range(layer.n_periods):
        np.fill_diagonal(w[t], 0.0)
    strengths = w.sum(axis=2)                     # (T, N)
    removed = []
    keep = []
    for idx, name in enumerate(layer.node_names):
        zero = strengths[:, idx] == 0
        run = best = 0
        for z in zero:
            run = run + 1 if z else 0
            best = max(best, run)
        if best > max_gap_days:
            removed.append(name)
        else:
            keep.append(idx)
    keep = np.array(keep, dtype=int)
    new_layer = Layer(
        weights=layer.weights[np.ix_(range(layer.n_periods), keep, keep)],
        leaning=None if layer.leaning is None else layer.leaning[:, keep],
        node_names=tuple(layer.node_names[i] for i in keep),
        exposure=layer.exposure,
    )
    return new_layer, removed


def _cosine(u, v):
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(u @ v) / (nu * nv)


def _tf_idf(party_counts):
    """TF-IDF over the party corpus with parties as documents:
    term frequency times log(P / document frequency)."""
    counts = np.asarray(party_counts, dtype=float)       # (V, P)
    P = counts.shape[1]
    df = (counts > 0).sum(axis=1)
    idf = np.zeros(counts.shape[0])
    nz = df > 0
    idf[nz] = np.log(P / df[nz])
    return counts * idf[:, None]


def slant_index(outlet_tokens, party_tokens, party_scores, top_k=100):
    """Text-based slant score per (outlet, day).

    outlet_tokens : (V, O, T) token counts per outlet and day.
    party_tokens : (V, P) token counts per party, on the same vocabulary.
    party_scores : (P,) external ideology scores.

    Pipeline: keep only tokens that appear in the outlet corpus; select each
    party's ``top_k`` tokens by TF-IDF over the party corpus; cosine
    similarity between outlet-day vectors and the selected party vectors;
    residualize the similarities on a constant plus outlet and party fixed
    effects (pooled over days, one reference level each); score-weighted sum
    of the residuals.

    Returns (slant (O, T), residuals (P, O, T), similarities (P, O, T)).
    """
    x = np.asarray(outlet_tokens, dtype=float)
    y = np.asarray(party_tokens, dtype=float)
    scores = np.asarray(party_scores, dtype=float)
    if x.ndim != 3 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValidationError("token matrices must share the vocabulary axis")
    if np.any(x < 0) or np.any(y < 0):
        raise ValidationError("token counts must be nonnegative")
    V, O, T = x.shape
    P = y.shape[1]
    if scores.shape != (P,):
        raise ValidationError(f"party_scores must have shape ({P},)")

    in_outlets = x.sum(axis=(1, 2)) > 0
    y_kept = np.where(in_outlets[:, None], y, 0.0)
    tfidf = _tf_idf(y_kept)
    party_vecs = np.zeros_like(y_kept)
    for p in range(P):
        # highest score first, token order breaking ties; tokens the party
        # never uses cannot be selected
        candidates = np.flatnonzero(y_kept[:, p] > 0)
        ranked = candidates[np.lexsort((candidates, -tfidf[candidates, p]))]
        chosen = ranked[:top_k]
        party_vecs[chosen, p] = y_kept[chosen, p]

    sim = np.zeros((P, O, T))
    for p in range(P):
        for o in range(O):
            for t in range(T):
                sim[p, o, t] = _cosine(x[:, o, t], party_vecs[:, p])

    resid = _fe_residuals(sim)
    slant = np.einsum("pot,p->ot", resid, scores)
    return slant, resid, sim


def _fe_residuals(sim):
    """OLS residuals of sim on a constant plus outlet and party dummies,
    pooled over all (party, outlet, day) cells."""
    P, O, T = sim.shape
    n = P * O * T
    p_idx, o_idx, _ = np.meshgrid(np.arange(P), np.arange(O), np.arange(T),
                                  indexing="ij")
    cols = [np.ones(n)]
    labels = ["const"]
    for o in range(1, O):
        cols.append((o_idx.ravel() == o).astype(float))
        labels.append(f"outlet_{o}")
    for p in range(1, P):
        cols.append((p_idx.ravel() == p).astype(float))
        labels.append(f"party_{p}")
    design = np.column_stack(cols)
    rank = np.linalg.matrix_rank(design)
    if rank < design.shape[1]:
        raise ValidationError(
            "rank-deficient fixed-effect design; collinear columns among: "
            + ", ".join(labels)
        )
    coef, *_ = np.linalg.lstsq(design, sim.ravel(), rcond=None)
    return (sim.ravel() - design @ coef).reshape(P, O, T)


def pearson_correlation(a, b):
    """Plain Pearson correlation of two equal-length vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or a.shape != b.shape:
        raise ValidationError("inputs must be 1-d arrays of equal length")
    if a.shape[0] < 3:
        raise ValidationError("need at least 3 observations")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValidationError("inputs must be finite")
    da = a - a.mean()
    db = b - b.mean()
    va = float(da @ da)
    vb = float(db @ db)
    if va == 0.0 or vb == 0.0:
        raise ValidationError("correlation undefined for a zero-variance input")
    return float(da @ db) / np.sqrt(va * vb)
