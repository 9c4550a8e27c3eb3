"""PSB class files and the Nearest Neighbor / First-Tier / Second-Tier statistics."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ClassificationParseError


@dataclass(frozen=True)
class ClassLabels:
    labels: dict
    parents: dict = field(default_factory=dict)

    def __getitem__(self, model_id):
        return self.labels[str(model_id)]

    def __contains__(self, model_id):
        return str(model_id) in self.labels

    def __len__(self):
        return len(self.labels)

    @property
    def class_sizes(self):
        return dict(Counter(self.labels.values()))

    @classmethod
    def from_pairs(cls, pairs):
        return cls({str(k): str(v) for k, v in pairs})


def parse_cla(text):
    """Parse the PSB ``.cla`` format.

    ::

        PSB 1
        <n_classes> <n_models>

        <name> <parent> <n_in_class>
        <model id>
        ...

    A parent of ``0`` marks a top-level class. Models are labelled with the
    class that lists them.
    """
    lines = [(i, ln.strip()) for i, ln in enumerate(text.splitlines(), start=1)]
    lines = [(i, ln) for i, ln in lines if ln]
    if not lines:
        raise ClassificationParseError("empty classification file", 1)
    lineno, header = lines[0]
    parts = header.split()
    if len(parts) != 2 or parts[0] != "PSB":
        raise ClassificationParseError(f"expected 'PSB <version>' header, got {header!r}", lineno)
    if len(lines) < 2:
        raise ClassificationParseError("missing counts line", lineno + 1)
    lineno, counts = lines[1]
    try:
        n_classes, n_models = (int(t) for t in counts.split())
    except ValueError:
        raise ClassificationParseError(f"malformed counts line {counts!r}", lineno) from None

    labels, parents = {}, {}
    pos = 2
    for _ in range(n_classes):
        if pos >= len(lines):
            raise ClassificationParseError(
                f"expected {n_classes} classes, found {len(parents)}", lines[-1][0] + 1)
        lineno, line = lines[pos]
        parts = line.split()
        if len(parts) != 3:
            raise ClassificationParseError(f"malformed class line {line!r}", lineno)
        name, parent = parts[0], parts[1]
        try:
            size = int(parts[2])
        except ValueError:
            raise ClassificationParseError(f"non-integer class size in {line!r}", lineno) from None
        if name in parents:
            raise ClassificationParseError(f"duplicate class {name!r}", lineno)
        parents[name] = parent
        pos += 1
        for _ in range(size):
            if pos >= len(lines) or len(lines[pos][1].split()) != 1:
                where = lines[pos][0] if pos < len(lines) else lineno
                raise ClassificationParseError(
                    f"class {name!r} declares {size} models but lists fewer", where)
            mlineno, model_id = lines[pos]
            if model_id in labels:
                raise ClassificationParseError(f"model {model_id} listed twice", mlineno)
            labels[model_id] = name
            pos += 1
    if pos != len(lines):
        raise ClassificationParseError("unexpected trailing content", lines[pos][0])
    if len(labels) != n_models:
        raise ClassificationParseError(
            f"header declares {n_models} models, classes list {len(labels)}", 2)
    for name, parent in parents.items():
        if parent not in ("0", "-1") and parent not in parents:
            raise ClassificationParseError(f"class {name!r} has unknown parent {parent!r}")
    return ClassLabels(labels, parents)


def load_cla(path):
    with open(path, encoding="utf-8") as fh:
        return parse_cla(fh.read())


def format_cla(labels, version=1):
    by_class = {}
    for model_id, name in labels.labels.items():
        by_class.setdefault(name, []).append(model_id)
    names = list(dict.fromkeys(list(labels.parents) + list(by_class)))
    out = [f"PSB {version}", f"{len(names)} {len(labels)}", ""]
    for name in names:
        members = by_class.get(name, [])
        out.append(f"{name} {labels.parents.get(name, '0')} {len(members)}")
        out.extend(members)
        out.append("")
    return "\n".join(out)


def id_sort_key(model_id):
    """Numeric ids compare as numbers, everything else as strings, numbers first."""
    s = str(model_id)
    try:
        return (0, int(s), s)
    except ValueError:
        return (1, 0, s)


def rank_queries(d, ids=None):
    """Candidates per query, nearest first, query excluded; ties by ascending model id.

    ``d`` is a DistanceMatrix or a square array (then ``ids`` default to ``0..n-1``).
    Returns a list of lists of ids.
    """
    if hasattr(d, "values") and hasattr(d, "ids"):
        values, ids = np.asarray(d.values), list(d.ids)
    else:
        values = np.asarray(d, dtype=np.float64)
        ids = [str(i) for i in range(len(values))] if ids is None else [str(i) for i in ids]
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ValueError("distance matrix must be square")
    order = sorted(range(len(ids)), key=lambda i: id_sort_key(ids[i]))
    id_rank = np.empty(len(ids), dtype=np.int64)
    id_rank[order] = np.arange(len(ids))
    ranked = []
    for q in range(len(ids)):
        idx = np.lexsort((id_rank, values[q]))
        ranked.append([ids[i] for i in idx if i != q])
    return ranked


@dataclass(frozen=True)
class RetrievalReport:
    nn: float
    ft: float
    st: float
    n_queries: int
    per_query: dict = field(default_factory=dict, compare=False, repr=False)

    def to_dict(self, include_queries=False):
        out = {"nn": self.nn, "ft": self.ft, "st": self.st, "n_queries": self.n_queries}
        if include_queries:
            out["per_query"] = self.per_query
        return out

    def to_json(self, include_queries=False):
        return json.dumps(self.to_dict(include_queries), indent=2, sort_keys=True)


def score(ranked, labels, query_ids=None):
    """Macro-averaged NN, FT and ST over all queries whose class has more than one model.

    ``ranked[q]`` is the candidate list for query ``query_ids[q]``; when
    ``query_ids`` is omitted each list is assumed to come from
    :func:`rank_queries` over the same ids, so the query is the single id
    missing from its own list.
    """
    ranked = [list(map(str, r)) for r in ranked]
    if query_ids is None:
        universe = set().union(*map(set, ranked))
        query_ids = []
        for r in ranked:
            missing = universe - set(r)
            if len(missing) != 1:
                raise ValueError("cannot infer query ids; pass query_ids explicitly")
            query_ids.append(missing.pop())
    query_ids = [str(q) for q in query_ids]
    all_ids = set(query_ids).union(*map(set, ranked))
    missing = sorted(i for i in all_ids if i not in labels)
    if missing:
        raise KeyError(f"models without a class label: {missing[:5]}")
    sizes = Counter(labels[i] for i in all_ids)

    nn, ft, st = [], [], []
    per_query = {}
    for q, r in zip(query_ids, ranked):
        cls = labels[q]
        c = sizes[cls]
        if c < 2:
            continue
        hits = np.array([labels[x] == cls for x in r])
        q_nn = float(hits[:1].sum())
        q_ft = float(hits[:c - 1].sum()) / (c - 1)
        q_st = float(hits[:2 * (c - 1)].sum()) / (c - 1)
        nn.append(q_nn)
        ft.append(q_ft)
        st.append(q_st)
        per_query[q] = {"nn": q_nn, "ft": q_ft, "st": q_st}
    if not nn:
        raise ValueError("no query has a class with more than one model")
    return RetrievalReport(float(np.mean(nn)), float(np.mean(ft)), float(np.mean(st)),
                           len(nn), per_query)


def evaluate(d, labels):
    """Rank every model of a DistanceMatrix against the others and score the result."""
    return score(rank_queries(d), labels, list(d.ids))


def format_table(reports):
    """Aligned text table, one row per ``(method, report)``, scores in percent."""
    rows = [("Method", "NN", "FT", "ST")]
    for name, r in reports:
        rows.append((name, f"{100 * r.nn:.1f}", f"{100 * r.ft:.1f}", f"{100 * r.st:.1f}"))
    widths = [max(len(row[i]) for row in rows) for i in range(4)]
    lines = []
    for k, row in enumerate(rows):
        cells = [row[0].ljust(widths[0])] + [row[i].rjust(widths[i]) for i in range(1, 4)]
        lines.append("  ".join(cells))
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
