"""Dataset and sample files (JSON lines)."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graphs import GraphInstance, graphs_to_samples
from .models import AtomDataset
from .simplex import ValidationError


@dataclass
class LoadedDataset:
    """A training/reference set; ``graphs`` is set for graph data."""

    kind: str  # "categorical" | "graph"
    samples: dict[str, np.ndarray]
    K: dict[str, int]
    graphs: list[GraphInstance] | None = None

    @property
    def n(self) -> int | None:
        return self.graphs[0].n if self.graphs else None

    def atoms(self) -> AtomDataset:
        return AtomDataset.from_samples(self.samples, self.K)

    def property_values(self) -> np.ndarray:
        """Edge counts for graphs, sum of categories otherwise."""
        if self.kind == "graph":
            return np.array([g.edge_count for g in self.graphs], dtype=float)
        return self.samples["x"].sum(axis=1).astype(float)


def read_jsonl(path) -> list[dict]:
    path = Path(path)
    records = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
    if not records:
        raise ValidationError(f"{path}: no records")
    return records


def write_jsonl(records, path) -> None:
    with Path(path).open("w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_dataset(path, K: int | None = None, K_v: int = 1, K_e: int = 2) -> LoadedDataset:
    """Categorical records ``{"x": [...]}`` or graph records ``{"n", "edges", "node_cats"}``."""
    records = read_jsonl(path)
    if all("x" in r for r in records):
        rows = [r["x"] for r in records]
        if len({len(r) for r in rows}) != 1:
            raise ValidationError(f"{path}: records differ in length")
        x = np.asarray(rows, dtype=np.int64)
        if x.min() < 0:
            raise ValidationError(f"{path}: negative category")
        K = int(x.max()) + 1 if K is None else K
        K = max(K, 2)
        if x.max() >= K:
            raise ValidationError(f"{path}: category {int(x.max())} outside [0, {K})")
        return LoadedDataset("categorical", {"x": x}, {"x": K})
    if all("n" in r for r in records):
        graphs = [GraphInstance.from_json(r) for r in records]
        samples = graphs_to_samples(graphs, K_v)
        Ks = {"edges": K_e}
        if K_v > 1:
            Ks["nodes"] = K_v
        for name, v in samples.items():
            if v.size and v.max() >= Ks[name]:
                raise ValidationError(f"{path}: {name} category outside [0, {Ks[name]})")
        return LoadedDataset("graph", samples, Ks, graphs)
    raise ValidationError(f"{path}: records are neither categorical ({{'x'}}) nor graphs ({{'n'}})")
