"""Deterministic file emission: CSV, JSON, GraphML, and packed matrices.

Floats are written with shortest-roundtrip repr so identical values always
produce identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .dataset import Table
from .network import Partition, SimilarityGraph


def fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path: Path, header: list[str], rows) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(cell) for cell in row])


def write_json(path: Path, payload) -> None:
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def read_json(path: Path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_table_csv(path: Path, table: Table, id_column: str, columns: list[str]) -> None:
    header = [id_column, *columns]
    rows = (
        [table.ids[i], *(table.columns[c][i] for c in columns)]
        for i in range(table.n_rows)
    )
    write_csv(path, header, rows)


def write_matrix_csv(path: Path, M: np.ndarray, ids: list[str]) -> None:
    header = ["id", *ids]
    rows = ([ids[i], *M[i]] for i in range(M.shape[0]))
    write_csv(path, header, rows)


def write_matrix_binary(path: Path, meta_path: Path, M: np.ndarray, ids: list[str]) -> None:
    """Strict upper triangle, row-major, little-endian float64, plus a JSON
    sidecar carrying n, the row ids, and the payload checksum."""
    n = M.shape[0]
    upper = M[np.triu_indices(n, k=1)].astype("<f8")
    payload = upper.tobytes()
    Path(path).write_bytes(payload)
    write_json(
        meta_path,
        {"n": n, "ids": list(ids), "checksum": hashlib.sha256(payload).hexdigest()},
    )


def read_matrix_binary(path: Path, meta_path: Path) -> tuple[np.ndarray, list[str]]:
    meta = read_json(meta_path)
    payload = Path(path).read_bytes()
    if hashlib.sha256(payload).hexdigest() != meta["checksum"]:
        raise ValueError(f"checksum mismatch for {path}")
    n = int(meta["n"])
    upper = np.frombuffer(payload, dtype="<f8")
    M = np.zeros((n, n))
    M[np.triu_indices(n, k=1)] = upper
    M += M.T
    return M, list(meta["ids"])


def write_edges_csv(path: Path, graph: SimilarityGraph) -> None:
    ids = graph.ids or [str(i) for i in range(graph.n)]
    rows = (
        [ids[i], ids[j], sim]
        for (i, j), sim in sorted(graph.edges.items())
    )
    write_csv(path, ["source", "target", "similarity"], rows)


def write_graphml(path: Path, graph: SimilarityGraph, partition: Partition) -> None:
    ids = graph.ids or [str(i) for i in range(graph.n)]
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<graphml xmlns="http://graphml.graphdrawing.org/xmlns">',
        '  <key id="cluster" for="node" attr.name="cluster" attr.type="int"/>',
        '  <key id="similarity" for="edge" attr.name="similarity" attr.type="double"/>',
        '  <graph id="G" edgedefault="undirected">',
    ]
    for i in range(graph.n):
        lines.append(f'    <node id="{escape(ids[i])}">')
        lines.append(f'      <data key="cluster">{int(partition.labels[i])}</data>')
        lines.append("    </node>")
    for (i, j), sim in sorted(graph.edges.items()):
        lines.append(f'    <edge source="{escape(ids[i])}" target="{escape(ids[j])}">')
        lines.append(f'      <data key="similarity">{fmt(sim)}</data>')
        lines.append("    </edge>")
    lines.append("  </graph>")
    lines.append("</graphml>")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_ktrace_csv(path: Path, traces) -> None:
    rows = (
        [t.k, t.isolate_fraction, t.average_degree, t.modularity, t.p_if, t.p_ad, t.score, t.n_edges, t.n_communities]
        for t in traces
    )
    write_csv(path, ["K", "IF", "AD", "Q", "P_IF", "P_AD", "score", "n_edges", "n_communities"], rows)
