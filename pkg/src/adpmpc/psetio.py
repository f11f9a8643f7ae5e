"""Text serialization of value sets and region maps.

File layout (line oriented, ``#`` starts a comment)::

    adpmpc-pset 1
    begin set <name>
    epsilon <float>
    horizon <N>
    levels <M>
    dim <d>
    count <mu>
    fingerprint <hex>
    levels_pruned <c_1> ... <c_{N-1}>
    matrix <i> seq <s_1> ... source <k or -1>
    <d rows, d floats each, row-major>
    ...
    end set
    begin map <parent set name>
    cells <z>
    edges <axis> <e_0> ... <e_k>
    region <j> rows <r> members <i_1> ... (indices into the parent set)
    <r rows: halfspace normal then offset>
    end map

Floats are written with ``repr`` so reading back reproduces every bit.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ConfigError
from .polytope import Polytope
from .synthesis import RegionRiccatiMap, RiccatiSet

MAGIC = "adpmpc-pset"
VERSION = 1


def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in np.asarray(values).reshape(-1))


def _set_lines(name: str, rset: RiccatiSet) -> list[str]:
    lines = [
        f"begin set {name}",
        f"epsilon {rset.epsilon!r}",
        f"horizon {rset.horizon}",
        f"levels {rset.n_levels}",
        f"dim {rset.d}",
        f"count {rset.mu}",
        f"fingerprint {rset.model_fingerprint or '-'}",
        "levels_pruned " + " ".join(str(c) for c in rset.levels_pruned),
    ]
    for i in range(rset.mu):
        seq = " ".join(str(int(s)) for s in rset.sequences[i])
        src = -1 if rset.source_indices is None else int(rset.source_indices[i])
        lines.append(f"matrix {i} seq {seq} source {src}".replace("seq  ", "seq "))
        lines.extend(_fmt(row) for row in rset.matrices[i])
    lines.append("end set")
    return lines


def _map_lines(parent_name: str, rmap: RegionRiccatiMap) -> list[str]:
    lines = [f"begin map {parent_name}", f"cells {rmap.z}"]
    for axis, e in enumerate(rmap.edges):
        lines.append(f"edges {axis} {_fmt(e)}")
    for j, (reg, rs) in enumerate(zip(rmap.regions, rmap.sets)):
        members = " ".join(str(int(k)) for k in _members(rs, rmap.parent))
        lines.append(f"region {j} rows {reg.H.shape[0]} members {members}")
        lines.extend(_fmt(np.append(reg.H[r], reg.h[r])) for r in range(reg.H.shape[0]))
    lines.append("end map")
    return lines


def _members(rs: RiccatiSet, parent: RiccatiSet) -> np.ndarray:
    """Positions of ``rs`` matrices inside ``parent``."""
    out = []
    for P in rs.matrices:
        hits = np.flatnonzero(np.all(parent.matrices == P, axis=(1, 2)))
        if hits.size == 0:
            raise ValueError("regional matrix not found in its parent set")
        out.append(hits[0])
    return np.asarray(out, dtype=np.int64)


def save_artifacts(path, sets: dict[str, RiccatiSet], rmap: RegionRiccatiMap | None = None,
                   map_parent: str | None = None) -> Path:
    """Write named value sets and an optional region map to ``path``."""
    path = Path(path)
    lines = [f"{MAGIC} {VERSION}"]
    for name, rset in sets.items():
        lines.extend(_set_lines(name, rset))
    if rmap is not None:
        if map_parent is None or map_parent not in sets:
            raise ValueError("region map needs the name of a saved parent set")
        lines.extend(_map_lines(map_parent, rmap))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write value-set file {path}: {exc}") from exc
    return path


class _Reader:
    def __init__(self, text: str, path):
        self.lines = [ln.strip() for ln in text.splitlines()]
        self.lines = [ln for ln in self.lines if ln and not ln.startswith("#")]
        self.pos = 0
        self.path = path

    def next(self) -> list[str]:
        if self.pos >= len(self.lines):
            raise ConfigError(f"{self.path}: unexpected end of file")
        self.pos += 1
        return self.lines[self.pos - 1].split()

    def keyed(self, key: str) -> list[str]:
        tok = self.next()
        if tok[0] != key:
            raise ConfigError(f"{self.path}: expected {key!r}, found {tok[0]!r}")
        return tok[1:]

    def floats(self, k: int) -> np.ndarray:
        tok = self.next()
        if len(tok) != k:
            raise ConfigError(f"{self.path}: expected {k} numbers, found {len(tok)}")
        return np.array([float(t) for t in tok])


def _read_set(rd: _Reader) -> RiccatiSet:
    eps = float(rd.keyed("epsilon")[0])
    N = int(rd.keyed("horizon")[0])
    M = int(rd.keyed("levels")[0])
    d = int(rd.keyed("dim")[0])
    mu = int(rd.keyed("count")[0])
    fp = rd.keyed("fingerprint")[0]
    pruned = tuple(int(t) for t in rd.keyed("levels_pruned"))
    mats = np.empty((mu, d, d))
    seqs = np.empty((mu, N - 1), dtype=np.int64)
    srcs = np.empty(mu, dtype=np.int64)
    for i in range(mu):
        tok = rd.keyed("matrix")
        if int(tok[0]) != i or tok[1] != "seq" or tok[-2] != "source":
            raise ConfigError(f"{rd.path}: malformed matrix header {tok}")
        seqs[i] = [int(t) for t in tok[2:-2]]
        srcs[i] = int(tok[-1])
        for r in range(d):
            mats[i, r] = rd.floats(d)
    rd.keyed("end")
    src = None if np.all(srcs < 0) else srcs
    return RiccatiSet(mats, eps, N, M, pruned, "" if fp == "-" else fp, seqs, src)


def _read_map(rd: _Reader, parent: RiccatiSet) -> RegionRiccatiMap:
    z = int(rd.keyed("cells")[0])
    edges = []
    while rd.lines[rd.pos].startswith("edges"):
        tok = rd.next()
        edges.append(np.array([float(t) for t in tok[2:]]))
    n = len(edges)
    regions, sets = [], []
    for j in range(z):
        tok = rd.keyed("region")
        if int(tok[0]) != j or tok[1] != "rows" or tok[3] != "members":
            raise ConfigError(f"{rd.path}: malformed region header {tok}")
        rows = np.array([rd.floats(n + 1) for _ in range(int(tok[2]))]).reshape(-1, n + 1)
        regions.append(Polytope(rows[:, :n], rows[:, n]))
        sets.append(parent.subset([int(t) for t in tok[4:]]))
    rd.keyed("end")
    return RegionRiccatiMap(regions, sets, parent, edges)


def load_artifacts(path) -> tuple[dict[str, RiccatiSet], RegionRiccatiMap | None]:
    """Read a file written by :func:`save_artifacts`.

    Raises:
        ConfigError: wrong magic, unsupported version, or malformed content.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read value-set file {path}: {exc}") from exc
    rd = _Reader(text, path)
    head = rd.next()
    if len(head) != 2 or head[0] != MAGIC:
        raise ConfigError(f"{path}: not a value-set file")
    if int(head[1]) != VERSION:
        raise ConfigError(f"{path}: unsupported format version {head[1]}")
    sets: dict[str, RiccatiSet] = {}
    rmap = None
    try:
        while rd.pos < len(rd.lines):
            tok = rd.next()
            if tok[:2] == ["begin", "set"]:
                sets[tok[2]] = _read_set(rd)
            elif tok[:2] == ["begin", "map"]:
                if tok[2] not in sets:
                    raise ConfigError(f"{path}: region map refers to unknown set {tok[2]!r}")
                rmap = _read_map(rd, sets[tok[2]])
            else:
                raise ConfigError(f"{path}: unexpected line {' '.join(tok)!r}")
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"{path}: malformed value-set file ({exc})") from exc
    return sets, rmap
