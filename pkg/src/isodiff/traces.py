"""Reading and writing sampler output.

Two formats:

* ``.npz`` - compact binary archive of the stacked draws plus design and
  run configuration. Written with fixed zip timestamps so identical runs give
  identical bytes.
* ``.csv`` - long format ``chain,iteration,parameter,value``, one row per
  stored state per scalar parameter, 1-based chain ids and indices. A
  ``# design: {...}`` comment line carries the design when known.
"""

from __future__ import annotations

import csv
import io
import json
import re
import zipfile
from pathlib import Path

import numpy as np

from .data import DesignInfo
from .gibbs import ChainConfig, ChainOutput

TRACE_HEADER = ("chain", "iteration", "parameter", "value")
_ARRAYS = ("kappa", "alpha", "beta", "gamma", "p", "tau", "chain", "iteration")
_NAME = re.compile(r"^(\w+)(?:\[([\d,\s]+)\])?$")


class TraceFormatError(ValueError):
    pass


def save_npz(output: ChainOutput, path: str | Path) -> None:
    meta = {
        "design": output.design.to_dict() if output.design is not None else None,
        "config": output.config.to_dict() if output.config is not None else None,
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for name in _ARRAYS:
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(getattr(output, name)), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0)), buf.getvalue(),
                        compress_type=zipfile.ZIP_DEFLATED)
        zf.writestr(zipfile.ZipInfo("meta.json", date_time=(1980, 1, 1, 0, 0, 0)),
                    json.dumps(meta, sort_keys=True))


def load_npz(path: str | Path) -> ChainOutput:
    with np.load(path, allow_pickle=False) as npz:
        arrays = {name: npz[name] for name in _ARRAYS}
    with zipfile.ZipFile(path) as zf:
        meta = json.loads(zf.read("meta.json"))
    design = DesignInfo.from_dict(meta["design"]) if meta.get("design") else None
    config = ChainConfig(**meta["config"]) if meta.get("config") else None
    return ChainOutput(**arrays, config=config, design=design)


def _parameter_columns(output: ChainOutput):
    """(names, (N, Q) value matrix) in a fixed order."""
    d = output.design
    names, cols = [], []
    for s, (e, g, i) in enumerate(d.sample_coords):
        names.append(f"kappa[{e},{g},{i}]")
        cols.append(output.kappa[:, s])
    for t, (j, k) in enumerate(d.spectrum_coords):
        names.append(f"alpha[{j},{k}]")
        cols.append(output.alpha[:, t])
    for fam in ("beta", "gamma", "p"):
        arr = getattr(output, fam)
        for g in range(1, d.num_groups):
            for j in range(d.num_proteins):
                names.append(f"{fam}[{g + 1},{j + 1}]")
                cols.append(arr[:, g, j])
    names += ["tau", "sigma"]
    cols += [output.tau, output.sigma]
    return names, cols


def _fmt(value) -> str:
    if isinstance(value, (np.integer, int)):
        return str(int(value))
    v = float(value)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def save_csv(output: ChainOutput, path: str | Path) -> None:
    names, cols = _parameter_columns(output)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if output.design is not None:
            fh.write("# design: " + json.dumps(output.design.to_dict(), sort_keys=True) + "\n")
        if output.config is not None:
            fh.write("# config: " + json.dumps(output.config.to_dict(), sort_keys=True) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for n in range(len(output)):
            chain = int(output.chain[n]) + 1
            it = int(output.iteration[n])
            writer.writerows((chain, it, name, _fmt(col[n])) for name, col in zip(names, cols))


def _infer_design(keys: dict[str, set]) -> DesignInfo:
    kap = keys.get("kappa", set())
    gp = keys.get("beta", set()) | keys.get("gamma", set()) | keys.get("p", set())
    alp = keys.get("alpha", set())
    G = max([g for _, g, _ in kap] + [g for g, _ in gp] + [2])
    P = max([j for _, j in gp] + [j for j, _ in alp] + [1])
    E = max([e for e, _, _ in kap] + [1])
    n = np.zeros((E, G), dtype=int)
    for e, g, i in kap:
        n[e - 1, g - 1] = max(n[e - 1, g - 1], i)
    n[:, 0] = np.maximum(n[:, 0], 1)
    m = np.ones(P, dtype=int)
    for j, k in alp:
        m[j - 1] = max(m[j - 1], k)
    return DesignInfo(E, G, P, tuple(m.tolist()), tuple(map(tuple, n.tolist())), (1,) * E, int(n.sum(axis=1).max()))


def load_csv(path: str | Path, design: DesignInfo | None = None) -> ChainOutput:
    """Parse a long-format trace. Parameters absent from the file are zero
    (tau defaults to 1); the design comes from ``design``, the file's
    ``# design:`` line, or the largest indices seen."""
    config = None
    records: list[tuple[int, int, str, tuple, float]] = []
    keys: dict[str, set] = {}
    header_seen = False
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text:
                continue
            if text.startswith("#"):
                body = text[1:].strip()
                if body.startswith("design:") and design is None:
                    design = DesignInfo.from_dict(json.loads(body[len("design:"):]))
                elif body.startswith("config:"):
                    config = ChainConfig(**json.loads(body[len("config:"):]))
                continue
            fields = [f.strip() for f in next(csv.reader([text]))]
            if not header_seen:
                if tuple(fields) != TRACE_HEADER:
                    raise TraceFormatError(f"line {lineno}: expected header {','.join(TRACE_HEADER)}")
                header_seen = True
                continue
            if len(fields) != 4:
                raise TraceFormatError(f"line {lineno}: expected 4 fields")
            match = _NAME.match(fields[2])
            if not match:
                raise TraceFormatError(f"line {lineno}: bad parameter name {fields[2]!r}")
            fam = match.group(1)
            idx = tuple(int(v) for v in match.group(2).split(",")) if match.group(2) else ()
            try:
                records.append((int(fields[0]), int(fields[1]), fam, idx, float(fields[3])))
            except ValueError:
                raise TraceFormatError(f"line {lineno}: non-numeric field") from None
            keys.setdefault(fam, set()).add(idx)
    if not records:
        raise TraceFormatError(f"{path}: no trace rows")
    if design is None:
        design = _infer_design(keys)

    states = sorted({(c, it) for c, it, *_ in records})
    pos = {s: n for n, s in enumerate(states)}
    N, d = len(states), design
    G, P = d.num_groups, d.num_proteins
    out = ChainOutput(
        kappa=np.zeros((N, d.num_samples)), alpha=np.zeros((N, d.num_spectra)),
        beta=np.zeros((N, G, P), dtype=np.int8), gamma=np.zeros((N, G, P)), p=np.zeros((N, G, P)),
        tau=np.ones(N), chain=np.asarray([c - 1 for c, _ in states], dtype=np.int64),
        iteration=np.asarray([it for _, it in states], dtype=np.int64), config=config, design=design,
    )
    has_tau = "tau" in keys
    for c, it, fam, idx, value in records:
        n = pos[(c, it)]
        if fam == "kappa":
            out.kappa[n, d.sample_id(*idx)] = value
        elif fam == "alpha":
            out.alpha[n, d.spectrum_id(*idx)] = value
        elif fam in ("beta", "gamma", "p"):
            getattr(out, fam)[n, idx[0] - 1, idx[1] - 1] = value
        elif fam == "tau":
            out.tau[n] = value
        elif fam == "sigma":
            if not has_tau:
                out.tau[n] = value ** -2
        else:
            raise TraceFormatError(f"unknown parameter family {fam!r}")
    return out


def save_traces(output: ChainOutput, path: str | Path) -> None:
    if str(path).endswith(".csv"):
        save_csv(output, path)
    else:
        save_npz(output, path)


def load_traces(path: str | Path, design: DesignInfo | None = None) -> ChainOutput:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if path.stat().st_size == 0:
        raise TraceFormatError(f"{path}: empty trace file")
    if path.suffix == ".csv":
        return load_csv(path, design)
    out = load_npz(path)
    if design is not None:
        out.design = design
    return out
