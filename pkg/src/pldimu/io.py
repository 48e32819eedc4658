"""CSV artifacts and the controller file format.

Every CSV starts with a comment line carrying the config digest and seed,
followed by a header row. Floats are written with 17 significant digits so
files round-trip exactly.

Controller files hold the state-space matrices as labelled CSV blocks::

    # config=... seed=...
    block,rows,cols
    A,2,2
    -1,0
    ...

and optionally the rational entries (``tf,i,j`` followed by ``num`` and
``den`` coefficient rows) for fixed-structure controllers.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .lti import RationalTF, StateSpace, TFMatrix


class ControllerFileError(ValueError):
    pass


def fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def _comment(digest: str, seed: int) -> str:
    return f"# config={digest} seed={seed}\n"


def write_csv(path, columns, rows, digest: str, seed: int) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(_comment(digest, seed))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], np.ndarray]:
    """Header and float data of a file written by :func:`write_csv`."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], np.array(rows[1:], dtype=float).reshape(len(rows) - 1, len(rows[0]))


def write_controller(path, k: StateSpace, digest: str, seed: int,
                     tf: TFMatrix | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(_comment(digest, seed))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["block", "rows", "cols"])
        for name in "ABCD":
            M = getattr(k, name)
            w.writerow([name, M.shape[0], M.shape[1]])
            if M.size:
                for row in M:
                    w.writerow([fmt(v) for v in row])
        if tf is not None:
            for i, row in enumerate(tf.entries):
                for j, e in enumerate(row):
                    w.writerow(["tf", i, j])
                    w.writerow(["num"] + [fmt(v) for v in e.num])
                    w.writerow(["den"] + [fmt(v) for v in e.den])
    return path


def read_controller(path) -> tuple[StateSpace, TFMatrix | None]:
    """Parse a controller file; the state space is rebuilt from ``tf`` rows if absent."""
    try:
        with open(path) as fh:
            rows = [r for r in csv.reader(ln for ln in fh if not ln.startswith("#")) if r]
    except OSError as exc:
        raise ControllerFileError(f"cannot read controller file: {exc}") from exc
    if not rows or rows[0] != ["block", "rows", "cols"]:
        raise ControllerFileError("controller file must start with a 'block,rows,cols' header")
    mats, entries = {}, {}
    i = 1
    try:
        while i < len(rows):
            tag = rows[i][0]
            if tag in ("A", "B", "C", "D"):
                r, c = int(rows[i][1]), int(rows[i][2])
                if r * c == 0:
                    # empty blocks carry no data rows
                    mats[tag] = np.zeros((r, c))
                    i += 1
                    continue
                mats[tag] = np.array(rows[i + 1:i + 1 + r], dtype=float).reshape(r, c)
                i += 1 + r
            elif tag == "tf":
                ii, jj = int(rows[i][1]), int(rows[i][2])
                if rows[i + 1][0] != "num" or rows[i + 2][0] != "den":
                    raise ControllerFileError(f"tf entry ({ii},{jj}) needs num and den rows")
                entries[ii, jj] = RationalTF([float(v) for v in rows[i + 1][1:]],
                                             [float(v) for v in rows[i + 2][1:]])
                i += 3
            else:
                raise ControllerFileError(f"unknown block {tag!r} on data row {i}")
    except (IndexError, ValueError) as exc:
        if isinstance(exc, ControllerFileError):
            raise
        raise ControllerFileError(f"malformed controller file: {exc}") from exc
    tf = None
    if entries:
        n_r = 1 + max(i for i, _ in entries)
        n_c = 1 + max(j for _, j in entries)
        if len(entries) != n_r * n_c:
            raise ControllerFileError("tf entries do not form a full grid")
        tf = TFMatrix(tuple(tuple(entries[i, j] for j in range(n_c)) for i in range(n_r)))
    if set(mats) == set("ABCD"):
        try:
            k = StateSpace(mats["A"], mats["B"], mats["C"], mats["D"])
        except ValueError as exc:
            raise ControllerFileError(f"inconsistent state-space blocks: {exc}") from exc
    elif tf is not None:
        k = tf.to_ss()
    else:
        raise ControllerFileError("controller file has neither A,B,C,D blocks nor tf entries")
    return k, tf
