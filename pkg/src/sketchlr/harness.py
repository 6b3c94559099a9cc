"""Experiment harness: data sources, multi-trial runs and CSV emission.

A run draws one matrix (a fixed matrix seed, separate from the trial seeds),
solves both the Schatten-p pipeline and the Frobenius baseline ``trials``
times per requested rank, optionally scores both against the exact oracle
(one oracle factorization per rank, reused), and writes per-trial and median
summary tables.
"""

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .matrixcore import SparseMatrix
from .norms import schatten_norm
from .rng import RandomStream
from .solver import (
    exact_oracle,
    relative_error_from,
    singular_values,
    solve_frobenius_baseline,
    solve_schatten,
)

FORMATS = ("matrix_market", "bag_of_words_triplets")


class ParseError(ValueError):
    """Malformed input file; carries the path and 1-based line number."""

    def __init__(self, path, line: int | None, message: str):
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line


@dataclass
class ExperimentConfig:
    """One benchmark run: a matrix source, ranks, and trial bookkeeping."""

    k_list: list[int]
    p: float = 1.0
    eps: float = 0.5
    trials: int = 50
    seed: int = 0
    mode: str = "simplified_experiment"
    oracle: bool = False
    output: str | None = None
    # synthetic source
    nrows: int | None = None
    ncols: int | None = None
    density: float | None = None
    # file source
    input_path: str | None = None
    input_format: str = "matrix_market"

    def validate(self) -> None:
        if not self.k_list:
            raise ValueError("k_list must not be empty")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        synthetic = self.nrows is not None or self.ncols is not None
        if synthetic and self.input_path is not None:
            raise ValueError("choose either a synthetic source or an input file")
        if synthetic:
            if self.nrows is None or self.ncols is None or self.density is None:
                raise ValueError("synthetic source needs nrows, ncols and density")
            if not 0.0 < self.density <= 1.0:
                raise ValueError("density must lie in (0, 1]")
        elif self.input_path is None:
            raise ValueError("no matrix source configured")
        if self.input_format not in FORMATS:
            raise ValueError(f"unknown format {self.input_format!r}")


@dataclass(frozen=True)
class TrialRecord:
    k: int
    trial_index: int
    algo: str
    rel_error: float | None
    wall_ms: float
    seed: int
    fallback_used: bool


@dataclass(frozen=True)
class SummaryRow:
    k: int
    algo: str
    median_rel_error: float | None
    median_wall_ms: float
    n_trials: int


def generate_synthetic(
    nrows: int, ncols: int, density: float, stream: RandomStream
) -> SparseMatrix:
    """Matrix with i.i.d. entries: nonzero with probability ``density``,
    value uniform in [0, 1]."""
    if not 0.0 < density <= 1.0:
        raise ValueError(f"density must lie in (0, 1], got {density}")
    if nrows < 1 or ncols < 1:
        raise ValueError("matrix shape must be positive")
    gen = stream.generator()
    rows_acc, cols_acc, vals_acc = [], [], []
    block = max(1, min(nrows, 4_000_000 // max(ncols, 1)))
    for start in range(0, nrows, block):
        stop = min(start + block, nrows)
        mask = gen.random((stop - start, ncols)) < density
        vals = gen.random((stop - start, ncols))
        mask &= vals > 0.0  # a drawn 0.0 would be an explicit stored zero
        r, c = np.nonzero(mask)
        rows_acc.append(r + start)
        cols_acc.append(c)
        vals_acc.append(vals[mask])
    return SparseMatrix(
        nrows,
        ncols,
        np.concatenate(rows_acc),
        np.concatenate(cols_acc),
        np.concatenate(vals_acc),
    )


def _split_tokens(path, text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        yield lineno, line


def _parse_matrix_market(path, text: str) -> SparseMatrix:
    lines = _split_tokens(path, text)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise ParseError(path, 1, "empty file") from None
    tokens = header.lower().split()
    if len(tokens) != 5 or tokens[0] != "%%matrixmarket":
        raise ParseError(path, lineno, "missing %%MatrixMarket header")
    if tokens[1:3] != ["matrix", "coordinate"] or tokens[4] != "general":
        raise ParseError(path, lineno, f"unsupported layout {header!r}")
    if tokens[3] not in ("real", "integer"):
        raise ParseError(path, lineno, f"unsupported field type {tokens[3]!r}")

    dims = None
    rows, cols, vals = [], [], []
    declared = 0
    for lineno, line in lines:
        if line.startswith("%"):
            continue
        parts = line.split()
        if dims is None:
            if len(parts) != 3:
                raise ParseError(path, lineno, "expected 'nrows ncols nnz'")
            try:
                nrows, ncols, declared = (int(v) for v in parts)
            except ValueError:
                raise ParseError(path, lineno, "size line is not integral") from None
            dims = (nrows, ncols)
            continue
        if len(parts) != 3:
            raise ParseError(path, lineno, "expected 'row col value'")
        try:
            i, j = int(parts[0]), int(parts[1])
            v = float(parts[2])
        except ValueError:
            raise ParseError(path, lineno, f"malformed entry {line!r}") from None
        if not (1 <= i <= dims[0] and 1 <= j <= dims[1]):
            raise ParseError(path, lineno, f"index ({i}, {j}) out of range")
        rows.append(i - 1)
        cols.append(j - 1)
        vals.append(v)
    if dims is None:
        raise ParseError(path, None, "missing size line")
    if len(rows) != declared:
        raise ParseError(
            path, None, f"declared {declared} entries but found {len(rows)}"
        )
    try:
        return SparseMatrix(dims[0], dims[1], rows, cols, vals)
    except ValueError as exc:
        raise ParseError(path, None, str(exc)) from exc


def _parse_bag_of_words(path, text: str) -> SparseMatrix:
    lines = _split_tokens(path, text)
    header = []
    for _ in range(3):
        try:
            lineno, line = next(lines)
        except StopIteration:
            raise ParseError(path, None, "missing header (need D, W, NNZ lines)") from None
        try:
            header.append(int(line))
        except ValueError:
            raise ParseError(path, lineno, f"header line is not an integer: {line!r}") from None
    n_docs, n_words, declared = header
    if n_docs < 1 or n_words < 1:
        raise ParseError(path, None, "document and word counts must be positive")
    rows, cols, vals = [], [], []
    for lineno, line in lines:
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(path, lineno, "expected 'docID wordID count'")
        try:
            d, w = int(parts[0]), int(parts[1])
            c = float(parts[2])
        except ValueError:
            raise ParseError(path, lineno, f"malformed entry {line!r}") from None
        if not (1 <= d <= n_docs and 1 <= w <= n_words):
            raise ParseError(path, lineno, f"index ({d}, {w}) out of range")
        rows.append(d - 1)
        cols.append(w - 1)
        vals.append(c)
    if len(rows) != declared:
        raise ParseError(
            path, None, f"declared {declared} entries but found {len(rows)}"
        )
    try:
        mat = SparseMatrix(n_docs, n_words, rows, cols, vals)
    except ValueError as exc:
        raise ParseError(path, None, str(exc)) from exc
    # keep the taller orientation so downstream solves see m >= n
    return mat.transpose() if n_docs < n_words else mat


def load_matrix(path, fmt: str = "matrix_market") -> SparseMatrix:
    """Read a sparse matrix from Matrix Market coordinate text or the UCI
    bag-of-words triplet layout (transposed to m >= n when needed)."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}")
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if fmt == "matrix_market":
        return _parse_matrix_market(path, text)
    return _parse_bag_of_words(path, text)


def write_matrix_market(path, mat: SparseMatrix) -> None:
    """Write coordinate-format Matrix Market text (full float precision)."""
    rows, cols, vals = mat.triplets()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{mat.nrows} {mat.ncols} {mat.nnz}\n")
        for i, j, v in zip(rows, cols, vals):
            fh.write(f"{i + 1} {j + 1} {v:.17g}\n")


def _load_source(cfg: ExperimentConfig, matrix_stream: RandomStream) -> SparseMatrix:
    if cfg.input_path is not None:
        return load_matrix(cfg.input_path, cfg.input_format)
    return generate_synthetic(cfg.nrows, cfg.ncols, cfg.density, matrix_stream)


def run_experiment(
    cfg: ExperimentConfig,
) -> tuple[list[TrialRecord], list[SummaryRow]]:
    """Run the benchmark described by ``cfg``.

    Both algorithms see the same matrix; every (k, trial, algo) cell gets its
    own split stream, so reruns with the same config are bit-identical.
    """
    cfg.validate()
    root = RandomStream(cfg.seed)
    matrix_stream, trial_root = root.split(2)
    a = _load_source(cfg, matrix_stream)
    if any(k >= min(a.shape) for k in cfg.k_list):
        raise ValueError(f"every k must be below min(shape) = {min(a.shape)}")

    dense = None
    records: list[TrialRecord] = []
    for k in cfg.k_list:
        opt_p = opt_1 = mat_p = mat_1 = None
        if cfg.oracle:
            try:
                oracle = exact_oracle(a, k)
            except ValueError as exc:
                raise ValueError(
                    f"{exc}; rerun without the oracle flag to skip exact scoring"
                ) from exc
            sig = oracle.spectrum
            tail = sig[k:]
            opt_p = schatten_norm(tail, cfg.p)
            opt_1 = schatten_norm(tail, 1.0)
            mat_p = schatten_norm(sig, cfg.p)
            mat_1 = schatten_norm(sig, 1.0)
            if dense is None:
                dense = a.to_dense()
        for trial in range(cfg.trials):
            ours_stream, base_stream = trial_root.split(2)

            t0 = time.perf_counter()
            ours = solve_schatten(a, k, cfg.p, cfg.eps, ours_stream, cfg.mode)
            wall_ours = (time.perf_counter() - t0) * 1e3
            rel_ours = None
            if cfg.oracle:
                resid = singular_values(dense - ours.factors.y @ ours.factors.z.T)
                rel_ours = relative_error_from(
                    schatten_norm(resid, cfg.p), opt_p, mat_p
                )
            records.append(
                TrialRecord(
                    k=k,
                    trial_index=trial,
                    algo="schatten_p",
                    rel_error=rel_ours,
                    wall_ms=wall_ours,
                    seed=ours_stream.seed,
                    fallback_used=ours.fallback_used,
                )
            )

            t0 = time.perf_counter()
            base = solve_frobenius_baseline(a, k, base_stream)
            wall_base = (time.perf_counter() - t0) * 1e3
            rel_base = None
            if cfg.oracle:
                resid = singular_values(dense - base.factors.y @ base.factors.z.T)
                rel_base = relative_error_from(schatten_norm(resid, 1.0), opt_1, mat_1)
            records.append(
                TrialRecord(
                    k=k,
                    trial_index=trial,
                    algo="frobenius_baseline",
                    rel_error=rel_base,
                    wall_ms=wall_base,
                    seed=base_stream.seed,
                    fallback_used=base.fallback_used,
                )
            )

    summary = summarize(records)
    return records, summary


def summarize(records: list[TrialRecord]) -> list[SummaryRow]:
    """Median rel-error and wall time per (k, algo), in canonical order."""
    cells: dict[tuple[int, str], list[TrialRecord]] = {}
    for rec in records:
        cells.setdefault((rec.k, rec.algo), []).append(rec)
    rows = []
    for (k, algo), cell in sorted(cells.items()):
        errs = [r.rel_error for r in cell if r.rel_error is not None]
        med_err = float(np.median(errs)) if errs else None
        med_wall = float(np.median([r.wall_ms for r in cell]))
        rows.append(
            SummaryRow(
                k=k,
                algo=algo,
                median_rel_error=med_err,
                median_wall_ms=med_wall,
                n_trials=len(cell),
            )
        )
    return rows


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


TRIALS_HEADER = ["k", "trial", "algo", "rel_error", "wall_ms", "seed", "fallback"]
SUMMARY_HEADER = ["k", "algo", "median_rel_error", "median_wall_ms", "n_trials"]


def emit_csv(records, summary, path) -> None:
    """Write ``<path>.trials.csv`` and ``<path>.summary.csv``.

    Floats are serialized at 6 significant digits; rows are sorted by
    (k, algo, trial) so output is bit-stable for a fixed seed.
    """
    path = str(path)
    try:
        with open(path + ".trials.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRIALS_HEADER)
            for rec in sorted(records, key=lambda r: (r.k, r.algo, r.trial_index)):
                writer.writerow(
                    [
                        rec.k,
                        rec.trial_index,
                        rec.algo,
                        _fmt(rec.rel_error),
                        _fmt(rec.wall_ms),
                        rec.seed,
                        _fmt(rec.fallback_used),
                    ]
                )
        with open(path + ".summary.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(SUMMARY_HEADER)
            for row in sorted(summary, key=lambda r: (r.k, r.algo)):
                writer.writerow(
                    [
                        row.k,
                        row.algo,
                        _fmt(row.median_rel_error),
                        _fmt(row.median_wall_ms),
                        row.n_trials,
                    ]
                )
    except OSError as exc:
        raise OSError(f"failed to write CSV at {path!r}: {exc}") from exc


def read_trials_csv(path) -> list[TrialRecord]:
    """Parse a trials CSV back into records (inverse of :func:`emit_csv`)."""
    out = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != TRIALS_HEADER:
            raise ParseError(path, 1, f"unexpected header {header!r}")
        for row in reader:
            out.append(
                TrialRecord(
                    k=int(row[0]),
                    trial_index=int(row[1]),
                    algo=row[2],
                    rel_error=float(row[3]) if row[3] else None,
                    wall_ms=float(row[4]),
                    seed=int(row[5]),
                    fallback_used=row[6] == "1",
                )
            )
    return out


def read_summary_csv(path) -> list[SummaryRow]:
    """Parse a summary CSV back into rows (inverse of :func:`emit_csv`)."""
    out = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != SUMMARY_HEADER:
            raise ParseError(path, 1, f"unexpected header {header!r}")
        for row in reader:
            out.append(
                SummaryRow(
                    k=int(row[0]),
                    algo=row[1],
                    median_rel_error=float(row[2]) if row[2] else None,
                    median_wall_ms=float(row[3]),
                    n_trials=int(row[4]),
                )
            )
    return out
