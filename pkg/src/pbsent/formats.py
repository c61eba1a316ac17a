"""On-disk formats: word2vec-style text embeddings, sentence-vector TSV,
label files.

All writers format floats with %.8g so repeated runs with equal inputs are
byte-identical.
"""

from __future__ import annotations

import numpy as np

FLOAT_FMT = ".8g"


def write_embeddings(path, words, matrix) -> None:
    """word2vec text format: header `V d`, then `word v1 ... vd` per row."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if len(words) != matrix.shape[0]:
        raise ValueError(f"{len(words)} words but {matrix.shape[0]} rows")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{matrix.shape[0]} {matrix.shape[1]}\n")
        for word, row in zip(words, matrix):
            fh.write(word + " " + " ".join(format(v, FLOAT_FMT) for v in row) + "\n")


def read_embeddings(path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: malformed header {header!r}")
        n, d = int(header[0]), int(header[1])
        words: list[str] = []
        matrix = np.empty((n, d))
        for i, line in enumerate(fh):
            parts = line.rstrip("\n").split(" ")
            if len(parts) != d + 1:
                raise ValueError(f"{path}: row {i} has {len(parts) - 1} values, expected {d}")
            words.append(parts[0])
            matrix[i] = [float(v) for v in parts[1:]]
    if len(words) != n:
        raise ValueError(f"{path}: header promises {n} rows, found {len(words)}")
    return words, matrix


def embedding_pair_paths(prefix) -> tuple[str, str]:
    return f"{prefix}.in.vec", f"{prefix}.out.vec"


def write_embedding_pair(prefix, words, input_matrix, output_matrix) -> tuple[str, str]:
    in_path, out_path = embedding_pair_paths(prefix)
    write_embeddings(in_path, words, input_matrix)
    write_embeddings(out_path, words, output_matrix)
    return in_path, out_path


def read_embedding_pair(prefix) -> tuple[list[str], np.ndarray, np.ndarray]:
    in_path, out_path = embedding_pair_paths(prefix)
    words, inputs = read_embeddings(in_path)
    out_words, outputs = read_embeddings(out_path)
    if words != out_words:
        raise ValueError(f"{in_path} and {out_path} disagree on their word lists")
    return words, inputs, outputs


def write_sentence_vectors(path, vectors, variances=None) -> None:
    """TSV `index<TAB>v1<TAB>...<TAB>vd`, plus a trailing variance column
    when variances are given."""
    vectors = np.asarray(vectors, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        for i, row in enumerate(vectors):
            cols = [str(i)] + [format(v, FLOAT_FMT) for v in row]
            if variances is not None:
                cols.append(format(variances[i], FLOAT_FMT))
            fh.write("\t".join(cols) + "\n")


def read_sentence_vectors(path, has_var: bool = False):
    """Back from TSV; returns the matrix, or (matrix, variances) with
    has_var."""
    rows, variances = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            values = [float(v) for v in parts[1:]]
            if has_var:
                variances.append(values.pop())
            rows.append(values)
    matrix = np.asarray(rows, dtype=np.float64)
    if has_var:
        return matrix, np.asarray(variances)
    return matrix


def read_labels(path) -> np.ndarray:
    """One integer class id per line, parallel to the sentences file."""
    with open(path, encoding="utf-8") as fh:
        return np.array([int(line.strip()) for line in fh if line.strip() != ""],
                        dtype=np.int64)
