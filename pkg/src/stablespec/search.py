"""Stability-first predictor search, simulation, and shift sweeps.

Given a PAG and a set of mutable vertices, the search enumerates
conditioning sets, keeps those whose conditional is provably invariant to
mechanism changes of the mutable set (directly, or through an identified
interventional expression), fits every surviving candidate, and returns
the one with the lowest validation loss.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .data import DataError, DataTable
from .estimate import CandidateModel, fit_expression, validation_loss
from .expressions import Factor
from .graph import GraphError, MixedGraph
from .identify import (
    FAIL, InvarianceQuery, identify_interventional, invariant_conditional,
)

SEARCH_MODES = ("full", "conditional-only", "single-env")
DEFAULT_MAX_OBSERVED = 20


@dataclass(frozen=True)
class InvarianceSpec:
    """A PAG plus the vertices whose mechanisms are allowed to change."""

    pag: MixedGraph
    mutable: frozenset[str]

    def __init__(self, pag: MixedGraph, mutable: Iterable[str]):
        object.__setattr__(self, "pag", pag)
        object.__setattr__(self, "mutable", frozenset(mutable))
        pag.check_vertices(self.mutable)


class SearchBudgetError(GraphError):
    """Exhaustive enumeration refused; carries any candidates found."""

    def __init__(self, message: str, candidates: Sequence[CandidateModel]):
        super().__init__(message)
        self.candidates = list(candidates)


def subsets_in_order(items: Iterable[str]):
    """All subsets, smaller sizes first, lexicographic within a size."""
    items = sorted(items)
    for size in range(len(items) + 1):
        for combo in combinations(items, size):
            yield frozenset(combo)


def stable_candidates(spec: InvarianceSpec, target: str, mode: str = "full",
                      env: str | None = None,
                      max_observed: int = DEFAULT_MAX_OBSERVED
                      ) -> list[CandidateModel]:
    """Enumerate stable conditional and interventional candidates.

    Conditioning sets Z range over subsets of the non-environment vertices
    minus the target. A Z whose conditional passes the invariance check
    yields a conditional candidate; otherwise (full mode) an identified
    interventional expression over Z minus the mutable set is attempted.
    """
    if mode not in SEARCH_MODES:
        raise GraphError(f"unknown search mode {mode!r}")
    spec.pag.check_vertices({target})
    if mode == "single-env" and env is not None:
        raise GraphError("single-environment search takes no env vertex")
    if mode == "single-env" and not spec.mutable:
        raise GraphError("single-environment search needs an explicit "
                         "mutable set")
    observed = set(spec.pag.vertices) - {target}
    if env is not None:
        observed -= {env}
    if len(observed) > max_observed:
        raise SearchBudgetError(
            f"{len(observed)} candidate vertices exceed the exhaustive "
            f"search budget of {max_observed}", [])
    out: list[CandidateModel] = []
    seen: set[tuple[str, frozenset[str]]] = set()
    m = spec.mutable
    for z in subsets_in_order(observed):
        q = InvarianceQuery(m, {target}, z)
        if invariant_conditional(spec.pag, q):
            key = ("conditional", z)
            if key not in seen:
                seen.add(key)
                out.append(CandidateModel("conditional", m, z,
                                          Factor({target}, z)))
            continue
        if mode != "full" or not m:
            continue
        expr = identify_interventional(spec.pag, m, {target}, z - m)
        if expr is FAIL:
            continue
        key = ("interventional", z - m)
        if key not in seen:
            seen.add(key)
            out.append(CandidateModel("interventional", m, z - m, expr))
    return out


def split_train_validation(data: DataTable, seed: int,
                           val_fraction: float = 0.2):
    """Seeded shuffle split, stratified by the environment column when one
    is present."""
    if not 0.0 < val_fraction < 1.0:
        raise DataError("validation fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    groups: list[np.ndarray]
    if data.env_column is not None:
        env = data.column(data.env_column)
        groups = [np.flatnonzero(env == v) for v in np.unique(env)]
    else:
        groups = [np.arange(data.n_rows)]
    train_idx, val_idx = [], []
    for g in groups:
        perm = g[rng.permutation(len(g))]
        cut = int(round(len(g) * (1.0 - val_fraction)))
        train_idx.append(perm[:cut])
        val_idx.append(perm[cut:])
    train = data.take(np.sort(np.concatenate(train_idx)))
    val = data.take(np.sort(np.concatenate(val_idx)))
    if train.n_rows == 0 or val.n_rows == 0:
        raise DataError("split produced an empty partition")
    return train, val


def fit_candidates(candidates: Sequence[CandidateModel], data: DataTable,
                   target: str, backend: str, seed: int,
                   val_fraction: float = 0.2) -> list[CandidateModel]:
    """Fit every candidate on the train split and score it on validation."""
    train, val = split_train_validation(data, seed, val_fraction)
    out = []
    for c in candidates:
        est = fit_expression(c.expression, train, target, backend)
        loss = validation_loss(est, val, target)
        out.append(CandidateModel(c.kind, c.mutable_set, c.conditioning_set,
                                  c.expression, est, loss))
    return out


def search_stable_predictor(spec: InvarianceSpec, target: str,
                            data: DataTable, mode: str = "full",
                            backend: str = "linear-gaussian", seed: int = 0,
                            env: str | None = None,
                            max_observed: int = DEFAULT_MAX_OBSERVED):
    """Best stable predictor by validation loss, or FAIL when none exists."""
    candidates = stable_candidates(spec, target, mode, env, max_observed)
    if not candidates:
        return FAIL
    fitted = fit_candidates(candidates, data, target, backend, seed)
    return min(fitted, key=lambda c: (c.validation_loss, c.label()))


def unstable_baseline(data: DataTable, target: str, backend: str,
                      seed: int = 0,
                      features: Iterable[str] | None = None) -> CandidateModel:
    """Plain regression of the target on every feature; stability is not
    checked, so shifted environments may break it."""
    if features is None:
        features = [n for n in data.names
                    if n != target and n != data.env_column]
    z = frozenset(features)
    c = CandidateModel("unstable", frozenset(), z, Factor({target}, z))
    return fit_candidates([c], data, target, backend, seed)[0]


# -- simulation and sweeps ---------------------------------------------------


def simulate_benchmark(alpha: float, n: int, seed: int) -> DataTable:
    """Sample the linear-Gaussian shift benchmark at a confounding strength
    alpha."""
    from .scm import shift_benchmark_scm
    if n < 1:
        raise DataError("need at least one row")
    return DataTable(shift_benchmark_scm(alpha).sample(n, seed))


def shift_sweep(models: Sequence[tuple[str, object]],
                alpha_grid: Sequence[float], n_test: int, seed: int,
                target: str = "Y") -> list[tuple[float, str, float]]:
    """Score every model at every shift strength; rows are
    (alpha, model label, mse).

    Every grid point reuses the same noise draws (common random numbers),
    so curves differ only through the shift strength, not sampling noise.
    """
    if not alpha_grid:
        raise DataError("empty shift grid")
    rows = []
    for alpha in alpha_grid:
        data = simulate_benchmark(alpha, n_test, seed)
        for label, model in models:
            rows.append((float(alpha), label,
                         validation_loss(model, data, target)))
    return rows


def write_sweep_csv(rows: Sequence[tuple[float, str, float]], path: str):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["alpha", "model", "mse"])
        for alpha, label, mse in rows:
            writer.writerow([f"{alpha:.6f}", label, f"{mse:.6f}"])
