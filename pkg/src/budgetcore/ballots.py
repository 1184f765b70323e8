"""Votes CSV parsing/writing and seeded synthetic vote generators.

The on-disk format is a UTF-8 CSV whose header is ``voter_id`` followed by the
item names; each body row is a voter id plus one nonnegative utility cell per
item (0/1 for plain approval).  Parsing is strict: wrong-arity rows,
non-numeric cells, and voters who approve nothing are rejected with the line
(and column) named, because silently dropping ballots would change every
downstream quantity.

Generators produce small named families used throughout the tests and docs:
majority/minority splits, shared-item variants, free-rider setups, and random
approval models.  All are deterministic per seed.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .model import Instance

__all__ = ["BallotError", "parse_votes", "write_votes", "gen_synthetic", "PROFILES"]


class BallotError(ValueError):
    """Malformed votes data; the message names the offending line/column."""


def _open_source(source):
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", newline=""), True
    return source, False


def parse_votes(source) -> tuple[np.ndarray, list, list]:
    """Read a votes CSV; returns (matrix, item_names, voter_ids).

    ``source`` may be a path or an open text stream.
    """
    fh, owned = _open_source(source)
    try:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise BallotError("empty votes file: missing header row") from None
        if not header or header[0].strip() != "voter_id":
            raise BallotError(
                "line 1: header must start with 'voter_id' followed by item names"
            )
        item_names = [c.strip() for c in header[1:]]
        if not item_names:
            raise BallotError("line 1: header lists no items")
        if any(not name for name in item_names):
            raise BallotError("line 1: empty item name in header")
        if len(set(item_names)) != len(item_names):
            raise BallotError("line 1: duplicate item names in header")

        k = len(item_names)
        rows: list = []
        voter_ids: list = []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue  # ignore blank lines
            if len(row) != k + 1:
                raise BallotError(
                    f"line {lineno}: row has {len(row) - 1} value cells, expected {k}"
                )
            vid = row[0].strip()
            cells = np.empty(k)
            for j, cell in enumerate(row[1:]):
                try:
                    cells[j] = float(cell)
                except ValueError:
                    raise BallotError(
                        f"line {lineno}, column '{item_names[j]}': "
                        f"not a number: {cell.strip()!r}"
                    ) from None
            if not np.all(np.isfinite(cells)) or np.any(cells < 0):
                raise BallotError(
                    f"line {lineno}: utilities must be finite and nonnegative"
                )
            if not np.any(cells > 0):
                raise BallotError(
                    f"line {lineno}: voter {vid!r} approves nothing (all-zero row)"
                )
            voter_ids.append(vid)
            rows.append(cells)
        if not rows:
            raise BallotError("votes file has a header but no voter rows")
        return np.stack(rows), item_names, voter_ids
    finally:
        if owned:
            fh.close()


def write_votes(
    target,
    matrix: np.ndarray,
    item_names: Sequence,
    voter_ids: Optional[Sequence] = None,
) -> None:
    """Write a votes CSV in the format :func:`parse_votes` reads back."""
    M = np.asarray(matrix, dtype=float)
    if M.ndim != 2 or M.shape[1] != len(item_names):
        raise BallotError("matrix shape does not match item names")
    if voter_ids is None:
        voter_ids = [f"v{i}" for i in range(M.shape[0])]
    if len(voter_ids) != M.shape[0]:
        raise BallotError("voter_ids length does not match matrix rows")
    fh, owned = (
        (open(target, "w", encoding="utf-8", newline=""), True)
        if isinstance(target, (str, Path))
        else (target, False)
    )
    try:
        writer = csv.writer(fh)
        writer.writerow(["voter_id", *item_names])
        for vid, row in zip(voter_ids, M):
            writer.writerow([vid, *(f"{v:.10g}" for v in row)])
    finally:
        if owned:
            fh.close()


# ---------------------------------------------------------------------------
# Synthetic profiles
# ---------------------------------------------------------------------------


def _redraw_empty(votes: np.ndarray, rng: np.random.Generator, p) -> np.ndarray:
    empty = ~votes.any(axis=1)
    while empty.any():
        votes[empty] = rng.random((int(empty.sum()), votes.shape[1])) < p
        empty = ~votes.any(axis=1)
    return votes


def _disjoint_groups(n, k, seed, rng, params):
    if k is None or k < 1:
        raise BallotError("disjoint-groups needs k >= 1")
    u = np.zeros((n, k))
    u[np.arange(n), np.arange(n) % k] = 1.0
    return u, None


def _independent_bernoulli(n, k, seed, rng, params):
    if k is None or k < 1:
        raise BallotError("independent-bernoulli needs k >= 1")
    p = float(params.pop("p", 0.5))
    if not 0.0 < p <= 1.0:
        raise BallotError(f"approval probability must lie in (0, 1], got {p}")
    votes = rng.random((n, k)) < p
    return _redraw_empty(votes, rng, p).astype(float), None


def _block_correlated(n, k, seed, rng, params):
    """Two latent voter coins, one per item block: perfect within-block
    correlation, exact cross-block independence.

    Item 0 is an anchor every voter approves.  Without it, voters whose coins
    both land tails would have empty ballots, and redrawing those rows makes
    the two coins anti-correlated -- a real, detectable dependence that
    defeats the point of the profile.  The anchor keeps every ballot nonempty
    while leaving the coins untouched; independence tests should treat its
    constant column as degenerate.
    """
    if k is None or k < 3:
        raise BallotError("block-correlated needs k >= 3 (anchor + two blocks)")
    p = float(params.pop("p", 0.5))
    if not 0.0 < p < 1.0:
        raise BallotError(f"block coin probability must lie in (0, 1), got {p}")
    half = 1 + (k - 1) // 2
    coins = rng.random((n, 2)) < p
    u = np.zeros((n, k))
    u[:, 0] = 1.0
    u[:, 1:half] = coins[:, [0]]
    u[:, half:] = coins[:, [1]]
    return u, None


def _k_approval(n, k, seed, rng, params):
    """Each voter approves a uniform random subset of fixed size; item sizes
    are drawn once per instance as a fraction of the budget."""
    if k is None or k < 1:
        raise BallotError("k-approval needs k >= 1")
    approvals = int(params.pop("approvals", 4))
    if not 1 <= approvals <= k:
        raise BallotError(f"approvals must lie in [1, k], got {approvals}")
    u = np.zeros((n, k))
    for i in range(n):
        u[i, rng.choice(k, size=approvals, replace=False)] = 1.0
    sizes = rng.uniform(0.08, 0.25, size=k)
    return u, sizes


def _fixed_k(expected):
    def check(k):
        if k is not None and k != expected:
            raise BallotError(f"profile fixes k = {expected}, got {k}")
        return expected

    return check


def _figure1a(n, k, seed, rng, params):
    k = _fixed_k(2)(k)
    if n < 3:
        raise BallotError("majority/minority split needs n >= 3")
    m = math.ceil(n / 2) + 1
    u = np.tile([0.0, 1.0], (n, 1))
    u[:m] = [1.0, 0.0]
    return u, None


def _figure1b(n, k, seed, rng, params):
    k = _fixed_k(3)(k)
    if n < 2:
        raise BallotError("shared-item split needs n >= 2")
    m = math.ceil(n / 2)
    u = np.tile([0.0, 0.6, 0.4], (n, 1))
    u[:m] = [0.6, 0.0, 0.4]
    return u, None


def _figure1c(n, k, seed, rng, params):
    k = _fixed_k(2)(k)
    if n < 2:
        raise BallotError("n-1 vs 1 split needs n >= 2")
    u = np.tile([1.0, 0.0], (n, 1))
    u[-1] = [0.0, 1.0]
    return u, None


def _figure2a(n, k, seed, rng, params):
    k = _fixed_k(2)(k)
    if n < 2:
        raise BallotError("free-rider setup needs n >= 2")
    u = np.tile([1.0, 0.0], (n, 1))
    u[0] = [1.0 / 3.0, 2.0 / 3.0]
    return u, None


def _figure2b(n, k, seed, rng, params):
    k = _fixed_k(2)(k)
    if n < 3:
        raise BallotError("two-manipulator setup needs n >= 3")
    u = np.tile([0.5, 0.5], (n, 1))
    u[0] = [1.0 / 3.0, 2.0 / 3.0]
    u[1] = [2.0 / 3.0, 1.0 / 3.0]
    return u, None


PROFILES = {
    "disjoint-groups": _disjoint_groups,
    "independent-bernoulli": _independent_bernoulli,
    "block-correlated": _block_correlated,
    "k-approval": _k_approval,
    "figure1a": _figure1a,
    "figure1b": _figure1b,
    "figure1c": _figure1c,
    "figure2a": _figure2a,
    "figure2b": _figure2b,
}


def gen_synthetic(
    profile: str,
    n: int,
    k: Optional[int] = None,
    seed: int = 0,
    budget: float = 1.0,
    **params,
) -> Instance:
    """Build a named synthetic instance; deterministic per seed.

    Profiles with a fixed item count (the figure families) reject a
    contradicting ``k``.  ``k-approval`` also draws item sizes (as fractions
    of the budget), making it directly usable with saturating solvers.
    """
    if profile not in PROFILES:
        known = ", ".join(sorted(PROFILES))
        raise BallotError(f"unknown profile {profile!r}; known profiles: {known}")
    if n < 1:
        raise BallotError("n must be at least 1")
    rng = np.random.default_rng(seed)
    params = dict(params)
    u, size_fracs = PROFILES[profile](n, k, seed, rng, params)
    if params:
        raise BallotError(
            f"unused parameters for profile {profile!r}: {sorted(params)}"
        )
    sizes = None if size_fracs is None else size_fracs * budget
    return Instance(utilities=u, budget=budget, sizes=sizes)
