"""Data-association generation for the point-target update.

An association vector assigns every measurement of one scan to clutter (0),
to an existing Bernoulli tree (1..n), or to a new track born from that same
measurement (n+j).  The joint weight couples target terms (the per-target
ratio table eta) with the clutter set density evaluated on whatever was
left to clutter, so non-Poisson clutter makes the coordinates interact.

Two engines produce association sets: exhaustive enumeration (small scans,
and the oracle in tests) and a systematic-scan Gibbs sampler (everything
else).  When the problem has no clutter column at all (``clutter=None``,
the merged parameterization where the PPP clutter intensity is folded into
the new-track weights) the value 0 simply has zero mass and the sampler
starts from the all-new-track vector instead of all-zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .clutter import IidClusterClutter
from .errors import ConfigurationError, NumericalError, SizeLimitError
from .hypotheses import count_hypotheses

NEG_INF = float("-inf")
_ENUM_GUARD = 1_000_000


def _as_scan(Z) -> np.ndarray:
    arr = np.asarray(Z, dtype=float)
    if arr.size == 0:
        return arr.reshape(0, arr.shape[-1] if arr.ndim >= 2 else 1)
    return np.atleast_2d(arr)


@dataclass
class AssociationProblem:
    """One scan's association inputs for one predicted global hypothesis.

    ``log_eta`` has shape (m, n+m): columns 0..n-1 are detection/miss weight
    ratios of the predicted Bernoullis, column n+j is the new-track weight
    of measurement j (only finite on its own row).
    """

    log_eta: np.ndarray
    clutter: object | None
    Z: np.ndarray
    n: int

    def __post_init__(self):
        self.log_eta = np.asarray(self.log_eta, dtype=float)
        self.Z = _as_scan(self.Z)
        m = self.m
        if self.n < 0:
            raise ConfigurationError("n must be >= 0")
        if self.log_eta.shape != (m, self.n + m):
            raise ConfigurationError(
                f"eta table must have shape ({m}, {self.n + m}), got {self.log_eta.shape}"
            )
        self._eta_rows = self.log_eta.tolist()
        self._fast = None
        if isinstance(self.clutter, IidClusterClutter):
            card = self.clutter.cardinality
            log_area = math.log(self.clutter.region.area)
            table = [
                math.lgamma(x + 1) + float(card.log_pmf(x)) - x * log_area
                for x in range(m + 1)
            ]
            inside = self.clutter.region.contains(self.Z) if m else np.zeros(0, bool)
            self._fast = (table, inside.tolist())

    @property
    def m(self) -> int:
        return self.Z.shape[0]

    def _clutter_log_density(self, idx) -> float:
        if self.clutter is None:
            return 0.0 if not len(idx) else NEG_INF
        return float(self.clutter.log_density(self.Z[list(idx)]))


def _in_gamma(gamma) -> bool:
    seen = set()
    for v in gamma:
        if v > 0:
            if v in seen:
                return False
            seen.add(v)
    return True


def assoc_log_weight(p: AssociationProblem, gamma) -> float:
    """Unnormalized log p(gamma): clutter set density times eta products."""
    gamma = [int(v) for v in gamma]
    if len(gamma) != p.m:
        raise ConfigurationError("association vector length does not match scan")
    if not _in_gamma(gamma):
        return NEG_INF
    total = 0.0
    clutter_idx = []
    for j, v in enumerate(gamma):
        if v == 0:
            clutter_idx.append(j)
        else:
            if not 1 <= v <= p.n + p.m:
                raise ConfigurationError(f"association value out of range: {v}")
            total += p._eta_rows[j][v - 1]
            if total == NEG_INF:
                return NEG_INF
    return total + p._clutter_log_density(clutter_idx)


def _conditional_candidates(p: AssociationProblem, gamma, q: int):
    """Candidate values for coordinate q with log weights on a common scale.

    Weights are comparable within the returned lists only; callers
    normalize.  The clutter candidate uses the clutter density with q
    included, targets and the own column use eta plus the clutter density
    without q, so states whose remaining clutter set is impossible still
    get a correct conditional.
    """
    m = p.m
    taken = {gamma[j] for j in range(m) if j != q and gamma[j] > 0}
    values, logws = [], []
    row = p._eta_rows[q]
    if p.clutter is not None:
        if p._fast is not None:
            table, inside = p._fast
            mc = sum(1 for j in range(m) if j != q and gamma[j] == 0)
            base = table[mc]
            values.append(0)
            logws.append(table[mc + 1] if inside[q] else NEG_INF)
        else:
            others = [j for j in range(m) if j != q and gamma[j] == 0]
            base = p._clutter_log_density(others)
            values.append(0)
            logws.append(p._clutter_log_density(sorted(others + [q])))
    else:
        base = 0.0
    for v in range(1, p.n + 1):
        if v in taken:
            continue
        w = row[v - 1]
        if w > NEG_INF and base > NEG_INF:
            values.append(v)
            logws.append(w + base)
    own = p.n + q + 1
    w = row[own - 1]
    if w > NEG_INF and base > NEG_INF:
        values.append(own)
        logws.append(w + base)
    return values, logws


def gibbs_conditional(p: AssociationProblem, gamma, q: int) -> np.ndarray:
    """Normalized conditional distribution of gamma_q given the rest.

    Returned as a dense vector over {0, ..., n+m}.
    """
    gamma = [int(v) for v in gamma]
    if not 0 <= q < p.m:
        raise ConfigurationError(f"coordinate {q} out of range")
    values, logws = _conditional_candidates(p, gamma, q)
    out = np.zeros(1 + p.n + p.m)
    finite = [(v, w) for v, w in zip(values, logws) if w > NEG_INF]
    if not finite:
        raise NumericalError(f"conditional has no support at coordinate {q}")
    top = max(w for _, w in finite)
    total = 0.0
    for v, w in finite:
        ev = math.exp(w - top)
        out[v] = ev
        total += ev
    out /= total
    return out


def run_gibbs(p: AssociationProblem, sweeps: int, rng, collect_counts: bool = False):
    """Systematic-scan Gibbs sampling of association vectors.

    Starts from the all-clutter vector (all-new-track when there is no
    clutter column), sweeps coordinates q = 1..m for ``sweeps`` rounds and
    records the state after every sweep.  Returns the unique recorded
    vectors in first-visit order with their unnormalized log weights; with
    ``collect_counts`` also returns a visit-count dict.
    """
    if sweeps < 1:
        raise ConfigurationError("sweeps must be >= 1")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    m = p.m
    if m == 0:
        empty = ((), assoc_log_weight(p, ()))
        return ([empty], {(): sweeps}) if collect_counts else [empty]

    merged = p.clutter is None
    gamma = [p.n + j + 1 for j in range(m)] if merged else [0] * m
    eta_rows = p._eta_rows
    fast = p._fast
    n = p.n
    taken = set(v for v in gamma if 0 < v <= n)
    mc = sum(1 for v in gamma if v == 0)
    # Static per-coordinate candidates among trees and the own column.
    tree_cands = []
    for q in range(m):
        row = eta_rows[q]
        cands = [(v, row[v - 1]) for v in range(1, n + 1) if row[v - 1] > NEG_INF]
        own = n + q + 1
        if row[own - 1] > NEG_INF:
            cands.append((own, row[own - 1]))
        tree_cands.append(cands)

    uniforms = rng.random((sweeps, m))
    recorded: dict[tuple, int] = {}
    for s in range(sweeps):
        urow = uniforms[s]
        for q in range(m):
            old = gamma[q]
            if old == 0:
                mc -= 1
            elif old <= n:
                taken.discard(old)
            vals = []
            lws = []
            if not merged:
                if fast is not None:
                    table, inside = fast
                    base = table[mc]
                    if inside[q]:
                        vals.append(0)
                        lws.append(table[mc + 1])
                else:
                    others = [j for j in range(m) if j != q and gamma[j] == 0]
                    base = p._clutter_log_density(others)
                    with_q = p._clutter_log_density(sorted(others + [q]))
                    if with_q > NEG_INF:
                        vals.append(0)
                        lws.append(with_q)
            else:
                base = 0.0
            if base > NEG_INF:
                for v, w in tree_cands[q]:
                    if v <= n and v in taken:
                        continue
                    vals.append(v)
                    lws.append(w + base)
            if not vals:
                raise NumericalError(
                    f"Gibbs conditional has no support at coordinate {q}"
                )
            top = max(lws)
            weights = [math.exp(w - top) for w in lws]
            target = urow[q] * math.fsum(weights)
            acc = 0.0
            new = vals[-1]
            for v, w in zip(vals, weights):
                acc += w
                if target < acc:
                    new = v
                    break
            gamma[q] = new
            if new == 0:
                mc += 1
            elif new <= n:
                taken.add(new)
        key = tuple(gamma)
        recorded[key] = recorded.get(key, 0) + 1
    out = [(g, assoc_log_weight(p, g)) for g in recorded]
    if collect_counts:
        return out, dict(recorded)
    return out


def enumerate_associations(p: AssociationProblem, include_zero_weight: bool = True):
    """All valid association vectors with normalized log weights.

    With ``include_zero_weight`` the full structural set is produced (its
    size matches count_hypotheses for point targets and one clutter model);
    without it, branches whose weight is already zero are skipped.
    """
    m = p.m
    guard = count_hypotheses("point", "arbitrary", p.n, m)
    if guard > _ENUM_GUARD:
        raise SizeLimitError(f"association space too large to enumerate: {guard}")
    vectors: list[tuple] = []
    raw: list[float] = []
    gamma = [0] * m
    use_clutter = p.clutter is not None

    def recurse(j: int, taken: frozenset, acc: float, clutter_idx: tuple):
        if j == m:
            total = acc + p._clutter_log_density(clutter_idx)
            vectors.append(tuple(gamma))
            raw.append(total)
            return
        row = p._eta_rows[j]
        if use_clutter:
            gamma[j] = 0
            recurse(j + 1, taken, acc, clutter_idx + (j,))
        for v in range(1, p.n + 1):
            if v in taken:
                continue
            w = row[v - 1]
            if w == NEG_INF and not include_zero_weight:
                continue
            gamma[j] = v
            recurse(j + 1, taken | {v}, acc + w, clutter_idx)
        own = p.n + j + 1
        w = row[own - 1]
        if w > NEG_INF or include_zero_weight:
            gamma[j] = own
            recurse(j + 1, taken, acc + w, clutter_idx)
        gamma[j] = 0

    recurse(0, frozenset(), 0.0, ())
    raw_arr = np.array(raw) if raw else np.zeros(0)
    if raw_arr.size == 0:
        return [], np.zeros(0)
    norm = logsumexp(raw_arr)
    if norm == NEG_INF:
        raise NumericalError("all enumerated associations have zero weight")
    return vectors, raw_arr - norm
