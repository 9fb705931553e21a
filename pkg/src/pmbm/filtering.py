"""The multi-target filtering recursion.

State is a Poisson point process (undetected targets) plus a multi-Bernoulli
mixture in track-oriented form (one hypothesis tree per potential target,
global hypotheses as index vectors).  The update supports three clutter
regimes:

* ``arbitrary``: clutter is any evaluable set density c(Z).  One clutter
  hypothesis tree tracks which measurements each global hypothesis declared
  clutter; new tracks born from the Poisson intensity have existence 1.
* ``composite``: clutter is a PPP plus independent stationary sources.
  Each source gets its own clutter hypothesis tree and the PPP part is
  folded into the new-track weights, giving births existence below 1.
* ``ppp-merged``: plain PPP clutter folded into new-track weights, which
  is the standard recursion this library generalizes.  No clutter trees.

Association work per predicted global hypothesis is delegated either to
exhaustive enumeration (small problems, or whenever the model demands it)
or to the Gibbs sampler.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from .clutter import CompositeClutter, PoissonClutter
from .densities import (
    GaussianDensity,
    GaussianMixture,
    LinearGaussianMotion,
    ellipsoidal_gate,
    kalman_predict,
    moment_match,
    predicted_measurement_loglik,
)
from .errors import ConfigurationError, NumericalError, SizeLimitError
from .gibbs import AssociationProblem, run_gibbs
from .hypotheses import (
    BernoulliTree,
    ClutterLocalHypothesis,
    ClutterTree,
    GlobalHypothesis,
    LocalHypothesis,
    MeasurementPair,
    bell,
    dump_trees,
    validate_global,
)

NEG_INF = float("-inf")
_MISS = -1  # tree-cell key meaning "no measurement this scan"


@dataclass(frozen=True)
class FilterConfig:
    """Pruning, capping, gating and regime switches for one filter."""

    max_global_hyps: int = 500
    mbm_prune: float = 1e-4
    ppp_prune: float = 1e-5
    bern_prune: float = 1e-5
    gate: float = 20.0
    mode: str = "pmbm"  # pmbm | pmb | mbm
    clutter_regime: str = "arbitrary"  # arbitrary | composite | ppp-merged
    exhaustive_limit: int = 32
    validate: bool = False

    def __post_init__(self):
        if self.max_global_hyps < 1:
            raise ConfigurationError("max_global_hyps must be >= 1")
        for name in ("mbm_prune", "ppp_prune", "bern_prune", "gate"):
            if getattr(self, name) <= 0.0:
                raise ConfigurationError(f"{name} must be > 0")
        if self.mode not in ("pmbm", "pmb", "mbm"):
            raise ConfigurationError(f"unknown mode: {self.mode}")
        if self.clutter_regime not in ("arbitrary", "composite", "ppp-merged"):
            raise ConfigurationError(f"unknown clutter regime: {self.clutter_regime}")


@dataclass
class PmbmDensity:
    """Filter state: PPP intensity plus track-oriented MBM."""

    ppp: GaussianMixture
    trees: list
    clutter_trees: list
    globals_: list
    universe: frozenset
    step: int = 0


def initial_density() -> PmbmDensity:
    """Empty state: no targets known, one empty global hypothesis."""
    return PmbmDensity(
        ppp=GaussianMixture(),
        trees=[],
        clutter_trees=[],
        globals_=[GlobalHypothesis(0.0, (), ())],
        universe=frozenset(),
        step=0,
    )


def predict(
    d: PmbmDensity,
    motion: LinearGaussianMotion,
    birth: GaussianMixture,
    birth_bernoulli: tuple = (),
) -> PmbmDensity:
    """Standard prediction: survival scaling, motion model, birth injection.

    ``birth_bernoulli`` is a sequence of (r, GaussianDensity) appended as
    new Bernoulli trees present in every global hypothesis (the
    multi-Bernoulli birth used by MBM mode).
    """
    log_ps = math.log(motion.ps) if motion.ps > 0.0 else NEG_INF
    ppp = GaussianMixture(
        [lw + log_ps for lw in d.ppp.log_w] + list(birth.log_w),
        [kalman_predict(c, motion) for c in d.ppp.comps] + list(birth.comps),
    )
    trees = []
    for tree in d.trees:
        hyps = []
        for h in tree.hyps:
            r = h.r * motion.ps
            if r == 0.0:
                hyps.append(LocalHypothesis(h.log_w, 0.0, None, h.pairs, h.parent))
            else:
                hyps.append(
                    LocalHypothesis(
                        h.log_w, r, kalman_predict(h.density, motion), h.pairs, h.parent
                    )
                )
        trees.append(BernoulliTree(hyps, tree.origin))
    globals_ = d.globals_
    if birth_bernoulli:
        k_next = d.step + 1
        for idx, (r, dens) in enumerate(birth_bernoulli):
            hyp = LocalHypothesis(0.0, float(r), dens if r > 0 else None, frozenset())
            trees.append(BernoulliTree([hyp], ("birth", k_next, idx)))
        extra = (0,) * len(birth_bernoulli)
        globals_ = [
            GlobalHypothesis(g.log_w, g.clutter, g.berns + extra) for g in d.globals_
        ]
    return PmbmDensity(ppp, trees, d.clutter_trees, list(globals_), d.universe, d.step)


def update(d: PmbmDensity, Z, model, clutter, cfg: FilterConfig, seed: int = 0) -> PmbmDensity:
    """One measurement update under the configured clutter regime."""
    if cfg.clutter_regime == "arbitrary":
        sources, ppp_c = [clutter], None
    elif cfg.clutter_regime == "composite":
        if not isinstance(clutter, CompositeClutter):
            raise ConfigurationError("composite regime needs a CompositeClutter model")
        sources, ppp_c = list(clutter.sources), clutter.ppp
    else:
        if not isinstance(clutter, PoissonClutter):
            raise ConfigurationError("ppp-merged regime needs a PoissonClutter model")
        sources, ppp_c = [], clutter
    return _engine(d, Z, model, sources, ppp_c, cfg, seed)


def _subset_partitions(items: tuple):
    """All partitions of ``items`` into non-empty cells."""
    if not items:
        yield ()
        return
    first, rest = items[0], items[1:]
    for part in _subset_partitions(rest):
        yield part + ((first,),)
        for i, cell in enumerate(part):
            yield part[:i] + (cell + (first,),) + part[i + 1 :]


class _UpdateWorkspace:
    """Per-scan caches shared across predicted global hypotheses."""

    def __init__(self, d, Z, model, sources, ppp_c, cfg, k):
        self.d = d
        self.Z = Z
        self.model = model
        self.sources = sources
        self.cfg = cfg
        self.k = k
        self.m = Z.shape[0]
        self.n = len(d.trees)
        self.point = model.max_subset == 1
        self.log_f0 = model.log_f_empty()
        self.f0 = math.exp(self.log_f0) if self.log_f0 > NEG_INF else 0.0
        self.log_lam = (
            ppp_c.log_intensity(Z).tolist() if ppp_c is not None else None
        )
        self._miss = {}
        self._rows = {}
        self._det = {}
        self._src = {}
        self._own = {}
        self._ppp_comps = [
            (lw, c) for lw, c in zip(d.ppp.log_w, d.ppp.comps) if lw > NEG_INF
        ]
        if self.point:
            self._precompute_own_point()

    def _precompute_own_point(self):
        m = self.m
        sensor = self.model.sensor
        if m == 0 or not self._ppp_comps or sensor.pd == 0.0:
            self._own_l = [NEG_INF] * m
        else:
            rows = np.array(
                [
                    lw + math.log(sensor.pd) + predicted_measurement_loglik(c, sensor, self.Z)
                    for lw, c in self._ppp_comps
                ]
            )
            self._own_l = logsumexp(rows, axis=0).tolist()
        self._own_w = list(self._own_l)
        if self.log_lam is not None:
            self._own_w = [
                float(np.logaddexp(lam, l)) for lam, l in zip(self.log_lam, self._own_l)
            ]

    # -- per-tree factors ------------------------------------------------

    def miss_info(self, i, a):
        key = (i, a)
        out = self._miss.get(key)
        if out is None:
            h = self.d.trees[i].hyps[a]
            fac = 1.0 - h.r + h.r * self.f0
            log_fac = math.log(fac) if fac > 0.0 else NEG_INF
            r_new = h.r * self.f0 / fac if fac > 0.0 else 0.0
            out = (log_fac, r_new)
            self._miss[key] = out
        return out

    def gated_js(self, i, a):
        """Measurement indices inside the gate of predicted hypothesis (i,a)."""
        key = (i, a)
        out = self._rows.get(key)
        if out is None:
            h = self.d.trees[i].hyps[a]
            if h.r == 0.0 or self.m == 0:
                out = []
            else:
                mask = ellipsoidal_gate(h.density, self.model.sensor, self.Z, self.cfg.gate)
                out = [j for j in range(self.m) if mask[j]]
            self._rows[key] = out
        return out

    def det_info(self, i, a, cell):
        """Detection factor and posterior for tree i, hypothesis a, cell of
        measurement indices (int for point, tuple for general)."""
        key = (i, a, cell)
        out = self._det.get(key)
        if out is None:
            h = self.d.trees[i].hyps[a]
            if h.r == 0.0:
                out = (NEG_INF, None)
            else:
                idx = [cell] if isinstance(cell, int) else list(cell)
                ll, post = self.model.detection_update(h.density, self.Z[idx])
                fac = math.log(h.r) + ll if ll > NEG_INF and h.r > 0 else NEG_INF
                out = (fac, post)
            self._det[key] = out
        return out

    def src_info(self, s, cell):
        """Clutter-source set-density factor for source s and cell (tuple).

        Independent of the parent hypothesis: the factor is c_s of the
        assigned subset alone.
        """
        key = (s, cell)
        out = self._src.get(key)
        if out is None:
            subset = self.Z[list(cell)] if cell else self.Z[:0]
            out = float(self.sources[s].log_density(subset))
            self._src[key] = out
        return out

    # -- new tracks from the PPP intensity --------------------------------

    def own_entry(self, cell):
        """(total log weight, log target likelihood, existence, density) of
        the potential track born from measurement cell (tuple of indices)."""
        out = self._own.get(cell)
        if out is not None:
            return out
        if self.point and len(cell) == 1:
            j = cell[0]
            log_l = self._own_l[j]
            log_w = self._own_w[j]
        else:
            parts = []
            for lw, c in self._ppp_comps:
                ll, _ = self.model.detection_update(c, self.Z[list(cell)])
                if ll > NEG_INF:
                    parts.append(lw + ll)
            log_l = float(logsumexp(parts)) if parts else NEG_INF
            log_w = log_l
            if self.log_lam is not None and len(cell) == 1:
                log_w = float(np.logaddexp(self.log_lam[cell[0]], log_l))
        if log_w > NEG_INF and log_l > NEG_INF:
            r = math.exp(log_l - log_w)
            comps, lws = [], []
            for lw, c in self._ppp_comps:
                ll, post = self.model.detection_update(c, self.Z[list(cell)])
                if ll > NEG_INF:
                    comps.append(post)
                    lws.append(lw + ll)
            dens = moment_match(np.array(lws) - log_l, comps)
        else:
            r, dens = 0.0, None
        out = (log_w, log_l, r, dens)
        self._own[cell] = out
        return out


def _enumerate_labelings(ws, g):
    """Exhaustive association for one predicted global hypothesis.

    Yields (src_cells, tree_cells, own_cells, log_factor) with cells as
    tuples of 0-based measurement indices; log_factor is the absolute
    this-scan factor (clutter, miss/detection and new-track terms).
    """
    m, n, n_src = ws.m, ws.n, len(ws.sources)
    options = []
    for j in range(m):
        opts = [("c", s) for s in range(n_src)]
        for i in range(n):
            a = g.berns[i]
            if j in ws.gated_js(i, a):
                # For the general model the per-measurement gate only
                # shortlists; cell factors are evaluated on full cells.
                if ws.point and ws.det_info(i, a, j)[0] == NEG_INF:
                    continue
                opts.append(("t", i))
        if ws.point:
            if ws.own_entry((j,))[0] > NEG_INF:
                opts.append(("own",))
        else:
            opts.append(("own",))
        options.append(opts)

    def assemble(labels):
        src_cells = [[] for _ in range(n_src)]
        tree_cells = {}
        own_pool = []
        for j, lab in enumerate(labels):
            if lab[0] == "c":
                src_cells[lab[1]].append(j)
            elif lab[0] == "t":
                tree_cells.setdefault(lab[1], []).append(j)
            else:
                own_pool.append(j)
        if ws.point:
            own_splits = [tuple((j,) for j in own_pool)]
        else:
            own_splits = [
                tuple(sorted(tuple(sorted(cell)) for cell in part))
                for part in _subset_partitions(tuple(own_pool))
            ]
        base = 0.0
        for s in range(n_src):
            base += ws.src_info(s, tuple(src_cells[s]))
            if base == NEG_INF:
                return
        cells_t = []
        for i in range(n):
            a = g.berns[i]
            cell = tuple(tree_cells.get(i, ()))
            if not cell:
                base += ws.miss_info(i, a)[0]
            else:
                fac, _ = ws.det_info(i, a, cell[0] if ws.point else cell)
                base += fac
            cells_t.append(cell)
            if base == NEG_INF:
                return
        for split in own_splits:
            w = base
            for cell in split:
                w += ws.own_entry(cell)[0]
                if w == NEG_INF:
                    break
            if w > NEG_INF:
                yield (
                    tuple(tuple(c) for c in src_cells),
                    tuple(cells_t),
                    split,
                    w,
                )

    def product(j, labels):
        if j == m:
            yield from assemble(labels)
            return
        for lab in options[j]:
            if lab[0] == "t" and ws.point:
                if any(l2 == lab for l2 in labels):
                    continue
            yield from product(j + 1, labels + [lab])

    yield from product(0, [])


def _engine(d, Z, model, sources, ppp_c, cfg, seed):
    Z = np.asarray(Z, dtype=float)
    if Z.size == 0:
        Z = Z.reshape(0, model.sensor.meas_dim)
    Z = np.atleast_2d(Z)
    if Z.shape[1] != model.sensor.meas_dim:
        raise ConfigurationError("scan dimension does not match the sensor")
    k = d.step + 1
    n_src = len(sources)
    if len(d.clutter_trees) == n_src:
        ctrees = d.clutter_trees
    elif not d.clutter_trees:
        ctrees = [ClutterTree([ClutterLocalHypothesis(0.0, frozenset())]) for _ in range(n_src)]
    else:
        raise ConfigurationError(
            f"density has {len(d.clutter_trees)} clutter trees, regime needs {n_src}"
        )
    bootstrap = len(d.clutter_trees) != n_src

    ws = _UpdateWorkspace(d, Z, model, sources, ppp_c, cfg, k)
    m, n = ws.m, ws.n

    # Gather associations per predicted global hypothesis.
    assoc = []  # (g_idx, src_cells, tree_cells, own_cells, log_w_unnorm)
    for g_idx, g in enumerate(d.globals_):
        if g.log_w == NEG_INF:
            continue
        if m == 0:
            base = sum(ws.src_info(s, ()) for s in range(n_src))
            for i in range(n):
                base += ws.miss_info(i, g.berns[i])[0]
            assoc.append((g_idx, ((),) * n_src, ((),) * n, (), g.log_w + base))
            continue
        est = 1
        for j in range(m):
            cands = n_src + 1
            for i in range(n):
                if j in ws.gated_js(i, g.berns[i]):
                    cands += 1
            est *= cands
            if est > cfg.exhaustive_limit:
                break
        if not ws.point and est <= cfg.exhaustive_limit:
            est *= bell(min(m, 20))
        if est <= cfg.exhaustive_limit:
            for src_cells, tree_cells, own_cells, w in _enumerate_labelings(ws, g):
                assoc.append((g_idx, src_cells, tree_cells, own_cells, g.log_w + w))
        else:
            if not ws.point:
                raise SizeLimitError(
                    "general-model updates support exhaustive association only; "
                    "raise exhaustive_limit or reduce the scan"
                )
            if n_src > 1:
                raise SizeLimitError(
                    "multi-source association spaces must fit the exhaustive limit"
                )
            assoc.extend(_gibbs_associations(ws, g, g_idx, n_src, seed))
    if not assoc:
        assoc = [_fallback_association(ws, d, n_src)]
        warnings.warn("no association had positive weight; forced all-clutter fallback")

    return _assemble(d, ws, ctrees, bootstrap, assoc, n_src, cfg)


def _gibbs_associations(ws, g, g_idx, n_src, seed):
    """Sampled associations for one predicted global hypothesis."""
    m, n = ws.m, ws.n
    miss_base = 0.0
    for i in range(n):
        lf = ws.miss_info(i, g.berns[i])[0]
        if lf == NEG_INF:
            raise NumericalError(
                "a predicted hypothesis cannot miss; sampled association "
                "requires positive miss weights"
            )
        miss_base += lf
    eta = np.full((m, n + m), NEG_INF)
    for i in range(n):
        a = g.berns[i]
        lf = ws.miss_info(i, a)[0]
        for j in ws.gated_js(i, a):
            fac, _ = ws.det_info(i, a, j)
            if fac > NEG_INF:
                eta[j, i] = fac - lf
    for j in range(m):
        w = ws.own_entry((j,))[0]
        if w > NEG_INF:
            eta[j, n + j] = w
    problem = AssociationProblem(eta, ws.sources[0] if n_src else None, ws.Z, n)
    w_norm = math.exp(min(g.log_w, 0.0))
    sweeps = max(1, math.ceil(ws.cfg.max_global_hyps * w_norm))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, ws.k, g_idx))))
    for gamma, lw in run_gibbs(problem, sweeps, rng):
        if lw == NEG_INF:
            continue
        src0 = tuple(j for j in range(m) if gamma[j] == 0)
        tree_cells = [() for _ in range(n)]
        own_cells = []
        for j, v in enumerate(gamma):
            if 1 <= v <= n:
                tree_cells[v - 1] = (j,)
            elif v > n:
                own_cells.append((j,))
        yield (
            g_idx,
            (src0,) if n_src else (),
            tuple(tree_cells),
            tuple(sorted(own_cells)),
            g.log_w + miss_base + lw,
        )


def _fallback_association(ws, d, n_src):
    """All measurements to clutter (or to their own tracks when there is no
    clutter tree), attached to the best predicted global hypothesis."""
    g_idx = max(range(len(d.globals_)), key=lambda i: d.globals_[i].log_w)
    m, n = ws.m, ws.n
    all_j = tuple(range(m))
    if n_src:
        src_cells = (all_j,) + ((),) * (n_src - 1)
        own_cells = ()
    else:
        src_cells = ()
        own_cells = tuple((j,) for j in range(m))
    return (g_idx, src_cells, ((),) * n, own_cells, 0.0)


def _assemble(d, ws, ctrees, bootstrap, assoc, n_src, cfg):
    k, m, n = ws.k, ws.m, ws.n
    # Deterministic ordering for measurement-born trees.
    own_keys = sorted({cell for item in assoc for cell in item[3]})
    own_index = {cell: n + rank for rank, cell in enumerate(own_keys)}

    new_trees = [
        BernoulliTree(
            [LocalHypothesis(0.0, 0.0, None, frozenset())], ("meas", k, tuple(j + 1 for j in cell))
        )
        for cell in own_keys
    ]
    for cell, tree in zip(own_keys, new_trees):
        log_w, _, r, dens = ws.own_entry(cell)
        pairs = frozenset(MeasurementPair(k, j + 1) for j in cell)
        tree.hyps.append(LocalHypothesis(log_w, r, dens, pairs))

    upd_trees = [BernoulliTree([], t.origin) for t in d.trees] + new_trees
    upd_ctrees = [ClutterTree([]) for _ in range(n_src)]
    tree_child: dict = {}
    src_child: dict = {}

    def tree_hyp_index(i, a, cell):
        key = (i, a, cell)
        idx = tree_child.get(key)
        if idx is not None:
            return idx
        parent = d.trees[i].hyps[a]
        if not cell:
            log_fac, r_new = ws.miss_info(i, a)
            dens = parent.density if r_new > 0.0 else None
            hyp = LocalHypothesis(parent.log_w + log_fac, r_new, dens, parent.pairs, a)
        else:
            fac, post = ws.det_info(i, a, cell[0] if ws.point else cell)
            pairs = parent.pairs | {MeasurementPair(k, j + 1) for j in cell}
            if fac == NEG_INF:
                hyp = LocalHypothesis(NEG_INF, 0.0, None, pairs, a)
            else:
                hyp = LocalHypothesis(parent.log_w + fac, 1.0, post, pairs, a)
        upd_trees[i].hyps.append(hyp)
        idx = len(upd_trees[i].hyps) - 1
        tree_child[key] = idx
        return idx

    def src_hyp_index(s, a, cell):
        key = (s, a, cell)
        idx = src_child.get(key)
        if idx is not None:
            return idx
        parent = ctrees[s].hyps[a]
        fac = ws.src_info(s, cell)
        pairs = parent.pairs | {MeasurementPair(k, j + 1) for j in cell}
        hyp = ClutterLocalHypothesis(parent.log_w + fac, pairs, a)
        upd_ctrees[s].hyps.append(hyp)
        idx = len(upd_ctrees[s].hyps) - 1
        src_child[key] = idx
        return idx

    globals_ = []
    for g_idx, src_cells, tree_cells, own_cells, log_w in assoc:
        g = d.globals_[g_idx]
        cl_parents = g.clutter if not bootstrap else (0,) * n_src
        clutter_sel = tuple(
            src_hyp_index(s, cl_parents[s], src_cells[s]) for s in range(n_src)
        )
        bern_sel = [0] * len(upd_trees)
        for i in range(n):
            bern_sel[i] = tree_hyp_index(i, g.berns[i], tree_cells[i])
        for cell in own_cells:
            bern_sel[own_index[cell]] = 1
        globals_.append(GlobalHypothesis(log_w, clutter_sel, tuple(bern_sel)))

    logs = np.array([g.log_w for g in globals_])
    norm = logsumexp(logs)
    if norm == NEG_INF:
        # Forced fallback carried weight 0 already; normalize uniformly.
        logs = np.zeros(len(globals_))
        norm = math.log(len(globals_))
    globals_ = [
        GlobalHypothesis(float(lw - norm), g.clutter, g.berns)
        for lw, g in zip(logs, globals_)
    ]

    universe = d.universe | {MeasurementPair(k, j + 1) for j in range(m)}
    out = PmbmDensity(
        ppp=d.ppp.scaled(ws.log_f0),
        trees=upd_trees,
        clutter_trees=upd_ctrees,
        globals_=globals_,
        universe=universe,
        step=k,
    )
    if cfg.validate:
        for g in out.globals_:
            if not validate_global(g, out.trees, out.clutter_trees, out.universe):
                raise AssertionError("update produced an invalid global hypothesis")
    return out


def project_to_pmb(d: PmbmDensity) -> PmbmDensity:
    """Collapse the MBM onto a single global hypothesis.

    Per tree: marginal existence is the weight-averaged existence and the
    density is the moment-matched mixture over hypotheses; measurement-pair
    bookkeeping is inherited from the highest-weight global hypothesis so
    the partition structure stays exact.
    """
    if not d.globals_:
        raise ConfigurationError("cannot project an empty hypothesis set")
    best = max(range(len(d.globals_)), key=lambda i: d.globals_[i].log_w)
    g_best = d.globals_[best]
    weights = np.exp(np.array([g.log_w for g in d.globals_]))
    trees = []
    for i, tree in enumerate(d.trees):
        by_hyp: dict[int, float] = {}
        for g, w in zip(d.globals_, weights):
            a = g.berns[i]
            by_hyp[a] = by_hyp.get(a, 0.0) + w
        r_bar = sum(w * tree.hyps[a].r for a, w in by_hyp.items())
        r_bar = min(r_bar, 1.0)
        pairs = tree.hyps[g_best.berns[i]].pairs
        if r_bar > 0.0:
            comps, lws = [], []
            for a, w in by_hyp.items():
                h = tree.hyps[a]
                if h.r > 0.0 and w > 0.0:
                    comps.append(h.density)
                    lws.append(math.log(w * h.r))
            dens = moment_match(np.array(lws) - math.log(r_bar), comps)
            hyp = LocalHypothesis(0.0, r_bar, dens, pairs)
        else:
            hyp = LocalHypothesis(0.0, 0.0, None, pairs)
        trees.append(BernoulliTree([hyp], tree.origin))
    ctrees = [
        ClutterTree([ClutterLocalHypothesis(0.0, tree.hyps[g_best.clutter[s]].pairs)])
        for s, tree in enumerate(d.clutter_trees)
    ]
    globals_ = [GlobalHypothesis(0.0, (0,) * len(ctrees), (0,) * len(trees))]
    return PmbmDensity(d.ppp, trees, ctrees, globals_, d.universe, d.step)


def reduce(d: PmbmDensity, cfg: FilterConfig) -> PmbmDensity:
    """Prune global hypotheses, unreferenced local hypotheses, weak trees
    and weak PPP components; renormalize."""
    order = sorted(range(len(d.globals_)), key=lambda i: -d.globals_[i].log_w)
    thr = math.log(cfg.mbm_prune)
    keep = [i for i in order if d.globals_[i].log_w >= thr]
    if not keep:
        keep = [order[0]]
    keep = keep[: cfg.max_global_hyps]
    globals_ = [d.globals_[i] for i in keep]
    logs = np.array([g.log_w for g in globals_])
    logs = logs - logsumexp(logs)

    # Drop local hypotheses no surviving global references; remap indices.
    tree_maps = []
    trees = []
    for i, tree in enumerate(d.trees):
        used = sorted({g.berns[i] for g in globals_})
        tree_maps.append({a: x for x, a in enumerate(used)})
        trees.append(BernoulliTree([tree.hyps[a] for a in used], tree.origin))
    ctree_maps = []
    ctrees = []
    for s, tree in enumerate(d.clutter_trees):
        used = sorted({g.clutter[s] for g in globals_})
        ctree_maps.append({a: x for x, a in enumerate(used)})
        ctrees.append(ClutterTree([tree.hyps[a] for a in used]))
    globals_ = [
        GlobalHypothesis(
            float(lw),
            tuple(ctree_maps[s][a] for s, a in enumerate(g.clutter)),
            tuple(tree_maps[i][a] for i, a in enumerate(g.berns)),
        )
        for lw, g in zip(logs, globals_)
    ]

    # Garbage-collect trees whose best existence is below threshold; their
    # measurement pairs are erased everywhere to keep partitions exact.
    drop = [
        i
        for i, tree in enumerate(trees)
        if max(h.r for h in tree.hyps) < cfg.bern_prune
    ]
    if drop:
        erased = frozenset().union(*(h.pairs for i in drop for h in trees[i].hyps))
        kept_idx = [i for i in range(len(trees)) if i not in set(drop)]
        trees = [
            BernoulliTree(
                [
                    replace(h, pairs=h.pairs - erased) if h.pairs & erased else h
                    for h in trees[i].hyps
                ],
                trees[i].origin,
            )
            for i in kept_idx
        ]
        ctrees = [
            ClutterTree(
                [
                    replace(h, pairs=h.pairs - erased) if h.pairs & erased else h
                    for h in tree.hyps
                ]
            )
            for tree in ctrees
        ]
        universe = d.universe - erased
        globals_ = [
            GlobalHypothesis(g.log_w, g.clutter, tuple(g.berns[i] for i in kept_idx))
            for g in globals_
        ]
    else:
        universe = d.universe

    # Removing tree columns can make hypotheses indistinguishable: merge.
    merged: dict[tuple, float] = {}
    order2: list[tuple] = []
    for g in globals_:
        key = (g.clutter, g.berns)
        if key in merged:
            merged[key] = float(np.logaddexp(merged[key], g.log_w))
        else:
            merged[key] = g.log_w
            order2.append(key)
    globals_ = [GlobalHypothesis(merged[key], key[0], key[1]) for key in order2]
    logs = np.array([g.log_w for g in globals_])
    logs = logs - logsumexp(logs)
    globals_ = [
        GlobalHypothesis(float(lw), g.clutter, g.berns)
        for lw, g in zip(logs, globals_)
    ]

    ppp = d.ppp.pruned(math.log(cfg.ppp_prune))
    return PmbmDensity(ppp, trees, ctrees, globals_, universe, d.step)


def estimate(d: PmbmDensity, method: str = "map-cardinality", threshold: float = 0.4):
    """Extract target state means.

    ``existence-threshold``: existence thresholding inside the best global
    hypothesis.  ``map-cardinality``: maximize over (global hypothesis,
    subset of its Bernoullis) of the deterministic-cardinality score
    w * prod(r in subset) * prod(1-r outside); the optimal subset per
    hypothesis keeps exactly the Bernoullis with r > 1/2.
    """
    if not d.globals_:
        return []
    if method == "existence-threshold":
        g = d.globals_[max(range(len(d.globals_)), key=lambda i: d.globals_[i].log_w)]
        return [
            d.trees[i].hyps[a].density.mean
            for i, a in enumerate(g.berns)
            if d.trees[i].hyps[a].r > threshold
        ]
    if method != "map-cardinality":
        raise ConfigurationError(f"unknown estimator: {method}")
    best_score, best_sel = NEG_INF, []
    for g in d.globals_:
        score = g.log_w
        sel = []
        for i, a in enumerate(g.berns):
            h = d.trees[i].hyps[a]
            if h.r > 0.5:
                score += math.log(h.r)
                sel.append(h.density.mean)
            elif h.r > 0.0:
                score += math.log1p(-h.r)
        if score > best_score:
            best_score, best_sel = score, sel
    return best_sel


def density_dump(d: PmbmDensity) -> str:
    """Line-oriented debug dump of the hypothesis structure."""
    head = [
        f"step {d.step} ppp {len(d.ppp)} trees {len(d.trees)} "
        f"clutter {len(d.clutter_trees)} globals {len(d.globals_)}"
    ]
    return "\n".join(head + [dump_trees(d.trees, d.clutter_trees)])


SCHEMA_VERSION = 1


def _density_obj(dens: GaussianDensity | None):
    if dens is None:
        return None
    return {"mean": dens.mean.tolist(), "cov": dens.cov.tolist()}


def _density_from(obj):
    if obj is None:
        return None
    return GaussianDensity(np.array(obj["mean"]), np.array(obj["cov"]))


def to_json_obj(d: PmbmDensity) -> dict:
    """Plain-data form of the filter state (versioned)."""
    return {
        "schema_version": SCHEMA_VERSION,
        "step": d.step,
        "ppp": {
            "log_w": list(d.ppp.log_w),
            "comps": [_density_obj(c) for c in d.ppp.comps],
        },
        "trees": [
            {
                "origin": list(t.origin),
                "hyps": [
                    {
                        "log_w": h.log_w,
                        "r": h.r,
                        "density": _density_obj(h.density),
                        "pairs": sorted([list(p) for p in h.pairs]),
                        "parent": h.parent,
                    }
                    for h in t.hyps
                ],
            }
            for t in d.trees
        ],
        "clutter_trees": [
            {
                "hyps": [
                    {
                        "log_w": h.log_w,
                        "pairs": sorted([list(p) for p in h.pairs]),
                        "parent": h.parent,
                    }
                    for h in t.hyps
                ]
            }
            for t in d.clutter_trees
        ],
        "globals": [
            {"log_w": g.log_w, "clutter": list(g.clutter), "berns": list(g.berns)}
            for g in d.globals_
        ],
        "universe": sorted([list(p) for p in d.universe]),
    }


def from_json_obj(obj: dict) -> PmbmDensity:
    if obj.get("schema_version") != SCHEMA_VERSION:
        raise ConfigurationError(f"unsupported schema version: {obj.get('schema_version')}")
    ppp = GaussianMixture(
        list(obj["ppp"]["log_w"]), [_density_from(c) for c in obj["ppp"]["comps"]]
    )
    trees = [
        BernoulliTree(
            [
                LocalHypothesis(
                    h["log_w"],
                    h["r"],
                    _density_from(h["density"]),
                    frozenset(MeasurementPair(*p) for p in h["pairs"]),
                    h["parent"],
                )
                for h in t["hyps"]
            ],
            tuple(tuple(x) if isinstance(x, list) else x for x in t["origin"]),
        )
        for t in obj["trees"]
    ]
    ctrees = [
        ClutterTree(
            [
                ClutterLocalHypothesis(
                    h["log_w"],
                    frozenset(MeasurementPair(*p) for p in h["pairs"]),
                    h["parent"],
                )
                for h in t["hyps"]
            ]
        )
        for t in obj["clutter_trees"]
    ]
    globals_ = [
        GlobalHypothesis(g["log_w"], tuple(g["clutter"]), tuple(g["berns"]))
        for g in obj["globals"]
    ]
    universe = frozenset(MeasurementPair(*p) for p in obj["universe"])
    return PmbmDensity(ppp, trees, ctrees, globals_, universe, obj["step"])
