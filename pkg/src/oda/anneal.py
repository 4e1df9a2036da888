"""Online deterministic annealing over a one-at-a-time sample stream.

The learner keeps a codebook of labeled prototypes ("codevectors"), each
carrying a mass estimate and an accumulator whose ratio is the prototype
location. Per observation it soft-assigns the sample across the codebook
with a mass-weighted Gibbs rule at the current temperature and nudges
mass and accumulator with a decaying stepsize. At each temperature level
the codebook is perturbed into +/- pairs; pairs re-merge after convergence
unless a critical temperature has been passed, so model size grows only
when the data demands it. Idle prototypes are pruned, the temperature is
lowered geometrically, and the loop repeats.

A learner is single-writer: one thread feeds observe(); reads (predict,
metrics) are safe between updates. Independent learners are fully
parallel.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._backend import kernels
from .bregman import DivergenceKind, divergence, divergence_matrix
from .errors import DegenerateInputError, InternalError, UsageError


@dataclass(frozen=True)
class AnnealParams:
    """Knobs of one annealing run.

    t_max / t_min / eps_c / eps_n of None are resolved during calibration
    from the first `calibration_samples` observations. With t_scale = 10 x
    (trace of the per-coordinate variance): t_max = t_scale + 10 x d(data
    mean, initial point) so the run starts hot enough even when the
    codebook is initialized outside the data support, while t_min =
    t_scale * t_min_ratio, eps_c = 1e-4 * t_scale and eps_n = delta *
    t_scale stay on the data-only scale. The stepsize at in-level step n
    is 1 / (step_a + step_b * n).
    """

    t_max: float | None = None
    t_min: float | None = None
    t_min_ratio: float = 1e-4
    gamma: float = 0.8
    k_max: int = 256
    eps_c: float | None = None
    eps_n: float | None = None
    eps_r: float = 1e-4
    delta: float = 0.01
    step_a: float = 2.0
    step_b: float = 0.9
    divergence: DivergenceKind = field(default_factory=DivergenceKind)
    seed: int = 0
    check_every: int = 100
    level_sample_budget: int = 50_000
    calibration_samples: int = 200

    def __post_init__(self):
        if self.t_max is not None:
            if not self.t_max > 0:
                raise UsageError("t_max must be positive")
            if self.t_min is not None and not self.t_max >= self.t_min > 0:
                raise UsageError("need t_max >= t_min > 0")
        if not 0 < self.gamma < 1:
            raise UsageError("gamma must be in (0, 1)")
        if not 0 < self.t_min_ratio < 1:
            raise UsageError("t_min_ratio must be in (0, 1)")
        for name in ("eps_c", "eps_n"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise UsageError(f"{name} must be positive")
        if not self.eps_r > 0:
            raise UsageError("eps_r must be positive")
        if not self.delta > 0:
            raise UsageError("delta must be positive")
        if self.step_a < 1 or not self.step_b > 0:
            raise UsageError("need step_a >= 1 and step_b > 0")
        if self.k_max < 1 or self.check_every < 1 or self.level_sample_budget < 1:
            raise UsageError("k_max, check_every and level_sample_budget must be >= 1")
        if self.calibration_samples < 1:
            raise UsageError("calibration_samples must be >= 1")


@dataclass
class Codevector:
    """Read-only view of one prototype."""

    weights: np.ndarray
    label: object
    mass: float
    accumulator: np.ndarray


@dataclass
class LevelRecord:
    """History entry for one temperature level."""

    level: int
    temperature: float
    codevectors: int
    samples_observed: int
    converged: bool
    train_accuracy: float | None = None
    distortion: float | None = None


class _RunningMoments:
    """Per-coordinate streaming mean/variance (Welford)."""

    def __init__(self):
        self.count = 0
        self.mean = None
        self.m2 = None

    def update(self, x: np.ndarray):
        if self.mean is None:
            self.mean = np.zeros_like(x)
            self.m2 = np.zeros_like(x)
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    @property
    def variance(self) -> np.ndarray:
        if self.mean is None or self.count == 0:
            raise InternalError("no samples observed yet")
        return self.m2 / self.count

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)


class AnnealState:
    """Mutable state of one annealing run: codebook arrays, temperature,
    schedule position, and per-level history."""

    def __init__(self, params: AnnealParams, classes, supervised: bool,
                 rng: np.random.Generator, moments: _RunningMoments | None = None):
        self.params = params
        self.classes = tuple(classes)
        self.supervised = supervised
        self.rng = rng
        self.moments = moments if moments is not None else _RunningMoments()
        self.mu = np.empty((0, 0))
        self.rho = np.empty(0)
        self.sigma = np.empty((0, 0))
        self.labels = np.empty(0, dtype=np.int64)
        self.temperature = float(params.t_max) if params.t_max else 0.0
        self.step_count = 0
        self.level_index = 0
        self.level_samples = 0
        self.level_converged = True
        self.history: list[LevelRecord] = []
        self.observed_counts = np.zeros(len(self.classes), dtype=np.int64)
        self.divergence_evals = 0
        self._work = np.empty(0)
        self._smask_cache = None

    @property
    def k(self) -> int:
        return self.mu.shape[0]

    @property
    def dim(self) -> int:
        return self.mu.shape[1]

    @property
    def codebook(self) -> list[Codevector]:
        return [
            Codevector(self.mu[i].copy(), self.classes[self.labels[i]],
                       float(self.rho[i]), self.sigma[i].copy())
            for i in range(self.k)
        ]

    def _resize_work(self):
        if self._work.shape[0] != self.k:
            self._work = np.empty(self.k)
        self._smask_cache = None

    def class_index(self, label) -> int:
        try:
            return self.classes.index(label)
        except ValueError:
            return -1

    def merge_threshold(self) -> float:
        if self.params.eps_n is not None:
            return self.params.eps_n
        # delta * t_max keeps the merge radius on the same data-derived
        # scale as the temperature schedule
        return max(self.params.delta * float(self.params.t_max), 1e-12)

    def scale(self) -> np.ndarray:
        if self.moments.count == 0:
            return np.zeros(self.dim)
        return self.moments.std


def stepsize(n: int, a: float, b: float) -> float:
    """Time-based stepsize 1 / (a + b*n); decreasing, square-summable-style."""
    if a < 1 or not b > 0:
        raise UsageError("need a >= 1 and b > 0")
    return 1.0 / (a + b * n)


def init_state(params: AnnealParams, classes, initial_point,
               *, supervised: bool = True, rng: np.random.Generator | None = None,
               moments: _RunningMoments | None = None) -> AnnealState:
    """One codevector per class, all at `initial_point`, unit mass."""
    classes = tuple(classes)
    if len(classes) == 0:
        raise UsageError("at least one class (or a single pseudo-class) is required")
    if params.t_max is None:
        raise UsageError("init_state needs a resolved t_max")
    point = np.ascontiguousarray(initial_point, dtype=np.float64).ravel()
    if point.size == 0 or not np.all(np.isfinite(point)):
        raise UsageError("initial_point must be a finite non-empty vector")
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(params.seed))
    state = AnnealState(params, classes, supervised, rng, moments)
    c = len(classes)
    state.mu = np.tile(point, (c, 1))
    state.rho = np.ones(c)
    state.sigma = state.mu * state.rho[:, None]
    state.labels = np.arange(c, dtype=np.int64)
    state.temperature = float(params.t_max)
    state._resize_work()
    return state


def gibbs_association(x, weights, masses, temperature: float,
                      kind: DivergenceKind | None = None) -> np.ndarray:
    """Soft assignment p_i proportional to masses[i] * exp(-d(x, weights[i]) / T),
    stabilized by subtracting the max exponent before exponentiation."""
    if not temperature > 0:
        raise UsageError("temperature must be positive")
    kind = kind if kind is not None else DivergenceKind()
    x = np.ascontiguousarray(x, dtype=np.float64)
    mu = np.ascontiguousarray(weights, dtype=np.float64)
    rho = np.ascontiguousarray(masses, dtype=np.float64)
    if mu.ndim != 2 or x.shape[0] != mu.shape[1] or rho.shape[0] != mu.shape[0]:
        raise UsageError("shape mismatch between sample, weights and masses")
    if mu.shape[0] == 0:
        raise UsageError("empty codebook")
    div = np.empty(mu.shape[0])
    kernels.divergence_row(kind.code, kind.floor, x, mu, div)
    out = np.empty(mu.shape[0])
    total = kernels.gibbs_weights(div, rho, float(temperature), out)
    if total <= 0.0:
        raise DegenerateInputError("all codevector masses are zero")
    return out


def sa_step(state: AnnealState, x, label=None) -> AnnealState:
    """One stochastic-approximation update for one observation (in place).

    Membership is 1 for codevectors whose class matches the label (always 1
    in unsupervised mode); the Gibbs association is computed over the full
    codebook. A mass that decays to zero is left for idle pruning rather
    than raised as an error.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape[0] != state.dim:
        raise UsageError(f"sample dimension {x.shape[0]} != codebook dimension {state.dim}")
    if state.supervised:
        if label is None:
            raise UsageError("supervised mode requires a label with every sample")
        ci = state.class_index(label)
        if ci >= 0:
            state.observed_counts[ci] += 1
        smask = (state.labels == ci).astype(np.float64)
    else:
        state.observed_counts[0] += 1
        if state._smask_cache is None or state._smask_cache.shape[0] != state.k:
            state._smask_cache = np.ones(state.k)
        smask = state._smask_cache
    alpha = stepsize(state.step_count, state.params.step_a, state.params.step_b)
    kind = state.params.divergence
    total = kernels.sa_update(kind.code, kind.floor, x, state.mu, state.rho,
                              state.sigma, smask, float(state.temperature),
                              alpha, state._work)
    if total <= 0.0:
        raise DegenerateInputError("all codevector masses are zero")
    state.moments.update(x)
    state.step_count += 1
    state.level_samples += 1
    state.divergence_evals += state.k
    return state


def converged_at_temperature(prev_codebook, codebook, eps_c: float,
                             kind: DivergenceKind | None = None) -> bool:
    """True iff every codevector moved less than eps_c (in the configured
    divergence) since the previous snapshot; codebooks are index-aligned."""
    kind = kind if kind is not None else DivergenceKind()
    prev = np.asarray(prev_codebook, dtype=np.float64)
    cur = np.asarray(codebook, dtype=np.float64)
    if prev.shape != cur.shape:
        raise UsageError("codebooks must be index-aligned with equal shapes")
    for i in range(cur.shape[0]):
        if divergence(kind, cur[i], prev[i]) >= eps_c:
            return False
    return True


def perturb(state: AnnealState) -> AnnealState:
    """Replace each codevector by a +/- pair offset by a per-coordinate
    uniform draw of magnitude delta * (running data std). Children inherit
    the label and half the mass; accumulators are reset to weights * mass.
    Skipped when doubling would exceed k_max."""
    k = state.k
    if 2 * k > state.params.k_max:
        return state
    span = state.params.delta * state.scale()
    offsets = state.rng.uniform(-1.0, 1.0, size=(k, state.dim)) * span[None, :]
    mu = np.empty((2 * k, state.dim))
    mu[0::2] = state.mu + offsets
    mu[1::2] = state.mu - offsets
    rho = np.repeat(state.rho / 2.0, 2)
    labels = np.repeat(state.labels, 2)
    state.mu = np.ascontiguousarray(mu)
    state.rho = rho
    state.sigma = np.ascontiguousarray(mu * rho[:, None])
    state.labels = labels
    state._resize_work()
    return state


def merge_effective(state: AnnealState) -> AnnealState:
    """Collapse near-coincident same-label codevectors (greedy, in codebook
    order); the survivor absorbs the discarded mass and accumulator."""
    kind = state.params.divergence
    threshold = state.merge_threshold()
    kept: list[int] = []
    absorbed_into = {}
    for i in range(state.k):
        target = None
        for j in kept:
            if state.labels[j] == state.labels[i] and \
                    divergence(kind, state.mu[j], state.mu[i]) < threshold:
                target = j
                break
        if target is None:
            kept.append(i)
        else:
            absorbed_into[i] = target
    if not absorbed_into:
        return state
    for i, j in absorbed_into.items():
        state.rho[j] += state.rho[i]
        state.sigma[j] += state.sigma[i]
        if state.rho[j] > 0:
            state.mu[j] = state.sigma[j] / state.rho[j]
    idx = np.array(kept, dtype=np.int64)
    state.mu = np.ascontiguousarray(state.mu[idx])
    state.rho = np.ascontiguousarray(state.rho[idx])
    state.sigma = np.ascontiguousarray(state.sigma[idx])
    state.labels = np.ascontiguousarray(state.labels[idx])
    state._resize_work()
    return state


def prune_idle(state: AnnealState) -> AnnealState:
    """Drop codevectors whose mass fell below eps_r, but never the last
    codevector of a class present in the stream; the removed mass is
    redistributed proportionally across survivors."""
    keep = state.rho >= state.params.eps_r
    for ci in range(len(state.classes)):
        if state.observed_counts[ci] == 0:
            continue
        members = np.flatnonzero(state.labels == ci)
        if members.size and not keep[members].any():
            best = members[np.argmax(state.rho[members])]
            keep[best] = True
    if keep.all():
        return state
    if not keep.any():
        raise InternalError("pruning removed the entire codebook")
    total_before = float(state.rho.sum())
    idx = np.flatnonzero(keep)
    state.mu = np.ascontiguousarray(state.mu[idx])
    state.rho = np.ascontiguousarray(state.rho[idx])
    state.sigma = np.ascontiguousarray(state.sigma[idx])
    state.labels = np.ascontiguousarray(state.labels[idx])
    total_after = float(state.rho.sum())
    if total_after > 0 and total_before > total_after:
        factor = total_before / total_after
        state.rho *= factor
        state.sigma *= factor
    state._resize_work()
    return state


def lower_temperature(state: AnnealState) -> AnnealState:
    """Append the level's history record, then cool by gamma and reset the
    in-level step counter."""
    state.history.append(LevelRecord(
        level=state.level_index,
        temperature=float(state.temperature),
        codevectors=state.k,
        samples_observed=state.level_samples,
        converged=bool(state.level_converged),
    ))
    state.temperature *= state.params.gamma
    state.level_index += 1
    state.step_count = 0
    state.level_samples = 0
    return state


def nearest_index(state: AnnealState, x) -> int:
    """Index of the codevector minimizing d(x, mu_i); ties break low."""
    if state.k == 0:
        raise UsageError("empty codebook")
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape[0] != state.dim:
        raise UsageError("sample dimension does not match codebook")
    kind = state.params.divergence
    div = np.empty(state.k)
    kernels.divergence_row(kind.code, kind.floor, x, state.mu, div)
    return int(np.argmin(div))


def predict(state: AnnealState, x):
    """Label of the nearest prototype."""
    return state.classes[state.labels[nearest_index(state, x)]]


def predict_batch(state: AnnealState, xs) -> list:
    """Vectorized predict over rows of xs."""
    if state.k == 0:
        raise UsageError("empty codebook")
    div = divergence_matrix(state.params.divergence, np.asarray(xs, dtype=np.float64), state.mu)
    idx = np.argmin(div, axis=1)
    return [state.classes[state.labels[i]] for i in idx]


class OnlineLearner:
    """Drives one annealing run sample by sample.

    The first `calibration_samples` observations only feed the running
    moment estimates (and, when unset, the data-derived temperature scale
    and initial point); annealing then runs level by level until the
    temperature floor or the codebook cap is reached, after which further
    observations are ignored.
    """

    def __init__(self, params: AnnealParams, classes=None, initial_point=None,
                 seed_seq: np.random.SeedSequence | None = None, level_hook=None):
        self.params = params
        self.supervised = classes is not None
        # clustering mode runs the same machinery over one pseudo-class
        self._classes = tuple(classes) if classes is not None else (None,)
        if self.supervised and len(self._classes) == 0:
            raise UsageError("classes must be non-empty")
        self._initial_point = None if initial_point is None else \
            np.ascontiguousarray(initial_point, dtype=np.float64).ravel()
        self._seed_seq = seed_seq if seed_seq is not None else \
            np.random.SeedSequence(params.seed)
        self._rng = np.random.default_rng(self._seed_seq)
        self._moments = _RunningMoments()
        self._calibration_seen = 0
        self._pending_counts = {}
        self._level_hook = level_hook
        self.state: AnnealState | None = None
        self.finished = False
        self._snapshot = None

    @property
    def calibrating(self) -> bool:
        return self.state is None and not self.finished

    def observe(self, x, label=None) -> None:
        if self.finished:
            return
        x = np.ascontiguousarray(x, dtype=np.float64).ravel()
        if self.state is None:
            self._calibrate(x, label)
            return
        sa_step(self.state, x, label if self.supervised else None)
        n = self.state.level_samples
        if n % self.params.check_every == 0:
            converged = converged_at_temperature(
                self._snapshot, self.state.mu,
                self.state.params.eps_c, self.state.params.divergence)
            self._snapshot = self.state.mu.copy()
            if converged:
                self._end_level(converged=True)
                return
        if self.state.level_samples >= self.params.level_sample_budget:
            self._end_level(converged=False)

    def _calibrate(self, x, label):
        if self._initial_point is None:
            self._initial_point = x.copy()
        self._moments.update(x)
        if self.supervised and label is not None:
            self._pending_counts[label] = self._pending_counts.get(label, 0) + 1
        self._calibration_seen += 1
        if self._calibration_seen >= self.params.calibration_samples:
            self._begin_annealing()

    def _begin_annealing(self):
        if self._calibration_seen == 0:
            raise UsageError("stream yielded no samples")
        p = self.params
        t_scale = max(10.0 * float(self._moments.variance.sum()), 1e-12)
        offset = divergence(p.divergence, self._moments.mean, self._initial_point)
        t_max = p.t_max if p.t_max is not None else t_scale + 10.0 * offset
        t_min = p.t_min if p.t_min is not None else \
            min(t_scale * p.t_min_ratio, t_max * 0.999)
        eps_c = p.eps_c if p.eps_c is not None else 1e-4 * t_scale
        eps_n = p.eps_n if p.eps_n is not None else max(p.delta * t_scale, 1e-12)
        resolved = replace(p, t_max=t_max, t_min=t_min, eps_c=eps_c, eps_n=eps_n)
        self.state = init_state(resolved, self._classes, self._initial_point,
                                supervised=self.supervised, rng=self._rng,
                                moments=self._moments)
        for lbl, cnt in self._pending_counts.items():
            ci = self.state.class_index(lbl)
            if ci >= 0:
                self.state.observed_counts[ci] += cnt
        self._pending_counts.clear()
        self._start_level()

    def _start_level(self):
        perturb(self.state)
        self._snapshot = self.state.mu.copy()

    def _end_level(self, converged: bool):
        state = self.state
        merge_effective(state)
        prune_idle(state)
        state.level_converged = converged
        lower_temperature(state)
        if self._level_hook is not None:
            self._level_hook(state, state.history[-1])
        if state.k >= state.params.k_max or state.temperature <= state.params.t_min:
            self.finished = True
        else:
            self._start_level()

    def halt(self) -> None:
        """Finalize a run whose stream ended early; the last history record
        is marked unconverged."""
        if self.finished:
            return
        if self.state is None:
            self._begin_annealing()
        state = self.state
        state.history.append(LevelRecord(
            level=state.level_index,
            temperature=float(state.temperature),
            codevectors=state.k,
            samples_observed=state.level_samples,
            converged=False,
        ))
        if self._level_hook is not None:
            self._level_hook(state, state.history[-1])
        self.finished = True


def run_oda(stream, params: AnnealParams, *, classes=None, initial_point=None,
            max_samples: int | None = None, level_hook=None) -> AnnealState:
    """Run the full annealing loop over a sample stream and return the
    trained state (history included).

    `classes` of None puts the learner in unsupervised mode unless the
    stream's dataset carries labels, in which case its class set is used.
    """
    if classes is None:
        ds = getattr(stream, "dataset", None)
        if ds is not None and getattr(ds, "labels", None) is not None:
            classes = ds.class_set
    learner = OnlineLearner(params, classes=classes, initial_point=initial_point,
                            level_hook=level_hook)
    seen = 0
    for x, label in stream:
        learner.observe(x, label)
        seen += 1
        if learner.finished:
            break
        if max_samples is not None and seen >= max_samples:
            break
    if not learner.finished:
        learner.halt()
    return learner.state
