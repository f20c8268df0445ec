"""Comparison statistics between model delta values and human responses.

Four metric families: the in-sample log-likelihood of an L1-penalized probit
regression, Spearman rank correlation at contrast or stimulus level, the
native-language-effect Pearson correlation, and participant-level bootstrap
for intervals and pairwise significance.
"""

from __future__ import annotations

import csv
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import DegenerateDataError, ResponseTableError

PROB_CLIP = 1e-12

RESPONSE_COLUMNS = [
    "participant_id",
    "triplet_id",
    "target_is_A",
    "trial_index",
    "correct",
    "gradient",
    "subset",
    "language_group",
]

LANGUAGE_GROUPS = ("french", "english")


@dataclass(frozen=True)
class HumanResponse:
    participant_id: str
    triplet_id: str
    target_is_A: bool
    trial_index: int
    correct: bool
    gradient: float | None
    subset_id: str
    language_group: str

    def __post_init__(self):
        if self.trial_index < 1:
            raise ResponseTableError(
                f"response of {self.participant_id!r} on {self.triplet_id!r}: "
                f"trial_index must be >= 1, got {self.trial_index}"
            )
        if self.gradient is not None and not np.isfinite(self.gradient):
            raise ResponseTableError(
                f"response of {self.participant_id!r} on {self.triplet_id!r}: "
                f"non-finite gradient"
            )
        if self.language_group not in LANGUAGE_GROUPS:
            raise ResponseTableError(
                f"unknown language_group {self.language_group!r} "
                f"(expected one of {LANGUAGE_GROUPS})"
            )


def response_value(response: HumanResponse) -> float:
    """Graded response when present, else binary correctness."""
    if response.gradient is not None:
        return response.gradient
    return 1.0 if response.correct else 0.0


def load_responses(path) -> list[HumanResponse]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise ResponseTableError(f"{path}: empty file")
        missing = [c for c in RESPONSE_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise ResponseTableError(f"{path}: missing columns {missing}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            where = f"{path}:{lineno}"
            try:
                gradient_text = row["gradient"].strip()
                rows.append(
                    HumanResponse(
                        participant_id=row["participant_id"].strip(),
                        triplet_id=row["triplet_id"].strip(),
                        target_is_A=_parse_bool(row["target_is_A"], where),
                        trial_index=int(row["trial_index"]),
                        correct=_parse_bool(row["correct"], where),
                        gradient=float(gradient_text) if gradient_text else None,
                        subset_id=row["subset"].strip(),
                        language_group=row["language_group"].strip(),
                    )
                )
            except ValueError as exc:
                raise ResponseTableError(f"{where}: {exc}") from exc
    if not rows:
        raise ResponseTableError(f"{path}: no response rows")
    return rows


def _parse_bool(text, where):
    value = text.strip().lower()
    if value in ("true", "1"):
        return True
    if value in ("false", "0"):
        return False
    raise ResponseTableError(f"{where}: cannot parse boolean from {text!r}")


def _population_sd(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.sqrt(np.mean((x - x.mean()) ** 2)))


# ---------------------------------------------------------------------------
# Design matrix and probit-lasso fit
# ---------------------------------------------------------------------------

@dataclass
class DesignMatrix:
    matrix: np.ndarray
    column_names: list[str]
    participants: list[str]  # row-aligned participant ids, used for CV folds

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]


def build_design_matrix(responses, deltas) -> DesignMatrix:
    """Rows follow the response order; columns are intercept, standardized
    delta, answer-is-A, standardized trial index, then participant and subset
    one-hot blocks with the lexicographically first level dropped.

    Standardization uses the population sd (divide by N).
    """
    responses = list(responses)
    if len(responses) < 2:
        raise DegenerateDataError("need at least 2 responses to build a design matrix")
    missing = [r.triplet_id for r in responses if r.triplet_id not in deltas]
    if missing:
        raise DegenerateDataError(
            f"no delta value for triplet(s) {sorted(set(missing))[:5]}"
        )

    n = len(responses)
    delta_col = np.array([deltas[r.triplet_id] for r in responses], dtype=np.float64)
    trial_col = np.array([r.trial_index for r in responses], dtype=np.float64)
    answer_col = np.array([1.0 if r.target_is_A else 0.0 for r in responses])

    columns = [np.ones(n), _standardize(delta_col, "delta"),
               answer_col, _standardize(trial_col, "trial_index")]
    names = ["intercept", "delta", "answer_is_A", "trial_index"]

    participants = sorted({r.participant_id for r in responses})
    for pid in participants[1:]:
        columns.append(np.array([1.0 if r.participant_id == pid else 0.0 for r in responses]))
        names.append(f"participant={pid}")
    subsets = sorted({r.subset_id for r in responses})
    for sid in subsets[1:]:
        columns.append(np.array([1.0 if r.subset_id == sid else 0.0 for r in responses]))
        names.append(f"subset={sid}")

    return DesignMatrix(
        matrix=np.column_stack(columns),
        column_names=names,
        participants=[r.participant_id for r in responses],
    )


def _standardize(x: np.ndarray, name: str) -> np.ndarray:
    sd = _population_sd(x)
    if sd == 0.0:
        raise DegenerateDataError(f"degenerate constant predictor {name!r}: cannot standardize")
    return (x - x.mean()) / sd


@dataclass
class ProbitFit:
    coefficients: np.ndarray
    column_names: list[str]
    lam: float
    log_likelihood: float
    converged: bool
    iterations: int
    optimality_residual: float


def _norm_pdf(x):
    return np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)


def penalized_objective(X, signs, beta, lam, penalized) -> float:
    """Sum of log clipped probit probabilities minus the L1 penalty."""
    p = np.clip(ndtr(signs * (X @ beta)), PROB_CLIP, 1.0 - PROB_CLIP)
    return float(np.sum(np.log(p)) - lam * np.sum(np.abs(beta[penalized])))


def objective_gradient(X, signs, beta) -> np.ndarray:
    """Gradient of the smooth (unpenalized) part, consistent with clipping:
    rows whose probability is pinned at a clip bound contribute zero."""
    eta = X @ beta
    p = ndtr(signs * eta)
    inside = (p > PROB_CLIP) & (p < 1.0 - PROB_CLIP)
    u = np.where(inside, signs * _norm_pdf(eta) / np.clip(p, PROB_CLIP, None), 0.0)
    return X.T @ u


def _optimality_residual(X, signs, beta, lam, penalized) -> float:
    g = objective_gradient(X, signs, beta)
    res = np.abs(g).astype(np.float64)
    pen = penalized & (beta != 0.0)
    res[pen] = np.abs(g[pen] - lam * np.sign(beta[pen]))
    zero = penalized & (beta == 0.0)
    res[zero] = np.maximum(0.0, np.abs(g[zero]) - lam)
    return float(res.max()) if res.size else 0.0


def _cd_weighted_lasso(X, X2, z, w, lam, beta, penalized, sweeps=200, tol=1e-12):
    """Coordinate descent on 0.5*sum(w*(z - X beta)^2) + lam*sum|beta_pen|."""
    beta = beta.copy()
    r = z - X @ beta
    wx2 = w @ X2
    for _ in range(sweeps):
        max_change = 0.0
        for j in range(X.shape[1]):
            if wx2[j] <= 0.0:
                # column absent from this (sub)sample; leave coefficient at zero
                if beta[j] != 0.0:
                    r += X[:, j] * beta[j]
                    beta[j] = 0.0
                continue
            num = np.dot(w * r, X[:, j]) + wx2[j] * beta[j]
            if penalized[j]:
                new = _soft_threshold(num, lam) / wx2[j]
            else:
                new = num / wx2[j]
            change = beta[j] - new
            if change != 0.0:
                r += X[:, j] * change
                beta[j] = new
                max_change = max(max_change, abs(change))
        if max_change < tol:
            break
    return beta


def _soft_threshold(value, threshold):
    if value > threshold:
        return value - threshold
    if value < -threshold:
        return value + threshold
    return 0.0


def fit_probit_lasso(design: DesignMatrix, responses, lam: float,
                     tol: float = 1e-8, max_iter: int = 1000) -> ProbitFit:
    """Maximize sum_i log Phi(s_i x_i'beta) - lam * sum_{j != intercept} |beta_j|.

    Fisher-scoring outer loop with a weighted-lasso coordinate-descent inner
    solve and step halving on the true penalized objective. Non-convergence
    within max_iter is reported through ``converged``, not raised.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    X = np.asarray(design.matrix, dtype=np.float64)
    y = np.asarray([1.0 if r else 0.0 for r in responses], dtype=np.float64)
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"design has {X.shape[0]} rows but {y.shape[0]} responses")
    signs = 2.0 * y - 1.0
    X2 = X * X
    penalized = np.ones(X.shape[1], dtype=bool)
    penalized[design.column_names.index("intercept")] = False

    beta = np.zeros(X.shape[1])
    beta[design.column_names.index("intercept")] = float(
        ndtri(np.clip(y.mean(), 1e-6, 1.0 - 1e-6))
    )
    obj = penalized_objective(X, signs, beta, lam, penalized)

    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        eta = np.clip(X @ beta, -7.0, 7.0)
        p = ndtr(eta)
        p_safe = np.clip(p, 1e-10, 1.0 - 1e-10)
        pdf = _norm_pdf(eta)
        w = pdf * pdf / (p_safe * (1.0 - p_safe))
        z = eta + (y - p) / pdf

        direction = _cd_weighted_lasso(X, X2, z, w, lam, beta, penalized) - beta
        step = 1.0
        proposal = beta + direction
        new_obj = penalized_objective(X, signs, proposal, lam, penalized)
        while new_obj < obj - 1e-12 * (1.0 + abs(obj)) and step > 1e-6:
            step *= 0.5
            proposal = beta + step * direction
            new_obj = penalized_objective(X, signs, proposal, lam, penalized)
        if new_obj < obj - 1e-12 * (1.0 + abs(obj)):
            # cannot improve in this direction; accept the current iterate as final
            converged = _optimality_residual(X, signs, beta, lam, penalized) <= 1e-6
            break

        change = float(np.max(np.abs(proposal - beta)))
        beta = proposal
        obj = new_obj
        if change < tol:
            residual = _optimality_residual(X, signs, beta, lam, penalized)
            if residual <= 1e-6:
                converged = True
                break

    residual = _optimality_residual(X, signs, beta, lam, penalized)
    ll = penalized_objective(X, signs, beta, 0.0, penalized)
    return ProbitFit(
        coefficients=beta,
        column_names=list(design.column_names),
        lam=lam,
        log_likelihood=ll,
        converged=converged,
        iterations=iterations,
        optimality_residual=residual,
    )


def log_likelihood(fit: ProbitFit, design: DesignMatrix, responses) -> float:
    """Unpenalized in-sample log-likelihood under the fitted coefficients."""
    X = np.asarray(design.matrix, dtype=np.float64)
    if X.shape[1] != fit.coefficients.shape[0]:
        raise ValueError("fit and design have different column counts")
    y = np.asarray([1.0 if r else 0.0 for r in responses], dtype=np.float64)
    signs = 2.0 * y - 1.0
    return penalized_objective(X, signs, fit.coefficients, 0.0,
                               np.zeros(X.shape[1], dtype=bool))


def select_lambda_cv(design: DesignMatrix, responses, grid, folds: int,
                     seed: int) -> float:
    """Penalty weight maximizing mean held-out log-likelihood per response.

    Folds are stratified by participant: each participant's rows are shuffled
    (deterministically from the seed) and dealt round-robin, so every fold
    sees every participant with enough rows. Folds whose training or test
    part contains a single response class are skipped with a warning.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("lambda grid must be nonempty")
    if folds < 2:
        raise ValueError("need at least 2 folds")
    y = np.asarray([1.0 if r else 0.0 for r in responses], dtype=np.float64)
    X = design.matrix
    if X.shape[0] != y.shape[0]:
        raise ValueError("design rows and response count differ")

    rng = np.random.default_rng(seed)
    fold_of = np.empty(X.shape[0], dtype=np.int64)
    by_participant: dict[str, list[int]] = {}
    for idx, pid in enumerate(design.participants):
        by_participant.setdefault(pid, []).append(idx)
    for pid in sorted(by_participant):
        rows = np.array(by_participant[pid])
        shuffled = rows[rng.permutation(rows.shape[0])]
        for k, row in enumerate(shuffled):
            fold_of[row] = k % folds

    usable = []
    for f in range(folds):
        test = fold_of == f
        train = ~test
        if test.sum() == 0 or train.sum() == 0 or \
                len(np.unique(y[train])) < 2 or len(np.unique(y[test])) < 2:
            warnings.warn(f"fold {f} skipped: degenerate split (single class or empty)")
            continue
        usable.append((train, test))
    if not usable:
        raise DegenerateDataError("every cross-validation fold was degenerate")

    names = list(design.column_names)
    best_lam = grid[0]
    best_score = -np.inf
    for lam in grid:
        scores = []
        for train, test in usable:
            sub = DesignMatrix(matrix=X[train], column_names=names,
                               participants=[p for p, t in zip(design.participants, train) if t])
            fit = fit_probit_lasso(sub, y[train] > 0.5, lam)
            held = DesignMatrix(matrix=X[test], column_names=names,
                                participants=[p for p, t in zip(design.participants, test) if t])
            scores.append(log_likelihood(fit, held, y[test] > 0.5) / int(test.sum()))
        score = float(np.mean(scores))
        if score > best_score:
            best_score = score
            best_lam = lam
    return best_lam


# ---------------------------------------------------------------------------
# Rank statistics
# ---------------------------------------------------------------------------

def fractional_ranks(x) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank range."""
    x = np.asarray(x, dtype=np.float64)
    _, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts).astype(np.float64)
    mean_ranks = ends - (counts - 1) / 2.0
    return mean_ranks[inverse]


def pearson(x, y) -> float:
    """Product-moment correlation; raises on constant input."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.shape[0] < 3:
        raise DegenerateDataError("need at least 3 points for a correlation")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(np.dot(xc, xc))
    syy = float(np.dot(yc, yc))
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateDataError("degenerate constant vector: correlation undefined")
    r = float(np.dot(xc, yc)) / np.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def spearman(x, y) -> float:
    """Pearson correlation of fractional (average-tie) ranks."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.shape[0] < 3:
        raise DegenerateDataError("need at least 3 points for a correlation")
    if np.unique(x).size < 2 or np.unique(y).size < 2:
        raise DegenerateDataError("degenerate constant vector: correlation undefined")
    return pearson(fractional_ranks(x), fractional_ranks(y))


# ---------------------------------------------------------------------------
# Aggregation to contrast or stimulus level
# ---------------------------------------------------------------------------

@dataclass
class AggregatePairs:
    units: list
    model_values: np.ndarray
    human_values: np.ndarray
    dropped: int


def _as_delta_map(deltas) -> dict[str, float]:
    if isinstance(deltas, dict):
        return dict(deltas)
    return {record.triplet_id: record.delta for record in deltas}


def _mean_by_key(pairs) -> dict:
    sums: dict = {}
    counts: dict = {}
    for key, value in pairs:
        sums[key] = sums.get(key, 0.0) + value
        counts[key] = counts.get(key, 0) + 1
    return {key: sums[key] / counts[key] for key in sums}


def aggregate(level: str, deltas, responses, items=None) -> AggregatePairs:
    """Paired per-unit model and human averages.

    At contrast level the unit is the canonical contrast (phone pair +
    language, via the item table); at stimulus level it is triplet x
    presentation order. Human averages use the graded response when present,
    binary correctness otherwise. Units present on only one side are dropped
    and counted.
    """
    delta_map = _as_delta_map(deltas)
    responses = list(responses)

    if level == "contrast":
        if items is None:
            raise ValueError("contrast-level aggregation needs the item table")
        item_map = {item.triplet_id: item for item in items}
        unknown = [t for t in delta_map if t not in item_map]
        if unknown:
            raise DegenerateDataError(f"deltas reference unknown triplets {sorted(unknown)[:5]}")
        model = _mean_by_key(
            (item_map[t].contrast_key, d) for t, d in delta_map.items()
        )
        bad = [r.triplet_id for r in responses if r.triplet_id not in item_map]
        if bad:
            raise DegenerateDataError(
                f"responses reference unknown triplets {sorted(set(bad))[:5]}"
            )
        human = _mean_by_key(
            (item_map[r.triplet_id].contrast_key, response_value(r)) for r in responses
        )
    elif level == "stimulus":
        model = {}
        for t, d in delta_map.items():
            model[(t, True)] = d
            model[(t, False)] = d
        human = _mean_by_key(
            ((r.triplet_id, r.target_is_A), response_value(r)) for r in responses
        )
    else:
        raise ValueError(f"unknown level {level!r}; expected 'contrast' or 'stimulus'")

    common = sorted(set(model) & set(human))
    dropped = len(set(model) ^ set(human))
    return AggregatePairs(
        units=common,
        model_values=np.array([model[u] for u in common], dtype=np.float64),
        human_values=np.array([human[u] for u in common], dtype=np.float64),
        dropped=dropped,
    )


def native_effect(deltas_fr_model, deltas_en_model, responses_fr_group,
                  responses_en_group, level: str, items=None) -> float:
    """Pearson correlation between model and human native-language effects.

    Model deltas are first normalized by their own population sd over all
    triplets, averaged per unit, and differenced French minus English; human
    accuracies are averaged per unit and differenced French-group minus
    English-group. The correlation runs over units present on all four sides.
    """
    fr = _as_delta_map(deltas_fr_model)
    en = _as_delta_map(deltas_en_model)
    if set(fr) != set(en):
        raise ValueError("the two models must cover the same triplets")

    def normalized(mapping):
        values = np.array([mapping[t] for t in sorted(mapping)])
        sd = _population_sd(values)
        if sd == 0.0:
            raise DegenerateDataError("degenerate constant delta vector: cannot normalize")
        return {t: mapping[t] / sd for t in mapping}

    fr_n = normalized(fr)
    en_n = normalized(en)

    fr_pairs = aggregate(level, fr_n, responses_fr_group, items)
    en_pairs = aggregate(level, en_n, responses_en_group, items)

    fr_model = dict(zip(fr_pairs.units, fr_pairs.model_values))
    en_model = dict(zip(en_pairs.units, en_pairs.model_values))
    fr_human = dict(zip(fr_pairs.units, fr_pairs.human_values))
    en_human = dict(zip(en_pairs.units, en_pairs.human_values))

    units = sorted(set(fr_model) & set(en_model) & set(fr_human) & set(en_human))
    if len(units) < 3:
        raise DegenerateDataError(
            f"only {len(units)} units shared by both models and both groups"
        )
    model_effect = np.array([fr_model[u] - en_model[u] for u in units])
    human_effect = np.array([fr_human[u] - en_human[u] for u in units])
    return pearson(model_effect, human_effect)


# ---------------------------------------------------------------------------
# Participant bootstrap
# ---------------------------------------------------------------------------

@dataclass
class MetricReport:
    metric_name: str
    point_estimate: float
    bootstrap_values: np.ndarray
    ci_low: float
    ci_high: float
    seed: int
    n_missing: int = 0


@dataclass
class PairwiseResult:
    metric_name: str
    difference: float
    bootstrap_values: np.ndarray
    ci_low: float
    ci_high: float
    significant: bool
    seed: int
    n_missing: int = 0


def _participant_groups(responses):
    groups: dict[str, list[HumanResponse]] = {}
    for r in responses:
        groups.setdefault(r.participant_id, []).append(r)
    ordered = sorted(groups)
    return [groups[pid] for pid in ordered]


def _resample(groups, seed: int, replicate: int):
    rng = np.random.default_rng(seed ^ replicate)
    draws = rng.integers(0, len(groups), size=len(groups))
    out = []
    for d in draws:
        out.extend(groups[d])
    return out


def _percentile_ci(values: np.ndarray):
    lo, hi = np.percentile(values, [2.5, 97.5], method="linear")
    return float(lo), float(hi)


def bootstrap(metric, responses, n: int, seed: int, *, metric_name: str = "metric",
              threads: int = 1) -> MetricReport:
    """Resample participants with replacement and recompute the metric.

    Replicate r draws its RNG stream from seed XOR r, so results are
    bit-identical for any thread count. Replicates where the metric is
    degenerate are recorded as missing and excluded from the interval.
    """
    responses = list(responses)
    if n < 1:
        raise ValueError("need at least one replicate")
    groups = _participant_groups(responses)
    if not groups:
        raise DegenerateDataError("no responses to bootstrap")

    point = metric(responses)

    values = np.full(n, np.nan)

    def run(replicate: int) -> float:
        try:
            return metric(_resample(groups, seed, replicate))
        except DegenerateDataError:
            return np.nan

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for i, v in enumerate(pool.map(run, range(n))):
                values[i] = v
    else:
        for i in range(n):
            values[i] = run(i)

    finite = values[np.isfinite(values)]
    if finite.size == 0:
        raise DegenerateDataError("all bootstrap replicates were degenerate")
    ci_low, ci_high = _percentile_ci(finite)
    return MetricReport(
        metric_name=metric_name,
        point_estimate=float(point),
        bootstrap_values=values,
        ci_low=ci_low,
        ci_high=ci_high,
        seed=seed,
        n_missing=int(n - finite.size),
    )


def pairwise_significance(metric, responses, model_a_deltas, model_b_deltas,
                          n: int, seed: int, *, metric_name: str = "metric",
                          threads: int = 1) -> PairwiseResult:
    """Bootstrap the metric difference between two models on shared resamples.

    ``metric(responses, deltas)`` is evaluated for both models on the same
    resampled participants; the comparison is significant when the 95%
    interval of the differences excludes zero.
    """
    responses = list(responses)
    groups = _participant_groups(responses)
    if not groups:
        raise DegenerateDataError("no responses to bootstrap")

    point = metric(responses, model_a_deltas) - metric(responses, model_b_deltas)

    values = np.full(n, np.nan)

    def run(replicate: int) -> float:
        sample = _resample(groups, seed, replicate)
        try:
            return metric(sample, model_a_deltas) - metric(sample, model_b_deltas)
        except DegenerateDataError:
            return np.nan

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for i, v in enumerate(pool.map(run, range(n))):
                values[i] = v
    else:
        for i in range(n):
            values[i] = run(i)

    finite = values[np.isfinite(values)]
    if finite.size == 0:
        raise DegenerateDataError("all bootstrap replicates were degenerate")
    ci_low, ci_high = _percentile_ci(finite)
    return PairwiseResult(
        metric_name=metric_name,
        difference=float(point),
        bootstrap_values=values,
        ci_low=ci_low,
        ci_high=ci_high,
        significant=bool(ci_low > 0.0 or ci_high < 0.0),
        seed=seed,
        n_missing=int(n - finite.size),
    )
