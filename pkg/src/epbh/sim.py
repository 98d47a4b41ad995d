"""Monte Carlo harness: scenario generation, power/FDR studies, audits, grids.

Replicate datasets follow the simultaneous t-test model: K rows of n
Gaussian replicates, the first K1 rows carrying a nonzero mean driven by an
effect size xi, the rest null.  Every replication draws from its own
counter-derived Philox stream, so results are bit-reproducible and
independent of execution order and parallelism degree.

The harness certifies three things empirically: FDR control of ep-BH with
each registered constructor, replication-by-replication dominance of the
"+" improvements, and the compound e-value property (mean null sum of E at
most K, within Monte Carlo error).
"""

from __future__ import annotations

import hashlib
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import ep_bh_mask
from .errors import ValidationError
from .registry import (
    ProcedureContext,
    ProcedureSpec,
    build_evalues,
    resolve,
)
from .shapes import nonneg_shape_from_id
from .ttest import beta_scaled_sample, normalized_weights, summarize

__all__ = [
    "ScenarioConfig",
    "StudyConfig",
    "ProcedureResult",
    "AuditReport",
    "RegionGrid",
    "generate",
    "study_masks",
    "run_study",
    "run_grid",
    "audit_compound",
    "region_grid",
    "default_study",
    "parse_study_config",
    "RESULT_COLUMNS",
]

_PURPOSE_DATA = 0
_PURPOSE_BETA = 1
_PURPOSE_BULK = 2

RESULT_COLUMNS = (
    "scenario_id",
    "procedure",
    "n",
    "K1",
    "xi",
    "power",
    "power_se",
    "fdr",
    "fdr_se",
    "reps",
)


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation cell: fixed (K, n, K1, xi) and shared analysis knobs."""

    K: int = 50
    n: int = 5
    K1: int = 0
    xi: float = 0.0
    sigma2: float = 1.0
    alpha: float = 0.1
    tau: float = 0.5
    psi_id: str = "u4"
    reps: int = 2000
    seed: int = 0
    mu_mapping: str = "tstat"

    def __post_init__(self):
        if self.K < 1:
            raise ValidationError("K must be at least 1")
        if self.n < 2:
            raise ValidationError("n must be at least 2")
        if not (0 <= self.K1 <= self.K):
            raise ValidationError("K1 must lie in 0..K")
        if self.reps < 1:
            raise ValidationError("reps must be at least 1")
        if not (0.0 < self.alpha < 1.0):
            raise ValidationError("alpha must lie in (0, 1)")
        if not (0.0 < self.tau < 1.0):
            raise ValidationError("tau must lie in (0, 1)")
        if not self.sigma2 > 0:
            raise ValidationError("sigma2 must be positive")
        if self.xi < 0:
            raise ValidationError("xi must be nonnegative")
        if self.mu_mapping not in ("tstat", "paper"):
            raise ValidationError("mu_mapping must be 'tstat' or 'paper'")

    def mu_value(self) -> float:
        """Alternative mean.  'tstat' uses xi/sqrt(n) so the noncentrality of
        the t statistic equals xi regardless of n; 'paper' uses the literal
        xi*sqrt(n) mapping."""
        root = np.sqrt(self.n)
        return self.xi / root if self.mu_mapping == "tstat" else self.xi * root

    def truth_mask(self) -> np.ndarray:
        truth = np.zeros(self.K, dtype=bool)
        truth[: self.K1] = True
        return truth


def _cell_key(config: ScenarioConfig) -> int:
    payload = repr(
        (
            config.K,
            config.n,
            config.K1,
            float(config.xi),
            float(config.sigma2),
            config.mu_mapping,
        )
    ).encode()
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def _rng_for(seed: int, cell_key: int, rep: int, purpose: int) -> np.random.Generator:
    """Counter-based stream selection: one Philox generator per
    (seed, cell, replication, purpose)."""
    ss = np.random.SeedSequence(
        entropy=int(seed) & 0xFFFFFFFFFFFFFFFF,
        spawn_key=(cell_key, int(rep), int(purpose)),
    )
    return np.random.Generator(np.random.Philox(ss))


def generate(config: ScenarioConfig, rep_index: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw one replicate matrix (K, n) plus the alternative-truth mask.

    Bit-identical for identical (config, seed, rep_index) regardless of how
    many other replications were generated before or concurrently.
    """
    if rep_index < 0:
        raise ValidationError("rep_index must be nonnegative")
    rng = _rng_for(config.seed, _cell_key(config), rep_index, _PURPOSE_DATA)
    truth = config.truth_mask()
    mu = np.where(truth, config.mu_value(), 0.0)
    y = mu[:, None] + np.sqrt(config.sigma2) * rng.standard_normal((config.K, config.n))
    return y, truth


# ---------------------------------------------------------------------------
# study execution


def _coerce_spec(proc) -> ProcedureSpec:
    if isinstance(proc, ProcedureSpec):
        return proc.normalized()
    if isinstance(proc, str):
        return ProcedureSpec(proc).normalized()
    raise ValidationError(f"cannot interpret procedure {proc!r}")


def _wants_beta(specs) -> bool:
    return any(
        str(s.params.get("mode", "")).lower() == "randomized" for s in specs
    )


def _run_chunk(config: ScenarioConfig, specs, start: int, stop: int):
    """Evaluate all procedures on replications [start, stop); returns masks."""
    key = _cell_key(config)
    y = np.stack([generate(config, r)[0] for r in range(start, stop)])
    summ = summarize(y)
    weights = normalized_weights(summ.s2, nonneg_shape_from_id(config.psi_id))
    beta = None
    if _wants_beta(specs):
        beta = np.stack(
            [
                beta_scaled_sample(
                    config.n,
                    _rng_for(config.seed, key, r, _PURPOSE_BETA),
                    size=config.K,
                )
                for r in range(start, stop)
            ]
        )
    ctx = ProcedureContext(
        pvalues=summ.pvalues,
        alpha=config.alpha,
        weights=weights,
        summary=summ,
        beta_draws=beta,
    )
    return [
        ep_bh_mask(summ.pvalues, build_evalues(spec, ctx), config.alpha)
        for spec in specs
    ]


def study_masks(
    config: ScenarioConfig,
    procedures,
    workers: int = 1,
    chunk_size: int = 512,
) -> tuple[list[np.ndarray], np.ndarray]:
    """Per-replication rejection masks, shape (reps, K), one per procedure.

    Replications are independent work units; with ``workers > 1`` chunks run
    in separate processes and are reassembled by replication index, so the
    output is identical at any parallelism level.
    """
    specs = [_coerce_spec(p) for p in procedures]
    for spec in specs:
        resolve(spec.id)
    bounds = [
        (s, min(s + chunk_size, config.reps))
        for s in range(0, config.reps, chunk_size)
    ]
    masks = [np.empty((config.reps, config.K), dtype=bool) for _ in specs]
    if workers > 1 and len(bounds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(_run_chunk, config, specs, a, b): (a, b) for a, b in bounds
            }
            for fut, (a, b) in futures.items():
                chunk_masks = fut.result()
                for m, cm in zip(masks, chunk_masks):
                    m[a:b] = cm
    else:
        for a, b in bounds:
            chunk_masks = _run_chunk(config, specs, a, b)
            for m, cm in zip(masks, chunk_masks):
                m[a:b] = cm
    return masks, config.truth_mask()


@dataclass(frozen=True)
class ProcedureResult:
    """Monte Carlo operating characteristics of one procedure on one cell."""

    procedure: str
    power: float
    power_se: float
    fdr: float
    fdr_se: float
    reps: int
    mean_rejections: float


def _mask_stats(mask: np.ndarray, truth: np.ndarray, label: str) -> ProcedureResult:
    reps = mask.shape[0]
    k1 = int(truth.sum())
    rejections = mask.sum(axis=1)
    false_disc = mask[:, ~truth].sum(axis=1)
    true_disc = mask[:, truth].sum(axis=1)
    fdp = false_disc / np.maximum(rejections, 1)
    power = true_disc / k1 if k1 > 0 else np.zeros(reps)
    se = lambda x: float(x.std(ddof=1) / np.sqrt(reps)) if reps > 1 else 0.0
    return ProcedureResult(
        procedure=label,
        power=float(power.mean()),
        power_se=se(power),
        fdr=float(fdp.mean()),
        fdr_se=se(fdp),
        reps=reps,
        mean_rejections=float(rejections.mean()),
    )


def run_study(
    config: ScenarioConfig,
    procedures,
    workers: int = 1,
    chunk_size: int = 512,
) -> list[ProcedureResult]:
    """Power and FDR (with standard errors) for each procedure on one cell."""
    specs = [_coerce_spec(p) for p in procedures]
    masks, truth = study_masks(config, specs, workers=workers, chunk_size=chunk_size)
    return [
        _mask_stats(mask, truth, spec.id) for mask, spec in zip(masks, specs)
    ]


# ---------------------------------------------------------------------------
# compound e-value audit


@dataclass(frozen=True)
class AuditReport:
    """Empirical check of the compound property: mean null sum of E vs K."""

    constructor: str
    K: int
    n_nulls: int
    reps: int
    mean_null_sum: float
    se: float
    bound: float
    passed: bool

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (
            f"{verdict} {self.constructor}: mean null e-sum {self.mean_null_sum:.4f} "
            f"(SE {self.se:.4f}) vs bound {self.bound:.4f} "
            f"[K={self.K}, nulls={self.n_nulls}, reps={self.reps}]"
        )


def _ramp_weights(K: int) -> np.ndarray:
    w = np.arange(1, K + 1, dtype=float)
    return w * (K / w.sum())


def audit_compound(
    constructor,
    config: ScenarioConfig,
    reps: int | None = None,
    weights: np.ndarray | None = None,
    chunk_size: int = 20_000,
    bound: float | None = None,
) -> AuditReport:
    """Estimate the expected sum of e-values over true nulls.

    ``constructor`` is a procedure id, a ProcedureSpec, or a callable
    mapping a (R, K) p-value matrix to a (R, K) e-value matrix (the latter
    supports negative controls).  Under the scenario's null/alternative
    split the report passes when the mean null sum is at most
    ``bound`` (default K) plus three standard errors.

    P-value-only constructors under the global null are fed iid uniforms
    directly; anything touching replicate summaries gets full t-test data.
    Weighted constructors default to a fixed ramp w_k proportional to k
    unless explicit weights are supplied.
    """
    reps = config.reps if reps is None else int(reps)
    K = config.K
    truth = config.truth_mask()
    nulls = ~truth

    if callable(constructor) and not isinstance(constructor, (str, ProcedureSpec)):
        spec = None
        label = getattr(constructor, "__name__", "custom")
        needs_summary = needs_weights = False
    else:
        spec = _coerce_spec(constructor)
        proc = resolve(spec.id)
        label = spec.id
        needs_summary = proc.needs_summary
        needs_weights = proc.needs_weights

    use_tdata = needs_summary or config.K1 > 0
    if needs_weights and weights is None and not needs_summary:
        weights = _ramp_weights(K)
    wants_beta = spec is not None and _wants_beta([spec])

    rng = _rng_for(config.seed, _cell_key(config), 0, _PURPOSE_BULK)
    mu = np.where(truth, config.mu_value(), 0.0)
    null_sums = []
    done = 0
    while done < reps:
        m = min(chunk_size, reps - done)
        if use_tdata:
            y = mu[:, None] + np.sqrt(config.sigma2) * rng.standard_normal(
                (m, K, config.n)
            )
            summ = summarize(y)
            pvals = summ.pvalues
            w = (
                np.broadcast_to(weights, (m, K))
                if weights is not None
                else normalized_weights(summ.s2, nonneg_shape_from_id(config.psi_id))
            )
        else:
            summ = None
            pvals = rng.uniform(size=(m, K))
            w = np.broadcast_to(weights, (m, K)) if weights is not None else None
        beta = beta_scaled_sample(config.n, rng, size=(m, K)) if wants_beta else None
        if spec is None:
            evals = np.asarray(constructor(pvals), dtype=float)
        else:
            ctx = ProcedureContext(
                pvalues=pvals,
                alpha=config.alpha,
                weights=w,
                summary=summ,
                beta_draws=beta,
            )
            evals = build_evalues(spec, ctx)
        null_sums.append(evals[:, nulls].sum(axis=1))
        done += m
    sums = np.concatenate(null_sums)
    mean = float(sums.mean())
    se = float(sums.std(ddof=1) / np.sqrt(reps)) if reps > 1 else 0.0
    bound = float(K if bound is None else bound)
    return AuditReport(
        constructor=label,
        K=K,
        n_nulls=int(nulls.sum()),
        reps=reps,
        mean_null_sum=mean,
        se=se,
        bound=bound,
        passed=mean <= bound + 3.0 * se,
    )


# ---------------------------------------------------------------------------
# two-hypothesis rejection-region grids


@dataclass(frozen=True)
class RegionGrid:
    """Discovery counts of a K=2 procedure over the unit square.

    ``counts[i, j]`` is the number of discoveries at p-values
    (centers[i], centers[j]); cell centers sit at (i + 1/2) * resolution.
    """

    procedure: str
    alpha: float
    resolution: float
    centers: np.ndarray
    counts: np.ndarray

    def count_at(self, p1: float, p2: float) -> int:
        i = min(int(p1 / self.resolution), len(self.centers) - 1)
        j = min(int(p2 / self.resolution), len(self.centers) - 1)
        return int(self.counts[i, j])

    def rows(self):
        for i, a in enumerate(self.centers):
            for j, b in enumerate(self.centers):
                yield float(a), float(b), int(self.counts[i, j])


def region_grid(procedure, alpha: float, resolution: float) -> RegionGrid:
    """Evaluate a p-value-based procedure at every grid cell center (K=2)."""
    spec = _coerce_spec(procedure)
    proc = resolve(spec.id)
    if proc.needs_summary or proc.needs_weights:
        raise ValidationError(
            f"{spec.id} needs side information; region grids support "
            "p-value-only procedures"
        )
    g_float = 1.0 / float(resolution)
    g = round(g_float)
    if g < 1 or abs(g * resolution - 1.0) > 1e-9:
        raise ValidationError(
            f"resolution {resolution!r} must divide 1 evenly"
        )
    centers = (np.arange(g) + 0.5) * resolution
    p1, p2 = np.meshgrid(centers, centers, indexing="ij")
    pvals = np.column_stack([p1.ravel(), p2.ravel()])
    ctx = ProcedureContext(pvalues=pvals, alpha=float(alpha))
    evals = build_evalues(spec, ctx)
    counts = ep_bh_mask(pvals, evals, float(alpha)).sum(axis=1).reshape(g, g)
    return RegionGrid(
        procedure=spec.id,
        alpha=float(alpha),
        resolution=float(resolution),
        centers=centers,
        counts=counts,
    )


# ---------------------------------------------------------------------------
# study grids (the simulation-design facets)


_TAU_PROCEDURES = {
    "storey",
    "storey+",
    "w-max-storey",
    "w-loo-storey",
    "w-loo-storey+",
}


def _spec_with_defaults(spec: ProcedureSpec, study: "StudyConfig") -> ProcedureSpec:
    params = dict(spec.params)
    pid = spec.id
    if pid in _TAU_PROCEDURES or pid == "loo-var/storey+":
        params.setdefault("tau", study.tau)
    if pid in ("loo-var+", "loo-var/storey+"):
        params.setdefault("psi", study.psi_id)
        params.setdefault("mode", study.loo_var_mode)
        params.setdefault("nodes", study.nodes)
    return ProcedureSpec(pid, params)


@dataclass(frozen=True)
class StudyConfig:
    """A grid of scenario cells sharing K, analysis level, and procedures."""

    K: int = 50
    n_values: tuple = (2, 5, 20)
    K1_values: tuple = (2, 25)
    xi_values: tuple = tuple(np.linspace(2.0, 8.0, 7))
    sigma2: float = 1.0
    alpha: float = 0.1
    tau: float = 0.5
    psi_id: str = "u4"
    procedures: tuple = (
        ProcedureSpec("bh"),
        ProcedureSpec("w-bh"),
        ProcedureSpec("w-max-storey"),
        ProcedureSpec("w-loo-storey"),
        ProcedureSpec("w-loo-storey+"),
        ProcedureSpec("loo-var+"),
        ProcedureSpec("loo-var/storey+"),
    )
    reps: int = 2000
    seed: int = 0
    mu_mapping: str = "tstat"
    loo_var_mode: str = "derandomized"
    nodes: int = 64

    def resolved_procedures(self) -> list[ProcedureSpec]:
        return [_spec_with_defaults(_coerce_spec(p), self) for p in self.procedures]

    def cells(self):
        """Yield (scenario_id, ScenarioConfig) over the (n, K1, xi) grid."""
        combos = itertools.product(self.n_values, self.K1_values, self.xi_values)
        for idx, (n, k1, xi) in enumerate(combos):
            if k1 > self.K:
                raise ValidationError(f"K1={k1} exceeds K={self.K}")
            yield (
                f"s{idx:03d}",
                ScenarioConfig(
                    K=self.K,
                    n=int(n),
                    K1=int(k1),
                    xi=float(xi),
                    sigma2=self.sigma2,
                    alpha=self.alpha,
                    tau=self.tau,
                    psi_id=self.psi_id,
                    reps=self.reps,
                    seed=self.seed,
                    mu_mapping=self.mu_mapping,
                ),
            )


def default_study(full_scale: bool = False, **overrides) -> StudyConfig:
    """Desk-scale defaults (K=50, reps=2000); ``full_scale`` restores the
    original design (K=200, K1 in {2,5,100}, 10000 replications)."""
    base = dict(
        K=200 if full_scale else 50,
        K1_values=(2, 5, 100) if full_scale else (2, 25),
        reps=10_000 if full_scale else 2000,
    )
    base.update(overrides)
    return StudyConfig(**base)


def run_grid(study: StudyConfig, workers: int = 1, chunk_size: int = 512):
    """Run every cell of the study; returns one result row dict per
    (scenario, procedure), with the columns in RESULT_COLUMNS."""
    specs = study.resolved_procedures()
    rows = []
    for scenario_id, cell in study.cells():
        results = run_study(cell, specs, workers=workers, chunk_size=chunk_size)
        for res in results:
            rows.append(
                {
                    "scenario_id": scenario_id,
                    "procedure": res.procedure,
                    "n": cell.n,
                    "K1": cell.K1,
                    "xi": cell.xi,
                    "power": res.power,
                    "power_se": res.power_se,
                    "fdr": res.fdr,
                    "fdr_se": res.fdr_se,
                    "reps": res.reps,
                }
            )
    return rows


# ---------------------------------------------------------------------------
# flat key = value study configs


_LIST_FIELDS = {"n": "n_values", "K1": "K1_values", "xi": "xi_values"}
_SCALAR_FIELDS = {
    "K": int,
    "sigma2": float,
    "alpha": float,
    "tau": float,
    "psi": str,
    "reps": int,
    "seed": int,
    "mu_mapping": str,
    "loo_var_mode": str,
    "nodes": int,
}


def _split_top_level(text: str) -> list[str]:
    """Split on commas that are not inside parentheses."""
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if cur:
        parts.append("".join(cur))
    return [p.strip() for p in parts if p.strip()]


def _parse_procedure_token(token: str) -> ProcedureSpec:
    token = token.strip()
    if "(" in token:
        if not token.endswith(")"):
            raise ValidationError(f"procedures: malformed entry {token!r}")
        pid, inner = token[:-1].split("(", 1)
        params = {}
        for kv in inner.split(","):
            kv = kv.strip()
            if not kv:
                continue
            if "=" not in kv:
                raise ValidationError(
                    f"procedures: expected key=value inside {token!r}"
                )
            key, value = kv.split("=", 1)
            params[key.strip()] = value.strip()
        return ProcedureSpec(pid.strip(), params)
    return ProcedureSpec(token)


def _parse_xi(value: str) -> tuple:
    value = value.strip()
    if ":" in value:
        pieces = value.split(":")
        if len(pieces) != 3:
            raise ValidationError(f"xi: expected start:stop:count, got {value!r}")
        start, stop, count = float(pieces[0]), float(pieces[1]), int(pieces[2])
        if count < 1:
            raise ValidationError("xi: count must be at least 1")
        return tuple(np.linspace(start, stop, count))
    return tuple(float(v) for v in _split_top_level(value))


def parse_study_config(text: str) -> StudyConfig:
    """Parse the flat ``key = value`` study schema (# starts a comment).

    Fields: K, n, K1, xi (comma list or start:stop:count), sigma2, alpha,
    tau, psi, procedures (comma list; per-procedure parameters in
    parentheses, e.g. ``quant(L=10)``), reps, seed, mu_mapping,
    loo_var_mode, nodes.
    """
    overrides: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "xi":
            overrides["xi_values"] = _parse_xi(value)
        elif key in _LIST_FIELDS:
            try:
                overrides[_LIST_FIELDS[key]] = tuple(
                    int(v) for v in _split_top_level(value)
                )
            except ValueError:
                raise ValidationError(
                    f"config field {key!r}: expected integers, got {value!r}"
                ) from None
        elif key == "procedures":
            overrides["procedures"] = tuple(
                _parse_procedure_token(tok) for tok in _split_top_level(value)
            )
        elif key in _SCALAR_FIELDS:
            cast = _SCALAR_FIELDS[key]
            target = "psi_id" if key == "psi" else key
            try:
                overrides[target] = cast(value)
            except ValueError:
                raise ValidationError(
                    f"config field {key!r}: cannot parse {value!r}"
                ) from None
        else:
            raise ValidationError(f"unknown config field {key!r} (line {lineno})")
    study = StudyConfig(**overrides)
    for spec in study.resolved_procedures():
        resolve(spec.id)
    return study
