"""String-addressable procedure registry.

Every compound e-value construction in the package can be named by an
identifier plus a flat parameter map, so the CLI and the simulation harness
can instantiate procedures from text.  A builder receives a
ProcedureContext holding stacked p-values of shape (R, K) and whatever side
information the procedure needs (weights, replicate summaries, multiplier
draws) and returns the matching (R, K) e-value matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import estimators as est
from . import weighted as wtd
from .errors import ValidationError
from .shapes import nonneg_shape_from_id, unit_shape_from_id
from .ttest import TTestSummary, loo_var_plus, loo_var_plus_given

__all__ = [
    "ProcedureSpec",
    "ProcedureContext",
    "Procedure",
    "registered_ids",
    "resolve",
    "build_evalues",
    "parse_param_value",
]


@dataclass(frozen=True)
class ProcedureSpec:
    """A procedure identifier plus its parameter map."""

    id: str
    params: dict = field(default_factory=dict)

    def normalized(self) -> "ProcedureSpec":
        return ProcedureSpec(self.id.strip().lower(), dict(self.params))


@dataclass
class ProcedureContext:
    """Inputs a builder may draw on; p-values are always present, (R, K)."""

    pvalues: np.ndarray
    alpha: float
    weights: np.ndarray | None = None
    summary: TTestSummary | None = None
    beta_draws: np.ndarray | None = None


@dataclass(frozen=True)
class Procedure:
    id: str
    build: Callable[[dict, ProcedureContext], np.ndarray]
    allowed_params: frozenset | None  # None: builder validates its own params
    needs_weights: bool = False
    needs_summary: bool = False


def parse_param_value(raw):
    """Coerce a CLI ``key=value`` string to bool/int/float where possible."""
    if not isinstance(raw, str):
        return raw
    low = raw.strip().lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            continue
    return raw


def _take(params, key, cast=float, default=None, required=False):
    if key not in params:
        if required:
            raise ValidationError(f"missing required parameter {key!r}")
        return default
    value = parse_param_value(params[key])
    try:
        return cast(value)
    except (TypeError, ValueError):
        raise ValidationError(f"parameter {key!r} has invalid value {params[key]!r}") from None


def _unit_shape(params):
    spec = _take(params, "psi", str, default="u")
    shape = unit_shape_from_id(spec)
    nu = _take(params, "nu", float, default=None)
    if nu is not None:
        shape = type(shape)(psi=shape.psi, nu=nu, name=shape.name)
    return shape


def _build_bh(params, ctx):
    return np.ones_like(ctx.pvalues)


def _build_w_bh(params, ctx):
    return np.broadcast_to(ctx.weights, ctx.pvalues.shape).astype(float)


def _build_storey(params, ctx):
    return est.storey(
        ctx.pvalues,
        tau=_take(params, "tau", float, 0.5),
        c=_take(params, "c", float, 1.0),
    )


def _build_storey_plus(params, ctx):
    return est.storey_plus(ctx.pvalues, tau=_take(params, "tau", float, 0.5))


def _build_mpc(params, ctx):
    return est.mpc(ctx.pvalues)


def _build_dm(params, ctx):
    return est.dm(ctx.pvalues, _unit_shape(params))


def _build_dm_plus(params, ctx):
    return est.dm_plus(ctx.pvalues, _unit_shape(params))


def _build_quant(params, ctx):
    return est.quant(ctx.pvalues, L=_take(params, "L", int, required=True))


def _build_quant_plus(params, ctx):
    L = _take(params, "L", int, required=True)
    return est.loo_lift(est.quant_pi0(L), ctx.pvalues)


def _build_ibhlog(params, ctx):
    return est.ibhlog(ctx.pvalues)


def _build_ibhlog_plus(params, ctx):
    return est.loo_lift(est.ibhlog_pi0(), ctx.pvalues)


def _min_storey_args(params):
    return dict(
        eps=_take(params, "eps", float, required=True),
        pi_lower=_take(params, "pi_lower", float, required=True),
        C=_take(params, "C", float, required=True),
    )


def _build_min_storey(params, ctx):
    return est.min_storey(ctx.pvalues, **_min_storey_args(params))


def _build_min_storey_plus(params, ctx):
    return est.loo_lift(est.min_storey_pi0(**_min_storey_args(params)), ctx.pvalues)


def _build_mabh(params, ctx):
    return est.mabh(ctx.pvalues, alpha=ctx.alpha)


def _build_tst(params, ctx):
    return est.tst(ctx.pvalues, alpha=ctx.alpha, plus=False)


def _build_tst_plus(params, ctx):
    return est.tst(ctx.pvalues, alpha=ctx.alpha, plus=True)


def _build_combine(params, ctx):
    lam = _take(params, "lambda", float, 0.5)
    sub = {"a": {}, "b": {}}
    ids = {}
    for key, value in params.items():
        if key in ("a", "b"):
            ids[key] = str(value)
        elif key.startswith(("a.", "b.")):
            sub[key[0]][key[2:]] = value
        elif key != "lambda":
            raise ValidationError(f"combine: unknown parameter {key!r}")
    for side in ("a", "b"):
        if side not in ids:
            raise ValidationError(f"combine requires parameter {side!r} (a procedure id)")
    e_a = build_evalues(ProcedureSpec(ids["a"], sub["a"]), ctx)
    e_b = build_evalues(ProcedureSpec(ids["b"], sub["b"]), ctx)
    return est.combine_evalues(e_a, e_b, lam)


def _build_w_max_storey(params, ctx):
    return wtd.w_max_storey(ctx.pvalues, ctx.weights, tau=_take(params, "tau", float, 0.5))


def _build_w_loo_storey(params, ctx):
    return wtd.w_loo_storey_plus(
        ctx.pvalues, ctx.weights, tau=_take(params, "tau", float, 0.5), censor=True
    )


def _build_w_loo_storey_plus(params, ctx):
    return wtd.w_loo_storey_plus(
        ctx.pvalues, ctx.weights, tau=_take(params, "tau", float, 0.5), censor=False
    )


def _build_w_dm_plus(params, ctx):
    return wtd.w_dm_plus(ctx.pvalues, ctx.weights, _unit_shape(params))


def _build_loo_var_plus(params, ctx):
    psi = nonneg_shape_from_id(_take(params, "psi", str, "u4"))
    mode = _take(params, "mode", str, "derandomized")
    if mode == "randomized":
        if ctx.beta_draws is None:
            raise ValidationError(
                "randomized loo-var+ requires multiplier draws; supply a seed"
            )
        return loo_var_plus_given(ctx.summary, psi, ctx.beta_draws)
    return loo_var_plus(
        ctx.summary, psi, mode=mode, nodes=_take(params, "nodes", int, 64)
    )


def _build_loo_var_storey_plus(params, ctx):
    lam = _take(params, "lambda", float, 0.5)
    e_var = _build_loo_var_plus(
        {k: v for k, v in params.items() if k in ("psi", "mode", "nodes")}, ctx
    )
    e_storey = _build_w_loo_storey_plus(
        {k: v for k, v in params.items() if k == "tau"}, ctx
    )
    return est.combine_evalues(e_var, e_storey, lam)


_REGISTRY: dict[str, Procedure] = {}


def _register(proc_id, build, allowed, needs_weights=False, needs_summary=False):
    _REGISTRY[proc_id] = Procedure(
        id=proc_id,
        build=build,
        allowed_params=None if allowed is None else frozenset(allowed),
        needs_weights=needs_weights,
        needs_summary=needs_summary,
    )


_register("bh", _build_bh, [])
_register("w-bh", _build_w_bh, [], needs_weights=True)
_register("storey", _build_storey, ["tau", "c"])
_register("storey+", _build_storey_plus, ["tau"])
_register("mpc", _build_mpc, [])
_register("dm", _build_dm, ["psi", "nu"])
_register("dm+", _build_dm_plus, ["psi", "nu"])
_register("quant", _build_quant, ["L"])
_register("quant+", _build_quant_plus, ["L"])
_register("ibhlog", _build_ibhlog, [])
_register("ibhlog+", _build_ibhlog_plus, [])
_register("min-storey", _build_min_storey, ["eps", "pi_lower", "C"])
_register("min-storey+", _build_min_storey_plus, ["eps", "pi_lower", "C"])
_register("mabh", _build_mabh, [])
_register("tst", _build_tst, [])
_register("tst+", _build_tst_plus, [])
_register("combine", _build_combine, None)  # validated inside the builder
_register("w-max-storey", _build_w_max_storey, ["tau"], needs_weights=True)
_register("w-loo-storey", _build_w_loo_storey, ["tau"], needs_weights=True)
_register("w-loo-storey+", _build_w_loo_storey_plus, ["tau"], needs_weights=True)
_register("w-dm+", _build_w_dm_plus, ["psi", "nu"], needs_weights=True)
_register("loo-var+", _build_loo_var_plus, ["psi", "mode", "nodes"], needs_summary=True)
_register(
    "loo-var/storey+",
    _build_loo_var_storey_plus,
    ["psi", "mode", "nodes", "tau", "lambda"],
    needs_weights=True,
    needs_summary=True,
)


def registered_ids() -> list[str]:
    return sorted(_REGISTRY)


def resolve(proc_id: str) -> Procedure:
    key = proc_id.strip().lower()
    if key not in _REGISTRY:
        raise ValidationError(
            f"unknown procedure {proc_id!r}; registered ids: {', '.join(registered_ids())}"
        )
    return _REGISTRY[key]


def build_evalues(spec: ProcedureSpec, ctx: ProcedureContext) -> np.ndarray:
    """Instantiate the named procedure's compound e-values on the context."""
    spec = spec.normalized()
    proc = resolve(spec.id)
    if proc.allowed_params is not None:
        unknown = set(spec.params) - set(proc.allowed_params)
        if unknown:
            raise ValidationError(
                f"{spec.id}: unknown parameter(s) {sorted(unknown)}; "
                f"allowed: {sorted(proc.allowed_params)}"
            )
    if proc.needs_weights and ctx.weights is None:
        raise ValidationError(f"{spec.id} requires hypothesis weights")
    if proc.needs_summary and ctx.summary is None:
        raise ValidationError(f"{spec.id} requires replicate (t-test) data")
    return proc.build(spec.params, ctx)
