"""Numeric reference for the domain-guided fusion of global/focal features.

Three gated cross-attention blocks arranged as: global and focal token
streams each attend to a linearly projected domain feature stream in
parallel, then the refreshed global stream refines the focal stream. The
result is the concatenation of the enhanced global and refined focal tokens.

Each block is residual with tanh-gated attention and feed-forward branches
(gates start at 0, making a fresh block the identity), pre-norm placement,
softmax over context tokens scaled by 1/sqrt(d_model/heads), and no
positional encodings, so reordering context tokens cannot change outputs.

Reference-scale only: float64, single-threaded, exercised through the
bundled finite-difference gradient check. The math is written once against
a primitive-op interface and interpreted twice: over autodiff nodes for
analytic gradients and over raw arrays for fast re-evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from enum import Enum
from typing import Iterator, Optional

import numpy as np

from . import autodiff as ad
from .autodiff import NP, Var
from .errors import NumericError, ShapeError


class FeatureRole(Enum):
    GLOBAL = "global"
    FOCAL = "focal"
    DOMAIN = "domain"


@dataclass(frozen=True)
class FeatureMatrix:
    """tokens x d_model feature block."""

    data: np.ndarray
    role: FeatureRole

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise ShapeError(f"{self.role.value}: expected 2-D tokens x dim, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise NumericError(f"{self.role.value}: non-finite entries")
        object.__setattr__(self, "data", arr)

    @property
    def n_tokens(self) -> int:
        return self.data.shape[0]

    @property
    def d_model(self) -> int:
        return self.data.shape[1]


@dataclass
class GcaParams:
    """One gated cross-attention block."""

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray
    ln_x_scale: np.ndarray
    ln_x_shift: np.ndarray
    ln_ctx_scale: np.ndarray
    ln_ctx_shift: np.ndarray
    ln_ffn_scale: np.ndarray
    ln_ffn_shift: np.ndarray
    w_ffn_in: np.ndarray
    w_ffn_out: np.ndarray
    g_attn: np.ndarray
    g_ffn: np.ndarray
    heads: int = 1

    def __post_init__(self):
        d = self.w_q.shape[0]
        if d % self.heads != 0:
            raise ShapeError(f"d_model {d} not divisible by {self.heads} heads")

    @property
    def d_model(self) -> int:
        return self.w_q.shape[0]

    def named_arrays(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for f in fields(self):
            if f.name == "heads":
                continue
            yield f"{prefix}{f.name}", getattr(self, f.name)

    @classmethod
    def init(
        cls,
        d_model: int,
        heads: int = 2,
        d_ff: Optional[int] = None,
        rng: Optional[np.random.Generator] = None,
        gate: float = 0.0,
    ) -> "GcaParams":
        """Random projections, unit layer norms, gates at `gate` (0 = identity block)."""
        rng = rng or np.random.default_rng(0)
        d_ff = d_ff if d_ff is not None else 4 * d_model
        w = lambda rows, cols: rng.standard_normal((rows, cols)) / math.sqrt(rows)
        return cls(
            w_q=w(d_model, d_model),
            w_k=w(d_model, d_model),
            w_v=w(d_model, d_model),
            w_o=w(d_model, d_model),
            ln_x_scale=np.ones(d_model),
            ln_x_shift=np.zeros(d_model),
            ln_ctx_scale=np.ones(d_model),
            ln_ctx_shift=np.zeros(d_model),
            ln_ffn_scale=np.ones(d_model),
            ln_ffn_shift=np.zeros(d_model),
            w_ffn_in=w(d_model, d_ff),
            w_ffn_out=w(d_ff, d_model),
            g_attn=np.asarray(float(gate)),
            g_ffn=np.asarray(float(gate)),
            heads=heads,
        )


@dataclass
class DfmParams:
    domain_proj: np.ndarray
    gca_global: GcaParams
    gca_focal: GcaParams
    gca_refine: GcaParams

    def named_arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        yield "domain_proj", self.domain_proj
        yield from self.gca_global.named_arrays("gca_global.")
        yield from self.gca_focal.named_arrays("gca_focal.")
        yield from self.gca_refine.named_arrays("gca_refine.")

    @classmethod
    def init(
        cls,
        d_model: int,
        d_domain: int,
        heads: int = 2,
        d_ff: Optional[int] = None,
        rng: Optional[np.random.Generator] = None,
        gate: float = 0.0,
    ) -> "DfmParams":
        rng = rng or np.random.default_rng(0)
        return cls(
            domain_proj=rng.standard_normal((d_domain, d_model)) / math.sqrt(d_domain),
            gca_global=GcaParams.init(d_model, heads, d_ff, rng, gate),
            gca_focal=GcaParams.init(d_model, heads, d_ff, rng, gate),
            gca_refine=GcaParams.init(d_model, heads, d_ff, rng, gate),
        )


# --- core math, written once over a primitive-op interface -------------------


def _split_heads(ops, v, n: int, d: int, heads: int):
    return ops.transpose(ops.reshape(v, (n, heads, d // heads)), (1, 0, 2))


def _gca_math(ops, x, ctx, n: int, m: int, d: int, pv: dict, heads: int):
    """Gated cross-attention; pv maps local param names to ops-level nodes."""
    xn = ops.layer_norm(x, pv["ln_x_scale"], pv["ln_x_shift"])
    cn = ops.layer_norm(ctx, pv["ln_ctx_scale"], pv["ln_ctx_shift"])
    q = _split_heads(ops, ops.matmul(xn, pv["w_q"]), n, d, heads)
    k = _split_heads(ops, ops.matmul(cn, pv["w_k"]), m, d, heads)
    v = _split_heads(ops, ops.matmul(cn, pv["w_v"]), m, d, heads)
    scores = ops.scale(ops.matmul(q, ops.transpose(k, (0, 2, 1))), 1.0 / math.sqrt(d / heads))
    attended = ops.matmul(ops.softmax_last(scores), v)
    merged = ops.reshape(ops.transpose(attended, (1, 0, 2)), (n, d))
    mhca = ops.matmul(merged, pv["w_o"])
    h = ops.add(x, ops.mul(ops.tanh(pv["g_attn"]), mhca))
    hn = ops.layer_norm(h, pv["ln_ffn_scale"], pv["ln_ffn_shift"])
    ffn = ops.matmul(ops.gelu(ops.matmul(hn, pv["w_ffn_in"])), pv["w_ffn_out"])
    return ops.add(h, ops.mul(ops.tanh(pv["g_ffn"]), ffn))


def _check_same_d(x: FeatureMatrix, ctx: FeatureMatrix) -> None:
    if x.d_model != ctx.d_model:
        raise ShapeError(f"d_model mismatch: {x.d_model} vs {ctx.d_model}")


def _np_params(params: GcaParams) -> dict[str, np.ndarray]:
    return dict(params.named_arrays())


def gca_forward(x: FeatureMatrix, context: FeatureMatrix, p: GcaParams) -> FeatureMatrix:
    """One gated cross-attention block; output keeps x's token count and role."""
    _check_same_d(x, context)
    if x.d_model != p.d_model:
        raise ShapeError(f"token dim {x.d_model} vs params dim {p.d_model}")
    out = _gca_math(
        NP, x.data, context.data, x.n_tokens, context.n_tokens, x.d_model, _np_params(p), p.heads
    )
    return FeatureMatrix(out, x.role)


def gca_attention(x: FeatureMatrix, context: FeatureMatrix, p: GcaParams) -> np.ndarray:
    """Attention probabilities (heads, x_tokens, ctx_tokens); rows sum to 1."""
    _check_same_d(x, context)
    pv = _np_params(p)
    xn = NP.layer_norm(x.data, pv["ln_x_scale"], pv["ln_x_shift"])
    cn = NP.layer_norm(context.data, pv["ln_ctx_scale"], pv["ln_ctx_shift"])
    q = _split_heads(NP, NP.matmul(xn, pv["w_q"]), x.n_tokens, x.d_model, p.heads)
    k = _split_heads(NP, NP.matmul(cn, pv["w_k"]), context.n_tokens, x.d_model, p.heads)
    scores = NP.scale(NP.matmul(q, NP.transpose(k, (0, 2, 1))), 1.0 / math.sqrt(x.d_model / p.heads))
    return NP.softmax_last(scores)


def _dfm_math(ops, g, f, r, proj, blocks, heads, shapes):
    """shapes = (n_global, n_focal, n_domain, d_model)."""
    ng, nf, nr, d = shapes
    dom = ops.matmul(r, proj)
    g2 = _gca_math(ops, g, dom, ng, nr, d, blocks[0], heads[0])
    f2 = _gca_math(ops, f, dom, nf, nr, d, blocks[1], heads[1])
    f3 = _gca_math(ops, f2, g2, nf, ng, d, blocks[2], heads[2])
    return ops.concat_rows(g2, f3)


def _validate_dfm_shapes(G: FeatureMatrix, F: FeatureMatrix, R_feats: FeatureMatrix, p: DfmParams) -> None:
    d_model = p.gca_global.d_model
    if G.d_model != d_model or F.d_model != d_model:
        raise ShapeError(
            f"global/focal dims ({G.d_model}, {F.d_model}) must equal d_model {d_model}"
        )
    if R_feats.d_model != p.domain_proj.shape[0]:
        raise ShapeError(
            f"domain features have {R_feats.d_model} dims, projection expects {p.domain_proj.shape[0]}"
        )
    if p.domain_proj.shape[1] != d_model:
        raise ShapeError("domain projection output dim must equal d_model")


def dfm_forward(G: FeatureMatrix, F: FeatureMatrix, R_feats: FeatureMatrix, p: DfmParams) -> FeatureMatrix:
    """Full fusion pass; output stacks enhanced global then refined focal tokens."""
    _validate_dfm_shapes(G, F, R_feats, p)
    out = _dfm_math(
        NP,
        G.data,
        F.data,
        R_feats.data,
        p.domain_proj,
        [_np_params(p.gca_global), _np_params(p.gca_focal), _np_params(p.gca_refine)],
        (p.gca_global.heads, p.gca_focal.heads, p.gca_refine.heads),
        (G.n_tokens, F.n_tokens, R_feats.n_tokens, p.gca_global.d_model),
    )
    if not np.isfinite(out).all():
        raise NumericError("non-finite values in fusion output")
    return FeatureMatrix(out, FeatureRole.GLOBAL)


def stack_domain_layers(layers: list[np.ndarray]) -> FeatureMatrix:
    """Concatenate per-layer domain token matrices along the token axis."""
    if not layers:
        raise ShapeError("need at least one domain layer")
    return FeatureMatrix(
        np.concatenate([np.asarray(l, dtype=np.float64) for l in layers], axis=0),
        FeatureRole.DOMAIN,
    )


def grad_check(
    G: FeatureMatrix,
    F: FeatureMatrix,
    R_feats: FeatureMatrix,
    p: DfmParams,
    eps: float = 1e-5,
    loss_weights: Optional[np.ndarray] = None,
    seed: int = 0,
) -> float:
    """Max relative error between reverse-mode and central-difference grads.

    The scalar loss is a fixed weighted sum of the fusion output (weights
    random by default), differentiated with respect to every parameter entry
    and every input feature entry. Relative error uses the guarded
    denominator max(|analytic|, |numeric|, 1e-8).

    Finite differences reuse the unperturbed values of stages upstream of
    the perturbed entry; that memoization is exact, not an approximation.
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")
    _validate_dfm_shapes(G, F, R_feats, p)
    n_out = G.n_tokens + F.n_tokens
    d_model = p.gca_global.d_model
    shapes = (G.n_tokens, F.n_tokens, R_feats.n_tokens, d_model)
    heads = (p.gca_global.heads, p.gca_focal.heads, p.gca_refine.heads)
    if loss_weights is None:
        loss_weights = np.random.default_rng(seed).standard_normal((n_out, d_model))
    w = np.asarray(loss_weights, dtype=np.float64)
    if w.shape != (n_out, d_model):
        raise ShapeError(f"loss weights must be {(n_out, d_model)}, got {w.shape}")
    w_g, w_f = w[: G.n_tokens], w[G.n_tokens :]

    arrays: dict[str, np.ndarray] = {
        "input.G": G.data.copy(),
        "input.F": F.data.copy(),
        "input.R": R_feats.data.copy(),
    }
    arrays.update((name, arr.copy()) for name, arr in p.named_arrays())
    param_keys = [name for name, _ in p.gca_global.named_arrays()]
    prefixes = ("gca_global.", "gca_focal.", "gca_refine.")

    # Analytic pass over the autodiff graph.
    handles = {name: Var(arr) for name, arr in arrays.items()}
    blocks_v = [{k: handles[pre + k] for k in param_keys} for pre in prefixes]
    out_v = _dfm_math(
        ad, handles["input.G"], handles["input.F"], handles["input.R"],
        handles["domain_proj"], blocks_v, heads, shapes,
    )
    loss_v = ad.weighted_sum(out_v, w)
    if not np.isfinite(loss_v.value):
        raise NumericError("non-finite loss in gradient check")
    ad.backward(loss_v)

    # Value-only stages over the same arrays (perturbed in place below).
    blocks_n = [{k: arrays[pre + k] for k in param_keys} for pre in prefixes]

    def stage_domain():
        return NP.matmul(arrays["input.R"], arrays["domain_proj"])

    def stage_global(dom):
        return _gca_math(NP, arrays["input.G"], dom, shapes[0], shapes[2], d_model, blocks_n[0], heads[0])

    def stage_focal(dom):
        return _gca_math(NP, arrays["input.F"], dom, shapes[1], shapes[2], d_model, blocks_n[1], heads[1])

    def stage_refine(f2, g2):
        return _gca_math(NP, f2, g2, shapes[1], shapes[0], d_model, blocks_n[2], heads[2])

    def loss_from(g2, f3) -> float:
        return float((g2 * w_g).sum() + (f3 * w_f).sum())

    dom0 = stage_domain()
    g20 = stage_global(dom0)
    f20 = stage_focal(dom0)

    # Sanity: value path and graph path must agree at the base point.
    base = loss_from(g20, stage_refine(f20, g20))
    if abs(base - float(loss_v.value)) > 1e-9 * max(1.0, abs(base)):
        raise NumericError("value/graph forward paths disagree")

    def loss_refine() -> float:
        return loss_from(g20, stage_refine(f20, g20))

    def loss_global() -> float:
        g2 = stage_global(dom0)
        return loss_from(g2, stage_refine(f20, g2))

    def loss_focal() -> float:
        return loss_from(g20, stage_refine(stage_focal(dom0), g20))

    def loss_full() -> float:
        dom = stage_domain()
        g2 = stage_global(dom)
        return loss_from(g2, stage_refine(stage_focal(dom), g2))

    def group_loss(name: str):
        if name.startswith("gca_refine."):
            return loss_refine
        if name.startswith("gca_global.") or name == "input.G":
            return loss_global
        if name.startswith("gca_focal.") or name == "input.F":
            return loss_focal
        return loss_full

    def central_diff(flat: np.ndarray, idx: int, loss_fn, step: float) -> float:
        original = flat[idx]
        flat[idx] = original + step
        f_plus = loss_fn()
        flat[idx] = original - step
        f_minus = loss_fn()
        flat[idx] = original
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericError("non-finite loss during finite differences")
        return (f_plus - f_minus) / (2.0 * step)

    def rel_err(a: float, n: float) -> float:
        return abs(a - n) / max(abs(a), abs(n), 1e-8)

    # Central differences carry step-dependent truncation/roundoff noise; when
    # an entry's error is dominated by that noise (tiny true gradient), retry
    # at other steps and keep the best-conditioned estimate.
    refine_steps = (0.3, 3.0, 10.0)

    max_rel = 0.0
    for name, arr in arrays.items():
        analytic = handles[name].grad
        if analytic is None or not np.isfinite(analytic).all():
            raise NumericError(f"non-finite analytic gradient for {name}")
        loss_fn = group_loss(name)
        flat = arr.reshape(-1)
        analytic_flat = analytic.reshape(-1)
        for idx in range(flat.size):
            a = analytic_flat[idx]
            rel = rel_err(a, central_diff(flat, idx, loss_fn, eps))
            if rel > 1e-6:
                for k in refine_steps:
                    rel = min(rel, rel_err(a, central_diff(flat, idx, loss_fn, eps * k)))
                    if rel <= 1e-6:
                        break
            max_rel = max(max_rel, rel)
    return max_rel
