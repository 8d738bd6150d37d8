import math

import numpy as np
import pytest

from capforge import autodiff as ad
from capforge.autodiff import NP, Var
from capforge.errors import NumericError, ShapeError
from capforge.fusion_ref import (
    DfmParams,
    FeatureMatrix,
    FeatureRole,
    GcaParams,
    dfm_forward,
    gca_attention,
    gca_forward,
    grad_check,
    stack_domain_layers,
)


def features(n, d, seed, role=FeatureRole.GLOBAL):
    rng = np.random.default_rng(seed)
    return FeatureMatrix(rng.standard_normal((n, d)), role)


def dfm_inputs(d=8, d_domain=6, seed=0, gate=0.5, heads=2, tokens=(5, 3, 4)):
    rng = np.random.default_rng(seed)
    p = DfmParams.init(d, d_domain, heads=heads, rng=rng, gate=gate)
    G = FeatureMatrix(rng.standard_normal((tokens[0], d)), FeatureRole.GLOBAL)
    F = FeatureMatrix(rng.standard_normal((tokens[1], d)), FeatureRole.FOCAL)
    R = FeatureMatrix(rng.standard_normal((tokens[2], d_domain)), FeatureRole.DOMAIN)
    return G, F, R, p


class TestFeatureMatrix:
    def test_rejects_non_finite(self):
        with pytest.raises(NumericError):
            FeatureMatrix(np.array([[1.0, np.inf]]), FeatureRole.GLOBAL)

    def test_rejects_wrong_rank(self):
        with pytest.raises(ShapeError):
            FeatureMatrix(np.zeros(4), FeatureRole.FOCAL)


class TestGcaForward:
    def test_zero_gates_identity_exact(self):
        rng = np.random.default_rng(0)
        p = GcaParams.init(8, heads=2, rng=rng, gate=0.0)
        x = features(4, 8, 1)
        ctx = features(6, 8, 2)
        out = gca_forward(x, ctx, p)
        assert np.array_equal(out.data, x.data)

    def test_single_token_matches_scalar_expansion(self):
        # 1 token, 1 head, d=2: independent step-by-step float computation
        d = 2
        p = GcaParams.init(d, heads=1, d_ff=2, rng=np.random.default_rng(9), gate=0.3)
        x = np.array([[0.7, -1.2]])
        ctx = np.array([[0.4, 0.9]])

        def ln(v, scale, shift, eps=1e-5):
            mu = (v[0] + v[1]) / 2.0
            var = ((v[0] - mu) ** 2 + (v[1] - mu) ** 2) / 2.0
            inv = 1.0 / math.sqrt(var + eps)
            return [
                (v[0] - mu) * inv * scale[0] + shift[0],
                (v[1] - mu) * inv * scale[1] + shift[1],
            ]

        def matvec(v, m):
            return [v[0] * m[0][0] + v[1] * m[1][0], v[0] * m[0][1] + v[1] * m[1][1]]

        def gelu_s(t):
            c = math.sqrt(2.0 / math.pi)
            return 0.5 * t * (1.0 + math.tanh(c * (t + 0.044715 * t**3)))

        xn = ln(x[0], p.ln_x_scale, p.ln_x_shift)
        cn = ln(ctx[0], p.ln_ctx_scale, p.ln_ctx_shift)
        # single context token -> softmax over one value is exactly 1,
        # so the attended value is just v = cn @ w_v
        v_vec = matvec(cn, p.w_v.tolist())
        mhca = matvec(v_vec, p.w_o.tolist())
        g = math.tanh(float(p.g_attn))
        h = [x[0][0] + g * mhca[0], x[0][1] + g * mhca[1]]
        hn = ln(h, p.ln_ffn_scale, p.ln_ffn_shift)
        ffn_mid = [gelu_s(t) for t in matvec(hn, p.w_ffn_in.tolist())]
        ffn = matvec(ffn_mid, p.w_ffn_out.tolist())
        gf = math.tanh(float(p.g_ffn))
        expected = [h[0] + gf * ffn[0], h[1] + gf * ffn[1]]

        out = gca_forward(
            FeatureMatrix(x, FeatureRole.FOCAL), FeatureMatrix(ctx, FeatureRole.DOMAIN), p
        )
        assert out.data[0] == pytest.approx(expected, abs=1e-12)

    def test_context_permutation_invariance(self):
        rng = np.random.default_rng(3)
        p = GcaParams.init(8, heads=2, rng=rng, gate=0.7)
        x = features(4, 8, 5)
        ctx = features(7, 8, 6, FeatureRole.DOMAIN)
        base = gca_forward(x, ctx, p).data
        for seed in range(50):
            perm = np.random.default_rng(seed).permutation(7)
            shuffled = FeatureMatrix(ctx.data[perm], FeatureRole.DOMAIN)
            out = gca_forward(x, shuffled, p).data
            assert np.abs(out - base).max() <= 1e-12

    def test_shape_mismatch_rejected(self):
        p = GcaParams.init(8, heads=2)
        with pytest.raises(ShapeError):
            gca_forward(features(4, 8, 0), features(3, 6, 1), p)

    def test_output_token_count_matches_x(self):
        p = GcaParams.init(4, heads=1, gate=0.2)
        out = gca_forward(features(9, 4, 0), features(2, 4, 1), p)
        assert out.data.shape == (9, 4)

    def test_attention_rows_sum_to_one(self):
        rng = np.random.default_rng(2)
        p = GcaParams.init(8, heads=2, rng=rng, gate=0.5)
        attn = gca_attention(features(5, 8, 3), features(6, 8, 4), p)
        assert attn.shape == (2, 5, 6)
        assert np.abs(attn.sum(axis=-1) - 1.0).max() <= 1e-12

    def test_heads_must_divide_d_model(self):
        with pytest.raises(ShapeError):
            GcaParams.init(6, heads=4)


def loop_reference_gca(x, ctx, p):
    """Independent straight-line re-implementation: plain Python loops."""
    n, d = x.shape
    m = ctx.shape[0]
    heads = p.heads
    dh = d // heads

    def ln_row(row, scale, shift, eps=1e-5):
        mu = sum(row) / len(row)
        var = sum((v - mu) ** 2 for v in row) / len(row)
        inv = 1.0 / math.sqrt(var + eps)
        return [(v - mu) * inv * s + b for v, s, b in zip(row, scale, shift)]

    def matmul_ll(a, b):
        rows, inner, cols = len(a), len(b), len(b[0])
        return [
            [sum(a[i][k] * b[k][j] for k in range(inner)) for j in range(cols)]
            for i in range(rows)
        ]

    xl = [list(map(float, r)) for r in x]
    cl = [list(map(float, r)) for r in ctx]
    xn = [ln_row(r, p.ln_x_scale, p.ln_x_shift) for r in xl]
    cn = [ln_row(r, p.ln_ctx_scale, p.ln_ctx_shift) for r in cl]
    q = matmul_ll(xn, p.w_q.tolist())
    k = matmul_ll(cn, p.w_k.tolist())
    v = matmul_ll(cn, p.w_v.tolist())
    merged = [[0.0] * d for _ in range(n)]
    for head in range(heads):
        lo = head * dh
        for i in range(n):
            scores = []
            for j in range(m):
                s = sum(q[i][lo + t] * k[j][lo + t] for t in range(dh))
                scores.append(s / math.sqrt(d / heads))
            mx = max(scores)
            exps = [math.exp(s - mx) for s in scores]
            z = sum(exps)
            probs = [e / z for e in exps]
            for t in range(dh):
                merged[i][lo + t] = sum(probs[j] * v[j][lo + t] for j in range(m))
    mhca = matmul_ll(merged, p.w_o.tolist())
    g = math.tanh(float(p.g_attn))
    h = [[xl[i][j] + g * mhca[i][j] for j in range(d)] for i in range(n)]
    hn = [ln_row(r, p.ln_ffn_scale, p.ln_ffn_shift) for r in h]
    mid = matmul_ll(hn, p.w_ffn_in.tolist())
    c = math.sqrt(2.0 / math.pi)
    act = [[0.5 * t * (1.0 + math.tanh(c * (t + 0.044715 * t**3))) for t in row] for row in mid]
    ffn = matmul_ll(act, p.w_ffn_out.tolist())
    gf = math.tanh(float(p.g_ffn))
    return np.array([[h[i][j] + gf * ffn[i][j] for j in range(d)] for i in range(n)])


def loop_reference_dfm(G, F, R, p):
    dom = np.asarray(
        [
            [sum(R[i][k] * p.domain_proj[k][j] for k in range(R.shape[1])) for j in range(p.domain_proj.shape[1])]
            for i in range(R.shape[0])
        ]
    )
    g2 = loop_reference_gca(G, dom, p.gca_global)
    f2 = loop_reference_gca(F, dom, p.gca_focal)
    f3 = loop_reference_gca(f2, g2, p.gca_refine)
    return np.concatenate([g2, f3], axis=0)


class TestDfmForward:
    def test_zero_gates_identity(self):
        G, F, R, p = dfm_inputs(gate=0.0)
        out = dfm_forward(G, F, R, p)
        assert np.array_equal(out.data, np.concatenate([G.data, F.data], axis=0))

    def test_token_and_dim_contract(self):
        G, F, R, p = dfm_inputs(d=16, tokens=(8, 4, 5))
        out = dfm_forward(G, F, R, p)
        assert out.data.shape == (12, 16)

    def test_matches_loop_reference(self):
        G, F, R, p = dfm_inputs(d=8, seed=12, gate=0.6, heads=2)
        ours = dfm_forward(G, F, R, p).data
        theirs = loop_reference_dfm(G.data, F.data, R.data, p)
        assert np.abs(ours - theirs).max() <= 1e-12

    def test_matches_loop_reference_single_head(self):
        G, F, R, p = dfm_inputs(d=4, seed=21, gate=0.4, heads=1, tokens=(3, 2, 3))
        ours = dfm_forward(G, F, R, p).data
        theirs = loop_reference_dfm(G.data, F.data, R.data, p)
        assert np.abs(ours - theirs).max() <= 1e-12

    def test_shape_errors(self):
        G, F, R, p = dfm_inputs()
        bad_R = features(4, 3, 0, FeatureRole.DOMAIN)
        with pytest.raises(ShapeError):
            dfm_forward(G, F, bad_R, p)

    def test_domain_layer_stacking(self):
        layers = [np.ones((2, 6)), np.zeros((3, 6))]
        stacked = stack_domain_layers(layers)
        assert stacked.data.shape == (5, 6)
        assert stacked.role is FeatureRole.DOMAIN


class TestGradCheck:
    def test_linear_loss_zero_gates(self):
        G, F, R, p = dfm_inputs(gate=0.0, seed=42)
        err = grad_check(G, F, R, p, loss_weights=np.ones((8, 8)))
        assert err <= 1e-7

    def test_random_init_small(self):
        G, F, R, p = dfm_inputs(d=8, seed=1, gate=0.5)
        assert grad_check(G, F, R, p, seed=1) < 1e-5

    def test_eps_zero_rejected(self):
        G, F, R, p = dfm_inputs()
        with pytest.raises(ValueError):
            grad_check(G, F, R, p, eps=0.0)

    def test_non_finite_rejected(self):
        G, F, R, p = dfm_inputs()
        p.domain_proj[0, 0] = np.nan
        with pytest.raises(NumericError):
            grad_check(G, F, R, p)

    @pytest.mark.parametrize("d,heads", [(4, 1), (4, 2), (8, 2)])
    def test_across_widths(self, d, heads):
        G, F, R, p = dfm_inputs(d=d, heads=heads, seed=d + heads, gate=0.5)
        assert grad_check(G, F, R, p, seed=d) < 1e-5


class TestAutodiffAgainstValueOps:
    def test_var_and_value_paths_agree(self):
        rng = np.random.default_rng(7)
        a = rng.standard_normal((4, 6))
        b = rng.standard_normal((6, 3))
        s = rng.standard_normal(6)
        t = rng.standard_normal(6)
        assert np.array_equal(ad.matmul(Var(a), Var(b)).value, NP.matmul(a, b))
        assert np.array_equal(ad.gelu(Var(a)).value, NP.gelu(a))
        assert np.array_equal(ad.softmax_last(Var(a)).value, NP.softmax_last(a))
        assert np.array_equal(
            ad.layer_norm(Var(a), Var(s), Var(t)).value, NP.layer_norm(a, s, t)
        )

    def test_backward_accumulates_shared_nodes(self):
        x = Var(np.array([[2.0, 3.0]]))
        y = ad.add(ad.mul(x, x), x)  # x^2 + x -> grad 2x + 1
        loss = ad.weighted_sum(y, np.ones((1, 2)))
        ad.backward(loss)
        assert np.allclose(x.grad, [[5.0, 7.0]])

    def test_backward_requires_scalar(self):
        with pytest.raises(ValueError):
            ad.backward(Var(np.zeros((2, 2))))
