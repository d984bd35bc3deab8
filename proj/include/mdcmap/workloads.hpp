// SPDX-License-Identifier: Apache-2.0
//
// Loop-nest generators for CONV2D / GEMM / MLP / LSTM layers and the small
// operators used to exercise the conformability rules.
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "mdcmap/loopnest.hpp"

namespace mdcmap {

struct WorkloadError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ConvVariant { Regular, Pointwise, Depthwise, Strided, Dilated };

inline const char* to_string(ConvVariant v) {
    switch (v) {
    case ConvVariant::Regular: return "regular";
    case ConvVariant::Pointwise: return "pointwise";
    case ConvVariant::Depthwise: return "depthwise";
    case ConvVariant::Strided: return "strided";
    case ConvVariant::Dilated: return "dilated";
    }
    return "?";
}

inline ConvVariant parse_conv_variant(const std::string& s) {
    if (s == "regular") return ConvVariant::Regular;
    if (s == "pointwise") return ConvVariant::Pointwise;
    if (s == "depthwise") return ConvVariant::Depthwise;
    if (s == "strided") return ConvVariant::Strided;
    if (s == "dilated") return ConvVariant::Dilated;
    throw WorkloadError("unknown conv2d variant '" + s + "'");
}

struct Conv2dParams {
    i64 N = 1, K = 1, C = 1, P = 1, Q = 1, R = 1, S = 1;
    i64 stride = 1, dilation = 1;
    ConvVariant variant = ConvVariant::Regular;
};

struct GemmParams {
    i64 M = 1, N = 1, K = 1;
    bool operator==(const GemmParams&) const = default;
};

namespace detail {

inline TensorDim tdim(const std::string& tensor, const std::string& tag, Subscript s, i64 extent) {
    return {"d_" + tensor + "_" + tag, std::move(s), extent};
}

}  // namespace detail

// Loops n,k,c,p,q,r,s (n dropped when N = 1). Depthwise drops k: the
// channel loop c indexes output, filter and input alike.
inline LoopNest make_conv2d(const Conv2dParams& p) {
    for (i64 v : {p.N, p.K, p.C, p.P, p.Q, p.R, p.S, p.stride, p.dilation})
        if (v < 1) throw WorkloadError("conv2d parameters must be >= 1");
    switch (p.variant) {
    case ConvVariant::Pointwise:
        if (p.R != 1 || p.S != 1) throw WorkloadError("pointwise conv2d needs R = S = 1");
        break;
    case ConvVariant::Depthwise:
        if (p.K != p.C) throw WorkloadError("depthwise conv2d needs K = C");
        break;
    case ConvVariant::Strided:
        if (p.stride < 2) throw WorkloadError("strided conv2d needs stride > 1");
        break;
    case ConvVariant::Dilated:
        if (p.dilation < 2) throw WorkloadError("dilated conv2d needs dilation > 1");
        break;
    default: break;
    }
    const bool dw = p.variant == ConvVariant::Depthwise;
    const bool batch = p.N > 1;
    const i64 H = p.stride * (p.P - 1) + p.dilation * (p.R - 1) + 1;
    const i64 W = p.stride * (p.Q - 1) + p.dilation * (p.S - 1) + 1;

    LoopNest n;
    n.name = std::string("conv2d_") + to_string(p.variant);
    if (batch) n.iterators.push_back({"n", p.N, {}});
    if (!dw) n.iterators.push_back({"k", p.K, {}});
    n.iterators.push_back({"c", p.C, {}});
    n.iterators.push_back({"p", p.P, {}});
    n.iterators.push_back({"q", p.Q, {}});
    n.iterators.push_back({"r", p.R, {}});
    n.iterators.push_back({"s", p.S, {}});
    const std::string kc = dw ? "c" : "k";
    const i64 KC = dw ? p.C : p.K;

    TensorRef O{"O", Access::ReadWrite, {}};
    if (batch) O.dims.push_back(detail::tdim("O", "n", Subscript::iter("n"), p.N));
    O.dims.push_back(detail::tdim("O", kc, Subscript::iter(kc), KC));
    O.dims.push_back(detail::tdim("O", "p", Subscript::iter("p"), p.P));
    O.dims.push_back(detail::tdim("O", "q", Subscript::iter("q"), p.Q));

    TensorRef Wt{"W", Access::Read, {}};
    Wt.dims.push_back(detail::tdim("W", kc, Subscript::iter(kc), KC));
    if (!dw) Wt.dims.push_back(detail::tdim("W", "c", Subscript::iter("c"), p.C));
    Wt.dims.push_back(detail::tdim("W", "r", Subscript::iter("r"), p.R));
    Wt.dims.push_back(detail::tdim("W", "s", Subscript::iter("s"), p.S));

    TensorRef I{"I", Access::Read, {}};
    if (batch) I.dims.push_back(detail::tdim("I", "n", Subscript::iter("n"), p.N));
    I.dims.push_back(detail::tdim("I", "c", Subscript::iter("c"), p.C));
    I.dims.push_back(detail::tdim("I", "h", Subscript::sum({{"p", p.stride}, {"r", p.dilation}}), H));
    I.dims.push_back(detail::tdim("I", "w", Subscript::sum({{"q", p.stride}, {"s", p.dilation}}), W));

    n.refs = {O, Wt, I};
    n.reduction_dims = dw ? std::vector<std::string>{"r", "s"}
                          : std::vector<std::string>{"c", "r", "s"};
    n.stmt = {"mac", ReduceOp::Add, 1, false, true};
    return n;
}

// C[m][n] += A[m][k] * B[k][n]
inline LoopNest make_gemm(const GemmParams& p) {
    if (p.M < 1 || p.N < 1 || p.K < 1) throw WorkloadError("gemm dimensions must be >= 1");
    LoopNest n;
    n.name = "gemm";
    n.iterators = {{"m", p.M, {}}, {"n", p.N, {}}, {"k", p.K, {}}};
    n.refs = {
        {"C", Access::ReadWrite,
         {detail::tdim("C", "m", Subscript::iter("m"), p.M), detail::tdim("C", "n", Subscript::iter("n"), p.N)}},
        {"A", Access::Read,
         {detail::tdim("A", "m", Subscript::iter("m"), p.M), detail::tdim("A", "k", Subscript::iter("k"), p.K)}},
        {"B", Access::Read,
         {detail::tdim("B", "k", Subscript::iter("k"), p.K), detail::tdim("B", "n", Subscript::iter("n"), p.N)}},
    };
    n.reduction_dims = {"k"};
    return n;
}

inline GemmParams lstm_to_gemm(i64 embedding, i64 batch) {
    if (embedding < 1 || batch < 1) throw WorkloadError("lstm sizes must be >= 1");
    return {batch, embedding, 2 * embedding};
}

inline LoopNest make_mlp(i64 in_channels, i64 out_channels, i64 batch) {
    if (in_channels < 1 || out_channels < 1 || batch < 1)
        throw WorkloadError("mlp sizes must be >= 1");
    auto n = make_gemm({batch, out_channels, in_channels});
    n.name = "mlp";
    return n;
}

// ============================================================================
// Operators from the conformability table
// ============================================================================

// O[i0] += W[i1] * I[i0+i1]
inline LoopNest make_conv1d(i64 out, i64 filter) {
    LoopNest n;
    n.name = "conv1d";
    n.iterators = {{"i0", out, {}}, {"i1", filter, {}}};
    n.refs = {
        {"O", Access::ReadWrite, {{"d_O", Subscript::iter("i0"), out}}},
        {"W", Access::Read, {{"d_W", Subscript::iter("i1"), filter}}},
        {"I", Access::Read, {{"d_I", Subscript::sum({{"i0", 1}, {"i1", 1}}), out + filter - 1}}},
    };
    n.reduction_dims = {"i1"};
    return n;
}

// O[i0] = I[i0] + I[i0+1] + I[i0+2]
inline LoopNest make_stencil3(i64 out) {
    LoopNest n;
    n.name = "stencil";
    n.iterators = {{"i0", out, {}}};
    n.refs = {
        {"O", Access::Write, {{"d_O", Subscript::iter("i0"), out}}},
        {"I", Access::Read, {{"d_I", Subscript::iter("i0"), out + 2}}},
        {"I", Access::Read, {{"d_I", Subscript::iter("i0", 1, 1), out + 2}}},
        {"I", Access::Read, {{"d_I", Subscript::iter("i0", 1, 2), out + 2}}},
    };
    n.stmt = {"sum3", ReduceOp::None, 1, false, true};
    return n;
}

// O[c][p][q] = max/avg over r,s of I[c][p+r][q+s]
inline LoopNest make_pool2d(i64 C, i64 P, i64 Q, i64 R, i64 S, bool max_pool) {
    LoopNest n;
    n.name = max_pool ? "maxpool" : "avgpool";
    n.iterators = {{"c", C, {}}, {"p", P, {}}, {"q", Q, {}}, {"r", R, {}}, {"s", S, {}}};
    n.refs = {
        {"O", Access::ReadWrite,
         {detail::tdim("O", "c", Subscript::iter("c"), C), detail::tdim("O", "p", Subscript::iter("p"), P),
          detail::tdim("O", "q", Subscript::iter("q"), Q)}},
        {"I", Access::Read,
         {detail::tdim("I", "c", Subscript::iter("c"), C),
          detail::tdim("I", "h", Subscript::sum({{"p", 1}, {"r", 1}}), P + R - 1),
          detail::tdim("I", "w", Subscript::sum({{"q", 1}, {"s", 1}}), Q + S - 1)}},
    };
    n.reduction_dims = {"r", "s"};
    n.stmt = {max_pool ? "max" : "avg", max_pool ? ReduceOp::Max : ReduceOp::Add, 1, false, true};
    return n;
}

// O = A + B (residual) or O = max(A, 0) (ReLU), over [c][p][q]
inline LoopNest make_elementwise(i64 C, i64 P, i64 Q, bool residual) {
    LoopNest n;
    n.name = residual ? "residual" : "relu";
    n.iterators = {{"c", C, {}}, {"p", P, {}}, {"q", Q, {}}};
    auto ref = [&](const std::string& t, Access a) {
        return TensorRef{t, a,
                         {detail::tdim(t, "c", Subscript::iter("c"), C), detail::tdim(t, "p", Subscript::iter("p"), P),
                          detail::tdim(t, "q", Subscript::iter("q"), Q)}};
    };
    n.refs = {ref("O", Access::Write), ref("A", Access::Read)};
    if (residual) n.refs.push_back(ref("B", Access::Read));
    n.stmt = {residual ? "add" : "relu", ReduceOp::None, 1, false, true};
    return n;
}

// C[m][n] += A[m][k] * B[k][n] for k <= m (lower-triangular A)
inline LoopNest make_triangular_gemm(i64 M, i64 N) {
    RawNest r;
    r.name = "gemm_triangular";
    r.loops = {{"m", {0, {}, true}, {M, {}, true}, 1},
               {"n", {0, {}, true}, {N, {}, true}, 1},
               {"k", {0, {}, true}, {1, {{"m", 1}}, true}, 1}};
    r.refs = {
        {"C", Access::ReadWrite,
         {detail::tdim("C", "m", Subscript::iter("m"), M), detail::tdim("C", "n", Subscript::iter("n"), N)}},
        {"A", Access::Read,
         {detail::tdim("A", "m", Subscript::iter("m"), M), detail::tdim("A", "k", Subscript::iter("k"), M)}},
        {"B", Access::Read,
         {detail::tdim("B", "k", Subscript::iter("k"), M), detail::tdim("B", "n", Subscript::iter("n"), N)}},
    };
    r.reduction_dims = {"k"};
    return normalize(r);
}

// Single LSTM cell as its gate GEMM.
inline LoopNest make_lstm_cell(i64 embedding, i64 batch) {
    auto n = make_gemm(lstm_to_gemm(embedding, batch));
    n.name = "lstm_cell";
    return n;
}

// Parametric multi-cell LSTM: h[t+1][j] += Wh[j][k] * h[t][k]. The hidden
// state written by step t is read by step t+1.
inline LoopNest make_lstm_multicell(i64 steps, i64 hidden) {
    LoopNest n;
    n.name = "lstm_multicell";
    n.iterators = {{"t", steps, {}}, {"j", hidden, {}}, {"k", hidden, {}}};
    n.refs = {
        {"h", Access::ReadWrite,
         {{"d_h_0", Subscript::iter("t", 1, 1), steps + 1}, {"d_h_1", Subscript::iter("j"), hidden}}},
        {"Wh", Access::Read, {{"d_Wh_0", Subscript::iter("j"), hidden}, {"d_Wh_1", Subscript::iter("k"), hidden}}},
        {"h", Access::Read, {{"d_h_0", Subscript::iter("t"), steps + 1}, {"d_h_1", Subscript::iter("k"), hidden}}},
    };
    n.reduction_dims = {"k"};
    return n;
}

// Fused conv + bias with a boundary guard: two statements and a conditional.
inline LoopNest make_fused_conv1d(i64 out, i64 filter) {
    auto n = make_conv1d(out, filter);
    n.name = "fused_conv1d";
    n.stmt.count = 2;
    n.stmt.has_conditional = true;
    return n;
}

// O[i0+i1] += I[i0+2*i1] * W[i1]: two MIV nodes share i0 and i1, which
// makes them point at each other.
inline LoopNest make_coupled_miv(i64 a, i64 b) {
    LoopNest n;
    n.name = "coupled_miv";
    n.iterators = {{"i0", a, {}}, {"i1", b, {}}};
    n.refs = {
        {"O", Access::ReadWrite, {{"d_O", Subscript::sum({{"i0", 1}, {"i1", 1}}), a + b - 1}}},
        {"I", Access::Read, {{"d_I", Subscript::sum({{"i0", 1}, {"i1", 2}}), a + 2 * b - 2}}},
        {"W", Access::Read, {{"d_W", Subscript::iter("i1"), b}}},
    };
    return n;
}

}  // namespace mdcmap
