#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mattnet/autodiff/tensor.hpp"
#include "mattnet/rng.hpp"

// Differentiable operations. Matrices are rank-2 row-major, vectors rank-1,
// scalars shape {1}. Linear maps store weights as [in x out] so that a row
// vector x maps to x * W + b.
namespace mattnet::ad {

Tensor matmul(const Tensor& a, const Tensor& b);
/// M [m x n] times v [n] -> [m].
Tensor matvec(const Tensor& m, const Tensor& v);
/// v [m] times M [m x n] -> [n]; a weighted sum of the rows of M.
Tensor vecmat(const Tensor& v, const Tensor& m);
/// x [n x in] or [in], W [in x out], b [out] -> x * W + b.
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);

/// Same-shape sum, or matrix [m x n] plus row vector [n] broadcast over rows.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// alpha * x + beta elementwise, constants not differentiated.
Tensor scale_shift(const Tensor& x, double alpha, double beta = 0.0);

Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);

/// Concatenation of rank-1 tensors, or of rank-2 tensors along axis 0 or 1.
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis = 0);
Tensor reshape(const Tensor& x, Shape shape);
/// Element i of a tensor as a scalar.
Tensor index(const Tensor& x, std::size_t i);
/// Rows `ids` of a [n x d] table -> [len(ids) x d].
Tensor row_select(const Tensor& table, std::span<const int> ids);

/// Max-subtracted softmax. Rank-1: over all entries; rank-2: along axis.
Tensor softmax(const Tensor& x, std::size_t axis = 0);
/// x / max(||x||, 1e-12) along axis (rank-1 ignores axis).
Tensor l2_normalize(const Tensor& x, std::size_t axis = 0);
inline constexpr double kNormEpsilon = 1e-12;

/// Mean over axis of a rank-2 tensor: axis 0 gives [cols], axis 1 gives [rows].
Tensor mean_pool(const Tensor& x, std::size_t axis = 0);
/// Maximum of a rank-1 tensor; gradient routes to the first argmax.
Tensor max_pool(const Tensor& x);

/// Inverted dropout: at train time keeps each unit with `keep_prob` and
/// scales it by 1/keep_prob; identity when `train` is false.
Tensor dropout(const Tensor& x, double keep_prob, bool train, Rng& rng);

Tensor sum(const Tensor& x);
/// Sum of scalars in a single node (keeps long loss sums shallow).
Tensor sum_scalars(const std::vector<Tensor>& scalars);
Tensor dot(const Tensor& a, const Tensor& b);

/// mask_i x_i / sum_j mask_j x_j for a rank-1 x; the mask is a constant.
Tensor renormalize(const Tensor& x, std::span<const double> mask);

/// Single-layer LSTM over the rows of x [T x in]; gates ordered (i, f, g, o)
/// in w [(in + H) x 4H] and b [4H], zero initial state. Row t of the output
/// is the state after reading token t; `reverse` runs from the last token.
Tensor lstm(const Tensor& x, const Tensor& w, const Tensor& b, bool reverse);

/// -sum_j weight_j * (y_j log p_j + (1 - y_j) log(1 - p_j)), p clamped to
/// [1e-12, 1 - 1e-12]. Labels and weights are constants.
Tensor weighted_bce(const Tensor& probs, std::span<const double> labels, std::span<const double> weights);

}  // namespace mattnet::ad
