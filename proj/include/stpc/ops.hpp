#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "stpc/tensor.hpp"

// Differentiable primitives. Every function records one tape node when any input
// requires a gradient and grad mode is on. Shape errors throw stpc::ShapeError.
namespace stpc::ad {

// Rank-2 [m,k]x[k,n] or rank-3 batched [b,m,k]x[b,k,n]. Transpose flags act on the
// last two axes.
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);

// `b` either matches `a` or equals a trailing suffix of a's shape (bias-style broadcast).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor broadcast_to(const Tensor& x, const Shape& shape);

Tensor leaky_relu(const Tensor& x, double slope = 0.2);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);

Tensor concat_last(std::span<const Tensor> parts);
Tensor concat_last(std::initializer_list<Tensor> parts);
Tensor reshape(const Tensor& x, Shape shape);

// out[i] = x[index[i]] along axis 0. Backward scatter-adds.
Tensor gather_rows(const Tensor& x, std::span<const std::int64_t> index);

Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x, std::size_t axis);
Tensor max(const Tensor& x, std::size_t axis);  // ties route gradient to the first maximum
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

// Max-subtracted exp / sum-exp. Throws std::domain_error on non-finite input.
Tensor softmax(const Tensor& x, std::size_t axis);

// Entries below tau become 0 and stop their gradient; survivors pass through unchanged.
Tensor threshold(const Tensor& x, double tau);

// Pairwise cosine similarity of rows: [r,c] x [m,c] -> [r,m], with
// x.y / (|x||y| + eps).
Tensor cosine_similarity(const Tensor& x, const Tensor& y, double eps = 1e-12);

// Mean negative log-softmax over rows whose label is not `ignore_label`.
// All rows ignored -> 0 with zero gradient. Out-of-range labels throw std::out_of_range.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels, int ignore_label = -1);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

}  // namespace stpc::ad
