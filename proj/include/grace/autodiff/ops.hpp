#pragma once

#include <cstddef>
#include <span>
#include <string_view>

#include "grace/autodiff/tensor.hpp"

namespace grace {

enum class Op {
  kConstant,
  kParameter,
  kMatMul,
  kAdd,
  kAddRow,  // (n x m) + (1 x m), bias add
  kSub,
  kMul,
  kConcatCols,
  kSliceCols,
  kTranspose,
  kRelu,
  kSigmoid,
  kSoftplus,
  kLog,
  kExp,
  kSoftmaxRows,
  kLogSumExpRows,  // masked, (n x m) -> (n x 1)
  kMean,
  kSum,
  kWeightedSum,  // sum(A .* W) with constant W
  kDotRows,      // (n x m), (n x m) -> (n x 1)
  kScale,
  kScaleRows,  // (n x m) .* (n x 1) broadcast over columns
  kGatherRows,
  kL2NormalizeRows,
  kBceWithLogits,  // elementwise softplus(z) - t*z with constant t
};

std::string_view op_name(Op op);

// Forward kernels. Each validates shapes and throws ShapeError naming the op
// and the offending shapes.
namespace ops {

Tensor matmul(const Tensor& a, const Tensor& b);

// Row-major kernels behind matmul and its gradient; every output is
// accumulated into. The AVX2 clone only widens the vectors: without FMA each
// element sees the same operations in the same order, so all clones agree
// bit for bit.
#if defined(__GNUC__) && !defined(__clang__) && defined(__x86_64__)
#define GRACE_SIMD_CLONES __attribute__((target_clones("avx2", "default")))
#else
#define GRACE_SIMD_CLONES
#endif
// out (n x m) += a (n x k) * b (k x m)
void matmul_rows(const double* a, const double* b, double* out, std::size_t n,
                 std::size_t k, std::size_t m);
// da (n x k) += g (n x m) * bt (m x k); db (k x m) += a^T * g
void matmul_backward(const double* a, const double* bt, const double* g, double* da,
                     double* db, std::size_t n, std::size_t k, std::size_t m);
Tensor add(const Tensor& a, const Tensor& b);
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor concat_cols(std::span<const Tensor* const> parts);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor transpose(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
Tensor logsumexp_rows(const Tensor& a, const Tensor& mask);
Tensor mean(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor weighted_sum(const Tensor& a, const Tensor& weights);
Tensor dot_rows(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor scale_rows(const Tensor& a, const Tensor& column);
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);
Tensor l2_normalize_rows(const Tensor& a);
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);

// Scalar helpers shared with the loss code.
double sigmoid(double z);
double softplus(double z);

// Additive guard inside the row norm of l2_normalize_rows.
inline constexpr double kNormalizeEpsilon = 1e-12;

}  // namespace ops

// Evaluates one of the parameter-free kinds {matmul, add, sub, mul,
// concat_cols, transpose, relu, sigmoid, softplus, softmax_rows, log, exp,
// mean, sum, dot_rows, scale, scale_rows}. `scalar` is only read by kScale.
Tensor forward_op(Op kind, std::span<const Tensor* const> inputs,
                  double scalar = 1.0);

}  // namespace grace
