#include "grace/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "grace/error.hpp"

namespace grace {

std::string_view op_name(Op op) {
  switch (op) {
    case Op::kConstant: return "constant";
    case Op::kParameter: return "parameter";
    case Op::kMatMul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kAddRow: return "add_row";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kConcatCols: return "concat_cols";
    case Op::kSliceCols: return "slice_cols";
    case Op::kTranspose: return "transpose";
    case Op::kRelu: return "relu";
    case Op::kSigmoid: return "sigmoid";
    case Op::kSoftplus: return "softplus";
    case Op::kLog: return "log";
    case Op::kExp: return "exp";
    case Op::kSoftmaxRows: return "softmax_rows";
    case Op::kLogSumExpRows: return "logsumexp_rows";
    case Op::kMean: return "mean";
    case Op::kSum: return "sum";
    case Op::kWeightedSum: return "weighted_sum";
    case Op::kDotRows: return "dot_rows";
    case Op::kScale: return "scale";
    case Op::kScaleRows: return "scale_rows";
    case Op::kGatherRows: return "gather_rows";
    case Op::kL2NormalizeRows: return "l2_normalize_rows";
    case Op::kBceWithLogits: return "bce_with_logits";
  }
  return "unknown";
}

namespace ops {
namespace {

[[noreturn]] void mismatch(std::string_view op, const Tensor& a,
                           const Tensor& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() +
                   " vs " + b.shape_string());
}

void require_same(std::string_view op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) mismatch(op, a, b);
}

template <typename F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

}  // namespace

// Clamped so the result stays strictly inside (0, 1) where the exact value
// would round to an endpoint.
double sigmoid(double z) {
  constexpr double kLo = std::numeric_limits<double>::denorm_min();
  constexpr double kHi = 1.0 - 0x1.0p-53;
  if (z >= 0) return std::min(1.0 / (1.0 + std::exp(-z)), kHi);
  const double e = std::exp(z);
  return std::max(e / (1.0 + e), kLo);
}

double softplus(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) mismatch("matmul", a, b);
  Tensor out(a.rows(), b.cols());
  matmul_rows(a.values().data(), b.values().data(), out.values().data(), a.rows(), a.cols(), b.cols());
  return out;
}

GRACE_SIMD_CLONES
void matmul_rows(const double* a, const double* b, double* out, std::size_t n,
                 std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* br = b + p * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += av * br[j];
    }
  }
}

GRACE_SIMD_CLONES
void matmul_backward(const double* a, const double* bt, const double* g, double* da,
                     double* db, std::size_t n, std::size_t k, std::size_t m) {
  // dA += g B^T as row updates against B^T so the inner loop is
  // elementwise rather than a reduction.
  for (std::size_t i = 0; i < n; ++i) {
    const double* gr = g + i * m;
    double* dar = da + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const double gv = gr[j];
      if (gv == 0.0) continue;
      const double* btr = bt + j * k;
      for (std::size_t p = 0; p < k; ++p) dar[p] += gv * btr[p];
    }
  }
  // dB += A^T g
  for (std::size_t i = 0; i < n; ++i) {
    const double* gr = g + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      double* dbr = db + p * m;
      for (std::size_t j = 0; j < m; ++j) dbr[j] += av * gr[j];
    }
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same("add", a, b);
  Tensor out = a;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] += b[i];
  return out;
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) mismatch("add_row", a, row);
  Tensor out = a;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) += row(0, c);
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same("sub", a, b);
  Tensor out = a;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same("mul", a, b);
  Tensor out = a;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] *= b[i];
  return out;
}

Tensor concat_cols(std::span<const Tensor* const> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts[0]->rows();
  std::size_t cols = 0;
  for (const Tensor* p : parts) {
    if (p->rows() != rows) mismatch("concat_cols", *parts[0], *p);
    cols += p->cols();
  }
  Tensor out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double* o = out.row(r).data();
    for (const Tensor* p : parts) {
      const auto src = p->row(r);
      o = std::copy(src.begin(), src.end(), o);
    }
  }
  return out;
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") outside " + a.shape_string());
  }
  Tensor out(a.rows(), end - begin);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = begin; c < end; ++c) out(r, c - begin) = a(r, c);
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  Tensor out(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
  }
  return out;
}

Tensor relu(const Tensor& a) {
  return map(a, [](double x) { return x > 0.0 ? x : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return map(a, [](double x) { return sigmoid(x); });
}

Tensor softplus(const Tensor& a) {
  return map(a, [](double x) { return softplus(x); });
}

Tensor log(const Tensor& a) {
  return map(a, [](double x) { return std::log(x); });
}

Tensor exp(const Tensor& a) {
  return map(a, [](double x) { return std::exp(x); });
}

Tensor softmax_rows(const Tensor& a) {
  Tensor out(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto in = a.row(r);
    auto o = out.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = std::exp(in[c] - mx);
      z += o[c];
    }
    for (double& v : o) v /= z;
  }
  return out;
}

Tensor logsumexp_rows(const Tensor& a, const Tensor& mask) {
  require_same("logsumexp_rows", a, mask);
  Tensor out(a.rows(), 1);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double mx = -INFINITY;
    for (std::size_t c = 0; c < a.cols(); ++c) {
      if (mask(r, c) != 0.0) mx = std::max(mx, a(r, c));
    }
    if (mx == -INFINITY) {
      throw ShapeError("logsumexp_rows: row " + std::to_string(r) +
                       " has an empty mask");
    }
    double z = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
      if (mask(r, c) != 0.0) z += std::exp(a(r, c) - mx);
    }
    out(r, 0) = mx + std::log(z);
  }
  return out;
}

Tensor mean(const Tensor& a) {
  if (a.empty()) throw ShapeError("mean: empty input");
  double s = 0.0;
  for (double v : a.values()) s += v;
  return Tensor::scalar(s / static_cast<double>(a.size()));
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return Tensor::scalar(s);
}

Tensor weighted_sum(const Tensor& a, const Tensor& weights) {
  require_same("weighted_sum", a, weights);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * weights[i];
  return Tensor::scalar(s);
}

Tensor dot_rows(const Tensor& a, const Tensor& b) {
  require_same("dot_rows", a, b);
  Tensor out(a.rows(), 1);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) s += a(r, c) * b(r, c);
    out(r, 0) = s;
  }
  return out;
}

Tensor scale(const Tensor& a, double s) {
  return map(a, [s](double x) { return x * s; });
}

Tensor scale_rows(const Tensor& a, const Tensor& column) {
  if (column.cols() != 1 || column.rows() != a.rows()) {
    mismatch("scale_rows", a, column);
  }
  Tensor out = a;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double v = column(r, 0);
    for (double& x : out.row(r)) x *= v;
  }
  return out;
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
  Tensor out(rows.size(), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= a.rows()) {
      throw ShapeError("gather_rows: row " + std::to_string(rows[i]) +
                       " outside " + a.shape_string());
    }
    const auto src = a.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Tensor l2_normalize_rows(const Tensor& a) {
  Tensor out = a;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto row = out.row(r);
    double s = 0.0;
    for (double v : row) s += v * v;
    const double n = std::sqrt(s + kNormalizeEpsilon);
    for (double& v : row) v /= n;
  }
  return out;
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  require_same("bce_with_logits", logits, targets);
  Tensor out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = softplus(logits[i]) - targets[i] * logits[i];
  }
  return out;
}

}  // namespace ops

Tensor forward_op(Op kind, std::span<const Tensor* const> in, double scalar) {
  auto need = [&](std::size_t n) {
    if (in.size() != n) {
      throw ShapeError(std::string(op_name(kind)) + ": expected " +
                       std::to_string(n) + " inputs, got " +
                       std::to_string(in.size()));
    }
  };
  switch (kind) {
    case Op::kMatMul: need(2); return ops::matmul(*in[0], *in[1]);
    case Op::kAdd: need(2); return ops::add(*in[0], *in[1]);
    case Op::kSub: need(2); return ops::sub(*in[0], *in[1]);
    case Op::kMul: need(2); return ops::mul(*in[0], *in[1]);
    case Op::kConcatCols: return ops::concat_cols(in);
    case Op::kTranspose: need(1); return ops::transpose(*in[0]);
    case Op::kRelu: need(1); return ops::relu(*in[0]);
    case Op::kSigmoid: need(1); return ops::sigmoid(*in[0]);
    case Op::kSoftplus: need(1); return ops::softplus(*in[0]);
    case Op::kSoftmaxRows: need(1); return ops::softmax_rows(*in[0]);
    case Op::kLog: need(1); return ops::log(*in[0]);
    case Op::kExp: need(1); return ops::exp(*in[0]);
    case Op::kMean: need(1); return ops::mean(*in[0]);
    case Op::kSum: need(1); return ops::sum(*in[0]);
    case Op::kDotRows: need(2); return ops::dot_rows(*in[0], *in[1]);
    case Op::kScale: need(1); return ops::scale(*in[0], scalar);
    case Op::kScaleRows: need(2); return ops::scale_rows(*in[0], *in[1]);
    default:
      throw ShapeError(std::string(op_name(kind)) +
                       ": not available through forward_op");
  }
}

}  // namespace grace
