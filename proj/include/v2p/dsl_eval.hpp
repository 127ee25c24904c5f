#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "v2p/dsl.hpp"

namespace v2p {

// One feature bound to batched storage. Component k of env b lives at
// data[b * stride + k]; stride 0 broadcasts a shared value to every env.
struct FeatureColumn {
  const double* data = nullptr;
  int stride = 0;
  int dim = 1;
  ValueType type = ValueType::Scalar;
};

struct FeatureTable {
  int batch = 0;
  std::map<std::string, FeatureColumn> columns;

  FeatureTypes types() const {
    FeatureTypes t;
    for (const auto& [k, c] : columns) t[k] = c.type;
    return t;
  }
};

// Counters for domain guards. Generated programs must never poison training
// with NaN: sqrt clamps negatives to 0, division by exact zero yields 0.
struct EvalDiag {
  size_t sqrt_clamps = 0;
  size_t div_by_zero = 0;
};

namespace evalk {

// Scalar kernels shared by the batched evaluator and the single-env reference
// interpreter, so the two paths agree bit-for-bit.
template <typename S>
inline S k_div(S a, S b, EvalDiag* diag) {
  if (b == S(0)) {
    if (diag) ++diag->div_by_zero;
    return S(0);
  }
  return a / b;
}

template <typename S>
inline S k_sqrt(S x, EvalDiag* diag) {
  if (x < S(0)) {
    if (diag) ++diag->sqrt_clamps;
    return S(0);
  }
  return std::sqrt(x);
}

template <typename S>
inline S k_norm(const S* v, int n) {
  S acc = S(0);
  for (int k = 0; k < n; ++k) acc += v[k] * v[k];
  return std::sqrt(acc);
}

template <typename S>
inline S k_dot(const S* a, const S* b, int n) {
  S acc = S(0);
  for (int k = 0; k < n; ++k) acc += a[k] * b[k];
  return acc;
}

template <typename S>
inline S k_clamp(S x, S lo, S hi) {
  return x < lo ? lo : (x > hi ? hi : x);
}

}  // namespace evalk

// Batched evaluation result. Numeric payloads are batch-major (env b's
// components at data[b*dim .. b*dim+dim)); booleans live in bools.
template <typename S>
struct BatchValue {
  int dim = 1;
  bool is_bool = false;
  std::vector<S> data;
  std::vector<uint8_t> bools;
};

// Per-env value for the reference interpreter.
template <typename S>
struct RowValue {
  int dim = 1;
  bool is_bool = false;
  std::array<S, 4> v{};
  bool b = false;
};

namespace detail {

template <typename S>
inline S col_read(const FeatureColumn& c, int env, int k) {
  return static_cast<S>(c.data[static_cast<size_t>(env) * c.stride + k]);
}

}  // namespace detail

// Evaluates `e` for every environment in the batch. The expression must
// typecheck against the table; dimension faults raise ContractError.
template <typename S>
BatchValue<S> eval_batch(const Expr& e, const FeatureTable& table, EvalDiag* diag = nullptr) {
  using namespace evalk;
  const int B = table.batch;
  BatchValue<S> out;
  switch (e.kind) {
    case Expr::Kind::Constant: {
      out.dim = 1;
      out.data.assign(static_cast<size_t>(B), static_cast<S>(e.constant));
      return out;
    }
    case Expr::Kind::Feature: {
      auto it = table.columns.find(e.feature_key());
      if (it == table.columns.end())
        throw ContractError("eval: unknown feature '" + e.feature_key() + "'");
      const FeatureColumn& c = it->second;
      out.dim = c.dim;
      out.data.resize(static_cast<size_t>(B) * c.dim);
      for (int b = 0; b < B; ++b)
        for (int k = 0; k < c.dim; ++k) out.data[static_cast<size_t>(b) * c.dim + k] = detail::col_read<S>(c, b, k);
      return out;
    }
    case Expr::Kind::Unary: {
      BatchValue<S> c = eval_batch<S>(*e.args[0], table, diag);
      if (e.un_op == UnOp::Not) {
        if (!c.is_bool) throw ContractError("eval: '!' on non-boolean");
        out.is_bool = true;
        out.bools.resize(c.bools.size());
        for (size_t k = 0; k < c.bools.size(); ++k) out.bools[k] = c.bools[k] ? 0 : 1;
        return out;
      }
      out.dim = c.dim;
      out.data.resize(c.data.size());
      for (size_t k = 0; k < c.data.size(); ++k) out.data[k] = -c.data[k];
      return out;
    }
    case Expr::Kind::Binary: {
      BatchValue<S> l = eval_batch<S>(*e.args[0], table, diag);
      BatchValue<S> r = eval_batch<S>(*e.args[1], table, diag);
      if (l.is_bool || r.is_bool) throw ContractError("eval: boolean used arithmetically");
      const int dim = std::max(l.dim, r.dim);
      if (l.dim != r.dim && l.dim != 1 && r.dim != 1)
        throw ContractError("eval: dimension mismatch");
      out.dim = dim;
      out.data.resize(static_cast<size_t>(B) * dim);
      const int ls = l.dim == 1 ? 0 : 1;  // broadcast selector
      const int rs = r.dim == 1 ? 0 : 1;
      for (int b = 0; b < B; ++b) {
        for (int k = 0; k < dim; ++k) {
          const S a = l.data[static_cast<size_t>(b) * l.dim + k * ls];
          const S c = r.data[static_cast<size_t>(b) * r.dim + k * rs];
          S v;
          switch (e.bin_op) {
            case BinOp::Add:
              v = a + c;
              break;
            case BinOp::Sub:
              v = a - c;
              break;
            case BinOp::Mul:
              v = a * c;
              break;
            case BinOp::Div:
              v = k_div(a, c, diag);
              break;
          }
          out.data[static_cast<size_t>(b) * dim + k] = v;
        }
      }
      return out;
    }
    case Expr::Kind::Compare: {
      BatchValue<S> l = eval_batch<S>(*e.args[0], table, diag);
      BatchValue<S> r = eval_batch<S>(*e.args[1], table, diag);
      if (l.dim != 1 || r.dim != 1 || l.is_bool || r.is_bool)
        throw ContractError("eval: comparison requires scalars");
      out.is_bool = true;
      out.bools.resize(static_cast<size_t>(B));
      for (int b = 0; b < B; ++b) {
        const S a = l.data[b], c = r.data[b];
        bool v = false;
        switch (e.cmp_op) {
          case CmpOp::Lt:
            v = a < c;
            break;
          case CmpOp::Gt:
            v = a > c;
            break;
          case CmpOp::Le:
            v = a <= c;
            break;
          case CmpOp::Ge:
            v = a >= c;
            break;
        }
        out.bools[b] = v ? 1 : 0;
      }
      return out;
    }
    case Expr::Kind::Logic: {
      BatchValue<S> l = eval_batch<S>(*e.args[0], table, diag);
      BatchValue<S> r = eval_batch<S>(*e.args[1], table, diag);
      if (!l.is_bool || !r.is_bool) throw ContractError("eval: logic on non-booleans");
      out.is_bool = true;
      out.bools.resize(static_cast<size_t>(B));
      for (int b = 0; b < B; ++b) {
        out.bools[b] = (e.bool_op == BoolOp::And) ? (l.bools[b] && r.bools[b])
                                                  : (l.bools[b] || r.bools[b]);
      }
      return out;
    }
    case Expr::Kind::Call: {
      std::vector<BatchValue<S>> a;
      a.reserve(e.args.size());
      for (const auto& arg : e.args) a.push_back(eval_batch<S>(*arg, table, diag));
      out.dim = 1;
      out.data.resize(static_cast<size_t>(B));
      for (int b = 0; b < B; ++b) {
        S v = S(0);
        switch (e.fn) {
          case Fn::Norm:
            v = k_norm(a[0].data.data() + static_cast<size_t>(b) * a[0].dim, a[0].dim);
            break;
          case Fn::Dot:
            v = k_dot(a[0].data.data() + static_cast<size_t>(b) * a[0].dim,
                      a[1].data.data() + static_cast<size_t>(b) * a[1].dim, a[0].dim);
            break;
          case Fn::Tanh:
            v = std::tanh(a[0].data[b]);
            break;
          case Fn::Exp:
            v = std::exp(a[0].data[b]);
            break;
          case Fn::Abs:
            v = std::abs(a[0].data[b]);
            break;
          case Fn::Sqrt:
            v = k_sqrt(a[0].data[b], diag);
            break;
          case Fn::Min:
            v = std::min(a[0].data[b], a[1].data[b]);
            break;
          case Fn::Max:
            v = std::max(a[0].data[b], a[1].data[b]);
            break;
          case Fn::Clamp:
            v = k_clamp(a[0].data[b], a[1].data[b], a[2].data[b]);
            break;
        }
        out.data[b] = v;
      }
      return out;
    }
    case Expr::Kind::Index: {
      BatchValue<S> c = eval_batch<S>(*e.args[0], table, diag);
      if (e.index_lo >= c.dim) throw ContractError("eval: index out of range");
      out.dim = 1;
      out.data.resize(static_cast<size_t>(B));
      for (int b = 0; b < B; ++b) out.data[b] = c.data[static_cast<size_t>(b) * c.dim + e.index_lo];
      return out;
    }
    case Expr::Kind::Slice: {
      BatchValue<S> c = eval_batch<S>(*e.args[0], table, diag);
      if (e.index_hi > c.dim || e.index_lo >= e.index_hi)
        throw ContractError("eval: slice out of range");
      const int dim = e.index_hi - e.index_lo;
      out.dim = dim;
      out.data.resize(static_cast<size_t>(B) * dim);
      for (int b = 0; b < B; ++b)
        for (int k = 0; k < dim; ++k)
          out.data[static_cast<size_t>(b) * dim + k] =
              c.data[static_cast<size_t>(b) * c.dim + e.index_lo + k];
      return out;
    }
  }
  throw ContractError("eval: unreachable");
}

// Straight-line single-env interpreter. Applies the same scalar kernels in
// the same order as eval_batch, so the results agree bit-for-bit.
template <typename S>
RowValue<S> eval_row(const Expr& e, const FeatureTable& table, int env, EvalDiag* diag = nullptr) {
  using namespace evalk;
  RowValue<S> out;
  switch (e.kind) {
    case Expr::Kind::Constant:
      out.v[0] = static_cast<S>(e.constant);
      return out;
    case Expr::Kind::Feature: {
      auto it = table.columns.find(e.feature_key());
      if (it == table.columns.end())
        throw ContractError("eval: unknown feature '" + e.feature_key() + "'");
      const FeatureColumn& c = it->second;
      out.dim = c.dim;
      for (int k = 0; k < c.dim; ++k) out.v[k] = detail::col_read<S>(c, env, k);
      return out;
    }
    case Expr::Kind::Unary: {
      RowValue<S> c = eval_row<S>(*e.args[0], table, env, diag);
      if (e.un_op == UnOp::Not) {
        out.is_bool = true;
        out.b = !c.b;
        return out;
      }
      out.dim = c.dim;
      for (int k = 0; k < c.dim; ++k) out.v[k] = -c.v[k];
      return out;
    }
    case Expr::Kind::Binary: {
      RowValue<S> l = eval_row<S>(*e.args[0], table, env, diag);
      RowValue<S> r = eval_row<S>(*e.args[1], table, env, diag);
      const int dim = std::max(l.dim, r.dim);
      out.dim = dim;
      const int ls = l.dim == 1 ? 0 : 1;
      const int rs = r.dim == 1 ? 0 : 1;
      for (int k = 0; k < dim; ++k) {
        const S a = l.v[k * ls], c = r.v[k * rs];
        switch (e.bin_op) {
          case BinOp::Add:
            out.v[k] = a + c;
            break;
          case BinOp::Sub:
            out.v[k] = a - c;
            break;
          case BinOp::Mul:
            out.v[k] = a * c;
            break;
          case BinOp::Div:
            out.v[k] = k_div(a, c, diag);
            break;
        }
      }
      return out;
    }
    case Expr::Kind::Compare: {
      RowValue<S> l = eval_row<S>(*e.args[0], table, env, diag);
      RowValue<S> r = eval_row<S>(*e.args[1], table, env, diag);
      out.is_bool = true;
      switch (e.cmp_op) {
        case CmpOp::Lt:
          out.b = l.v[0] < r.v[0];
          break;
        case CmpOp::Gt:
          out.b = l.v[0] > r.v[0];
          break;
        case CmpOp::Le:
          out.b = l.v[0] <= r.v[0];
          break;
        case CmpOp::Ge:
          out.b = l.v[0] >= r.v[0];
          break;
      }
      return out;
    }
    case Expr::Kind::Logic: {
      RowValue<S> l = eval_row<S>(*e.args[0], table, env, diag);
      RowValue<S> r = eval_row<S>(*e.args[1], table, env, diag);
      out.is_bool = true;
      out.b = (e.bool_op == BoolOp::And) ? (l.b && r.b) : (l.b || r.b);
      return out;
    }
    case Expr::Kind::Call: {
      std::vector<RowValue<S>> a;
      a.reserve(e.args.size());
      for (const auto& arg : e.args) a.push_back(eval_row<S>(*arg, table, env, diag));
      switch (e.fn) {
        case Fn::Norm:
          out.v[0] = k_norm(a[0].v.data(), a[0].dim);
          break;
        case Fn::Dot:
          out.v[0] = k_dot(a[0].v.data(), a[1].v.data(), a[0].dim);
          break;
        case Fn::Tanh:
          out.v[0] = std::tanh(a[0].v[0]);
          break;
        case Fn::Exp:
          out.v[0] = std::exp(a[0].v[0]);
          break;
        case Fn::Abs:
          out.v[0] = std::abs(a[0].v[0]);
          break;
        case Fn::Sqrt:
          out.v[0] = k_sqrt(a[0].v[0], diag);
          break;
        case Fn::Min:
          out.v[0] = std::min(a[0].v[0], a[1].v[0]);
          break;
        case Fn::Max:
          out.v[0] = std::max(a[0].v[0], a[1].v[0]);
          break;
        case Fn::Clamp:
          out.v[0] = k_clamp(a[0].v[0], a[1].v[0], a[2].v[0]);
          break;
      }
      return out;
    }
    case Expr::Kind::Index: {
      RowValue<S> c = eval_row<S>(*e.args[0], table, env, diag);
      out.v[0] = c.v[e.index_lo];
      return out;
    }
    case Expr::Kind::Slice: {
      RowValue<S> c = eval_row<S>(*e.args[0], table, env, diag);
      out.dim = e.index_hi - e.index_lo;
      for (int k = 0; k < out.dim; ++k) out.v[k] = c.v[e.index_lo + k];
      return out;
    }
  }
  throw ContractError("eval: unreachable");
}

}  // namespace v2p
