#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lcgn/errors.hpp"
#include "lcgn/gemm.hpp"

namespace lcgn {

using Shape = std::vector<std::int64_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

inline std::int64_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::int64_t{1},
                         std::multiplies<>());
}

namespace detail {

template <typename S>
struct Buffer {
  std::vector<S> data;
  std::vector<S> grad;  // allocated lazily, same length as data
  bool requires_grad = false;
};

}  // namespace detail

// Dense row-major tensor. The handle owns the shape; data and gradient live
// in a shared buffer, so reshaped views accumulate into the same gradient.
template <typename S>
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<S> data, bool requires_grad = false)
      : shape_(std::move(shape)), buf_(std::make_shared<detail::Buffer<S>>()) {
    if (shape_numel(shape_) != static_cast<std::int64_t>(data.size()))
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape_));
    buf_->data = std::move(data);
    buf_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape),
                  std::vector<S>(static_cast<std::size_t>(n), S(0)),
                  requires_grad);
  }

  static Tensor full(Shape shape, S value, bool requires_grad = false) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape),
                  std::vector<S>(static_cast<std::size_t>(n), value),
                  requires_grad);
  }

  static Tensor scalar(S value, bool requires_grad = false) {
    return Tensor(Shape{1}, std::vector<S>{value}, requires_grad);
  }

  bool defined() const { return buf_ != nullptr; }
  const Shape& shape() const { return shape_; }
  std::int64_t ndim() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t dim(std::int64_t i) const {
    return shape_.at(static_cast<std::size_t>(i >= 0 ? i : ndim() + i));
  }
  std::int64_t numel() const { return shape_numel(shape_); }

  std::span<const S> data() const { return {buf_->data}; }
  std::span<S> mutable_data() { return {buf_->data}; }

  bool requires_grad() const { return buf_ && buf_->requires_grad; }
  void set_requires_grad(bool v) { buf_->requires_grad = v; }

  std::span<S> grad() {
    ensure_grad();
    return {buf_->grad};
  }
  std::span<const S> grad_view() const { return {buf_->grad}; }
  bool has_grad() const { return buf_ && !buf_->grad.empty(); }

  void ensure_grad() {
    if (buf_->grad.empty()) buf_->grad.assign(buf_->data.size(), S(0));
  }

  void zero_grad() {
    if (buf_ && !buf_->grad.empty())
      std::fill(buf_->grad.begin(), buf_->grad.end(), S(0));
  }

  // Shares the buffer: gradients flow into the same storage.
  Tensor reshape(Shape shape) const {
    if (shape_numel(shape) != numel())
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " +
                       shape_str(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.buf_ = buf_;
    return t;
  }

  Tensor clone() const { return Tensor(shape_, buf_->data, requires_grad()); }

  S item() const {
    if (numel() != 1)
      throw ContractError("item() requires a scalar tensor, got " +
                          shape_str(shape_));
    return buf_->data[0];
  }

  bool same_buffer(const Tensor& other) const { return buf_ == other.buf_; }

 private:
  Shape shape_;
  std::shared_ptr<detail::Buffer<S>> buf_;
};

// Ordered record of backward rules. Operations executed under an active
// TapeScope append one node each, so program order is topological order and
// one reverse sweep visits every node exactly once.
template <typename S>
class Tape {
 public:
  void record(std::function<void()> backward) {
    nodes_.push_back(std::move(backward));
  }

  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  void clear() { nodes_.clear(); }

  void backward(Tensor<S> loss) {
    if (loss.numel() != 1)
      throw ContractError("backward() requires a scalar loss, got " +
                          shape_str(loss.shape()));
    if (nodes_.empty()) throw ContractError("backward() on an empty tape");
    loss.grad()[0] += S(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

 private:
  std::vector<std::function<void()>> nodes_;
};

namespace detail {

template <typename S>
inline Tape<S>*& active_tape() {
  thread_local Tape<S>* tape = nullptr;
  return tape;
}

}  // namespace detail

// Activates a tape for the current thread for the scope's lifetime.
template <typename S>
class TapeScope {
 public:
  explicit TapeScope(Tape<S>& tape) : prev_(detail::active_tape<S>()) {
    detail::active_tape<S>() = &tape;
  }
  ~TapeScope() { detail::active_tape<S>() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<S>* prev_;
};

namespace detail {

template <typename S>
bool tracking(std::initializer_list<const Tensor<S>*> inputs) {
  if (active_tape<S>() == nullptr) return false;
  for (const auto* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

template <typename S>
void record_node(Tensor<S>& out, std::function<void()> backward) {
  out.set_requires_grad(true);
  out.ensure_grad();
  active_tape<S>()->record(std::move(backward));
}

template <typename S>
void gemm_i64(bool ta, bool tb, std::int64_t m, std::int64_t n, std::int64_t k,
              S alpha, const S* a, std::int64_t lda, const S* b,
              std::int64_t ldb, S beta, S* c, std::int64_t ldc) {
  gemm(ta, tb, static_cast<int>(m), static_cast<int>(n), static_cast<int>(k),
       alpha, a, static_cast<int>(lda), b, static_cast<int>(ldb), beta, c,
       static_cast<int>(ldc));
}

// Right-aligned broadcast: dims of size 1 (or missing leading dims) stretch
// to the result dimension.
inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t n = std::max(a.size(), b.size());
  Shape out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::int64_t da = i < n - a.size() ? 1 : a[i - (n - a.size())];
    const std::int64_t db = i < n - b.size() ? 1 : b[i - (n - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ShapeError("shapes " + shape_str(a) + " and " + shape_str(b) +
                       " are not broadcast-compatible");
    out[i] = std::max(da, db);
  }
  return out;
}

// Row-major strides with 0 on broadcast dims, padded to `rank` dims.
inline std::vector<std::int64_t> broadcast_strides(const Shape& s,
                                                   std::size_t rank) {
  std::vector<std::int64_t> st(rank, 0);
  std::int64_t acc = 1;
  for (std::size_t i = s.size(); i-- > 0;) {
    st[rank - s.size() + i] = (s[i] == 1) ? 0 : acc;
    acc *= s[i];
  }
  return st;
}

// Calls fn(out_offset, a_offset, b_offset) for every element of out_shape.
// Adjacent dimensions whose strides compose contiguously are merged first,
// so the common broadcast patterns run as two or three tight loops.
template <typename Fn>
void broadcast_iter(const Shape& out_shape,
                    const std::vector<std::int64_t>& sa,
                    const std::vector<std::int64_t>& sb, Fn&& fn) {
  const std::size_t rank = out_shape.size();
  const std::int64_t total = shape_numel(out_shape);
  if (total == 0) return;

  // Merge adjacent dims (i, i+1) when both operand strides compose, i.e.
  // s[i] == s[i+1] * dim[i+1] for a and b alike.
  std::int64_t dims[8], ma[8], mb[8];
  int r = 0;
  for (std::size_t d = 0; d < rank; ++d) {
    if (out_shape[d] == 1 && rank > 1) continue;
    if (r > 0 && ma[r - 1] == sa[d] * out_shape[d] &&
        mb[r - 1] == sb[d] * out_shape[d]) {
      dims[r - 1] *= out_shape[d];
      ma[r - 1] = sa[d];
      mb[r - 1] = sb[d];
    } else if (r < 8) {
      dims[r] = out_shape[d];
      ma[r] = sa[d];
      mb[r] = sb[d];
      ++r;
    } else {
      // More than eight unmergeable dims never occurs in this model.
      throw ShapeError("broadcast rank too high");
    }
  }
  if (r == 0) {
    dims[0] = 1;
    ma[0] = mb[0] = 0;
    r = 1;
  }

  std::int64_t lin = 0;
  switch (r) {
    case 1: {
      for (std::int64_t i = 0; i < dims[0]; ++i)
        fn(lin++, i * ma[0], i * mb[0]);
      return;
    }
    case 2: {
      for (std::int64_t i = 0; i < dims[0]; ++i) {
        const std::int64_t oa = i * ma[0], ob = i * mb[0];
        for (std::int64_t j = 0; j < dims[1]; ++j)
          fn(lin++, oa + j * ma[1], ob + j * mb[1]);
      }
      return;
    }
    case 3: {
      for (std::int64_t i = 0; i < dims[0]; ++i)
        for (std::int64_t j = 0; j < dims[1]; ++j) {
          const std::int64_t oa = i * ma[0] + j * ma[1],
                             ob = i * mb[0] + j * mb[1];
          for (std::int64_t k = 0; k < dims[2]; ++k)
            fn(lin++, oa + k * ma[2], ob + k * mb[2]);
        }
      return;
    }
    default: {
      std::vector<std::int64_t> idx(static_cast<std::size_t>(r), 0);
      std::int64_t oa = 0, ob = 0;
      for (std::int64_t n = 0; n < total; ++n) {
        fn(lin++, oa, ob);
        for (int d = r; d-- > 0;) {
          ++idx[static_cast<std::size_t>(d)];
          oa += ma[d];
          ob += mb[d];
          if (idx[static_cast<std::size_t>(d)] < dims[d]) break;
          oa -= ma[d] * dims[d];
          ob -= mb[d] * dims[d];
          idx[static_cast<std::size_t>(d)] = 0;
        }
      }
      return;
    }
  }
}

// Offsets of each length-`n` row of a tensor broadcast to rows x n, where
// `strides` came from broadcast_strides against the full output shape.
inline void row_offsets(const Shape& out_shape,
                        const std::vector<std::int64_t>& strides,
                        std::vector<std::int64_t>& out) {
  const std::size_t rank = out_shape.size();
  const std::int64_t rows =
      shape_numel(out_shape) / out_shape[rank - 1];
  out.assign(static_cast<std::size_t>(rows), 0);
  std::vector<std::int64_t> idx(rank - 1, 0);
  std::int64_t off = 0;
  for (std::int64_t r = 0; r < rows; ++r) {
    out[static_cast<std::size_t>(r)] = off;
    for (std::size_t d = rank - 1; d-- > 0;) {
      ++idx[d];
      off += strides[d];
      if (idx[d] < out_shape[d]) break;
      off -= strides[d] * out_shape[d];
      idx[d] = 0;
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Matrix products

// 2-D matrix product with optional operand transposes (at most one).
// Backward accumulates a.grad += g . b^T and b.grad += a^T . g in the plain
// case, with the matching transposed forms otherwise.
template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b, bool ta = false,
                 bool tb = false) {
  if (a.ndim() != 2 || b.ndim() != 2)
    throw ShapeError("matmul expects 2-D operands, got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  if (ta && tb) throw ContractError("matmul: ta and tb cannot both be set");
  const std::int64_t m = ta ? a.dim(1) : a.dim(0);
  const std::int64_t k = ta ? a.dim(0) : a.dim(1);
  const std::int64_t kb = tb ? b.dim(1) : b.dim(0);
  const std::int64_t n = tb ? b.dim(0) : b.dim(1);
  if (k != kb)
    throw ShapeError(std::string("matmul inner dimensions differ: ") +
                     shape_str(a.shape()) + (ta ? "^T" : "") + " x " +
                     shape_str(b.shape()) + (tb ? "^T" : ""));

  Tensor<S> out = Tensor<S>::zeros({m, n});
  detail::gemm_i64(ta, tb, m, n, k, S(1), a.data().data(), a.dim(1),
                   b.data().data(), b.dim(1), S(0), out.mutable_data().data(),
                   n);

  if (detail::tracking<S>({&a, &b})) {
    Tensor<S> ac = a, bc = b, oc = out;
    detail::record_node(out, [ac, bc, oc, ta, tb, m, n, k]() mutable {
      const S* g = oc.grad().data();
      if (ac.requires_grad()) {
        S* da = ac.grad().data();
        if (!ta && !tb)  // dA += g . B^T
          detail::gemm_i64(false, true, m, k, n, S(1), g, n, bc.data().data(),
                           bc.dim(1), S(1), da, ac.dim(1));
        else if (!ta && tb)  // dA += g . B
          detail::gemm_i64(false, false, m, k, n, S(1), g, n, bc.data().data(),
                           bc.dim(1), S(1), da, ac.dim(1));
        else  // ta: A stored [k,m]; dA += B . g^T
          detail::gemm_i64(false, true, k, m, n, S(1), bc.data().data(),
                           bc.dim(1), g, n, S(1), da, ac.dim(1));
      }
      if (bc.requires_grad()) {
        S* db = bc.grad().data();
        if (!ta && !tb)  // dB += A^T . g
          detail::gemm_i64(true, false, k, n, m, S(1), ac.data().data(),
                           ac.dim(1), g, n, S(1), db, bc.dim(1));
        else if (!ta && tb)  // B stored [n,k]; dB += g^T . A
          detail::gemm_i64(true, false, n, k, m, S(1), g, n, ac.data().data(),
                           ac.dim(1), S(1), db, bc.dim(1));
        else  // ta: dB += A . g
          detail::gemm_i64(false, false, k, n, m, S(1), ac.data().data(),
                           ac.dim(1), g, n, S(1), db, bc.dim(1));
      }
    });
  }
  return out;
}

// Batched 3-D matrix product over a shared leading dimension.
template <typename S>
Tensor<S> bmm(const Tensor<S>& a, const Tensor<S>& b, bool ta = false,
              bool tb = false) {
  if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0))
    throw ShapeError("bmm expects 3-D operands with equal batch, got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  if (ta && tb) throw ContractError("bmm: ta and tb cannot both be set");
  const std::int64_t batch = a.dim(0);
  const std::int64_t m = ta ? a.dim(2) : a.dim(1);
  const std::int64_t k = ta ? a.dim(1) : a.dim(2);
  const std::int64_t kb = tb ? b.dim(2) : b.dim(1);
  const std::int64_t n = tb ? b.dim(1) : b.dim(2);
  if (k != kb)
    throw ShapeError(std::string("bmm inner dimensions differ: ") +
                     shape_str(a.shape()) + (ta ? "^T" : "") + " x " +
                     shape_str(b.shape()) + (tb ? "^T" : ""));

  Tensor<S> out = Tensor<S>::zeros({batch, m, n});
  const std::int64_t as = a.dim(1) * a.dim(2), bs = b.dim(1) * b.dim(2),
                     os = m * n;
  for (std::int64_t i = 0; i < batch; ++i)
    detail::gemm_i64(ta, tb, m, n, k, S(1), a.data().data() + i * as,
                     a.dim(2), b.data().data() + i * bs, b.dim(2), S(0),
                     out.mutable_data().data() + i * os, n);

  if (detail::tracking<S>({&a, &b})) {
    Tensor<S> ac = a, bc = b, oc = out;
    detail::record_node(
        out, [ac, bc, oc, ta, tb, batch, m, n, k, as, bs, os]() mutable {
          for (std::int64_t i = 0; i < batch; ++i) {
            const S* g = oc.grad().data() + i * os;
            const S* av = ac.data().data() + i * as;
            const S* bv = bc.data().data() + i * bs;
            if (ac.requires_grad()) {
              S* da = ac.grad().data() + i * as;
              if (!ta && !tb)
                detail::gemm_i64(false, true, m, k, n, S(1), g, n, bv,
                                 bc.dim(2), S(1), da, ac.dim(2));
              else if (!ta && tb)
                detail::gemm_i64(false, false, m, k, n, S(1), g, n, bv,
                                 bc.dim(2), S(1), da, ac.dim(2));
              else
                detail::gemm_i64(false, true, k, m, n, S(1), bv, bc.dim(2), g,
                                 n, S(1), da, ac.dim(2));
            }
            if (bc.requires_grad()) {
              S* db = bc.grad().data() + i * bs;
              if (!ta && !tb)
                detail::gemm_i64(true, false, k, n, m, S(1), av, ac.dim(2), g,
                                 n, S(1), db, bc.dim(2));
              else if (!ta && tb)
                detail::gemm_i64(true, false, n, k, m, S(1), g, n, av,
                                 ac.dim(2), S(1), db, bc.dim(2));
              else
                detail::gemm_i64(false, false, k, n, m, S(1), av, ac.dim(2),
                                 g, n, S(1), db, bc.dim(2));
            }
          }
        });
  }
  return out;
}

// x [..., in] times W^T for a weight stored [out, in], the layout every
// parameter table entry uses.
template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w) {
  if (w.ndim() != 2)
    throw ShapeError("linear expects a 2-D weight, got " +
                     shape_str(w.shape()));
  if (x.dim(-1) != w.dim(1))
    throw ShapeError("linear input width " + shape_str(x.shape()) +
                     " does not match weight " + shape_str(w.shape()));
  Shape out_shape = x.shape();
  out_shape.back() = w.dim(0);
  const std::int64_t rows = x.numel() / x.dim(-1);
  Tensor<S> x2 = x.reshape({rows, x.dim(-1)});
  return matmul(x2, w, false, true).reshape(std::move(out_shape));
}

// ---------------------------------------------------------------------------
// Elementwise operations (broadcasting: trailing dims and size-1 dims)

namespace detail {

template <typename S, typename FwdFn, typename BwdFn>
Tensor<S> binary_broadcast(const Tensor<S>& a, const Tensor<S>& b, FwdFn fwd,
                           BwdFn bwd) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const auto sa = broadcast_strides(a.shape(), out_shape.size());
  const auto sb = broadcast_strides(b.shape(), out_shape.size());
  Tensor<S> out = Tensor<S>::zeros(out_shape);
  {
    S* o = out.mutable_data().data();
    const S* av = a.data().data();
    const S* bv = b.data().data();
    broadcast_iter(out_shape, sa, sb,
                   [&](std::int64_t lin, std::int64_t oa, std::int64_t ob) {
                     o[lin] = fwd(av[oa], bv[ob]);
                   });
  }
  if (tracking<S>({&a, &b})) {
    Tensor<S> ac = a, bc = b, oc = out;
    record_node(out, [ac, bc, oc, out_shape, sa, sb, bwd]() mutable {
      const S* g = oc.grad().data();
      const S* av = ac.data().data();
      const S* bv = bc.data().data();
      S* da = ac.requires_grad() ? ac.grad().data() : nullptr;
      S* db = bc.requires_grad() ? bc.grad().data() : nullptr;
      broadcast_iter(out_shape, sa, sb,
                     [&](std::int64_t lin, std::int64_t oa, std::int64_t ob) {
                       bwd(g[lin], av[oa], bv[ob], da ? da + oa : nullptr,
                           db ? db + ob : nullptr);
                     });
    });
  }
  return out;
}

}  // namespace detail

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary_broadcast(
      a, b, [](S x, S y) { return x + y; },
      [](S g, S, S, S* da, S* db) {
        if (da) *da += g;
        if (db) *db += g;
      });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary_broadcast(
      a, b, [](S x, S y) { return x - y; },
      [](S g, S, S, S* da, S* db) {
        if (da) *da += g;
        if (db) *db -= g;
      });
}

// Elementwise (Hadamard) product.
template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary_broadcast(
      a, b, [](S x, S y) { return x * y; },
      [](S g, S x, S y, S* da, S* db) {
        if (da) *da += g * y;
        if (db) *db += g * x;
      });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S c) {
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  const S* av = a.data().data();
  S* o = out.mutable_data().data();
  for (std::int64_t i = 0; i < a.numel(); ++i) o[i] = c * av[i];
  if (detail::tracking<S>({&a})) {
    Tensor<S> ac = a, oc = out;
    detail::record_node(out, [ac, oc, c]() mutable {
      const S* g = oc.grad().data();
      S* da = ac.grad().data();
      for (std::int64_t i = 0; i < ac.numel(); ++i) da[i] += c * g[i];
    });
  }
  return out;
}

namespace detail {

template <typename S, typename FwdFn, typename BwdFn>
Tensor<S> unary_op(const Tensor<S>& a, FwdFn fwd, BwdFn bwd_from_xy) {
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  const S* av = a.data().data();
  S* o = out.mutable_data().data();
  for (std::int64_t i = 0; i < a.numel(); ++i) o[i] = fwd(av[i]);
  if (tracking<S>({&a})) {
    Tensor<S> ac = a, oc = out;
    record_node(out, [ac, oc, bwd_from_xy]() mutable {
      const S* g = oc.grad().data();
      const S* x = ac.data().data();
      const S* y = oc.data().data();
      S* da = ac.grad().data();
      for (std::int64_t i = 0; i < ac.numel(); ++i)
        da[i] += g[i] * bwd_from_xy(x[i], y[i]);
    });
  }
  return out;
}

}  // namespace detail

template <typename S>
Tensor<S> relu(const Tensor<S>& a) {
  return detail::unary_op(
      a, [](S x) { return x > S(0) ? x : S(0); },
      [](S x, S) { return x > S(0) ? S(1) : S(0); });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& a) {
  return detail::unary_op(
      a,
      [](S x) {
        return x >= S(0) ? S(1) / (S(1) + std::exp(-x))
                         : std::exp(x) / (S(1) + std::exp(x));
      },
      [](S, S y) { return y * (S(1) - y); });
}

template <typename S>
Tensor<S> tanh(const Tensor<S>& a) {
  return detail::unary_op(a, [](S x) { return std::tanh(x); },
                          [](S, S y) { return S(1) - y * y; });
}

// ---------------------------------------------------------------------------
// Concatenation / slicing / stacking

template <typename S>
Tensor<S> concat_lastdim(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw ContractError("concat_lastdim: no operands");
  Shape lead = parts[0].shape();
  lead.pop_back();
  std::int64_t total_last = 0;
  for (const auto& p : parts) {
    Shape pl = p.shape();
    if (pl.empty()) throw ShapeError("concat_lastdim: scalar operand");
    pl.pop_back();
    if (pl != lead)
      throw ShapeError("concat_lastdim operands disagree on leading dims: " +
                       shape_str(parts[0].shape()) + " vs " +
                       shape_str(p.shape()));
    total_last += p.dim(-1);
  }
  Shape out_shape = lead;
  out_shape.push_back(total_last);
  Tensor<S> out = Tensor<S>::zeros(out_shape);
  const std::int64_t rows = out.numel() / total_last;
  {
    S* o = out.mutable_data().data();
    std::int64_t col = 0;
    for (const auto& p : parts) {
      const std::int64_t w = p.dim(-1);
      const S* pv = p.data().data();
      for (std::int64_t r = 0; r < rows; ++r)
        std::copy_n(pv + r * w, w, o + r * total_last + col);
      col += w;
    }
  }
  bool track = false;
  for (const auto& p : parts)
    track = track || detail::tracking<S>({&p});
  if (track) {
    std::vector<Tensor<S>> pc = parts;
    Tensor<S> oc = out;
    detail::record_node(out, [pc, oc, rows, total_last]() mutable {
      const S* g = oc.grad().data();
      std::int64_t col = 0;
      for (auto& p : pc) {
        const std::int64_t w = p.dim(-1);
        if (p.requires_grad()) {
          S* dp = p.grad().data();
          for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t j = 0; j < w; ++j)
              dp[r * w + j] += g[r * total_last + col + j];
        }
        col += w;
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> concat_lastdim(const Tensor<S>& a, const Tensor<S>& b) {
  return concat_lastdim(std::vector<Tensor<S>>{a, b});
}

template <typename S>
Tensor<S> concat_lastdim(const Tensor<S>& a, const Tensor<S>& b,
                         const Tensor<S>& c) {
  return concat_lastdim(std::vector<Tensor<S>>{a, b, c});
}

template <typename S>
Tensor<S> slice_lastdim(const Tensor<S>& a, std::int64_t offset,
                        std::int64_t len) {
  const std::int64_t w = a.dim(-1);
  if (offset < 0 || len <= 0 || offset + len > w)
    throw ShapeError("slice_lastdim [" + std::to_string(offset) + "," +
                     std::to_string(offset + len) + ") out of range for " +
                     shape_str(a.shape()));
  Shape out_shape = a.shape();
  out_shape.back() = len;
  Tensor<S> out = Tensor<S>::zeros(out_shape);
  const std::int64_t rows = a.numel() / w;
  {
    const S* av = a.data().data();
    S* o = out.mutable_data().data();
    for (std::int64_t r = 0; r < rows; ++r)
      std::copy_n(av + r * w + offset, len, o + r * len);
  }
  if (detail::tracking<S>({&a})) {
    Tensor<S> ac = a, oc = out;
    detail::record_node(out, [ac, oc, rows, w, offset, len]() mutable {
      const S* g = oc.grad().data();
      S* da = ac.grad().data();
      for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t j = 0; j < len; ++j)
          da[r * w + offset + j] += g[r * len + j];
    });
  }
  return out;
}

// Stacks T tensors of shape [B, d] into [B, T, d].
template <typename S>
Tensor<S> stack_dim1(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw ContractError("stack_dim1: no operands");
  const std::int64_t batch = parts[0].dim(0), d = parts[0].dim(1);
  for (const auto& p : parts)
    if (p.ndim() != 2 || p.dim(0) != batch || p.dim(1) != d)
      throw ShapeError("stack_dim1 operands must all be " +
                       shape_str({batch, d}) + ", got " +
                       shape_str(p.shape()));
  const std::int64_t steps = static_cast<std::int64_t>(parts.size());
  Tensor<S> out = Tensor<S>::zeros({batch, steps, d});
  {
    S* o = out.mutable_data().data();
    for (std::int64_t t = 0; t < steps; ++t) {
      const S* pv = parts[static_cast<std::size_t>(t)].data().data();
      for (std::int64_t b = 0; b < batch; ++b)
        std::copy_n(pv + b * d, d, o + (b * steps + t) * d);
    }
  }
  bool track = false;
  for (const auto& p : parts)
    track = track || detail::tracking<S>({&p});
  if (track) {
    std::vector<Tensor<S>> pc = parts;
    Tensor<S> oc = out;
    detail::record_node(out, [pc, oc, batch, steps, d]() mutable {
      const S* g = oc.grad().data();
      for (std::int64_t t = 0; t < steps; ++t) {
        auto& p = pc[static_cast<std::size_t>(t)];
        if (!p.requires_grad()) continue;
        S* dp = p.grad().data();
        for (std::int64_t b = 0; b < batch; ++b)
          for (std::int64_t j = 0; j < d; ++j)
            dp[b * d + j] += g[(b * steps + t) * d + j];
      }
    });
  }
  return out;
}

// Selects x[:, t, :] from [B, T, d].
template <typename S>
Tensor<S> select_dim1(const Tensor<S>& x, std::int64_t t) {
  if (x.ndim() != 3 || t < 0 || t >= x.dim(1))
    throw ShapeError("select_dim1: index " + std::to_string(t) +
                     " out of range for " + shape_str(x.shape()));
  const std::int64_t batch = x.dim(0), steps = x.dim(1), d = x.dim(2);
  Tensor<S> out = Tensor<S>::zeros({batch, d});
  {
    const S* xv = x.data().data();
    S* o = out.mutable_data().data();
    for (std::int64_t b = 0; b < batch; ++b)
      std::copy_n(xv + (b * steps + t) * d, d, o + b * d);
  }
  if (detail::tracking<S>({&x})) {
    Tensor<S> xc = x, oc = out;
    detail::record_node(out, [xc, oc, batch, steps, d, t]() mutable {
      const S* g = oc.grad().data();
      S* dx = xc.grad().data();
      for (std::int64_t b = 0; b < batch; ++b)
        for (std::int64_t j = 0; j < d; ++j)
          dx[(b * steps + t) * d + j] += g[b * d + j];
    });
  }
  return out;
}

// Gathers x[b, idx[b], :] from [B, N, d] into [B, d].
template <typename S>
Tensor<S> gather_dim1(const Tensor<S>& x,
                      const std::vector<std::int64_t>& idx) {
  if (x.ndim() != 3 ||
      static_cast<std::int64_t>(idx.size()) != x.dim(0))
    throw ShapeError("gather_dim1: index count " +
                     std::to_string(idx.size()) + " vs " +
                     shape_str(x.shape()));
  const std::int64_t batch = x.dim(0), n = x.dim(1), d = x.dim(2);
  for (auto i : idx)
    if (i < 0 || i >= n)
      throw ContractError("gather_dim1: index " + std::to_string(i) +
                          " out of range [0," + std::to_string(n) + ")");
  Tensor<S> out = Tensor<S>::zeros({batch, d});
  {
    const S* xv = x.data().data();
    S* o = out.mutable_data().data();
    for (std::int64_t b = 0; b < batch; ++b)
      std::copy_n(xv + (b * n + idx[static_cast<std::size_t>(b)]) * d, d,
                  o + b * d);
  }
  if (detail::tracking<S>({&x})) {
    Tensor<S> xc = x, oc = out;
    detail::record_node(out, [xc, oc, idx, batch, n, d]() mutable {
      const S* g = oc.grad().data();
      S* dx = xc.grad().data();
      for (std::int64_t b = 0; b < batch; ++b)
        for (std::int64_t j = 0; j < d; ++j)
          dx[(b * n + idx[static_cast<std::size_t>(b)]) * d + j] +=
              g[b * d + j];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Softmax and losses

namespace detail {

template <typename S>
inline bool mask_on(S v) {
  return v > S(0.5);
}

}  // namespace detail

// Softmax over the last dimension restricted to unmasked positions. The mask
// is a 0/1 tensor broadcastable to the logits shape; masked outputs are
// exactly 0; rows are stabilized by subtracting the row max. A fully masked
// row raises DegenerateRowError.
template <typename S>
Tensor<S> masked_softmax(const Tensor<S>& logits, const Tensor<S>& mask) {
  if (logits.ndim() == 0)
    throw ShapeError("masked_softmax expects at least 1-D logits");
  const Shape check = detail::broadcast_shape(logits.shape(), mask.shape());
  if (check != logits.shape())
    throw ShapeError("mask " + shape_str(mask.shape()) +
                     " does not broadcast to logits " +
                     shape_str(logits.shape()));
  const std::int64_t n = logits.dim(-1);
  const std::int64_t rows = logits.numel() / n;
  const auto ms = detail::broadcast_strides(mask.shape(),
                                            logits.shape().size());
  std::vector<std::int64_t> mbase;
  detail::row_offsets(logits.shape(), ms, mbase);
  const std::int64_t minner = ms.back();

  Tensor<S> out = Tensor<S>::zeros(logits.shape());
  {
    const S* lv = logits.data().data();
    const S* mv = mask.data().data();
    S* o = out.mutable_data().data();
    for (std::int64_t r = 0; r < rows; ++r) {
      const S* lr = lv + r * n;
      const S* mr = mv + mbase[static_cast<std::size_t>(r)];
      S mx = -std::numeric_limits<S>::infinity();
      bool any = false;
      for (std::int64_t j = 0; j < n; ++j)
        if (detail::mask_on(mr[j * minner])) {
          any = true;
          mx = std::max(mx, lr[j]);
        }
      if (!any)
        throw DegenerateRowError("masked_softmax: fully masked row " +
                                 std::to_string(r));
      S sum = S(0);
      S* orow = o + r * n;
      for (std::int64_t j = 0; j < n; ++j)
        if (detail::mask_on(mr[j * minner])) {
          orow[j] = std::exp(lr[j] - mx);
          sum += orow[j];
        }
      for (std::int64_t j = 0; j < n; ++j)
        if (detail::mask_on(mr[j * minner])) orow[j] /= sum;
    }
  }
  if (detail::tracking<S>({&logits})) {
    Tensor<S> lc = logits, mc = mask, oc = out;
    detail::record_node(out, [lc, mc, oc, rows, n, mbase, minner]() mutable {
      const S* g = oc.grad().data();
      const S* y = oc.data().data();
      const S* mv = mc.data().data();
      S* dl = lc.grad().data();
      for (std::int64_t r = 0; r < rows; ++r) {
        const S* mr = mv + mbase[static_cast<std::size_t>(r)];
        S dot = S(0);
        for (std::int64_t j = 0; j < n; ++j)
          if (detail::mask_on(mr[j * minner]))
            dot += g[r * n + j] * y[r * n + j];
        for (std::int64_t j = 0; j < n; ++j)
          if (detail::mask_on(mr[j * minner]))
            dl[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
      }
    });
  }
  return out;
}

// Per-row negative log softmax at the label: loss_b = lse(x_b) - x_b[label].
template <typename S>
Tensor<S> softmax_cross_entropy(const Tensor<S>& logits,
                                const std::vector<std::int64_t>& labels) {
  if (logits.ndim() != 2 ||
      static_cast<std::int64_t>(labels.size()) != logits.dim(0))
    throw ShapeError("softmax_cross_entropy expects [B,C] logits and B "
                     "labels, got " +
                     shape_str(logits.shape()) + " and " +
                     std::to_string(labels.size()));
  const std::int64_t batch = logits.dim(0), classes = logits.dim(1);
  for (auto l : labels)
    if (l < 0 || l >= classes)
      throw ContractError("label " + std::to_string(l) + " out of range [0," +
                          std::to_string(classes) + ")");
  Tensor<S> out = Tensor<S>::zeros({batch});
  {
    const S* xv = logits.data().data();
    S* o = out.mutable_data().data();
    for (std::int64_t b = 0; b < batch; ++b) {
      const S* row = xv + b * classes;
      const S mx = *std::max_element(row, row + classes);
      S sum = S(0);
      for (std::int64_t c = 0; c < classes; ++c) sum += std::exp(row[c] - mx);
      o[b] = mx + std::log(sum) - row[labels[static_cast<std::size_t>(b)]];
    }
  }
  if (detail::tracking<S>({&logits})) {
    Tensor<S> lc = logits, oc = out;
    detail::record_node(out, [lc, oc, labels, batch, classes]() mutable {
      const S* g = oc.grad().data();
      const S* xv = lc.data().data();
      S* dx = lc.grad().data();
      for (std::int64_t b = 0; b < batch; ++b) {
        const S* row = xv + b * classes;
        const S mx = *std::max_element(row, row + classes);
        S sum = S(0);
        for (std::int64_t c = 0; c < classes; ++c)
          sum += std::exp(row[c] - mx);
        for (std::int64_t c = 0; c < classes; ++c) {
          S p = std::exp(row[c] - mx) / sum;
          if (c == labels[static_cast<std::size_t>(b)]) p -= S(1);
          dx[b * classes + c] += g[b] * p;
        }
      }
    });
  }
  return out;
}

// Cross-entropy over unmasked positions only; the target must be unmasked.
template <typename S>
Tensor<S> masked_softmax_cross_entropy(const Tensor<S>& logits,
                                       const Tensor<S>& mask,
                                       const std::vector<std::int64_t>& targets) {
  if (logits.ndim() != 2 || mask.shape() != logits.shape() ||
      static_cast<std::int64_t>(targets.size()) != logits.dim(0))
    throw ShapeError("masked_softmax_cross_entropy expects matching [B,N] "
                     "logits and mask plus B targets");
  const std::int64_t batch = logits.dim(0), n = logits.dim(1);
  const S* mv = mask.data().data();
  for (std::int64_t b = 0; b < batch; ++b) {
    const auto t = targets[static_cast<std::size_t>(b)];
    if (t < 0 || t >= n)
      throw ContractError("target " + std::to_string(t) + " out of range");
    if (!detail::mask_on(mv[b * n + t]))
      throw ContractError("target " + std::to_string(t) + " is masked");
  }
  Tensor<S> out = Tensor<S>::zeros({batch});
  {
    const S* xv = logits.data().data();
    S* o = out.mutable_data().data();
    for (std::int64_t b = 0; b < batch; ++b) {
      const S* row = xv + b * n;
      const S* mrow = mv + b * n;
      S mx = -std::numeric_limits<S>::infinity();
      for (std::int64_t j = 0; j < n; ++j)
        if (detail::mask_on(mrow[j])) mx = std::max(mx, row[j]);
      S sum = S(0);
      for (std::int64_t j = 0; j < n; ++j)
        if (detail::mask_on(mrow[j])) sum += std::exp(row[j] - mx);
      o[b] = mx + std::log(sum) - row[targets[static_cast<std::size_t>(b)]];
    }
  }
  if (detail::tracking<S>({&logits})) {
    Tensor<S> lc = logits, mc = mask, oc = out;
    detail::record_node(out, [lc, mc, oc, targets, batch, n]() mutable {
      const S* g = oc.grad().data();
      const S* xv = lc.data().data();
      const S* m = mc.data().data();
      S* dx = lc.grad().data();
      for (std::int64_t b = 0; b < batch; ++b) {
        const S* row = xv + b * n;
        const S* mrow = m + b * n;
        S mx = -std::numeric_limits<S>::infinity();
        for (std::int64_t j = 0; j < n; ++j)
          if (detail::mask_on(mrow[j])) mx = std::max(mx, row[j]);
        S sum = S(0);
        for (std::int64_t j = 0; j < n; ++j)
          if (detail::mask_on(mrow[j])) sum += std::exp(row[j] - mx);
        for (std::int64_t j = 0; j < n; ++j) {
          if (!detail::mask_on(mrow[j])) continue;
          S p = std::exp(row[j] - mx) / sum;
          if (j == targets[static_cast<std::size_t>(b)]) p -= S(1);
          dx[b * n + j] += g[b] * p;
        }
      }
    });
  }
  return out;
}

// Per-row sum over classes of binary cross-entropy against a one-hot target.
template <typename S>
Tensor<S> sigmoid_cross_entropy_onehot(const Tensor<S>& logits,
                                       const std::vector<std::int64_t>& labels) {
  if (logits.ndim() != 2 ||
      static_cast<std::int64_t>(labels.size()) != logits.dim(0))
    throw ShapeError("sigmoid_cross_entropy_onehot expects [B,C] logits and "
                     "B labels");
  const std::int64_t batch = logits.dim(0), classes = logits.dim(1);
  for (auto l : labels)
    if (l < 0 || l >= classes)
      throw ContractError("label " + std::to_string(l) + " out of range [0," +
                          std::to_string(classes) + ")");
  Tensor<S> out = Tensor<S>::zeros({batch});
  {
    const S* xv = logits.data().data();
    S* o = out.mutable_data().data();
    for (std::int64_t b = 0; b < batch; ++b) {
      S acc = S(0);
      for (std::int64_t c = 0; c < classes; ++c) {
        const S x = xv[b * classes + c];
        const S t = (c == labels[static_cast<std::size_t>(b)]) ? S(1) : S(0);
        acc += std::max(x, S(0)) - x * t + std::log1p(std::exp(-std::abs(x)));
      }
      o[b] = acc;
    }
  }
  if (detail::tracking<S>({&logits})) {
    Tensor<S> lc = logits, oc = out;
    detail::record_node(out, [lc, oc, labels, batch, classes]() mutable {
      const S* g = oc.grad().data();
      const S* xv = lc.data().data();
      S* dx = lc.grad().data();
      for (std::int64_t b = 0; b < batch; ++b)
        for (std::int64_t c = 0; c < classes; ++c) {
          const S x = xv[b * classes + c];
          const S sig = x >= S(0) ? S(1) / (S(1) + std::exp(-x))
                                  : std::exp(x) / (S(1) + std::exp(x));
          const S t = (c == labels[static_cast<std::size_t>(b)]) ? S(1) : S(0);
          dx[b * classes + c] += g[b] * (sig - t);
        }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Embedding lookup and reductions

// Looks up rows of table [V, d]; output shape is prefix_shape + [d].
template <typename S>
Tensor<S> embedding(const Tensor<S>& table,
                    const std::vector<std::int64_t>& ids, Shape prefix_shape) {
  if (table.ndim() != 2)
    throw ShapeError("embedding table must be 2-D, got " +
                     shape_str(table.shape()));
  if (shape_numel(prefix_shape) != static_cast<std::int64_t>(ids.size()))
    throw ShapeError("embedding: id count does not match prefix shape");
  const std::int64_t vocab = table.dim(0), d = table.dim(1);
  for (auto id : ids)
    if (id < 0 || id >= vocab)
      throw ContractError("embedding id " + std::to_string(id) +
                          " out of range [0," + std::to_string(vocab) + ")");
  Shape out_shape = std::move(prefix_shape);
  out_shape.push_back(d);
  Tensor<S> out = Tensor<S>::zeros(out_shape);
  {
    const S* tv = table.data().data();
    S* o = out.mutable_data().data();
    for (std::size_t i = 0; i < ids.size(); ++i)
      std::copy_n(tv + ids[i] * d, d, o + static_cast<std::int64_t>(i) * d);
  }
  if (detail::tracking<S>({&table})) {
    Tensor<S> tc = table, oc = out;
    detail::record_node(out, [tc, oc, ids, d]() mutable {
      const S* g = oc.grad().data();
      S* dt = tc.grad().data();
      for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::int64_t j = 0; j < d; ++j)
          dt[ids[i] * d + j] += g[static_cast<std::int64_t>(i) * d + j];
    });
  }
  return out;
}

template <typename S>
Tensor<S> reduce_sum_all(const Tensor<S>& a) {
  Tensor<S> out = Tensor<S>::zeros({1});
  const S* av = a.data().data();
  S acc = S(0);
  for (std::int64_t i = 0; i < a.numel(); ++i) acc += av[i];
  out.mutable_data()[0] = acc;
  if (detail::tracking<S>({&a})) {
    Tensor<S> ac = a, oc = out;
    detail::record_node(out, [ac, oc]() mutable {
      const S g = oc.grad()[0];
      S* da = ac.grad().data();
      for (std::int64_t i = 0; i < ac.numel(); ++i) da[i] += g;
    });
  }
  return out;
}

template <typename S>
Tensor<S> reduce_mean_all(const Tensor<S>& a) {
  return scale(reduce_sum_all(a), S(1) / static_cast<S>(a.numel()));
}

// ---------------------------------------------------------------------------
// Non-differentiable helpers

// Argmax over the last dim restricted to unmasked positions; ties break
// toward the lowest index. Returns one index per row.
template <typename S>
std::vector<std::int64_t> argmax_lastdim_masked(const Tensor<S>& values,
                                                const Tensor<S>& mask) {
  const Shape check = detail::broadcast_shape(values.shape(), mask.shape());
  if (check != values.shape())
    throw ShapeError("argmax mask " + shape_str(mask.shape()) +
                     " does not broadcast to " + shape_str(values.shape()));
  const std::int64_t n = values.dim(-1);
  const std::int64_t rows = values.numel() / n;
  const auto ms = detail::broadcast_strides(mask.shape(),
                                            values.shape().size());
  std::vector<std::int64_t> mbase;
  detail::row_offsets(values.shape(), ms, mbase);
  const std::int64_t minner = ms.back();
  const S* vv = values.data().data();
  const S* mv = mask.data().data();
  std::vector<std::int64_t> out(static_cast<std::size_t>(rows), -1);
  for (std::int64_t r = 0; r < rows; ++r) {
    const S* row = vv + r * n;
    const S* mrow = mv + mbase[static_cast<std::size_t>(r)];
    std::int64_t best = -1;
    for (std::int64_t j = 0; j < n; ++j) {
      if (!detail::mask_on(mrow[j * minner])) continue;
      if (best < 0 || row[j] > row[best]) best = j;
    }
    if (best < 0)
      throw DegenerateRowError("argmax: fully masked row " +
                               std::to_string(r));
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

template <typename S>
bool all_finite(const Tensor<S>& t) {
  for (S v : t.data())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace lcgn
