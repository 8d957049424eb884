#include "clippo/autograd.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "clippo/errors.hpp"

namespace clippo::nn {

// ---------------------------------------------------------------------------
// Tape

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value, bool trainable) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = trainable;
  nodes_.push_back(std::move(node));
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::vector<std::uint32_t> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = std::any_of(inputs.begin(), inputs.end(), [&](auto i) { return nodes_[i].requires_grad; });
  if (node.requires_grad) node.backward = std::move(backward);
  node.inputs = std::move(inputs);
  if (check_finite_) {
    for (T v : node.value.data()) {
      if (!std::isfinite(v)) {
        throw ContractError("non-finite value produced by node " + std::to_string(nodes_.size()));
      }
    }
  }
  nodes_.push_back(std::move(node));
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Tensor<T> Tape<T>::grad(Var<T> v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.shape() == n.value.shape()) return n.grad;
  return Tensor<T>(n.value.shape());
}

template <typename T>
Tensor<T>& Tape<T>::grad_ref(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.shape() != n.value.shape() || n.grad.size() != n.value.size()) n.grad = Tensor<T>(n.value.shape());
  return n.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (loss.tape != this) throw ContractError("loss belongs to a different tape");
  if (nodes_[loss.id].value.size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_str(nodes_[loss.id].value.shape()));
  }
  grad_ref(loss.id)[0] += T(1);
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.backward || n.grad.size() != n.value.size()) continue;
    n.backward(*this, id);
  }
}

template <typename T>
void Tape<T>::zero_grad() {
  for (auto& n : nodes_) n.grad = Tensor<T>();
}

template class Tape<float>;
template class Tape<double>;

namespace {

template <typename T>
Tape<T>& tape_of(Var<T> a) {
  if (a.tape == nullptr) throw ContractError("variable is not attached to a tape");
  return *a.tape;
}

template <typename T>
void same_tape(Var<T> a, Var<T> b) {
  if (a.tape != b.tape) throw ContractError("operands live on different tapes");
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.begin(), small.end(), big.end() - static_cast<std::ptrdiff_t>(small.size()));
}

// ---------------------------------------------------------------------------
// Elementwise binary with leading-dimension broadcast.

enum class BinOp { add, sub, mul, div };

const char* bin_name(BinOp op) {
  switch (op) {
    case BinOp::add:
      return "add";
    case BinOp::sub:
      return "sub";
    case BinOp::mul:
      return "mul";
    case BinOp::div:
      return "div";
  }
  return "?";
}

template <typename T>
Var<T> binary(Var<T> a, Var<T> b, BinOp op) {
  same_tape(a, b);
  Tape<T>& tape = tape_of(a);
  const Tensor<T>& A = a.value();
  const Tensor<T>& B = b.value();

  bool a_bcast = false;
  bool b_bcast = false;
  Shape out_shape;
  if (A.shape() == B.shape()) {
    out_shape = A.shape();
  } else if (is_suffix(B.shape(), A.shape())) {
    out_shape = A.shape();
    b_bcast = true;
  } else if (is_suffix(A.shape(), B.shape())) {
    out_shape = B.shape();
    a_bcast = true;
  } else {
    throw ShapeError(std::string(bin_name(op)) + ": incompatible shapes " + shape_str(A.shape()) + " and " +
                     shape_str(B.shape()));
  }
  const std::size_t total = numel(out_shape);
  const std::size_t inner = a_bcast ? A.size() : (b_bcast ? B.size() : total);
  const std::size_t outer = inner == 0 ? 0 : total / inner;

  Tensor<T> out(out_shape);
  const T* pa = A.data().data();
  const T* pb = B.data().data();
  T* po = out.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    const T* ra = a_bcast ? pa : pa + o * inner;
    const T* rb = b_bcast ? pb : pb + o * inner;
    T* ro = po + o * inner;
    switch (op) {
      case BinOp::add:
        for (std::size_t i = 0; i < inner; ++i) ro[i] = ra[i] + rb[i];
        break;
      case BinOp::sub:
        for (std::size_t i = 0; i < inner; ++i) ro[i] = ra[i] - rb[i];
        break;
      case BinOp::mul:
        for (std::size_t i = 0; i < inner; ++i) ro[i] = ra[i] * rb[i];
        break;
      case BinOp::div:
        for (std::size_t i = 0; i < inner; ++i) ro[i] = ra[i] / rb[i];
        break;
    }
  }

  const auto ia = a.id;
  const auto ib = b.id;
  return tape.record(std::move(out), {ia, ib}, [=](Tape<T>& t, std::size_t self) {
    const T* g = t.upstream(self).data().data();
    const T* va = t.value(ia).data().data();
    const T* vb = t.value(ib).data().data();
    if (t.requires_grad(ia)) {
      T* ga = t.grad_ref(ia).data().data();
      for (std::size_t o = 0; o < outer; ++o) {
        T* gra = a_bcast ? ga : ga + o * inner;
        const T* rb = b_bcast ? vb : vb + o * inner;
        const T* rg = g + o * inner;
        switch (op) {
          case BinOp::add:
          case BinOp::sub:
            for (std::size_t i = 0; i < inner; ++i) gra[i] += rg[i];
            break;
          case BinOp::mul:
            for (std::size_t i = 0; i < inner; ++i) gra[i] += rg[i] * rb[i];
            break;
          case BinOp::div:
            for (std::size_t i = 0; i < inner; ++i) gra[i] += rg[i] / rb[i];
            break;
        }
      }
    }
    if (t.requires_grad(ib)) {
      T* gb = t.grad_ref(ib).data().data();
      for (std::size_t o = 0; o < outer; ++o) {
        T* grb = b_bcast ? gb : gb + o * inner;
        const T* ra = a_bcast ? va : va + o * inner;
        const T* rb = b_bcast ? vb : vb + o * inner;
        const T* rg = g + o * inner;
        switch (op) {
          case BinOp::add:
            for (std::size_t i = 0; i < inner; ++i) grb[i] += rg[i];
            break;
          case BinOp::sub:
            for (std::size_t i = 0; i < inner; ++i) grb[i] -= rg[i];
            break;
          case BinOp::mul:
            for (std::size_t i = 0; i < inner; ++i) grb[i] += rg[i] * ra[i];
            break;
          case BinOp::div:
            for (std::size_t i = 0; i < inner; ++i) grb[i] -= rg[i] * ra[i] / (rb[i] * rb[i]);
            break;
        }
      }
    }
  });
}

// Elementwise unary: forward value and derivative as a function of (x, y).
template <typename T, typename F, typename D>
Var<T> unary(Var<T> a, F f, D dfdx) {
  Tape<T>& tape = tape_of(a);
  const Tensor<T>& A = a.value();
  Tensor<T> out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = f(A[i]);
  const auto ia = a.id;
  return tape.record(std::move(out), {ia}, [=](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.upstream(self);
    const Tensor<T>& x = t.value(ia);
    const Tensor<T>& y = t.value(self);
    Tensor<T>& gx = t.grad_ref(ia);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx(x[i], y[i]);
  });
}

void add_into(auto& dst, const auto& src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  return binary(a, b, BinOp::add);
}
template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  return binary(a, b, BinOp::sub);
}
template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  return binary(a, b, BinOp::mul);
}
template <typename T>
Var<T> div(Var<T> a, Var<T> b) {
  return binary(a, b, BinOp::div);
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  return unary(a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Var<T> neg(Var<T> a) {
  return scale(a, T(-1));
}

template <typename T>
Var<T> exp(Var<T> a) {
  return unary(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> log(Var<T> a) {
  return unary(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Var<T> gelu(Var<T> a) {
  using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
  constexpr T c = T(0.7978845608028654);  // sqrt(2 / pi)
  constexpr T k = T(0.044715);
  Tape<T>& tape = tape_of(a);
  const Tensor<T>& A = a.value();
  const auto n = static_cast<Eigen::Index>(A.size());
  const Eigen::Map<const Arr> x(A.data().data(), n);
  Tensor<T> out(A.shape());
  Eigen::Map<Arr>(out.data().data(), n) = T(0.5) * x * (T(1) + (c * (x + k * x.cube())).tanh());
  const auto ia = a.id;
  return tape.record(std::move(out), {ia}, [=](Tape<T>& t, std::size_t self) {
    const auto m = static_cast<Eigen::Index>(t.value(ia).size());
    const Eigen::Map<const Arr> xv(t.value(ia).data().data(), m);
    const Eigen::Map<const Arr> g(t.upstream(self).data().data(), m);
    Eigen::Map<Arr> gx(t.grad_ref(ia).data().data(), m);
    const Arr th = (c * (xv + k * xv.cube())).tanh();
    gx += g * (T(0.5) * (T(1) + th) + T(0.5) * xv * (T(1) - th.square()) * c * (T(1) + T(3) * k * xv.square()));
  });
}

template <typename T>
Var<T> relu(Var<T> a) {
  return unary(a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

// ---------------------------------------------------------------------------
// Linear algebra and shape ops

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  same_tape(a, b);
  Tape<T>& tape = tape_of(a);
  const Tensor<T>& A = a.value();
  const Tensor<T>& B = b.value();
  const auto mismatch = [&] {
    return ShapeError("matmul: incompatible shapes " + shape_str(A.shape()) + " and " + shape_str(B.shape()));
  };
  if (A.rank() < 2 || B.rank() < 2) throw mismatch();

  const std::size_t k = A.shape().back();
  if (B.dim(B.rank() - 2) != k) throw mismatch();
  const std::size_t n = B.shape().back();
  const std::size_t m = A.dim(A.rank() - 2);

  std::size_t batch = 1;
  bool shared_b = B.rank() == 2;
  if (!shared_b) {
    if (A.rank() != B.rank() || !std::equal(A.shape().begin(), A.shape().end() - 2, B.shape().begin())) {
      throw mismatch();
    }
    batch = numel(A.shape()) / (m * k);
  }
  const std::size_t rows = shared_b ? A.size() / k : m;

  Shape out_shape = A.shape();
  out_shape.back() = n;
  Tensor<T> out(out_shape);
  for (std::size_t bi = 0; bi < batch; ++bi) {
    gemm_accumulate(A.data().data() + bi * rows * k, B.data().data() + (shared_b ? 0 : bi * k * n),
                    out.data().data() + bi * rows * n, rows, k, n);
  }

  const auto ia = a.id;
  const auto ib = b.id;
  return tape.record(std::move(out), {ia, ib}, [=](Tape<T>& t, std::size_t self) {
    const T* g = t.upstream(self).data().data();
    const T* va = t.value(ia).data().data();
    const T* vb = t.value(ib).data().data();
    const bool need_a = t.requires_grad(ia);
    const bool need_b = t.requires_grad(ib);
    T* ga = need_a ? t.grad_ref(ia).data().data() : nullptr;
    T* gb = need_b ? t.grad_ref(ib).data().data() : nullptr;
    for (std::size_t bi = 0; bi < batch; ++bi) {
      const T* gi = g + bi * rows * n;
      const T* ai = va + bi * rows * k;
      const T* bmat = vb + (shared_b ? 0 : bi * k * n);
      if (need_a) gemm_accumulate_bt(gi, bmat, ga + bi * rows * k, rows, n, k);
      if (need_b) gemm_accumulate_at(ai, gi, gb + (shared_b ? 0 : bi * k * n), k, rows, n);
    }
  });
}

template <typename T>
Var<T> transpose(Var<T> a) {
  Tape<T>& tape = tape_of(a);
  const Tensor<T>& A = a.value();
  if (A.rank() < 2) throw ShapeError("transpose needs rank >= 2, got " + shape_str(A.shape()));
  const std::size_t r = A.dim(A.rank() - 2);
  const std::size_t c = A.shape().back();
  const std::size_t batch = r * c == 0 ? 0 : A.size() / (r * c);
  Shape out_shape = A.shape();
  std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
  Tensor<T> out(out_shape);
  for (std::size_t bi = 0; bi < batch; ++bi) {
    transpose_block(A.data().data() + bi * r * c, out.data().data() + bi * r * c, r, c);
  }
  const auto ia = a.id;
  return tape.record(std::move(out), {ia}, [=](Tape<T>& t, std::size_t self) {
    const T* g = t.upstream(self).data().data();
    T* ga = t.grad_ref(ia).data().data();
    std::vector<T> tmp(r * c);
    for (std::size_t bi = 0; bi < batch; ++bi) {
      transpose_block(g + bi * r * c, tmp.data(), c, r);
      for (std::size_t i = 0; i < r * c; ++i) ga[bi * r * c + i] += tmp[i];
    }
  });
}

template <typename T>
Var<T> permute(Var<T> a, const std::vector<std::size_t>& axes) {
  Tape<T>& tape = tape_of(a);
  const Tensor<T>& A = a.value();
  const std::size_t rank = A.rank();
  {
    std::vector<std::size_t> sorted = axes;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> iota(rank);
    std::iota(iota.begin(), iota.end(), std::size_t{0});
    if (sorted != iota) throw ShapeError("permute: axes do not form a permutation of rank " + std::to_string(rank));
  }
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = A.dim(axes[i]);

  // Source offset for every destination element, in destination order.
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * A.dim(i);
  const std::size_t total = A.size();
  std::vector<std::size_t> src(total);
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t o = 0; o < total; ++o) {
    std::size_t off = 0;
    for (std::size_t d = 0; d < rank; ++d) off += idx[d] * in_strides[axes[d]];
    src[o] = off;
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
    }
  }
  Tensor<T> out(out_shape);
  for (std::size_t o = 0; o < total; ++o) out[o] = A[src[o]];
  const auto ia = a.id;
  return tape.record(std::move(out), {ia}, [ia, src = std::move(src)](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.upstream(self);
    Tensor<T>& ga = t.grad_ref(ia);
    for (std::size_t o = 0; o < src.size(); ++o) ga[src[o]] += g[o];
  });
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  Tape<T>& tape = tape_of(a);
  Tensor<T> out = a.value().reshaped(std::move(shape));
  const auto ia = a.id;
  return tape.record(std::move(out), {ia}, [ia](Tape<T>& t, std::size_t self) {
    add_into(t.grad_ref(ia), t.upstream(self));
  });
}

template <typename T>
Var<T> slice(Var<T> a, std::size_t axis, std::size_t begin, std::size_t end) {
  Tape<T>& tape = tape_of(a);
  const Tensor<T>& A = a.value();
  if (axis >= A.rank() || begin > end || end > A.dim(axis)) {
    throw ShapeError("slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") on axis " +
                     std::to_string(axis) + " of " + shape_str(A.shape()));
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= A.dim(i);
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < A.rank(); ++i) inner *= A.dim(i);
  const std::size_t len = A.dim(axis);
  const std::size_t width = end - begin;
  Shape out_shape = A.shape();
  out_shape[axis] = width;
  Tensor<T> out(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(A.data().begin() + static_cast<std::ptrdiff_t>((o * len + begin) * inner), width * inner,
                out.data().begin() + static_cast<std::ptrdiff_t>(o * width * inner));
  }
  const auto ia = a.id;
  return tape.record(std::move(out), {ia}, [=](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.upstream(self);
    Tensor<T>& ga = t.grad_ref(ia);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < width * inner; ++i) ga[(o * len + begin) * inner + i] += g[o * width * inner + i];
    }
  });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  Tape<T>& tape = tape_of(parts.front());
  const Shape& first = parts.front().value().shape();
  if (axis >= first.size()) throw ShapeError("concat axis out of range for " + shape_str(first));
  std::size_t total_len = 0;
  std::vector<std::size_t> lens;
  std::vector<std::uint32_t> ids;
  for (const auto& p : parts) {
    same_tape(parts.front(), p);
    const Shape& s = p.value().shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) throw ShapeError("concat: incompatible shapes " + shape_str(first) + " and " + shape_str(s));
    lens.push_back(s[axis]);
    total_len += s[axis];
    ids.push_back(p.id);
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  Shape out_shape = first;
  out_shape[axis] = total_len;
  Tensor<T> out(out_shape);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor<T>& P = parts[p].value();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(P.data().begin() + static_cast<std::ptrdiff_t>(o * lens[p] * inner), lens[p] * inner,
                  out.data().begin() + static_cast<std::ptrdiff_t>((o * total_len + offset) * inner));
    }
    offset += lens[p];
  }
  return tape.record(std::move(out), ids, [=](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.upstream(self);
    std::size_t off = 0;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      if (t.requires_grad(ids[p])) {
        Tensor<T>& gp = t.grad_ref(ids[p]);
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t i = 0; i < lens[p] * inner; ++i) {
            gp[o * lens[p] * inner + i] += g[(o * total_len + off) * inner + i];
          }
        }
      }
      off += lens[p];
    }
  });
}

template <typename T>
Var<T> tile_leading(Var<T> a, std::size_t n) {
  Tape<T>& tape = tape_of(a);
  const Tensor<T>& A = a.value();
  Shape out_shape{n};
  out_shape.insert(out_shape.end(), A.shape().begin(), A.shape().end());
  Tensor<T> out(out_shape);
  for (std::size_t r = 0; r < n; ++r) {
    std::copy(A.data().begin(), A.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(r * A.size()));
  }
  const auto ia = a.id;
  const std::size_t block = A.size();
  return tape.record(std::move(out), {ia}, [=](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.upstream(self);
    Tensor<T>& ga = t.grad_ref(ia);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t i = 0; i < block; ++i) ga[i] += g[r * block + i];
    }
  });
}

template <typename T>
Var<T> gather_rows(Var<T> a, std::span<const std::size_t> rows) {
  Tape<T>& tape = tape_of(a);
  const Tensor<T>& A = a.value();
  if (A.rank() < 1) throw ShapeError("gather_rows needs rank >= 1");
  const std::size_t count = A.dim(0);
  const std::size_t row = count == 0 ? 0 : A.size() / count;
  Shape out_shape = A.shape();
  out_shape[0] = rows.size();
  Tensor<T> out(out_shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= count) {
      throw ShapeError("gather_rows: index " + std::to_string(rows[i]) + " out of range for " +
                       shape_str(A.shape()));
    }
    std::copy_n(A.data().begin() + static_cast<std::ptrdiff_t>(rows[i] * row), row,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * row));
  }
  const auto ia = a.id;
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return tape.record(std::move(out), {ia}, [=](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.upstream(self);
    Tensor<T>& ga = t.grad_ref(ia);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t j = 0; j < row; ++j) ga[idx[i] * row + j] += g[i * row + j];
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions and normalizations

template <typename T>
Var<T> sum(Var<T> a) {
  Tape<T>& tape = tape_of(a);
  T s = 0;
  for (T v : a.value().data()) s += v;
  const auto ia = a.id;
  return tape.record(Tensor<T>::scalar(s), {ia}, [ia](Tape<T>& t, std::size_t self) {
    const T g = t.upstream(self)[0];
    for (T& v : t.grad_ref(ia).data()) v += g;
  });
}

template <typename T>
Var<T> mean(Var<T> a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(n));
}

namespace {

template <typename T>
std::pair<std::size_t, std::size_t> rows_cols(const Tensor<T>& A, const char* op) {
  if (A.rank() < 1 || A.shape().back() == 0) throw ShapeError(std::string(op) + " on " + shape_str(A.shape()));
  const std::size_t cols = A.shape().back();
  return {A.size() / cols, cols};
}

}  // namespace

template <typename T>
Var<T> softmax_lastdim(Var<T> a) {
  Tape<T>& tape = tape_of(a);
  const Tensor<T>& A = a.value();
  const auto [rows, cols] = rows_cols(A, "softmax");
  Tensor<T> out(A.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = A.data().data() + r * cols;
    T* y = out.data().data() + r * cols;
    const T mx = *std::max_element(x, x + cols);
    T s = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      y[c] = std::exp(x[c] - mx);
      s += y[c];
    }
    const T inv = T(1) / s;
    for (std::size_t c = 0; c < cols; ++c) y[c] *= inv;
  }
  const auto ia = a.id;
  return tape.record(std::move(out), {ia}, [=](Tape<T>& t, std::size_t self) {
    const T* g = t.upstream(self).data().data();
    const T* y = t.value(self).data().data();
    T* gx = t.grad_ref(ia).data().data();
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t off = r * cols;
      T dot = 0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[off + c] * y[off + c];
      for (std::size_t c = 0; c < cols; ++c) gx[off + c] += y[off + c] * (g[off + c] - dot);
    }
  });
}

template <typename T>
Var<T> layernorm_lastdim(Var<T> a, T eps) {
  Tape<T>& tape = tape_of(a);
  const Tensor<T>& A = a.value();
  const auto [rows, cols] = rows_cols(A, "layernorm");
  Tensor<T> out(A.shape());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = A.data().data() + r * cols;
    T* y = out.data().data() + r * cols;
    T mu = 0;
    for (std::size_t c = 0; c < cols; ++c) mu += x[c];
    mu /= static_cast<T>(cols);
    T var = 0;
    for (std::size_t c = 0; c < cols; ++c) var += (x[c] - mu) * (x[c] - mu);
    var /= static_cast<T>(cols);
    const T inv = T(1) / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t c = 0; c < cols; ++c) y[c] = (x[c] - mu) * inv;
  }
  const auto ia = a.id;
  return tape.record(std::move(out), {ia}, [=, inv_std = std::move(inv_std)](Tape<T>& t, std::size_t self) {
    const T* g = t.upstream(self).data().data();
    const T* y = t.value(self).data().data();
    T* gx = t.grad_ref(ia).data().data();
    const T n = static_cast<T>(cols);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t off = r * cols;
      T gmean = 0;
      T gymean = 0;
      for (std::size_t c = 0; c < cols; ++c) {
        gmean += g[off + c];
        gymean += g[off + c] * y[off + c];
      }
      gmean /= n;
      gymean /= n;
      for (std::size_t c = 0; c < cols; ++c) {
        gx[off + c] += inv_std[r] * (g[off + c] - gmean - y[off + c] * gymean);
      }
    }
  });
}

template <typename T>
Var<T> l2_normalize_lastdim(Var<T> a) {
  constexpr T floor = T(1e-12);
  Tape<T>& tape = tape_of(a);
  const Tensor<T>& A = a.value();
  const auto [rows, cols] = rows_cols(A, "l2_normalize");
  Tensor<T> out(A.shape());
  std::vector<T> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = A.data().data() + r * cols;
    T ss = 0;
    for (std::size_t c = 0; c < cols; ++c) ss += x[c] * x[c];
    const T nrm = std::max(std::sqrt(ss), floor);
    norms[r] = nrm;
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[c] / nrm;
  }
  const auto ia = a.id;
  return tape.record(std::move(out), {ia}, [=, norms = std::move(norms)](Tape<T>& t, std::size_t self) {
    const T* g = t.upstream(self).data().data();
    const T* y = t.value(self).data().data();
    T* gx = t.grad_ref(ia).data().data();
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t off = r * cols;
      if (norms[r] <= floor) {
        for (std::size_t c = 0; c < cols; ++c) gx[off + c] += g[off + c] / floor;
        continue;
      }
      T dot = 0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[off + c] * y[off + c];
      for (std::size_t c = 0; c < cols; ++c) gx[off + c] += (g[off + c] - y[off + c] * dot) / norms[r];
    }
  });
}

template <typename T>
Var<T> cross_entropy_rows(Var<T> logits, std::span<const std::size_t> targets) {
  Tape<T>& tape = tape_of(logits);
  const Tensor<T>& L = logits.value();
  if (L.rank() != 2 || L.dim(0) != targets.size() || L.dim(1) == 0) {
    throw ShapeError("cross_entropy_rows: logits " + shape_str(L.shape()) + " with " +
                     std::to_string(targets.size()) + " targets");
  }
  const std::size_t rows = L.dim(0);
  const std::size_t cols = L.dim(1);
  if (rows == 0) throw ShapeError("cross_entropy_rows on zero rows");
  std::vector<T> probs(L.size());
  T total = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] >= cols) throw ShapeError("cross_entropy_rows: target out of range");
    const T* x = L.data().data() + r * cols;
    const T mx = *std::max_element(x, x + cols);
    T s = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      probs[r * cols + c] = std::exp(x[c] - mx);
      s += probs[r * cols + c];
    }
    for (std::size_t c = 0; c < cols; ++c) probs[r * cols + c] /= s;
    total += (mx + std::log(s)) - x[targets[r]];
  }
  const T inv_rows = T(1) / static_cast<T>(rows);
  const auto il = logits.id;
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  return tape.record(Tensor<T>::scalar(total * inv_rows), {il},
                     [=, probs = std::move(probs)](Tape<T>& t, std::size_t self) {
                       const T g = t.upstream(self)[0] * inv_rows;
                       Tensor<T>& gl = t.grad_ref(il);
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t c = 0; c < cols; ++c) {
                           const T onehot = c == tgt[r] ? T(1) : T(0);
                           gl[r * cols + c] += g * (probs[r * cols + c] - onehot);
                         }
                       }
                     });
}

#define CLIPPO_INSTANTIATE_OPS(T)                                                        \
  template Var<T> add(Var<T>, Var<T>);                                                   \
  template Var<T> sub(Var<T>, Var<T>);                                                   \
  template Var<T> mul(Var<T>, Var<T>);                                                   \
  template Var<T> div(Var<T>, Var<T>);                                                   \
  template Var<T> scale(Var<T>, T);                                                      \
  template Var<T> neg(Var<T>);                                                           \
  template Var<T> exp(Var<T>);                                                           \
  template Var<T> log(Var<T>);                                                           \
  template Var<T> gelu(Var<T>);                                                          \
  template Var<T> relu(Var<T>);                                                          \
  template Var<T> matmul(Var<T>, Var<T>);                                                \
  template Var<T> transpose(Var<T>);                                                     \
  template Var<T> permute(Var<T>, const std::vector<std::size_t>&);                      \
  template Var<T> reshape(Var<T>, Shape);                                                \
  template Var<T> slice(Var<T>, std::size_t, std::size_t, std::size_t);                  \
  template Var<T> concat(const std::vector<Var<T>>&, std::size_t);                       \
  template Var<T> tile_leading(Var<T>, std::size_t);                                     \
  template Var<T> gather_rows(Var<T>, std::span<const std::size_t>);                     \
  template Var<T> sum(Var<T>);                                                           \
  template Var<T> mean(Var<T>);                                                          \
  template Var<T> softmax_lastdim(Var<T>);                                               \
  template Var<T> layernorm_lastdim(Var<T>, T);                                          \
  template Var<T> l2_normalize_lastdim(Var<T>);                                          \
  template Var<T> cross_entropy_rows(Var<T>, std::span<const std::size_t>);

CLIPPO_INSTANTIATE_OPS(float)
CLIPPO_INSTANTIATE_OPS(double)

#undef CLIPPO_INSTANTIATE_OPS

}  // namespace clippo::nn
