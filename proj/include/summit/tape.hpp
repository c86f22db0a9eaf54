#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "summit/kernels.hpp"
#include "summit/tensor.hpp"

namespace summit {

/// Single-use reverse-mode gradient tape over a closed set of matrix ops.
///
/// Values are recorded eagerly as ops are called; `backward` walks the
/// recorded nodes in reverse. Parameter leaves reference caller-owned
/// tensors, which must outlive the tape. A tape is not thread-safe; use one
/// per forward/backward pass.
template <typename T>
class Tape {
 public:
  struct Var {
    std::size_t id = 0;
  };

  Var constant(Tensor<T> v) {
    Node n;
    n.value = std::move(v);
    return push(std::move(n));
  }

  Var param(const std::string& path, const Tensor<T>& v) {
    Node n;
    n.ref = &v;
    n.path = path;
    n.requires_grad = true;
    return push(std::move(n));
  }

  const Tensor<T>& value(Var v) const {
    const Node& n = nodes_[v.id];
    return n.ref ? *n.ref : n.value;
  }

  /// Gradient of the last backward pass; empty when the node got none.
  const Tensor<T>& grad(Var v) const { return nodes_[v.id].grad; }

  std::size_t size() const { return nodes_.size(); }

  // ---- ops ---------------------------------------------------------------

  Var matmul(Var a, Var b) {
    const auto& A = value(a);
    const auto& B = value(b);
    if (A.cols() != B.rows()) mismatch("matmul", A, B);
    const std::size_t r = A.rows(), k = A.cols(), c = B.cols();
    auto out = Tensor<T>::matrix(r, c);
    kernels::matmul_acc(A.values().data(), B.values().data(), out.values().data(), r, k, c);
    return record(std::move(out), {a, b}, [a, b, r, k, c](Tape& t, std::size_t self) {
      const T* dC = t.nodes_[self].grad.values().data();
      if (t.needs(a)) kernels::matmul_nt_acc(dC, t.value(b).values().data(), t.grad_buf(a).values().data(), r, c, k);
      if (t.needs(b)) kernels::matmul_tn_acc(t.value(a).values().data(), dC, t.grad_buf(b).values().data(), r, k, c);
    });
  }

  /// a * b^T
  Var matmul_nt(Var a, Var b) {
    const auto& A = value(a);
    const auto& B = value(b);
    if (A.cols() != B.cols()) mismatch("matmul_nt", A, B);
    const std::size_t r = A.rows(), k = A.cols(), c = B.rows();
    auto out = Tensor<T>::matrix(r, c);
    kernels::matmul_nt_acc(A.values().data(), B.values().data(), out.values().data(), r, k, c);
    return record(std::move(out), {a, b}, [a, b, r, k, c](Tape& t, std::size_t self) {
      const T* dC = t.nodes_[self].grad.values().data();
      if (t.needs(a)) kernels::matmul_acc(dC, t.value(b).values().data(), t.grad_buf(a).values().data(), r, c, k);
      if (t.needs(b)) kernels::matmul_tn_acc(dC, t.value(a).values().data(), t.grad_buf(b).values().data(), r, c, k);
    });
  }

  Var add(Var a, Var b) {
    const auto& A = value(a);
    const auto& B = value(b);
    if (A.size() != B.size() || A.cols() != B.cols()) mismatch("add", A, B);
    auto out = as_matrix(A);
    auto o = out.values();
    auto bv = B.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
    return record(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
      const auto& g = t.nodes_[self].grad;
      if (t.needs(a)) t.acc(a, g);
      if (t.needs(b)) t.acc(b, g);
    });
  }

  /// Adds a constant tensor of the same shape; no gradient flows to it.
  Var add_const(Var a, const Tensor<T>& c) {
    const auto& A = value(a);
    if (A.size() != c.size()) mismatch("add_const", A, c);
    auto out = as_matrix(A);
    auto o = out.values();
    auto cv = c.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += cv[i];
    return record(std::move(out), {a}, [a](Tape& t, std::size_t self) {
      if (t.needs(a)) t.acc(a, t.nodes_[self].grad);
    });
  }

  /// Broadcast-adds a bias row to every row of a.
  Var add_row(Var a, Var bias) {
    const auto& A = value(a);
    const auto& b = value(bias);
    if (b.size() != A.cols()) mismatch("add_row", A, b);
    auto out = as_matrix(A);
    const std::size_t r = out.rows(), c = out.cols();
    for (std::size_t i = 0; i < r; ++i) {
      T* o = out.row(i);
      for (std::size_t j = 0; j < c; ++j) o[j] += b[j];
    }
    return record(std::move(out), {a, bias}, [a, bias, r, c](Tape& t, std::size_t self) {
      const auto& g = t.nodes_[self].grad;
      if (t.needs(a)) t.acc(a, g);
      if (t.needs(bias)) {
        auto& gb = t.grad_buf(bias);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) gb[j] += g(i, j);
      }
    });
  }

  Var scale(Var a, T s) {
    auto out = as_matrix(value(a));
    for (auto& v : out.values()) v *= s;
    return record(std::move(out), {a}, [a, s](Tape& t, std::size_t self) {
      if (!t.needs(a)) return;
      auto& ga = t.grad_buf(a);
      auto g = t.nodes_[self].grad.values();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
    });
  }

  /// Multiplies row r of a by the constant row_scale[r].
  Var mul_rows(Var a, std::vector<T> row_scale) {
    auto out = as_matrix(value(a));
    if (row_scale.size() != out.rows()) mismatch("mul_rows", out, Tensor<T>({row_scale.size()}));
    const std::size_t r = out.rows(), c = out.cols();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out(i, j) *= row_scale[i];
    return record(std::move(out), {a}, [a, row_scale = std::move(row_scale), r, c](Tape& t, std::size_t self) {
      if (!t.needs(a)) return;
      auto& ga = t.grad_buf(a);
      const auto& g = t.nodes_[self].grad;
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += row_scale[i] * g(i, j);
    });
  }

  /// out[p] = scale[p] * table[index[p]]; a negative index yields a zero row.
  Var gather_rows(Var table, std::vector<int> index, std::vector<T> row_scale) {
    const auto& tb = value(table);
    if (index.size() != row_scale.size() || index.empty()) {
      throw ShapeError("gather_rows: index/scale length mismatch");
    }
    const std::size_t c = tb.cols();
    auto out = Tensor<T>::matrix(index.size(), c);
    for (std::size_t p = 0; p < index.size(); ++p) {
      if (index[p] < 0) continue;
      if (static_cast<std::size_t>(index[p]) >= tb.rows()) throw ShapeError("gather_rows: index out of range");
      const T* src = tb.row(static_cast<std::size_t>(index[p]));
      T* o = out.row(p);
      for (std::size_t j = 0; j < c; ++j) o[j] = row_scale[p] * src[j];
    }
    return record(std::move(out), {table},
                  [table, index = std::move(index), row_scale = std::move(row_scale), c](Tape& t, std::size_t self) {
                    if (!t.needs(table)) return;
                    auto& gt = t.grad_buf(table);
                    const auto& g = t.nodes_[self].grad;
                    for (std::size_t p = 0; p < index.size(); ++p) {
                      if (index[p] < 0) continue;
                      T* dst = gt.row(static_cast<std::size_t>(index[p]));
                      for (std::size_t j = 0; j < c; ++j) dst[j] += row_scale[p] * g(p, j);
                    }
                  });
  }

  Var softmax_rows(Var a) {
    auto out = as_matrix(value(a));
    const std::size_t r = out.rows(), c = out.cols();
    for (std::size_t i = 0; i < r; ++i) kernels::softmax_row(out.row(i), c);
    return record(std::move(out), {a}, [a, r, c](Tape& t, std::size_t self) {
      if (t.needs(a)) t.softmax_backward(a, self, r, c, T{1}, {});
    });
  }

  /// Attention weights softmax((scores + offset) * scale), where offset is
  /// kMaskOffset on every column whose key_mask entry is 0. An empty key_mask
  /// means no masking. Rows whose keys are all masked become zero rows and are
  /// counted in *guarded.
  Var attention_weights(Var scores, std::span<const std::uint8_t> key_mask, T scale, std::size_t* guarded = nullptr) {
    auto out = as_matrix(value(scores));
    const std::size_t r = out.rows(), c = out.cols();
    bool any_key = true;
    if (!key_mask.empty()) {
      if (key_mask.size() != c) throw ShapeError("attention_weights: key mask length mismatch");
      any_key = std::any_of(key_mask.begin(), key_mask.end(), [](std::uint8_t m) { return m != 0; });
    }
    std::vector<std::uint8_t> zero_rows;
    const T offset = static_cast<T>(kMaskOffset);
    for (std::size_t i = 0; i < r; ++i) {
      T* row = out.row(i);
      if (!any_key) {
        std::fill(row, row + c, T{0});
        if (zero_rows.empty()) zero_rows.assign(r, 0);
        zero_rows[i] = 1;
        if (guarded) ++*guarded;
        continue;
      }
      for (std::size_t j = 0; j < c; ++j) {
        const T masked = (!key_mask.empty() && key_mask[j] == 0) ? offset : T{0};
        row[j] = (masked + row[j]) * scale;
      }
      kernels::softmax_row(row, c);
    }
    return record(std::move(out), {scores}, [scores, r, c, scale, zero_rows = std::move(zero_rows)](Tape& t, std::size_t self) {
      if (t.needs(scores)) t.softmax_backward(scores, self, r, c, scale, zero_rows);
    });
  }

  Var gelu(Var a) {
    const auto& A = value(a);
    auto out = as_matrix(A);
    for (auto& v : out.values()) v = kernels::gelu(v);
    return record(std::move(out), {a}, [a](Tape& t, std::size_t self) {
      if (!t.needs(a)) return;
      auto x = t.value(a).values();
      auto g = t.nodes_[self].grad.values();
      auto& ga = t.grad_buf(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * kernels::gelu_grad(x[i]);
    });
  }

  /// Row-wise layer normalisation with learned gain and bias.
  Var layer_norm(Var a, Var gain, Var bias, T eps = T{1e-5}) {
    const auto& A = value(a);
    const auto& g = value(gain);
    const auto& b = value(bias);
    const std::size_t r = A.rows(), c = A.cols();
    if (g.size() != c || b.size() != c) mismatch("layer_norm", A, g);
    auto out = Tensor<T>::matrix(r, c);
    std::vector<T> xhat(r * c), inv_std(r);
    for (std::size_t i = 0; i < r; ++i) {
      const T* x = A.row(i);
      T mean{0};
      for (std::size_t j = 0; j < c; ++j) mean += x[j];
      mean /= static_cast<T>(c);
      T var{0};
      for (std::size_t j = 0; j < c; ++j) var += (x[j] - mean) * (x[j] - mean);
      var /= static_cast<T>(c);
      inv_std[i] = T{1} / std::sqrt(var + eps);
      for (std::size_t j = 0; j < c; ++j) {
        xhat[i * c + j] = (x[j] - mean) * inv_std[i];
        out(i, j) = g[j] * xhat[i * c + j] + b[j];
      }
    }
    return record(std::move(out), {a, gain, bias},
                  [a, gain, bias, r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
                    const auto& dy = t.nodes_[self].grad;
                    const auto& gv = t.value(gain);
                    if (t.needs(gain)) {
                      auto& gg = t.grad_buf(gain);
                      for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j) gg[j] += dy(i, j) * xhat[i * c + j];
                    }
                    if (t.needs(bias)) {
                      auto& gb = t.grad_buf(bias);
                      for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j) gb[j] += dy(i, j);
                    }
                    if (t.needs(a)) {
                      auto& ga = t.grad_buf(a);
                      const T inv_c = T{1} / static_cast<T>(c);
                      for (std::size_t i = 0; i < r; ++i) {
                        T mean_d{0}, mean_dx{0};
                        for (std::size_t j = 0; j < c; ++j) {
                          const T d = dy(i, j) * gv[j];
                          mean_d += d;
                          mean_dx += d * xhat[i * c + j];
                        }
                        mean_d *= inv_c;
                        mean_dx *= inv_c;
                        for (std::size_t j = 0; j < c; ++j) {
                          const T d = dy(i, j) * gv[j];
                          ga[i * c + j] += inv_std[i] * (d - mean_d - xhat[i * c + j] * mean_dx);
                        }
                      }
                    }
                  });
  }

  /// Mean over rows, giving a 1 x cols result.
  Var mean_rows(Var a) {
    const auto& A = value(a);
    const std::size_t r = A.rows(), c = A.cols();
    auto out = Tensor<T>::matrix(1, c);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[j] += A(i, j);
    const T inv = T{1} / static_cast<T>(r);
    for (auto& v : out.values()) v *= inv;
    return record(std::move(out), {a}, [a, r, c, inv](Tape& t, std::size_t self) {
      if (!t.needs(a)) return;
      auto& ga = t.grad_buf(a);
      const auto& g = t.nodes_[self].grad;
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += inv * g[j];
    });
  }

  /// Columns [c0, c1).
  Var slice_cols(Var a, std::size_t c0, std::size_t c1) {
    const auto& A = value(a);
    if (c0 >= c1 || c1 > A.cols()) throw ShapeError("slice_cols: bad range");
    const std::size_t r = A.rows(), c = A.cols(), w = c1 - c0;
    auto out = Tensor<T>::matrix(r, w);
    for (std::size_t i = 0; i < r; ++i) std::copy(A.row(i) + c0, A.row(i) + c1, out.row(i));
    return record(std::move(out), {a}, [a, r, c, c0, w](Tape& t, std::size_t self) {
      if (!t.needs(a)) return;
      auto& ga = t.grad_buf(a);
      const auto& g = t.nodes_[self].grad;
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < w; ++j) ga[i * c + c0 + j] += g(i, j);
    });
  }

  Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t r = value(parts[0]).rows();
    std::size_t total = 0;
    std::vector<std::size_t> widths;
    for (auto p : parts) {
      if (value(p).rows() != r) throw ShapeError("concat_cols: row mismatch");
      widths.push_back(value(p).cols());
      total += widths.back();
    }
    auto out = Tensor<T>::matrix(r, total);
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const auto& P = value(parts[k]);
      for (std::size_t i = 0; i < r; ++i) std::copy(P.row(i), P.row(i) + widths[k], out.row(i) + off);
      off += widths[k];
    }
    return record(std::move(out), parts, [parts, widths, r, total](Tape& t, std::size_t self) {
      const auto& g = t.nodes_[self].grad;
      std::size_t off = 0;
      for (std::size_t k = 0; k < parts.size(); ++k) {
        if (t.needs(parts[k])) {
          auto& gp = t.grad_buf(parts[k]);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < widths[k]; ++j) gp[i * widths[k] + j] += g[i * total + off + j];
        }
        off += widths[k];
      }
    });
  }

  Var sigmoid(Var a) {
    auto out = as_matrix(value(a));
    for (auto& v : out.values()) v = kernels::sigmoid(v);
    return record(std::move(out), {a}, [a](Tape& t, std::size_t self) {
      if (!t.needs(a)) return;
      auto y = t.nodes_[self].value.values();
      auto g = t.nodes_[self].grad.values();
      auto& ga = t.grad_buf(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (T{1} - y[i]);
    });
  }

  /// Focal loss of a single probability (1x1) against a binary label.
  /// The probability is clamped to [1e-7, 1 - 1e-7]; no gradient flows
  /// through a clamped value.
  Var focal_loss(Var prob, int label, double alpha, double gamma) {
    const auto& P = value(prob);
    if (P.size() != 1) throw ShapeError("focal_loss expects a single probability");
    const T lo = T{1e-7}, hi = T{1} - T{1e-7};
    const T p = P[0];
    const bool clamped = p < lo || p > hi;
    const T pc = std::clamp(p, lo, hi);
    const T pt = label == 1 ? pc : T{1} - pc;
    const T at = static_cast<T>(label == 1 ? alpha : 1.0 - alpha);
    const T g = static_cast<T>(gamma);
    const T one_m = T{1} - pt;
    const T mod = g == T{0} ? T{1} : std::pow(one_m, g);
    auto out = Tensor<T>::matrix(1, 1);
    out[0] = -at * mod * std::log(pt);
    // dL/dpt = -at * (-g (1-pt)^(g-1) ln pt + (1-pt)^g / pt)
    const T dmod = g == T{0} ? T{0} : g * std::pow(one_m, g - T{1});
    const T dl_dpt = -at * (-dmod * std::log(pt) + mod / pt);
    const T dl_dp = clamped ? T{0} : (label == 1 ? dl_dpt : -dl_dpt);
    return record(std::move(out), {prob}, [prob, dl_dp](Tape& t, std::size_t self) {
      if (t.needs(prob)) t.grad_buf(prob)[0] += dl_dp * t.nodes_[self].grad[0];
    });
  }

  /// Scalar sum(a .* w) for a constant weight tensor; used to reduce
  /// arbitrary outputs to a scalar in gradient checks.
  Var weighted_sum(Var a, const Tensor<T>& w) {
    const auto& A = value(a);
    if (A.size() != w.size()) mismatch("weighted_sum", A, w);
    auto out = Tensor<T>::matrix(1, 1);
    for (std::size_t i = 0; i < A.size(); ++i) out[0] += A[i] * w[i];
    return record(std::move(out), {a}, [a, w](Tape& t, std::size_t self) {
      if (!t.needs(a)) return;
      auto& ga = t.grad_buf(a);
      const T g = t.nodes_[self].grad[0];
      for (std::size_t i = 0; i < w.size(); ++i) ga[i] += g * w[i];
    });
  }

  // ---- backward ----------------------------------------------------------

  void backward(Var loss, T seed = T{1}) {
    if (value(loss).size() != 1) throw ShapeError("backward expects a scalar loss");
    for (auto& n : nodes_) n.grad = Tensor<T>();
    grad_buf(loss)[0] = seed;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.back && n.requires_grad && !n.grad.empty()) n.back(*this, i);
    }
  }

  /// Adds every parameter leaf's gradient into grads[path].
  void accumulate_param_grads(ParamSet<T>& grads) const {
    for (const auto& n : nodes_) {
      if (n.ref == nullptr || n.grad.empty()) continue;
      auto& dst = grads.at(n.path);
      auto src = n.grad.values();
      auto d = dst.values();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += src[i];
    }
  }

 private:
  using Backward = std::function<void(Tape&, std::size_t)>;

  struct Node {
    Tensor<T> value;
    const Tensor<T>* ref = nullptr;
    Tensor<T> grad;
    bool requires_grad = false;
    std::string path;
    Backward back;
  };

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  Var record(Tensor<T> out, std::initializer_list<Var> inputs, Backward back) {
    return record(std::move(out), std::vector<Var>(inputs), std::move(back));
  }
  Var record(Tensor<T> out, const std::vector<Var>& inputs, Backward back) {
    Node n;
    n.value = std::move(out);
    for (auto v : inputs) n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
    if (n.requires_grad) n.back = std::move(back);
    return push(std::move(n));
  }

  bool needs(Var v) const { return nodes_[v.id].requires_grad; }

  Tensor<T>& grad_buf(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.empty()) n.grad = Tensor<T>(value(v).shape(), T{0});
    return n.grad;
  }

  void acc(Var v, const Tensor<T>& g) {
    auto& dst = grad_buf(v);
    auto d = dst.values();
    auto s = g.values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
  }

  // dx = scale * y .* (dy - rowsum(dy .* y)), skipping guarded zero rows.
  void softmax_backward(Var x, std::size_t self, std::size_t r, std::size_t c, T scale,
                        const std::vector<std::uint8_t>& zero_rows) {
    const auto& y = nodes_[self].value;
    const auto& dy = nodes_[self].grad;
    auto& gx = grad_buf(x);
    for (std::size_t i = 0; i < r; ++i) {
      if (!zero_rows.empty() && zero_rows[i]) continue;
      T dot{0};
      for (std::size_t j = 0; j < c; ++j) dot += dy(i, j) * y(i, j);
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += scale * y(i, j) * (dy(i, j) - dot);
    }
  }

  static Tensor<T> as_matrix(const Tensor<T>& a) {
    if (a.rank() == 2) return a;
    return Tensor<T>({a.rows(), a.cols()}, a.storage());
  }

  [[noreturn]] static void mismatch(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }

  std::vector<Node> nodes_;
};

}  // namespace summit
