#pragma once

#include <cmath>
#include <string>
#include <vector>

namespace lot {

// Dense row-major matrix of doubles. Vectors are stored as cols == 1.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }

  std::size_t size() const { return v.size(); }

  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }

  void fill(double x) { std::fill(v.begin(), v.end(), x); }
};

// Named parameter tensors of the reference architecture; also the gradient
// carrier (same layout).
struct ParamSet {
  Tensor embedding;  // V x E
  Tensor w_hidden;   // H x (W*E)
  Tensor b_hidden;   // H x 1
  Tensor w_out;      // V x H
  Tensor b_out;      // V x 1

  template <typename F>
  void for_each(F&& f) {
    f("embedding", embedding);
    f("w_hidden", w_hidden);
    f("b_hidden", b_hidden);
    f("w_out", w_out);
    f("b_out", b_out);
  }

  template <typename F>
  void for_each(F&& f) const {
    f("embedding", embedding);
    f("w_hidden", w_hidden);
    f("b_hidden", b_hidden);
    f("w_out", w_out);
    f("b_out", b_out);
  }

  bool same_shape(const ParamSet& o) const {
    return embedding.same_shape(o.embedding) && w_hidden.same_shape(o.w_hidden) &&
           b_hidden.same_shape(o.b_hidden) && w_out.same_shape(o.w_out) &&
           b_out.same_shape(o.b_out);
  }

  bool all_finite() const {
    bool ok = true;
    for_each([&](const char*, const Tensor& t) { ok = ok && t.all_finite(); });
    return ok;
  }
};

using Gradients = ParamSet;

}  // namespace lot
