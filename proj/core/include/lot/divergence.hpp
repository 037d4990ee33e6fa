#pragma once

#include <vector>

#include "lot/model.hpp"

namespace lot {

enum class DivKind { JS, KL };

const char* to_string(DivKind kind);

struct DivergenceValue {
  double value_nats = 0.0;
  DivKind kind = DivKind::KL;
  bool clamped = false;

  double bits() const;
};

// d_KL(p || q) = sum_i p_i ln(p_i / q_i); asymmetric, unbounded above.
DivergenceValue kl(const Dist& p, const Dist& q);

// d_JS(p, q) = 1/2 KL(p || L) + 1/2 KL(q || L) with mixture L = (p + q)/2;
// symmetric and bounded by ln 2.
DivergenceValue js(const Dist& p, const Dist& q);

// The mixture used inside js, exposed for testing.
Dist js_mixture(const Dist& p, const Dist& q);

// Gradient of js(p, q) with respect to p on simplex-tangent directions:
// component i is ln(p_i / L_i) / 2.
std::vector<double> js_grad_p(const Dist& p, const Dist& q);

// Gradient of kl(p, q) with respect to p: ln(p_i / q_i) + 1.
std::vector<double> kl_grad_p(const Dist& p, const Dist& q);

// min(value, cap); gradient contribution is defined as zero when clamped.
DivergenceValue clamp(const DivergenceValue& d, double cap);

}  // namespace lot
