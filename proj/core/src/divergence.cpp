#include "lot/divergence.hpp"

#include <cmath>

#include "lot/errors.hpp"

namespace lot {

namespace {

constexpr double kLn2 = 0.6931471805599453;

void check_pair(const Dist& p, const Dist& q, const char* what) {
  if (p.size() != q.size() || p.empty())
    throw ArgumentError(std::string(what) + ": distribution size mismatch");
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!std::isfinite(p[i]) || !std::isfinite(q[i]))
      throw NumericalError(std::string(what) + ": non-finite input distribution");
    if (p[i] <= 0.0 || q[i] <= 0.0)
      throw NumericalError(std::string(what) + ": distributions must be strictly positive");
  }
}

double kl_nats(const Dist& p, const Dist& q) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += p[i] * std::log(p[i] / q[i]);
  return std::max(acc, 0.0);
}

}  // namespace

const char* to_string(DivKind kind) { return kind == DivKind::JS ? "JS" : "KL"; }

double DivergenceValue::bits() const { return value_nats / kLn2; }

DivergenceValue kl(const Dist& p, const Dist& q) {
  check_pair(p, q, "kl");
  return {kl_nats(p, q), DivKind::KL, false};
}

Dist js_mixture(const Dist& p, const Dist& q) {
  Dist mix(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) mix[i] = 0.5 * (p[i] + q[i]);
  return mix;
}

DivergenceValue js(const Dist& p, const Dist& q) {
  check_pair(p, q, "js");
  const Dist mix = js_mixture(p, q);
  double v = 0.5 * kl_nats(p, mix) + 0.5 * kl_nats(q, mix);
  v = std::min(std::max(v, 0.0), kLn2);
  return {v, DivKind::JS, false};
}

std::vector<double> js_grad_p(const Dist& p, const Dist& q) {
  check_pair(p, q, "js_grad_p");
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    g[i] = 0.5 * std::log(p[i] / (0.5 * (p[i] + q[i])));
  return g;
}

std::vector<double> kl_grad_p(const Dist& p, const Dist& q) {
  check_pair(p, q, "kl_grad_p");
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) g[i] = std::log(p[i] / q[i]) + 1.0;
  return g;
}

DivergenceValue clamp(const DivergenceValue& d, double cap) {
  if (cap <= 0.0) throw ArgumentError("clamp: cap must be positive");
  DivergenceValue out = d;
  if (d.value_nats > cap) {
    out.value_nats = cap;
    out.clamped = true;
  }
  return out;
}

}  // namespace lot
