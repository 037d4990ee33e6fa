#include "lot/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "lot/errors.hpp"
#include "lot/rng.hpp"

namespace lot {

const char* to_string(Role role) {
  switch (role) {
    case Role::toxic: return "toxic";
    case Role::safe: return "safe";
    case Role::base: return "base";
    default: return "output";
  }
}

Role role_from_string(const std::string& s) {
  if (s == "toxic") return Role::toxic;
  if (s == "safe") return Role::safe;
  if (s == "base") return Role::base;
  if (s == "output") return Role::output;
  throw ArgumentError("unknown role: " + s);
}

ModelParams init_model(const Arch& arch, std::uint64_t seed) {
  if (arch.vocab < 8 || arch.embed < 2 || arch.hidden < 2 || arch.window < 1)
    throw ConfigError("init_model: need V >= 8, E >= 2, H >= 2, W >= 1");
  ModelParams m;
  m.arch = arch;
  m.role = Role::base;
  m.params.embedding = Tensor(arch.vocab, arch.embed);
  m.params.w_hidden = Tensor(arch.hidden, arch.window * arch.embed);
  m.params.b_hidden = Tensor(arch.hidden, 1);
  m.params.w_out = Tensor(arch.vocab, arch.hidden);
  m.params.b_out = Tensor(arch.vocab, 1);

  std::mt19937_64 rng(seed);
  const double bound = 0.08;
  for (double& x : m.params.embedding.v) x = uniform_sym(rng, bound);
  for (double& x : m.params.w_hidden.v) x = uniform_sym(rng, bound);
  for (double& x : m.params.w_out.v) x = uniform_sym(rng, bound);
  return m;
}

namespace {

struct PosTrace {
  std::vector<int> window;   // W token ids
  std::vector<double> x;     // W*E concatenated embeddings
  std::vector<double> h;     // hidden activations
  std::vector<double> p_raw; // softmax output before smoothing
  Dist p;                    // smoothed distribution
};

void check_tokens(const std::vector<int>& seq, int vocab, const char* what) {
  for (int t : seq)
    if (t < 0 || t >= vocab)
      throw ArgumentError(std::string(what) + ": token id out of vocabulary range");
}

// Last W tokens of (context ++ gold[0..t)), left-padded with PAD.
std::vector<int> window_at(const Arch& arch, const std::vector<int>& context,
                           const std::vector<int>& gold, std::size_t t) {
  const int w = arch.window;
  std::vector<int> out(static_cast<std::size_t>(w), Vocab::kPad);
  int pos = w - 1;
  for (std::size_t i = t; i > 0 && pos >= 0; --i, --pos)
    out[static_cast<std::size_t>(pos)] = gold[i - 1];
  for (std::size_t i = context.size(); i > 0 && pos >= 0; --i, --pos)
    out[static_cast<std::size_t>(pos)] = context[i - 1];
  return out;
}

PosTrace forward_pos(const ModelParams& m, std::vector<int> window) {
  const Arch& a = m.arch;
  PosTrace tr;
  tr.window = std::move(window);
  tr.x.resize(static_cast<std::size_t>(a.window) * a.embed);
  for (int w = 0; w < a.window; ++w) {
    const int tok = tr.window[static_cast<std::size_t>(w)];
    for (int e = 0; e < a.embed; ++e)
      tr.x[static_cast<std::size_t>(w) * a.embed + e] = m.params.embedding.at(tok, e);
  }
  tr.h.resize(static_cast<std::size_t>(a.hidden));
  for (int i = 0; i < a.hidden; ++i) {
    double acc = m.params.b_hidden.at(i, 0);
    const double* row = &m.params.w_hidden.v[static_cast<std::size_t>(i) * m.params.w_hidden.cols];
    for (std::size_t k = 0; k < tr.x.size(); ++k) acc += row[k] * tr.x[k];
    tr.h[static_cast<std::size_t>(i)] = std::tanh(acc);
  }
  std::vector<double> z(static_cast<std::size_t>(a.vocab));
  double zmax = -1e300;
  for (int i = 0; i < a.vocab; ++i) {
    double acc = m.params.b_out.at(i, 0);
    const double* row = &m.params.w_out.v[static_cast<std::size_t>(i) * a.hidden];
    for (int k = 0; k < a.hidden; ++k) acc += row[k] * tr.h[static_cast<std::size_t>(k)];
    z[static_cast<std::size_t>(i)] = acc;
    zmax = std::max(zmax, acc);
  }
  tr.p_raw.resize(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    tr.p_raw[i] = std::exp(z[i] - zmax);
    sum += tr.p_raw[i];
  }
  tr.p.resize(z.size());
  const double eps = m.eps_smooth;
  for (std::size_t i = 0; i < z.size(); ++i) {
    tr.p_raw[i] /= sum;
    tr.p[i] = (1.0 - eps) * tr.p_raw[i] + eps / static_cast<double>(a.vocab);
  }
  return tr;
}

std::vector<PosTrace> forward_trace(const ModelParams& m, const std::vector<int>& context,
                                    const std::vector<int>& gold) {
  if (gold.empty()) throw ArgumentError("sequence_forward: empty response");
  check_tokens(context, m.arch.vocab, "context");
  check_tokens(gold, m.arch.vocab, "response");
  std::vector<PosTrace> traces;
  traces.reserve(gold.size());
  for (std::size_t t = 0; t < gold.size(); ++t)
    traces.push_back(forward_pos(m, window_at(m.arch, context, gold, t)));
  return traces;
}

}  // namespace

std::vector<Dist> sequence_forward(const ModelParams& model, const std::vector<int>& context,
                                   const std::vector<int>& gold) {
  auto traces = forward_trace(model, context, gold);
  std::vector<Dist> out;
  out.reserve(traces.size());
  for (auto& tr : traces) out.push_back(std::move(tr.p));
  return out;
}

Dist next_dist(const ModelParams& model, const std::vector<int>& context,
               const std::vector<int>& prefix) {
  check_tokens(context, model.arch.vocab, "context");
  check_tokens(prefix, model.arch.vocab, "prefix");
  return forward_pos(model, window_at(model.arch, context, prefix, prefix.size())).p;
}

void backprop_example(const ModelParams& model, const std::vector<int>& context,
                      const std::vector<int>& gold,
                      const std::vector<Dist>& dist_grads, double scale,
                      Gradients& grads) {
  const Arch& a = model.arch;
  auto traces = forward_trace(model, context, gold);
  if (dist_grads.size() != traces.size())
    throw ArgumentError("backprop_example: gradient/position count mismatch");

  std::vector<double> dz(static_cast<std::size_t>(a.vocab));
  std::vector<double> dh(static_cast<std::size_t>(a.hidden));
  std::vector<double> dx(static_cast<std::size_t>(a.window) * a.embed);

  for (std::size_t t = 0; t < traces.size(); ++t) {
    const PosTrace& tr = traces[t];
    const Dist& gp = dist_grads[t];

    // Through uniform smoothing, then the softmax Jacobian.
    const double keep = 1.0 - model.eps_smooth;
    double dot = 0.0;
    for (int i = 0; i < a.vocab; ++i)
      dot += gp[static_cast<std::size_t>(i)] * tr.p_raw[static_cast<std::size_t>(i)];
    for (int i = 0; i < a.vocab; ++i) {
      dz[static_cast<std::size_t>(i)] = tr.p_raw[static_cast<std::size_t>(i)] * keep *
                                        (gp[static_cast<std::size_t>(i)] - dot);
    }

    std::fill(dh.begin(), dh.end(), 0.0);
    for (int i = 0; i < a.vocab; ++i) {
      const double d = dz[static_cast<std::size_t>(i)] * scale;
      grads.b_out.at(i, 0) += d;
      double* wrow = &grads.w_out.v[static_cast<std::size_t>(i) * a.hidden];
      const double* mrow = &model.params.w_out.v[static_cast<std::size_t>(i) * a.hidden];
      for (int k = 0; k < a.hidden; ++k) {
        wrow[k] += d * tr.h[static_cast<std::size_t>(k)];
        dh[static_cast<std::size_t>(k)] += mrow[k] * dz[static_cast<std::size_t>(i)];
      }
    }

    std::fill(dx.begin(), dx.end(), 0.0);
    for (int i = 0; i < a.hidden; ++i) {
      const double hi = tr.h[static_cast<std::size_t>(i)];
      const double da = (1.0 - hi * hi) * dh[static_cast<std::size_t>(i)];
      grads.b_hidden.at(i, 0) += da * scale;
      double* wrow = &grads.w_hidden.v[static_cast<std::size_t>(i) * grads.w_hidden.cols];
      const double* mrow = &model.params.w_hidden.v[static_cast<std::size_t>(i) * model.params.w_hidden.cols];
      for (std::size_t k = 0; k < dx.size(); ++k) {
        wrow[k] += da * tr.x[k] * scale;
        dx[k] += mrow[k] * da;
      }
    }

    for (int w = 0; w < a.window; ++w) {
      const int tok = tr.window[static_cast<std::size_t>(w)];
      for (int e = 0; e < a.embed; ++e)
        grads.embedding.at(tok, e) += dx[static_cast<std::size_t>(w) * a.embed + e] * scale;
    }
  }
}

std::pair<double, Gradients> backward(const ModelParams& model,
                                      const std::vector<DialoguePair>& batch,
                                      const LossSpec& loss_spec) {
  if (batch.empty()) throw ArgumentError("backward: empty batch");
  Gradients grads;
  grads.embedding = Tensor(model.params.embedding.rows, model.params.embedding.cols);
  grads.w_hidden = Tensor(model.params.w_hidden.rows, model.params.w_hidden.cols);
  grads.b_hidden = Tensor(model.params.b_hidden.rows, model.params.b_hidden.cols);
  grads.w_out = Tensor(model.params.w_out.rows, model.params.w_out.cols);
  grads.b_out = Tensor(model.params.b_out.rows, model.params.b_out.cols);

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& pair = batch[i];
    auto dists = sequence_forward(model, pair.context, pair.response);
    std::vector<Dist> dist_grads;
    const double loss = loss_spec(dists, pair.response, &dist_grads);
    if (!std::isfinite(loss))
      throw NumericalError("backward: non-finite loss at batch example " + std::to_string(i));
    total += loss * inv_n;
    backprop_example(model, pair.context, pair.response, dist_grads, inv_n, grads);
  }
  return {total, std::move(grads)};
}

std::vector<int> decode(const ModelParams& model, const std::vector<int>& context,
                        const DecodeStrategy& strategy, int max_len) {
  if (max_len < 1) throw ArgumentError("decode: max_len must be >= 1");
  check_tokens(context, model.arch.vocab, "context");

  const bool sampling = std::holds_alternative<Sample>(strategy);
  double temperature = 0.0;
  std::mt19937_64 rng;
  if (sampling) {
    const auto& s = std::get<Sample>(strategy);
    temperature = s.temperature;
    rng.seed(s.seed);
  }

  std::vector<int> out;
  for (int step = 0; step < max_len; ++step) {
    const auto tr = forward_pos(model, window_at(model.arch, context, out, out.size()));
    int tok;
    if (!sampling || temperature < 1e-12) {
      tok = static_cast<int>(std::max_element(tr.p.begin(), tr.p.end()) - tr.p.begin());
    } else {
      // Temperature rescales in probability space: p_i^{1/T}, renormalized,
      // which matches rescaling the logits.
      std::vector<double> w(tr.p_raw.size());
      const double pmax = *std::max_element(tr.p_raw.begin(), tr.p_raw.end());
      double sum = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = std::exp((std::log(tr.p_raw[i] + 1e-300) - std::log(pmax)) / temperature);
        sum += w[i];
      }
      const double u = uniform01(rng) * sum;
      double acc = 0.0;
      tok = static_cast<int>(w.size()) - 1;
      for (std::size_t i = 0; i < w.size(); ++i) {
        acc += w[i];
        if (u < acc) {
          tok = static_cast<int>(i);
          break;
        }
      }
    }
    if (tok == Vocab::kEos) break;
    out.push_back(tok);
  }
  return out;
}

}  // namespace lot
