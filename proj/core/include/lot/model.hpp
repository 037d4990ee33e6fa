#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "lot/corpus.hpp"
#include "lot/tensor.hpp"

namespace lot {

enum class Role { toxic, safe, base, output };

const char* to_string(Role role);
Role role_from_string(const std::string& s);

struct Arch {
  int vocab = 50;    // V
  int embed = 16;    // E
  int hidden = 32;   // H
  int window = 8;    // W, context tokens fed to the hidden layer

  bool operator==(const Arch&) const = default;
};

// Strictly positive normalized distribution over the vocabulary.
using Dist = std::vector<double>;

// Fixed-window feed-forward next-token model: embed the last W tokens,
// concatenate, one tanh hidden layer, softmax over V, then mix with uniform
// at eps_smooth so every probability is strictly positive.
struct ModelParams {
  Arch arch;
  Role role = Role::base;
  ParamSet params;
  double eps_smooth = 1e-8;
};

ModelParams init_model(const Arch& arch, std::uint64_t seed);

// Teacher-forced distributions, one per response position; position t is
// conditioned on the context and gold[0..t).
std::vector<Dist> sequence_forward(const ModelParams& model,
                                   const std::vector<int>& context,
                                   const std::vector<int>& gold);

// Distribution for the single next token after (context ++ prefix).
Dist next_dist(const ModelParams& model, const std::vector<int>& context,
               const std::vector<int>& prefix);

// Maps per-position distributions plus the gold sequence to a scalar loss;
// when grad is non-null it must also fill d(loss)/d(dists).
using LossSpec = std::function<double(const std::vector<Dist>& dists,
                                      const std::vector<int>& gold,
                                      std::vector<Dist>* grad)>;

// Mean-reduced loss and analytic gradients over a batch.
std::pair<double, Gradients> backward(const ModelParams& model,
                                      const std::vector<DialoguePair>& batch,
                                      const LossSpec& loss_spec);

// Backpropagates given per-position d(loss)/d(dist) for one example into
// parameter gradients (accumulated into grads, scaled by `scale`).
void backprop_example(const ModelParams& model, const std::vector<int>& context,
                      const std::vector<int>& gold,
                      const std::vector<Dist>& dist_grads, double scale,
                      Gradients& grads);

struct Greedy {};
struct Sample {
  double temperature = 1.0;
  std::uint64_t seed = 0;
};
using DecodeStrategy = std::variant<Greedy, Sample>;

// Generates until EOS or max_len tokens; the returned sequence excludes EOS.
std::vector<int> decode(const ModelParams& model, const std::vector<int>& context,
                        const DecodeStrategy& strategy, int max_len);

// Versioned binary checkpoint (little-endian 64-bit floats).
std::vector<std::uint8_t> save_checkpoint(const ModelParams& model);
ModelParams load_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint_file(const ModelParams& model, const std::string& path);
ModelParams load_checkpoint_file(const std::string& path);

// Documented JSON variant for cross-implementation diffing.
std::string checkpoint_to_json(const ModelParams& model);
ModelParams checkpoint_from_json(const std::string& text);

}  // namespace lot
