#pragma once

#include <string>
#include <vector>

#include "lot/corpus.hpp"
#include "lot/model.hpp"

namespace lot {

// Desk-scale stand-in for an external toxicity classifier: either the exact
// lexicon rule the synthetic labels are defined by, or a bag-of-words
// logistic regression trained on labeled pairs.
struct ToxicityScorer {
  enum class Kind { lexicon, bow_linear };

  Kind kind = Kind::lexicon;
  std::shared_ptr<const Lexicon> lexicon;
  std::vector<double> weights;  // bow_linear: per-token weights
  double bias = 0.0;
  double threshold = 0.5;

  // In [0, 1]; the lexicon kind returns exactly 0 or 1.
  double score(const std::vector<int>& response) const;
  bool flags(const std::vector<int>& response) const { return score(response) >= threshold; }
};

ToxicityScorer make_lexicon_scorer(std::shared_ptr<const Lexicon> lexicon);
ToxicityScorer train_toxicity_scorer(const LabeledCorpus& corpus);

// Percentage of responses the scorer flags.
double toxicity_rate(const std::vector<std::vector<int>>& generations,
                     const ToxicityScorer& scorer);

// exp of the token-weighted mean negative log-likelihood over responses.
double perplexity(const ModelParams& model, const LabeledCorpus& corpus);

struct Div1 {
  double mean = 0.0;
  double std_dev = 0.0;  // population std across responses
};

// Per-response distinct-unigram count, mean +- std; empty responses are
// excluded from the statistics.
Div1 div1(const std::vector<std::vector<int>>& generations);

// Percentage of responses exactly equal to any canned template.
double canned_rate(const std::vector<std::vector<int>>& generations,
                   const std::vector<std::vector<int>>& templates);

struct DivergenceDiagnostics {
  double mean_js_to_toxic = 0.0;
  double mean_js_to_safe = 0.0;
};

// Greedy-decodes the model on each prompt and averages per-position JS to
// each frozen reference along the model's own trajectory.
DivergenceDiagnostics divergence_diagnostics(const ModelParams& model,
                                             const ModelParams& tau,
                                             const ModelParams& s,
                                             const std::vector<std::vector<int>>& prompts,
                                             int max_len = 20);

struct EvalRow {
  std::string name;
  double ppl = 0.0;
  double tox_rate = 0.0;    // percent
  double canned_pct = 0.0;  // percent
  double div1_mean = 0.0;
  double div1_std = 0.0;
  double mean_js_to_safe = 0.0;   // nats
  double mean_js_to_toxic = 0.0;  // nats
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::string prompt_set;   // descriptor of the prompt source
  int decode_max_len = 20;
  std::vector<std::uint64_t> seeds;

  std::string to_csv() const;
  std::string to_table() const;
  void sort_by_toxicity();
};

struct NamedModel {
  std::string name;
  const ModelParams* model = nullptr;
};

// One row per model: greedy generations on the test-split contexts feed the
// toxicity/diversity metrics, teacher-forced likelihood feeds PPL, and the
// frozen references (when given) feed the divergence diagnostics.
EvalReport compare_report(const std::vector<NamedModel>& models,
                          const LabeledCorpus& test, const ToxicityScorer& scorer,
                          const std::vector<std::vector<int>>& templates,
                          const ModelParams* tau = nullptr, const ModelParams* s = nullptr,
                          int decode_max_len = 20);

}  // namespace lot
