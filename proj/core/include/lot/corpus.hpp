#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "lot/vocab.hpp"

namespace lot {

enum class SafetyLabel { safe, unsafe };

enum class Split { train, valid, test };

const char* to_string(SafetyLabel label);
const char* to_string(Split split);

// One context/response pair. Responses carry a trailing EOS token; the JSONL
// form stores the bare text and the loader re-appends EOS.
struct DialoguePair {
  std::vector<int> context;
  std::vector<int> response;
  SafetyLabel label = SafetyLabel::safe;
};

// Token-id lexicon driving synthetic generation and the lexicon toxicity
// scorer. safe_terms and toxic_terms are disjoint; templates are complete
// canned responses containing no toxic terms.
struct Lexicon {
  std::set<int> safe_terms;
  std::set<int> toxic_terms;
  std::vector<std::vector<int>> templates;
  // Topic words used as context heads by the generator.
  std::vector<int> topics;
};

struct LabeledCorpus {
  std::vector<DialoguePair> pairs;
  Split split = Split::train;
  std::shared_ptr<const Vocab> vocab;
  std::shared_ptr<const Lexicon> lexicon;  // optional generating lexicons

  std::size_t size() const { return pairs.size(); }
  std::size_t count(SafetyLabel label) const;
};

struct GenConfig {
  int n_pairs = 2000;
  int vocab_size = 50;
  double toxic_fraction = 0.39;
  int max_len = 8;
};

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

// Seeded synthetic dialogue corpus. Contexts are drawn from a shared topic
// pool; a response is toxic iff it contains at least one toxic-lexicon token,
// and the emitted unsafe fraction equals round(n_pairs * toxic_fraction).
// Half the topics are biased toward unsafe responses so that toxicity is a
// contextual choice rather than a vocabulary partition.
LabeledCorpus gen_synthetic_corpus(const GenConfig& cfg, std::uint64_t seed);

// JSONL ingestion. With a vocabulary, unknown words map to UNK; without one,
// a vocabulary is built from the file in record order.
LabeledCorpus load_jsonl(const std::string& path,
                         std::shared_ptr<const Vocab> vocab = nullptr);
void save_jsonl(const LabeledCorpus& corpus, const std::string& path);

void save_lexicon(const Lexicon& lexicon, const Vocab& vocab, const std::string& path);
Lexicon load_lexicon(const std::string& path, const Vocab& vocab);

// Vocabulary as a JSON token list in id order, so separate processes can
// share the generator's token ids exactly.
void save_vocab(const Vocab& vocab, const std::string& path);
std::shared_ptr<const Vocab> load_vocab(const std::string& path);

LabeledCorpus filter_by_label(const LabeledCorpus& corpus, SafetyLabel label);

// Stratified three-way partition, deterministic under seed.
std::array<LabeledCorpus, 3> split_corpus(const LabeledCorpus& corpus,
                                          const SplitRatios& ratios,
                                          std::uint64_t seed);

}  // namespace lot
