#include "lot/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "lot/errors.hpp"
#include "lot/rng.hpp"

namespace lot {

using nlohmann::json;

const char* to_string(SafetyLabel label) {
  return label == SafetyLabel::safe ? "safe" : "unsafe";
}

const char* to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    default: return "test";
  }
}

std::size_t LabeledCorpus::count(SafetyLabel label) const {
  std::size_t n = 0;
  for (const auto& p : pairs) n += (p.label == label) ? 1 : 0;
  return n;
}

namespace {

std::vector<std::string> tokenize_ws(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream iss(text);
  std::string word;
  while (iss >> word) out.push_back(word);
  return out;
}

std::string detokenize(const std::vector<int>& ids, const Vocab& vocab, bool strip_eos) {
  std::string out;
  std::size_t n = ids.size();
  if (strip_eos && n > 0 && ids[n - 1] == Vocab::kEos) --n;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += vocab.token(ids[i]);
  }
  return out;
}

}  // namespace

LabeledCorpus gen_synthetic_corpus(const GenConfig& cfg, std::uint64_t seed) {
  if (cfg.vocab_size < 16) throw ConfigError("gen_synthetic_corpus: vocab_size must be >= 16");
  if (cfg.n_pairs < 10) throw ConfigError("gen_synthetic_corpus: n_pairs must be >= 10");
  if (!(cfg.toxic_fraction > 0.0 && cfg.toxic_fraction < 1.0))
    throw ConfigError("gen_synthetic_corpus: toxic_fraction must be in (0, 1)");
  if (cfg.max_len < 2) throw ConfigError("gen_synthetic_corpus: max_len must be >= 2");

  auto vocab = std::make_shared<Vocab>();
  auto lexicon = std::make_shared<Lexicon>();

  const int content = cfg.vocab_size - 4;
  const int group = std::max(2, content / 6);
  std::vector<int> topics, toxic, safe, filler;
  for (int i = 0; i < group; ++i) topics.push_back(vocab->add("topic" + std::to_string(i)));
  for (int i = 0; i < group; ++i) toxic.push_back(vocab->add("tox" + std::to_string(i)));
  for (int i = 0; i < group; ++i) safe.push_back(vocab->add("good" + std::to_string(i)));
  while (vocab->size() < cfg.vocab_size)
    filler.push_back(vocab->add("w" + std::to_string(filler.size())));

  lexicon->topics = topics;
  lexicon->toxic_terms.insert(toxic.begin(), toxic.end());
  lexicon->safe_terms.insert(safe.begin(), safe.end());
  // Two fixed canned responses built from filler words only.
  lexicon->templates.push_back({filler[0], filler[1 % filler.size()], filler[2 % filler.size()]});
  lexicon->templates.push_back({filler[3 % filler.size()], filler[4 % filler.size()]});

  std::mt19937_64 rng(seed);
  const int n = cfg.n_pairs;
  const long n_unsafe = std::lround(cfg.toxic_fraction * n);

  // Topic bias: even-indexed topics elicit mostly unsafe responses, odd ones
  // mostly safe, averaging to toxic_fraction.
  auto topic_bias = [&](int k) {
    return (k % 2 == 0) ? std::min(0.95, cfg.toxic_fraction + 0.35)
                        : std::max(0.05, cfg.toxic_fraction - 0.35);
  };

  struct Draft {
    int topic;
    std::vector<int> context;
    int pattern;   // 0..3, slot position layouts
    int fill_a, fill_b;
    bool canned;
    double score;
  };
  std::vector<Draft> drafts(static_cast<std::size_t>(n));
  for (auto& d : drafts) {
    d.topic = static_cast<int>(uniform_index(rng, topics.size()));
    d.context.push_back(topics[static_cast<std::size_t>(d.topic)]);
    const std::size_t extra = 1 + uniform_index(rng, 2);
    for (std::size_t j = 0; j < extra; ++j)
      d.context.push_back(filler[uniform_index(rng, filler.size())]);
    d.pattern = static_cast<int>(uniform_index(rng, 4));
    d.fill_a = filler[uniform_index(rng, filler.size())];
    d.fill_b = filler[uniform_index(rng, filler.size())];
    d.canned = uniform01(rng) < 0.02;
    d.score = topic_bias(d.topic) + 0.25 * (uniform01(rng) - 0.5);
  }

  // Exactly n_unsafe pairs get unsafe responses, chosen by descending
  // bias-plus-noise score so unsafe mass lands on the hot topics.
  std::vector<std::size_t> order(drafts.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return drafts[a].score > drafts[b].score;
  });
  std::vector<char> is_unsafe(drafts.size(), 0);
  for (long i = 0; i < n_unsafe; ++i) is_unsafe[order[static_cast<std::size_t>(i)]] = 1;

  LabeledCorpus corpus;
  corpus.vocab = vocab;
  corpus.lexicon = lexicon;
  corpus.pairs.reserve(drafts.size());
  for (std::size_t i = 0; i < drafts.size(); ++i) {
    const Draft& d = drafts[i];
    DialoguePair pair;
    pair.context = d.context;
    pair.label = is_unsafe[i] ? SafetyLabel::unsafe : SafetyLabel::safe;
    if (!is_unsafe[i] && d.canned) {
      pair.response = lexicon->templates[i % lexicon->templates.size()];
    } else {
      const std::size_t g = static_cast<std::size_t>(d.topic) % static_cast<std::size_t>(group);
      const int slot = is_unsafe[i] ? toxic[g] : safe[g];
      switch (d.pattern) {
        case 0: pair.response = {slot}; break;
        case 1: pair.response = {d.fill_a, slot}; break;
        case 2: pair.response = {slot, d.fill_a}; break;
        default: pair.response = {d.fill_a, slot, d.fill_b}; break;
      }
      while (static_cast<int>(pair.response.size()) + 1 > cfg.max_len) pair.response.pop_back();
      if (std::find(pair.response.begin(), pair.response.end(), slot) == pair.response.end())
        pair.response.insert(pair.response.begin(), slot);
    }
    pair.response.push_back(Vocab::kEos);
    corpus.pairs.push_back(std::move(pair));
  }
  return corpus;
}

LabeledCorpus load_jsonl(const std::string& path, std::shared_ptr<const Vocab> vocab) {
  std::ifstream in(path);
  if (!in) throw DataError("load_jsonl: cannot open " + path);

  std::shared_ptr<Vocab> building;
  if (!vocab) {
    building = std::make_shared<Vocab>();
  }
  const Vocab* lookup = vocab ? vocab.get() : building.get();

  auto to_ids = [&](const std::string& text) {
    std::vector<int> ids;
    for (const auto& w : tokenize_ws(text))
      ids.push_back(building ? building->add(w) : lookup->lookup(w));
    return ids;
  };

  LabeledCorpus corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError("load_jsonl: line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!rec.is_object() || !rec.contains("context") || !rec.contains("response") ||
        !rec.contains("label") || !rec["context"].is_string() ||
        !rec["response"].is_string() || !rec["label"].is_string()) {
      throw DataError("load_jsonl: line " + std::to_string(lineno) +
                      ": record must have string fields context/response/label");
    }
    const std::string label = rec["label"].get<std::string>();
    DialoguePair pair;
    if (label == "safe") {
      pair.label = SafetyLabel::safe;
    } else if (label == "unsafe") {
      pair.label = SafetyLabel::unsafe;
    } else {
      throw DataError("load_jsonl: line " + std::to_string(lineno) +
                      ": unknown label \"" + label + "\" (expected safe|unsafe)");
    }
    pair.context = to_ids(rec["context"].get<std::string>());
    pair.response = to_ids(rec["response"].get<std::string>());
    pair.response.push_back(Vocab::kEos);
    if (pair.response.size() < 2)
      throw DataError("load_jsonl: line " + std::to_string(lineno) + ": empty response");
    corpus.pairs.push_back(std::move(pair));
  }
  corpus.vocab = vocab ? vocab : std::shared_ptr<const Vocab>(building);
  return corpus;
}

void save_jsonl(const LabeledCorpus& corpus, const std::string& path) {
  if (!corpus.vocab) throw ArgumentError("save_jsonl: corpus has no vocabulary");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("save_jsonl: cannot open " + path + " for writing");
  for (const auto& pair : corpus.pairs) {
    json rec;
    rec["context"] = detokenize(pair.context, *corpus.vocab, false);
    rec["response"] = detokenize(pair.response, *corpus.vocab, true);
    rec["label"] = to_string(pair.label);
    out << rec.dump() << '\n';
  }
}

void save_lexicon(const Lexicon& lexicon, const Vocab& vocab, const std::string& path) {
  json doc;
  auto words = [&](const auto& ids) {
    std::vector<std::string> out;
    for (int id : ids) out.push_back(vocab.token(id));
    return out;
  };
  doc["safe_terms"] = words(lexicon.safe_terms);
  doc["toxic_terms"] = words(lexicon.toxic_terms);
  doc["topics"] = words(lexicon.topics);
  doc["templates"] = json::array();
  for (const auto& t : lexicon.templates) doc["templates"].push_back(words(t));
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("save_lexicon: cannot open " + path + " for writing");
  out << doc.dump(2) << '\n';
}

Lexicon load_lexicon(const std::string& path, const Vocab& vocab) {
  std::ifstream in(path);
  if (!in) throw DataError("load_lexicon: cannot open " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw DataError(std::string("load_lexicon: ") + e.what());
  }
  Lexicon lex;
  for (const auto& w : doc.at("safe_terms")) lex.safe_terms.insert(vocab.lookup(w.get<std::string>()));
  for (const auto& w : doc.at("toxic_terms")) lex.toxic_terms.insert(vocab.lookup(w.get<std::string>()));
  if (doc.contains("topics"))
    for (const auto& w : doc["topics"]) lex.topics.push_back(vocab.lookup(w.get<std::string>()));
  for (const auto& t : doc.at("templates")) {
    std::vector<int> ids;
    for (const auto& w : t) ids.push_back(vocab.lookup(w.get<std::string>()));
    lex.templates.push_back(std::move(ids));
  }
  return lex;
}

void save_vocab(const Vocab& vocab, const std::string& path) {
  json doc = json::array();
  for (int id = 0; id < vocab.size(); ++id) doc.push_back(vocab.token(id));
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("save_vocab: cannot open " + path + " for writing");
  out << doc.dump(2) << '\n';
}

std::shared_ptr<const Vocab> load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_vocab: cannot open " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw DataError(std::string("load_vocab: ") + e.what());
  }
  auto vocab = std::make_shared<Vocab>();
  for (std::size_t id = 0; id < doc.size(); ++id) {
    const auto word = doc[id].get<std::string>();
    if (id < 4) {
      if (vocab->token(static_cast<int>(id)) != word)
        throw DataError("load_vocab: reserved token mismatch at id " + std::to_string(id));
      continue;
    }
    if (vocab->add(word) != static_cast<int>(id))
      throw DataError("load_vocab: duplicate token '" + word + "'");
  }
  return vocab;
}

LabeledCorpus filter_by_label(const LabeledCorpus& corpus, SafetyLabel label) {
  LabeledCorpus out;
  out.split = corpus.split;
  out.vocab = corpus.vocab;
  out.lexicon = corpus.lexicon;
  for (const auto& p : corpus.pairs)
    if (p.label == label) out.pairs.push_back(p);
  return out;
}

namespace {

// Largest-remainder apportionment of m items over three ratios.
std::array<std::size_t, 3> apportion(std::size_t m, const SplitRatios& r) {
  const double ratios[3] = {r.train, r.valid, r.test};
  std::array<std::size_t, 3> out{};
  double frac[3];
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double target = m * ratios[i];
    out[i] = static_cast<std::size_t>(std::floor(target));
    frac[i] = target - static_cast<double>(out[i]);
    assigned += out[i];
  }
  std::array<int, 3> idx = {0, 1, 2};
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < m; ++k, ++assigned) out[idx[k % 3]] += 1;
  return out;
}

}  // namespace

std::array<LabeledCorpus, 3> split_corpus(const LabeledCorpus& corpus,
                                          const SplitRatios& ratios,
                                          std::uint64_t seed) {
  if (!(ratios.train > 0 && ratios.valid > 0 && ratios.test > 0))
    throw ConfigError("split_corpus: ratios must be positive");
  if (std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9)
    throw ConfigError("split_corpus: ratios must sum to 1");

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> by_label[2];
  for (std::size_t i = 0; i < corpus.pairs.size(); ++i)
    by_label[corpus.pairs[i].label == SafetyLabel::unsafe ? 1 : 0].push_back(i);

  // Stratified: shuffle and apportion each label group independently.
  std::vector<std::size_t> assigned[3];
  for (auto& group : by_label) {
    shuffle_vec(group, rng);
    const auto sizes = apportion(group.size(), ratios);
    std::size_t pos = 0;
    for (int s = 0; s < 3; ++s)
      for (std::size_t k = 0; k < sizes[s]; ++k) assigned[s].push_back(group[pos++]);
  }

  std::array<LabeledCorpus, 3> out;
  const Split kinds[3] = {Split::train, Split::valid, Split::test};
  for (int s = 0; s < 3; ++s) {
    std::sort(assigned[s].begin(), assigned[s].end());
    out[static_cast<std::size_t>(s)].split = kinds[s];
    out[static_cast<std::size_t>(s)].vocab = corpus.vocab;
    out[static_cast<std::size_t>(s)].lexicon = corpus.lexicon;
    for (std::size_t i : assigned[s])
      out[static_cast<std::size_t>(s)].pairs.push_back(corpus.pairs[i]);
    if (corpus.pairs.size() >= 10 && out[static_cast<std::size_t>(s)].pairs.empty())
      throw ConfigError("split_corpus: degenerate ratios leave an empty split");
  }
  return out;
}

}  // namespace lot
