#include "lot/runconfig.hpp"

#include <fstream>

#include <json.hpp>

#include "lot/errors.hpp"

namespace lot {

using nlohmann::json;

const std::vector<std::string>& train_stages() {
  static const std::vector<std::string> stages = {"aux-toxic", "aux-safe", "lot",
                                                  "baseline-all", "baseline-clean"};
  return stages;
}

const TrainConfig& RunConfig::train_for(const std::string& stage) const {
  auto it = stage_train.find(stage);
  if (it == stage_train.end()) throw ConfigError("unknown train stage: " + stage);
  return it->second;
}

void RunConfig::validate() const {
  if (data.gen.n_pairs < 10) throw ConfigError("data.n_pairs must be >= 10");
  if (data.gen.vocab_size < 10) throw ConfigError("data.vocab_size must be >= 10");
  if (data.gen.toxic_fraction < 0.0 || data.gen.toxic_fraction > 1.0)
    throw ConfigError("data.toxic_fraction must lie in [0, 1]");
  if (data.gen.max_len < 1) throw ConfigError("data.max_len must be >= 1");
  const double sum = data.split.train + data.split.valid + data.split.test;
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("data.split must sum to 1");
  if (model.arch.vocab != data.gen.vocab_size)
    throw ConfigError("model.vocab must equal data.vocab_size");
  if (model.eps_smooth <= 0.0 || model.eps_smooth >= 1e-2)
    throw ConfigError("model.eps_smooth out of range");
  loss.validate();
  train.validate();
  for (const auto& [stage, cfg] : stage_train) cfg.validate();
  if (eval.decode_max_len < 1) throw ConfigError("eval.decode_max_len must be >= 1");
  if (eval.scorer != "lexicon" && eval.scorer != "bow_linear")
    throw ConfigError("eval.scorer must be 'lexicon' or 'bow_linear'");
}

RunConfig default_run_config() {
  RunConfig cfg;
  for (const auto& stage : train_stages()) cfg.stage_train[stage] = cfg.train;
  return cfg;
}

namespace {

void require_keys(const json& obj, const std::string& section,
                  std::initializer_list<const char*> allowed) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown key '" + key + "' in section '" + section + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("bad value for '") + key + "'");
  }
}

void read_data(const json& obj, DataSection& d) {
  require_keys(obj, "data",
               {"n_pairs", "vocab_size", "toxic_fraction", "max_len", "seed", "split",
                "split_seed"});
  read(obj, "n_pairs", d.gen.n_pairs);
  read(obj, "vocab_size", d.gen.vocab_size);
  read(obj, "toxic_fraction", d.gen.toxic_fraction);
  read(obj, "max_len", d.gen.max_len);
  read(obj, "seed", d.seed);
  read(obj, "split_seed", d.split_seed);
  if (obj.contains("split")) {
    const auto& s = obj.at("split");
    require_keys(s, "data.split", {"train", "valid", "test"});
    read(s, "train", d.split.train);
    read(s, "valid", d.split.valid);
    read(s, "test", d.split.test);
  }
}

void read_model(const json& obj, ModelSection& m) {
  require_keys(obj, "model", {"vocab", "embed", "hidden", "window", "init_seed", "eps_smooth"});
  read(obj, "vocab", m.arch.vocab);
  read(obj, "embed", m.arch.embed);
  read(obj, "hidden", m.arch.hidden);
  read(obj, "window", m.arch.window);
  read(obj, "init_seed", m.init_seed);
  read(obj, "eps_smooth", m.eps_smooth);
}

void read_loss(const json& obj, LotConfig& l) {
  require_keys(obj, "loss", {"xi", "gamma", "lambda", "div_kind", "mode", "kl_cap", "eps_smooth"});
  read(obj, "xi", l.xi);
  read(obj, "gamma", l.gamma);
  read(obj, "lambda", l.lambda);
  read(obj, "kl_cap", l.kl_cap);
  read(obj, "eps_smooth", l.eps_smooth);
  if (obj.contains("div_kind")) {
    const auto s = obj.at("div_kind").get<std::string>();
    if (s == "js")
      l.div_kind = DivKind::JS;
    else if (s == "kl")
      l.div_kind = DivKind::KL;
    else
      throw ConfigError("loss.div_kind must be 'js' or 'kl'");
  }
  if (obj.contains("mode")) l.mode = loss_mode_from_string(obj.at("mode").get<std::string>());
}

void read_train_fields(const json& obj, const std::string& section, TrainConfig& t) {
  require_keys(obj, section,
               {"epochs", "batch_size", "learning_rate", "optimizer", "momentum", "adam_beta2",
                "adam_eps", "seed", "grad_clip", "aux-toxic", "aux-safe", "lot", "baseline-all",
                "baseline-clean"});
  read(obj, "epochs", t.epochs);
  read(obj, "batch_size", t.batch_size);
  read(obj, "learning_rate", t.learning_rate);
  read(obj, "momentum", t.momentum);
  read(obj, "adam_beta2", t.adam_beta2);
  read(obj, "adam_eps", t.adam_eps);
  read(obj, "seed", t.seed);
  if (obj.contains("optimizer"))
    t.optimizer = opt_kind_from_string(obj.at("optimizer").get<std::string>());
  if (obj.contains("grad_clip")) {
    if (obj.at("grad_clip").is_null())
      t.grad_clip.reset();
    else
      t.grad_clip = obj.at("grad_clip").get<double>();
  }
}

json train_to_json(const TrainConfig& t) {
  json obj;
  obj["epochs"] = t.epochs;
  obj["batch_size"] = t.batch_size;
  obj["learning_rate"] = t.learning_rate;
  obj["optimizer"] = to_string(t.optimizer);
  obj["momentum"] = t.momentum;
  obj["adam_beta2"] = t.adam_beta2;
  obj["adam_eps"] = t.adam_eps;
  obj["seed"] = t.seed;
  if (t.grad_clip)
    obj["grad_clip"] = *t.grad_clip;
  else
    obj["grad_clip"] = nullptr;
  return obj;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
  require_keys(doc, "<root>", {"data", "model", "loss", "train", "eval"});

  RunConfig cfg;
  if (doc.contains("data")) read_data(doc["data"], cfg.data);
  if (doc.contains("model")) read_model(doc["model"], cfg.model);
  if (doc.contains("loss")) read_loss(doc["loss"], cfg.loss);
  if (doc.contains("train")) {
    // Per-stage overrides nest under the stage name inside `train`.
    read_train_fields(doc["train"], "train", cfg.train);
  }
  for (const auto& stage : train_stages()) {
    TrainConfig st = cfg.train;
    if (doc.contains("train") && doc["train"].contains(stage))
      read_train_fields(doc["train"][stage], "train." + stage, st);
    cfg.stage_train[stage] = st;
  }
  if (doc.contains("eval")) {
    const auto& e = doc["eval"];
    require_keys(e, "eval", {"decode_max_len", "scorer"});
    read(e, "decode_max_len", cfg.eval.decode_max_len);
    read(e, "scorer", cfg.eval.scorer);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

std::string resolved_config_json(const RunConfig& cfg) {
  json doc;
  doc["data"] = {{"n_pairs", cfg.data.gen.n_pairs},
                 {"vocab_size", cfg.data.gen.vocab_size},
                 {"toxic_fraction", cfg.data.gen.toxic_fraction},
                 {"max_len", cfg.data.gen.max_len},
                 {"seed", cfg.data.seed},
                 {"split",
                  {{"train", cfg.data.split.train},
                   {"valid", cfg.data.split.valid},
                   {"test", cfg.data.split.test}}},
                 {"split_seed", cfg.data.split_seed}};
  doc["model"] = {{"vocab", cfg.model.arch.vocab},   {"embed", cfg.model.arch.embed},
                  {"hidden", cfg.model.arch.hidden}, {"window", cfg.model.arch.window},
                  {"init_seed", cfg.model.init_seed}, {"eps_smooth", cfg.model.eps_smooth}};
  doc["loss"] = {{"xi", cfg.loss.xi},
                 {"gamma", cfg.loss.gamma},
                 {"lambda", cfg.loss.lambda},
                 {"div_kind", cfg.loss.div_kind == DivKind::JS ? "js" : "kl"},
                 {"mode", to_string(cfg.loss.mode)},
                 {"kl_cap", cfg.loss.kl_cap},
                 {"eps_smooth", cfg.loss.eps_smooth}};
  doc["train"] = train_to_json(cfg.train);
  for (const auto& [stage, st] : cfg.stage_train) doc["train"][stage] = train_to_json(st);
  doc["eval"] = {{"decode_max_len", cfg.eval.decode_max_len}, {"scorer", cfg.eval.scorer}};
  return doc.dump(2);
}

std::string config_hash8(const RunConfig& cfg) {
  const std::string text = resolved_config_json(cfg);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[9];
  std::snprintf(buf, sizeof(buf), "%08x", static_cast<unsigned>(h & 0xffffffffull));
  return buf;
}

}  // namespace lot
