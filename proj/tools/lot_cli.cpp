#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "lot/errors.hpp"
#include "lot/eval.hpp"
#include "lot/runconfig.hpp"
#include "lot/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lot;

namespace {

// Relative output directories resolve under $LOT_OUT_ROOT when it is set.
fs::path out_path(const std::string& dir) {
  fs::path p(dir);
  const char* root = std::getenv("LOT_OUT_ROOT");
  if (root && *root && p.is_relative()) p = fs::path(root) / p;
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
}

struct LoadedData {
  std::array<LabeledCorpus, 3> splits;  // train, valid, test
  std::shared_ptr<const Vocab> vocab;
  std::shared_ptr<const Lexicon> lexicon;
};

LoadedData load_data_dir(const std::string& dir) {
  const fs::path d(dir);
  LoadedData data;
  data.vocab = load_vocab((d / "vocab.json").string());
  data.lexicon =
      std::make_shared<Lexicon>(load_lexicon((d / "lexicon.json").string(), *data.vocab));
  const char* names[3] = {"train", "valid", "test"};
  const Split kinds[3] = {Split::train, Split::valid, Split::test};
  for (int i = 0; i < 3; ++i) {
    data.splits[static_cast<std::size_t>(i)] =
        load_jsonl((d / (std::string(names[i]) + ".jsonl")).string(), data.vocab);
    data.splits[static_cast<std::size_t>(i)].split = kinds[i];
    data.splits[static_cast<std::size_t>(i)].lexicon = data.lexicon;
  }
  return data;
}

ModelParams load_model_checked(const std::string& path, const RunConfig& cfg) {
  ModelParams m = load_checkpoint_file(path);
  if (!(m.arch == cfg.model.arch))
    throw ConfigError("checkpoint " + path + " has a different architecture than the config");
  return m;
}

ToxicityScorer make_scorer(const RunConfig& cfg, const LoadedData& data) {
  if (cfg.eval.scorer == "bow_linear") return train_toxicity_scorer(data.splits[0]);
  return make_lexicon_scorer(data.lexicon);
}

json config_block(const RunConfig& cfg) {
  return json::parse(resolved_config_json(cfg));
}

// ---- gen-data ----------------------------------------------------------

int cmd_gen_data(const RunConfig& cfg, const std::string& out_dir) {
  const fs::path out = out_path(out_dir);
  fs::create_directories(out);

  auto corpus = gen_synthetic_corpus(cfg.data.gen, cfg.data.seed);
  auto splits = split_corpus(corpus, cfg.data.split, cfg.data.split_seed);

  save_vocab(*corpus.vocab, (out / "vocab.json").string());
  save_lexicon(*corpus.lexicon, *corpus.vocab, (out / "lexicon.json").string());
  const char* names[3] = {"train", "valid", "test"};
  json counts;
  for (int i = 0; i < 3; ++i) {
    const auto& s = splits[static_cast<std::size_t>(i)];
    save_jsonl(s, (out / (std::string(names[i]) + ".jsonl")).string());
    counts[names[i]] = {{"total", s.size()},
                        {"safe", s.count(SafetyLabel::safe)},
                        {"unsafe", s.count(SafetyLabel::unsafe)}};
  }
  counts["all"] = {{"total", corpus.size()},
                   {"safe", corpus.count(SafetyLabel::safe)},
                   {"unsafe", corpus.count(SafetyLabel::unsafe)}};

  json manifest;
  manifest["kind"] = "data";
  manifest["counts"] = counts;
  manifest["config"] = config_block(cfg);
  manifest["config_hash"] = config_hash8(cfg);
  write_text(out / "data-manifest.json", manifest.dump(2));

  for (const char* f : {"vocab.json", "lexicon.json", "train.jsonl", "valid.jsonl", "test.jsonl",
                        "data-manifest.json"})
    std::cout << (out / f).string() << '\n';
  return 0;
}

// ---- train -------------------------------------------------------------

int cmd_train(const RunConfig& cfg, const std::string& stage, const std::string& data_dir,
              const std::string& out_dir, const std::string& init_path,
              const std::string& tau_path, const std::string& safe_path) {
  bool known = false;
  for (const auto& s : train_stages()) known = known || s == stage;
  if (!known) throw ConfigError("unknown train stage: " + stage);

  const auto data = load_data_dir(data_dir);
  const auto& train_split = data.splits[0];
  const TrainConfig& tc = cfg.train_for(stage);

  ModelParams init = init_path.empty() ? init_model(cfg.model.arch, cfg.model.init_seed)
                                       : load_model_checked(init_path, cfg);
  init.eps_smooth = cfg.model.eps_smooth;

  TrainResult result;
  json inputs;
  // Identify the data by content hash, not by location, so reruns rooted
  // elsewhere still produce byte-identical manifests.
  inputs["data"] = fs::path(data_dir).filename().string();
  {
    std::ifstream dm(fs::path(data_dir) / "data-manifest.json");
    if (dm) {
      json doc;
      dm >> doc;
      if (doc.contains("config_hash")) inputs["data_hash"] = doc["config_hash"];
    }
  }
  if (!init_path.empty()) inputs["init"] = fs::path(init_path).filename().string();

  if (stage == "aux-toxic") {
    result = train_aux(init, filter_by_label(train_split, SafetyLabel::unsafe),
                       SafetyLabel::unsafe, tc);
  } else if (stage == "aux-safe") {
    result =
        train_aux(init, filter_by_label(train_split, SafetyLabel::safe), SafetyLabel::safe, tc);
  } else if (stage == "baseline-all") {
    result = train_baseline(init, train_split, BaselineVariant::all_data, tc);
  } else if (stage == "baseline-clean") {
    result = train_baseline(init, train_split, BaselineVariant::clean_only, tc);
  } else if (stage == "lot") {
    if (tau_path.empty() || safe_path.empty())
      throw ConfigError("train lot requires aux-toxic and aux-safe checkpoints (--tau, --safe)");
    ModelParams tau = load_model_checked(tau_path, cfg);
    ModelParams s = load_model_checked(safe_path, cfg);
    result = train_lot(init, train_split, tau, s, tc, cfg.loss);
    inputs["tau"] = fs::path(tau_path).filename().string();
    inputs["safe"] = fs::path(safe_path).filename().string();
  } else {
    throw ConfigError("unknown train stage: " + stage);
  }

  const fs::path out = out_path(out_dir);
  fs::create_directories(out);
  const std::string id = stage + "-s" + std::to_string(tc.seed) + "-" + config_hash8(cfg);
  const fs::path ckpt = out / (id + ".ckpt");
  save_checkpoint_file(result.model, ckpt.string());

  const auto& last = result.history.back();
  json manifest;
  manifest["kind"] = "train";
  manifest["stage"] = stage;
  manifest["inputs"] = inputs;
  manifest["output"] = id + ".ckpt";
  manifest["role"] = to_string(result.model.role);
  manifest["config"] = config_block(cfg);
  manifest["config_hash"] = config_hash8(cfg);
  manifest["final_metrics"] = {{"total", last.total},
                               {"mle_term", last.mle_term},
                               {"contrast_term", last.contrast_term},
                               {"reinforce_term", last.reinforce_term},
                               {"epochs", result.history.size()}};
  const fs::path mpath = out / (id + ".manifest.json");
  write_text(mpath, manifest.dump(2));

  std::cout << ckpt.string() << '\n' << mpath.string() << '\n';
  return 0;
}

// ---- eval / ablate / report -------------------------------------------

void write_report(const EvalReport& report, const RunConfig& cfg, const fs::path& out,
                  const std::string& name, const json& extra) {
  fs::create_directories(out);
  write_text(out / (name + ".csv"), report.to_csv());
  write_text(out / (name + ".txt"), report.to_table());
  json manifest;
  manifest["kind"] = "report";
  manifest["name"] = name;
  manifest["config"] = config_block(cfg);
  manifest["config_hash"] = config_hash8(cfg);
  for (const auto& [k, v] : extra.items()) manifest[k] = v;
  write_text(out / (name + ".manifest.json"), manifest.dump(2));
  for (const char* ext : {".csv", ".txt", ".manifest.json"})
    std::cout << (out / (name + ext)).string() << '\n';
}

int cmd_eval(const RunConfig& cfg, const std::string& data_dir,
             const std::vector<std::string>& model_specs, const std::string& tau_path,
             const std::string& safe_path, const std::string& out_dir, const std::string& name) {
  const auto data = load_data_dir(data_dir);
  std::vector<std::pair<std::string, ModelParams>> loaded;
  for (const auto& spec : model_specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size())
      throw ConfigError("--model expects NAME=CHECKPOINT, got '" + spec + "'");
    loaded.emplace_back(spec.substr(0, eq), load_model_checked(spec.substr(eq + 1), cfg));
  }
  if (loaded.empty()) throw ConfigError("eval needs at least one --model NAME=CHECKPOINT");

  std::optional<ModelParams> tau, s;
  if (!tau_path.empty()) tau = load_model_checked(tau_path, cfg);
  if (!safe_path.empty()) s = load_model_checked(safe_path, cfg);

  std::vector<NamedModel> models;
  for (auto& [n, m] : loaded) models.push_back({n, &m});
  const auto scorer = make_scorer(cfg, data);
  const auto report =
      compare_report(models, data.splits[2], scorer, data.lexicon->templates,
                     tau ? &*tau : nullptr, s ? &*s : nullptr, cfg.eval.decode_max_len);

  json extra;
  extra["models"] = json::object();
  for (const auto& spec : model_specs) {
    const auto eq = spec.find('=');
    extra["models"][spec.substr(0, eq)] = fs::path(spec.substr(eq + 1)).filename().string();
  }
  write_report(report, cfg, out_path(out_dir), name, extra);
  return 0;
}

int cmd_ablate(const RunConfig& cfg, const std::string& data_dir, const std::string& init_path,
               const std::string& tau_path, const std::string& safe_path,
               const std::string& out_dir) {
  const auto data = load_data_dir(data_dir);
  ModelParams base = load_model_checked(init_path, cfg);
  base.eps_smooth = cfg.model.eps_smooth;
  ModelParams tau = load_model_checked(tau_path, cfg);
  ModelParams s = load_model_checked(safe_path, cfg);
  const TrainConfig& tc = cfg.train_for("lot");

  struct Variant {
    const char* name;
    LossMode mode;
    DivKind kind;
  };
  const Variant variants[] = {{"lot-full-js", LossMode::full, DivKind::JS},
                              {"lot-contrastor-js", LossMode::contrastor_only, DivKind::JS},
                              {"lot-reinforcer-js", LossMode::reinforcer_only, DivKind::JS},
                              {"lot-full-kl", LossMode::full, DivKind::KL}};
  std::vector<std::pair<std::string, ModelParams>> trained;
  for (const auto& v : variants) {
    LotConfig lc = cfg.loss;
    lc.mode = v.mode;
    lc.div_kind = v.kind;
    trained.emplace_back(v.name, train_lot(base, data.splits[0], tau, s, tc, lc).model);
  }

  std::vector<NamedModel> models;
  for (auto& [n, m] : trained) models.push_back({n, &m});
  const auto scorer = make_scorer(cfg, data);
  const auto report = compare_report(models, data.splits[2], scorer, data.lexicon->templates,
                                     &tau, &s, cfg.eval.decode_max_len);

  json extra;
  extra["inputs"] = {{"init", fs::path(init_path).filename().string()},
                     {"tau", fs::path(tau_path).filename().string()},
                     {"safe", fs::path(safe_path).filename().string()}};
  write_report(report, cfg, out_path(out_dir), "ablate", extra);
  return 0;
}

int cmd_report(const std::vector<std::string>& csv_paths, const std::string& out_file) {
  EvalReport merged;
  for (const auto& path : csv_paths) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) ||
        line.rfind("model,ppl,tox_pct", 0) != 0)
      throw DataError(path + " is not a report CSV");
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream ls(line);
      EvalRow row;
      std::string field;
      std::getline(ls, row.name, ',');
      auto num = [&ls, &field]() {
        if (!std::getline(ls, field, ',')) throw DataError("short report row");
        return std::stod(field);
      };
      row.ppl = num();
      row.tox_rate = num();
      row.canned_pct = num();
      row.div1_mean = num();
      row.div1_std = num();
      row.mean_js_to_safe = num();
      row.mean_js_to_toxic = num();
      merged.rows.push_back(row);
    }
  }
  if (merged.rows.empty()) throw DataError("no rows found in the given reports");
  merged.sort_by_toxicity();
  std::cout << merged.to_table();
  if (!out_file.empty()) {
    const fs::path p = out_path(out_file);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    write_text(p, merged.to_table());
    std::cout << p.string() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LOT contrastive-safety fine-tuning pipeline"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_dir = ".", init_path, tau_path, safe_path;
  std::string stage, report_name = "report", report_out;
  std::vector<std::string> model_specs, csv_paths;

  // Flag overrides; only applied when the user passes them (flags win over
  // the config file, and the override shows up in the resolved config hash).
  std::optional<std::uint64_t> seed_override;
  std::optional<int> epochs_override;
  std::optional<double> lr_override, gamma_override, lambda_override, xi_override;
  std::optional<std::string> mode_override, div_override;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run config JSON file");
  };

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic labeled corpus");
  add_common(gen);
  gen->add_option("--out", out_dir, "output directory")->required();

  auto* train = app.add_subcommand("train", "train one pipeline stage");
  add_common(train);
  train->add_option("stage", stage, "aux-toxic | aux-safe | lot | baseline-all | baseline-clean")
      ->required();
  train->add_option("--data", data_dir, "directory produced by gen-data")->required();
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_option("--init", init_path, "starting checkpoint (default: fresh init)");
  train->add_option("--tau", tau_path, "frozen toxic reference checkpoint (lot stage)");
  train->add_option("--safe", safe_path, "frozen safe reference checkpoint (lot stage)");
  train->add_option("--seed", seed_override, "trainer seed override");
  train->add_option("--epochs", epochs_override, "epoch count override");
  train->add_option("--lr", lr_override, "learning-rate override");
  train->add_option("--mode", mode_override, "loss mode override (lot stage)");
  train->add_option("--gamma", gamma_override, "contrastor coefficient override");
  train->add_option("--lambda", lambda_override, "reinforcer coefficient override");
  train->add_option("--xi", xi_override, "likelihood coefficient override");
  train->add_option("--div-kind", div_override, "divergence override: js | kl");

  auto* eval = app.add_subcommand("eval", "evaluate checkpoints on the test split");
  add_common(eval);
  eval->add_option("--data", data_dir, "directory produced by gen-data")->required();
  eval->add_option("--model", model_specs, "NAME=CHECKPOINT (repeatable)")->required();
  eval->add_option("--tau", tau_path, "toxic reference for divergence diagnostics");
  eval->add_option("--safe", safe_path, "safe reference for divergence diagnostics");
  eval->add_option("--out", out_dir, "output directory")->required();
  eval->add_option("--name", report_name, "report base name");

  auto* ablate = app.add_subcommand("ablate", "train and compare the four loss variants");
  add_common(ablate);
  ablate->add_option("--data", data_dir, "directory produced by gen-data")->required();
  ablate->add_option("--init", init_path, "base checkpoint")->required();
  ablate->add_option("--tau", tau_path, "frozen toxic reference")->required();
  ablate->add_option("--safe", safe_path, "frozen safe reference")->required();
  ablate->add_option("--out", out_dir, "output directory")->required();
  ablate->add_option("--seed", seed_override, "trainer seed override");

  auto* report = app.add_subcommand("report", "merge report CSVs into one comparison table");
  report->add_option("csv", csv_paths, "report CSV files")->required();
  report->add_option("--out", report_out, "also write the merged table here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg = config_path.empty() ? default_run_config() : load_run_config(config_path);
    const std::string target_stage = app.got_subcommand(ablate) ? "lot" : stage;
    if (!target_stage.empty() &&
        (seed_override || epochs_override || lr_override)) {
      TrainConfig& tc = cfg.stage_train.at(target_stage);
      if (seed_override) tc.seed = *seed_override;
      if (epochs_override) tc.epochs = *epochs_override;
      if (lr_override) tc.learning_rate = *lr_override;
      tc.validate();
    }
    if (mode_override) cfg.loss.mode = loss_mode_from_string(*mode_override);
    if (gamma_override) cfg.loss.gamma = *gamma_override;
    if (lambda_override) cfg.loss.lambda = *lambda_override;
    if (xi_override) cfg.loss.xi = *xi_override;
    if (div_override) {
      if (*div_override == "js")
        cfg.loss.div_kind = DivKind::JS;
      else if (*div_override == "kl")
        cfg.loss.div_kind = DivKind::KL;
      else
        throw ConfigError("--div-kind must be js or kl");
    }
    cfg.loss.validate();

    if (app.got_subcommand(gen)) return cmd_gen_data(cfg, out_dir);
    if (app.got_subcommand(train))
      return cmd_train(cfg, stage, data_dir, out_dir, init_path, tau_path, safe_path);
    if (app.got_subcommand(eval))
      return cmd_eval(cfg, data_dir, model_specs, tau_path, safe_path, out_dir, report_name);
    if (app.got_subcommand(ablate))
      return cmd_ablate(cfg, data_dir, init_path, tau_path, safe_path, out_dir);
    if (app.got_subcommand(report)) return cmd_report(csv_paths, report_out);
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const ArgumentError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
