#include "sepdetect/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "sepdetect/attack.hpp"
#include "sepdetect/data.hpp"
#include "sepdetect/detector.hpp"
#include "sepdetect/error.hpp"
#include "sepdetect/evaluation.hpp"
#include "sepdetect/io.hpp"
#include "sepdetect/pipeline.hpp"
#include "sepdetect/trainer.hpp"

namespace sepdetect::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kSeedEnv = "SEPDETECT_SEED";

// Expanded command line of the current invocation, copied into every manifest.
thread_local std::vector<std::string> t_command;

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      seeds.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError("invalid seed '" + item + "'");
    }
  }
  if (seeds.empty()) throw ValidationError("empty seed list");
  return seeds;
}

std::string join_seeds(const std::vector<std::uint64_t>& seeds) {
  std::string s;
  for (std::size_t i = 0; i < seeds.size(); ++i) s += (i ? "," : "") + std::to_string(seeds[i]);
  return s;
}

// A JSON config file becomes `--key value` tokens placed right after the
// subcommand, so explicit flags (parsed later, last one wins) override it.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::optional<std::string> config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config_path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (!config_path) return args;

  const json doc = read_json(*config_path);
  if (!doc.is_object()) throw ValidationError("config file must hold a JSON object");
  std::vector<std::string> injected;
  for (const auto& [key, value] : doc.items()) {
    std::string flag = "--" + key;
    std::replace(flag.begin() + 2, flag.end(), '_', '-');
    if (value.is_boolean()) {
      if (value.get<bool>()) injected.push_back(flag);
    } else if (value.is_array()) {
      std::string joined;
      for (const auto& v : value) {
        if (!joined.empty()) joined += ',';
        joined += v.is_string() ? v.get<std::string>() : v.dump();
      }
      injected.push_back(flag);
      injected.push_back(joined);
    } else if (!value.is_null()) {
      injected.push_back(flag);
      injected.push_back(value.is_string() ? value.get<std::string>() : value.dump());
    }
  }
  const auto pos = args.empty() ? args.end() : args.begin() + 1;
  args.insert(pos, injected.begin(), injected.end());
  return args;
}

json input_entry(const fs::path& p) { return {{"path", p.string()}, {"hash", hash_file(p)}}; }

json manifest(const std::string& subcommand, json options, json inputs) {
  return {{"subcommand", subcommand},
          {"command", t_command},
          {"options", std::move(options)},
          {"inputs", std::move(inputs)}};
}

// --- gen-data --------------------------------------------------------------

struct GenDataOptions {
  std::string kind = "separated";
  std::size_t per_class = 100;
  std::size_t dim = 2;
  std::size_t classes = 2;
  double std_dev = 1.0;
  double gap = 10.0;
  std::size_t pocket_size = 0;
  double pocket_offset = 0.0;
  std::optional<double> pocket_std;
  std::uint64_t seed = 0;
  std::string out;
};

void add_gen_data(CLI::App& app, GenDataOptions& o, std::function<void()> fn) {
  auto* sub = app.add_subcommand("gen-data", "Generate a synthetic scenario dataset");
  sub->add_option("--kind", o.kind, "separated | near_boundary | pocket")->capture_default_str();
  sub->add_option("--per-class", o.per_class, "Samples per class")->capture_default_str();
  sub->add_option("--dim", o.dim, "Feature dimension")->capture_default_str();
  sub->add_option("--classes", o.classes, "Number of classes")->capture_default_str();
  sub->add_option("--std", o.std_dev, "Cluster standard deviation")->capture_default_str();
  sub->add_option("--gap", o.gap, "Distance between class centers")->capture_default_str();
  sub->add_option("--pocket-size", o.pocket_size, "Class-1 points placed in the pocket");
  sub->add_option("--pocket-offset", o.pocket_offset, "Pocket center along axis 0");
  sub->add_option("--pocket-std", o.pocket_std, "Pocket spread (default: --std)");
  sub->add_option("--seed", o.seed, "Random seed")->envname(kSeedEnv);
  sub->add_option("--out", o.out, "Output CSV")->required();
  sub->callback(std::move(fn));
}

void run_gen_data(const GenDataOptions& o, std::ostream& out) {
  ScenarioConfig cfg;
  cfg.kind = parse_scenario_kind(o.kind);
  cfg.samples_per_class = o.per_class;
  cfg.dimension = o.dim;
  cfg.num_classes = o.classes;
  cfg.cluster_std = o.std_dev;
  cfg.gap = o.gap;
  cfg.pocket_size = o.pocket_size;
  cfg.pocket_offset = o.pocket_offset;
  cfg.pocket_std = o.pocket_std;
  cfg.seed = o.seed;
  const LabeledDataset ds = gen_scenario(cfg);
  save_dataset(ds, o.out);
  json opts{{"kind", to_string(cfg.kind)}, {"per_class", o.per_class}, {"dim", o.dim},
            {"classes", o.classes},        {"std", o.std_dev},         {"gap", o.gap},
            {"pocket_size", o.pocket_size}, {"pocket_offset", o.pocket_offset},
            {"seed", o.seed}};
  opts["pocket_std"] = o.pocket_std ? json(*o.pocket_std) : json(nullptr);
  write_manifest(o.out, manifest("gen-data", opts, json::object()));
  out << "wrote " << ds.size() << " samples to " << o.out << '\n';
}

// --- train -----------------------------------------------------------------

struct TrainOptions {
  std::string data;
  std::string out;
  std::string history;
  TrainConfig cfg;
  std::vector<std::size_t> hidden{64, 32};
};

void add_train(CLI::App& app, TrainOptions& o, std::function<void()> fn) {
  auto* sub = app.add_subcommand("train", "Train a classifier with CE + lambda * separation");
  sub->add_option("--data", o.data, "Training CSV")->required();
  sub->add_option("--out", o.out, "Checkpoint path")->required();
  sub->add_option("--history", o.history, "History JSON (default: <out>.history.json)");
  sub->add_option("--epochs", o.cfg.epochs)->capture_default_str();
  sub->add_option("--batch-size", o.cfg.batch_size)->capture_default_str();
  sub->add_option("--lr", o.cfg.learning_rate)->capture_default_str();
  sub->add_option("--lambda", o.cfg.lambda, "Separation loss weight")->capture_default_str();
  sub->add_option("--clip", o.cfg.grad_clip_norm, "Global gradient-norm clip")->capture_default_str();
  sub->add_option("--hidden", o.hidden, "Hidden widths; the last is the Z layer")
      ->delimiter(',')
      ->capture_default_str();
  sub->add_option("--seed", o.cfg.seed)->envname(kSeedEnv);
  sub->callback(std::move(fn));
}

void run_train(TrainOptions o, std::ostream& out) {
  o.cfg.hidden = o.hidden;
  const LabeledDataset ds = load_dataset(o.data);
  const TrainResult result = train(ds, o.cfg);
  save_checkpoint(result.params, o.cfg, o.out);
  const std::string history = o.history.empty() ? o.out + ".history.json" : o.history;
  write_json(to_json(result.history), history);
  const json m = manifest("train", to_json(o.cfg), {{"data", input_entry(o.data)}});
  write_manifest(o.out, m);
  write_manifest(history, m);
  if (!result.history.empty()) {
    const auto& last = result.history.back();
    out << "epochs " << result.history.size() << ", train accuracy " << last.train_accuracy
        << ", min class-mean distance " << last.min_class_mean_distance << '\n';
  }
  out << "wrote " << o.out << '\n';
}

// --- attack ----------------------------------------------------------------

struct AttackOptions {
  std::string checkpoint;
  std::string data;
  std::string out;
  double epsilon = 0.1;
  std::optional<double> clamp_lo;
  std::optional<double> clamp_hi;
};

void add_attack(CLI::App& app, AttackOptions& o, std::function<void()> fn) {
  auto* sub = app.add_subcommand("attack", "Generate FGSM adversarial examples");
  sub->add_option("--checkpoint", o.checkpoint)->required();
  sub->add_option("--data", o.data, "Clean CSV")->required();
  sub->add_option("--epsilon", o.epsilon)->capture_default_str();
  sub->add_option("--clamp-lo", o.clamp_lo);
  sub->add_option("--clamp-hi", o.clamp_hi);
  sub->add_option("--out", o.out, "Adversarial CSV")->required();
  sub->callback(std::move(fn));
}

void run_attack(const AttackOptions& o, std::ostream& out) {
  if (o.clamp_lo.has_value() != o.clamp_hi.has_value()) {
    throw ValidationError("--clamp-lo and --clamp-hi must be given together");
  }
  AttackConfig cfg;
  cfg.epsilon = o.epsilon;
  if (o.clamp_lo) cfg.clamp = std::make_pair(*o.clamp_lo, *o.clamp_hi);
  cfg.validate();
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const LabeledDataset clean = load_dataset(o.data, ck.params.num_classes());
  const LabeledDataset adv = fgsm_dataset(ck.params, clean, cfg);
  save_dataset(adv, o.out);
  json m = manifest("attack", to_json(cfg),
                    {{"checkpoint", input_entry(o.checkpoint)}, {"data", input_entry(o.data)}});
  m["attack"] = to_json(cfg);
  m["epsilon"] = cfg.epsilon;
  m["source_checkpoint"] = o.checkpoint;
  m["source_dataset"] = o.data;
  write_manifest(o.out, m);
  out << "flip rate " << flip_rate(ck.params, clean, adv) << ", wrote " << o.out << '\n';
}

// --- fit-detector ----------------------------------------------------------

struct FitOptions {
  std::string checkpoint;
  std::string data;
  std::string out;
  std::optional<double> sigma;
};

void add_fit(CLI::App& app, FitOptions& o, std::function<void()> fn) {
  auto* sub = app.add_subcommand("fit-detector", "Fit per-class kernel densities on Z features");
  sub->add_option("--checkpoint", o.checkpoint)->required();
  sub->add_option("--data", o.data, "Training CSV")->required();
  sub->add_option("--sigma", o.sigma, "Kernel bandwidth (default: median heuristic)");
  sub->add_option("--out", o.out, "Density model JSON")->required();
  sub->callback(std::move(fn));
}

void run_fit(const FitOptions& o, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const LabeledDataset train_set = load_dataset(o.data, ck.params.num_classes());
  DensityModel dm = fit_density(ck.params, train_set, o.sigma);
  dm.checkpoint_hash = hash_file(o.checkpoint);
  dm.train_data_hash = hash_file(o.data);
  save_density_model(dm, o.out);
  write_manifest(o.out, manifest("fit-detector",
                                 {{"sigma", o.sigma ? json(*o.sigma) : json(nullptr)}},
                                 {{"checkpoint", input_entry(o.checkpoint)},
                                  {"data", input_entry(o.data)}}));
  out << "sigma " << dm.sigma << ", wrote " << o.out << '\n';
}

// --- calibrate -------------------------------------------------------------

struct CalibrateOptions {
  std::string model;
  std::string checkpoint;
  std::string data;
  std::string out;
  double fpr = 0.05;
  std::string mode = "per_class";
};

void add_calibrate(CLI::App& app, CalibrateOptions& o, std::function<void()> fn) {
  auto* sub = app.add_subcommand("calibrate", "Set density thresholds from clean validation data");
  sub->add_option("--model", o.model, "Density model JSON")->required();
  sub->add_option("--checkpoint", o.checkpoint)->required();
  sub->add_option("--data", o.data, "Clean validation CSV")->required();
  sub->add_option("--fpr", o.fpr, "Target false-positive rate")->capture_default_str();
  sub->add_option("--mode", o.mode, "per_class | global")->capture_default_str();
  sub->add_option("--out", o.out, "Calibrated density model JSON")->required();
  sub->callback(std::move(fn));
}

void check_provenance(const DensityModel& dm, const fs::path& checkpoint) {
  if (!dm.checkpoint_hash.empty() && dm.checkpoint_hash != hash_file(checkpoint)) {
    throw ValidationError("density model was fitted on a different checkpoint than " +
                          checkpoint.string());
  }
}

void run_calibrate(const CalibrateOptions& o, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  DensityModel dm = load_density_model(o.model);
  check_provenance(dm, o.checkpoint);
  const LabeledDataset val = load_dataset(o.data, ck.params.num_classes());
  dm = calibrate_threshold(std::move(dm), ck.params, val, o.fpr, parse_threshold_mode(o.mode));
  save_density_model(dm, o.out);
  write_manifest(o.out, manifest("calibrate", {{"fpr", o.fpr}, {"mode", o.mode}},
                                 {{"model", input_entry(o.model)},
                                  {"checkpoint", input_entry(o.checkpoint)},
                                  {"data", input_entry(o.data)}}));
  out << "realized clean FPR " << realized_clean_fpr(dm, ck.params, val) << ", wrote " << o.out
      << '\n';
}

// --- detect ----------------------------------------------------------------

struct DetectOptions {
  std::string model;
  std::string checkpoint;
  std::string data;
  std::string out;
};

void add_detect(CLI::App& app, DetectOptions& o, std::function<void()> fn) {
  auto* sub = app.add_subcommand("detect", "Flag rows whose density falls below threshold");
  sub->add_option("--model", o.model, "Calibrated density model JSON")->required();
  sub->add_option("--checkpoint", o.checkpoint)->required();
  sub->add_option("--data", o.data, "CSV to screen")->required();
  sub->add_option("--out", o.out, "Per-row flags CSV")->required();
  sub->callback(std::move(fn));
}

void run_detect(const DetectOptions& o, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const DensityModel dm = load_density_model(o.model);
  check_provenance(dm, o.checkpoint);
  const LabeledDataset ds = load_dataset(o.data);
  if (ds.dim() != ck.params.input_dim()) {
    throw ValidationError("data dimension does not match the checkpoint");
  }
  std::ostringstream csv;
  csv << std::setprecision(17) << "row,predicted_class,density,threshold,is_adversarial\n";
  std::size_t flagged = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const DetectionResult r = detect(dm, ck.params, ds.sample(i));
    csv << i << ',' << r.predicted_class << ',' << r.density << ',' << r.threshold_used << ','
        << (r.is_adversarial ? 1 : 0) << '\n';
    if (r.is_adversarial) ++flagged;
  }
  if (fs::path(o.out).has_parent_path()) fs::create_directories(fs::path(o.out).parent_path());
  std::ofstream f(o.out, std::ios::binary);
  if (!f || !(f << csv.str())) throw IoError("cannot write " + o.out);
  f.close();
  write_manifest(o.out, manifest("detect", json::object(),
                                 {{"model", input_entry(o.model)},
                                  {"checkpoint", input_entry(o.checkpoint)},
                                  {"data", input_entry(o.data)}}));
  out << flagged << " of " << ds.size() << " rows flagged, wrote " << o.out << '\n';
}

// --- eval ------------------------------------------------------------------

struct EvalOptions {
  std::string checkpoint;
  std::string model;
  std::string clean;
  std::string adv;
  std::string scenario = "custom";
  std::string seeds;
  std::string out;
};

void add_eval(CLI::App& app, EvalOptions& o, std::function<void()> fn) {
  auto* sub = app.add_subcommand("eval", "Build the detection report JSON");
  sub->add_option("--checkpoint", o.checkpoint)->required();
  sub->add_option("--model", o.model, "Calibrated density model JSON")->required();
  sub->add_option("--clean", o.clean, "Clean test CSV")->required();
  sub->add_option("--adv", o.adv, "Adversarial CSV, row-aligned with --clean");
  sub->add_option("--scenario", o.scenario, "Scenario label for the report")->capture_default_str();
  sub->add_option("--seeds", o.seeds, "Comma-separated seeds recorded in the report");
  sub->add_option("--out", o.out, "Report JSON")->required();
  sub->callback(std::move(fn));
}

void run_eval(const EvalOptions& o, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const DensityModel dm = load_density_model(o.model);
  const LabeledDataset clean = load_dataset(o.clean, ck.params.num_classes());
  std::optional<LabeledDataset> adv;
  std::optional<AttackConfig> attack;
  json inputs{{"checkpoint", input_entry(o.checkpoint)},
              {"model", input_entry(o.model)},
              {"clean", input_entry(o.clean)}};
  if (!o.adv.empty()) {
    adv = load_dataset(o.adv, ck.params.num_classes());
    inputs["adv"] = input_entry(o.adv);
    const fs::path side = manifest_path(o.adv);
    if (fs::exists(side)) {
      const json m = read_json(side);
      if (m.contains("attack") && m["attack"].is_object()) {
        const json& j = m["attack"];
        AttackConfig a;
        a.epsilon = j.at("epsilon").get<double>();
        if (j.contains("clamp") && j["clamp"].is_array()) {
          a.clamp = std::make_pair(j["clamp"][0].get<double>(), j["clamp"][1].get<double>());
        }
        a.validate();
        attack = a;
      }
    }
  }
  ReportInputs in;
  in.scenario = o.scenario;
  in.seeds = o.seeds.empty() ? std::vector<std::uint64_t>{ck.config.seed} : parse_seed_list(o.seeds);
  in.params = &ck.params;
  in.train_config = ck.config;
  in.detector = &dm;
  in.clean_test = &clean;
  in.adversarial = adv ? &*adv : nullptr;
  in.attack = attack;
  in.checkpoint_hash = hash_file(o.checkpoint);
  const EvalReport report = build_report(in);
  write_json(to_json(report), o.out);
  write_manifest(o.out, manifest("eval", {{"scenario", o.scenario}, {"seeds", in.seeds}}, inputs));
  if (report.auc) out << "AUC " << *report.auc << ", ";
  out << "wrote " << o.out << '\n';
}

// --- repro -----------------------------------------------------------------

struct ReproOptions {
  std::string scenario = "pocket";
  std::string seeds = "1,2,3,4,5";
  std::string out_dir = "repro_out";
  std::optional<std::size_t> per_class;
  std::optional<std::size_t> epochs;
  std::optional<double> lambda;
  std::optional<double> fpr;
  std::optional<double> min_flip_rate;
  std::string mode = "per_class";
};

void add_repro(CLI::App& app, ReproOptions& o, std::function<void()> fn) {
  auto* sub = app.add_subcommand("repro", "Full pipeline for a scenario: lambda = 0 vs lambda > 0");
  sub->add_option("--scenario", o.scenario, "separated | near_boundary | pocket")->capture_default_str();
  sub->add_option("--seeds", o.seeds, "Comma-separated seeds")->capture_default_str();
  sub->add_option("--out-dir", o.out_dir)->capture_default_str();
  sub->add_option("--per-class", o.per_class, "Override samples per class");
  sub->add_option("--epochs", o.epochs, "Override training epochs");
  sub->add_option("--lambda", o.lambda, "Override the separation weight");
  sub->add_option("--fpr", o.fpr, "Override the calibration target FPR");
  sub->add_option("--min-flip-rate", o.min_flip_rate, "Override the epsilon selection target");
  sub->add_option("--mode", o.mode, "per_class | global")->capture_default_str();
  sub->callback(std::move(fn));
}

void run_repro(const ReproOptions& o, std::ostream& out) {
  ExperimentConfig cfg = default_experiment(parse_scenario_kind(o.scenario));
  if (o.per_class) cfg.scenario.samples_per_class = *o.per_class;
  if (o.epochs) cfg.train.epochs = *o.epochs;
  if (o.lambda) cfg.separation_lambda = *o.lambda;
  if (o.fpr) cfg.target_fpr = *o.fpr;
  if (o.min_flip_rate) cfg.min_flip_rate = *o.min_flip_rate;
  cfg.threshold_mode = parse_threshold_mode(o.mode);
  cfg.validate();
  const auto seeds = parse_seed_list(o.seeds);

  const fs::path dir(o.out_dir);
  std::vector<SeedArtifacts> results;
  for (std::uint64_t seed : seeds) {
    results.push_back(run_seed(cfg, seed));
    write_seed_artifacts(results.back(), cfg, dir / ("seed_" + std::to_string(seed)));
    const auto& b = results.back().baseline.report;
    const auto& p = results.back().separation.report;
    out << "seed " << seed << ": AUC lambda=0 " << (b.auc ? std::to_string(*b.auc) : "n/a")
        << ", lambda=" << cfg.separation_lambda << " " << (p.auc ? std::to_string(*p.auc) : "n/a")
        << '\n';
  }
  const json summary = summarize_seeds(results, cfg);
  write_json(summary, dir / "summary.json");
  write_manifest(dir / "summary.json",
                 manifest("repro",
                          {{"scenario", o.scenario}, {"seeds", join_seeds(seeds)},
                           {"config", to_json(cfg)}},
                          json::object()));
  out << "separation AUC wins " << summary["separation_auc_wins"].get<std::size_t>() << " of "
      << seeds.size() << ", wrote " << (dir / "summary.json").string() << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Separation-regularized density detection of adversarial examples", "sepdetect"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  GenDataOptions gen;
  TrainOptions tr;
  AttackOptions at;
  FitOptions fit;
  CalibrateOptions cal;
  DetectOptions det;
  EvalOptions ev;
  ReproOptions rep;
  std::function<void()> action;
  add_gen_data(app, gen, [&] { action = [&] { run_gen_data(gen, out); }; });
  add_train(app, tr, [&] { action = [&] { run_train(tr, out); }; });
  add_attack(app, at, [&] { action = [&] { run_attack(at, out); }; });
  add_fit(app, fit, [&] { action = [&] { run_fit(fit, out); }; });
  add_calibrate(app, cal, [&] { action = [&] { run_calibrate(cal, out); }; });
  add_detect(app, det, [&] { action = [&] { run_detect(det, out); }; });
  add_eval(app, ev, [&] { action = [&] { run_eval(ev, out); }; });
  add_repro(app, rep, [&] { action = [&] { run_repro(rep, out); }; });

  try {
    std::vector<std::string> expanded = expand_config(args);
    t_command = expanded;
    std::reverse(expanded.begin(), expanded.end());
    app.parse(std::move(expanded));
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kValidationError;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kValidationError;
  }

  try {
    if (action) action();
    return kOk;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kValidationError;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace sepdetect::cli
