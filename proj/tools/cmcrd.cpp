// cmcrd: generate synthetic datasets, run distillation experiments, ablate,
// and compare result files.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cmcrd/errors.hpp"
#include "cmcrd/harness.hpp"

namespace fs = std::filesystem;
using namespace cmcrd;

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

std::string keys_help() {
  const ExperimentConfig defaults;
  const auto values = to_json(defaults);
  std::ostringstream os;
  os << "Config keys (file: JSON object or key=value lines; flags override the file, --set overrides flags):\n";
  for (const auto& k : config_keys()) {
    std::string def = values.at(k.name).dump();
    os << "  " << k.name << " = " << def << "\n      " << k.help << "\n";
  }
  os << "Exit codes: 0 success, 1 runtime failure, 2 usage or config error.\n";
  return os.str();
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

struct CommonOptions {
  std::string config_file;
  std::string dataset;
  std::string out;
  std::string method;
  std::string protocol;
  std::string direction;
  std::string arch;
  std::string seeds;
  int jobs = -1;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_file, "config file (JSON or key=value)");
  cmd->add_option("--dataset", o.dataset, "dataset directory or manifest.json");
  cmd->add_option("--out", o.out, "output directory (fallback: $CMCRD_OUT_DIR)");
  cmd->add_option("--protocol", o.protocol, "within | cross");
  cmd->add_option("--direction", o.direction, "em2eeg | eeg2em");
  cmd->add_option("--arch", o.arch, "student architecture: dnn | dgcnn");
  cmd->add_option("--seeds", o.seeds, "comma-separated seeds");
  cmd->add_option("--jobs", o.jobs, "parallel fold workers (0 = all cores)");
  cmd->add_option("--set", o.overrides, "KEY=VALUE override, repeatable");
}

ExperimentConfig resolve(const CommonOptions& o, bool take_method) {
  ExperimentConfig c;
  if (!o.config_file.empty()) apply_config_file(c, o.config_file);
  if (!o.dataset.empty()) c.dataset = o.dataset;
  if (!o.out.empty()) c.out = o.out;
  if (take_method && !o.method.empty() && o.method.find(',') == std::string::npos) apply_setting(c, "method", o.method);
  if (!o.protocol.empty()) apply_setting(c, "protocol", o.protocol);
  if (!o.direction.empty()) apply_setting(c, "direction", o.direction);
  if (!o.arch.empty()) apply_setting(c, "arch", o.arch);
  if (!o.seeds.empty()) apply_setting(c, "seeds", o.seeds);
  if (o.jobs >= 0) c.jobs = static_cast<std::size_t>(o.jobs);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
    apply_setting(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.out.empty())
    if (const char* env = std::getenv("CMCRD_OUT_DIR")) c.out = env;
  if (c.out.empty()) throw ConfigError("no output directory: pass --out or set CMCRD_OUT_DIR");
  if (!c.dataset.empty() && !fs::exists(c.dataset)) throw ConfigError("dataset path not found: " + c.dataset);
  validate(c);
  return c;
}

void write_config(const ExperimentConfig& c, const fs::path& dir) {
  std::ofstream out(dir / "config.json", std::ios::binary);
  auto j = to_json(c);
  j["config_hash"] = config_hash(c);
  out << j.dump(2) << '\n';
}

int cmd_generate(const std::string& preset, std::uint64_t seed, const std::string& out_arg) {
  auto spec = synth_preset(preset);
  if (!spec) {
    std::string names;
    for (const auto& n : synth_preset_names()) names += (names.empty() ? "" : "|") + n;
    throw ConfigError("unknown preset '" + preset + "' (expected " + names + ")");
  }
  std::string out = out_arg;
  if (out.empty())
    if (const char* env = std::getenv("CMCRD_OUT_DIR")) out = env;
  if (out.empty()) throw ConfigError("no output directory: pass --out or set CMCRD_OUT_DIR");
  spec->seed = seed;
  save_dataset(generate_synthetic(*spec), out);
  std::cout << "wrote " << preset << " dataset (seed " << seed << ") to " << out << "\n";
  return kOk;
}

int cmd_run(const CommonOptions& o, bool with_fusion) {
  const std::vector<std::string> methods = o.method.empty() ? std::vector<std::string>{} : split_list(o.method);
  ExperimentConfig base = resolve(o, true);
  for (const auto& m : methods) parse_distill_method(m);
  const Dataset dataset = load_experiment_dataset(base);
  fs::create_directories(base.out);
  write_config(base, base.out);

  TeacherCache cache;
  std::vector<RunResult> all;
  const auto arms = methods.size() > 1 ? methods : std::vector<std::string>{to_string(base.distill.method)};
  for (const auto& m : arms) {
    ExperimentConfig c = base;
    apply_setting(c, "method", m);
    auto runs = run_protocol(dataset, c, &cache);
    for (const auto& r : runs)
      std::cout << r.label << " " << r.protocol << " seed " << r.seed << ": " << 100.0 * r.mean << "% ± "
                << 100.0 * r.std << "\n";
    all.insert(all.end(), runs.begin(), runs.end());
  }
  if (with_fusion) {
    auto runs = decision_fusion_eval(dataset, base, &cache);
    for (const auto& r : runs)
      std::cout << r.label << " " << r.protocol << " seed " << r.seed << ": " << 100.0 * r.mean << "%\n";
    all.insert(all.end(), runs.begin(), runs.end());
  }
  const fs::path out = base.out;
  write_results_jsonl(all, out / "results.jsonl");
  write_summary_csv(all, out / "summary.csv");
  write_timing_csv(timing_report(all), out / "timing.csv");
  return kOk;
}

int cmd_ablate(const CommonOptions& o) {
  const ExperimentConfig c = resolve(o, false);
  const Dataset dataset = load_experiment_dataset(c);
  fs::create_directories(c.out);
  write_config(c, c.out);
  TeacherCache cache;
  const auto cells = run_ablation_grid(dataset, c, &cache);
  std::vector<RunResult> all;
  std::ofstream table(fs::path(c.out) / "ablation.csv", std::ios::binary);
  table << "mcc,us,iew,mean,std,status\n";
  bool failed = false;
  for (const auto& cell : cells) {
    const char* mark[] = {"no", "yes"};
    table << mark[cell.mcc] << ',' << mark[cell.us] << ',' << mark[cell.iew] << ',';
    if (!cell.error.empty()) {
      failed = true;
      table << ",,error: " << cell.error << '\n';
      std::cerr << "cell " << cell.key() << " failed: " << cell.error << "\n";
      continue;
    }
    std::vector<double> pooled;
    for (const auto& r : cell.runs) pooled.insert(pooled.end(), r.fold_accuracies.begin(), r.fold_accuracies.end());
    RunResult agg;
    agg.fold_accuracies = pooled;
    agg.finalize();
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f,%.4f", agg.mean, agg.std);
    table << buf << ",ok\n";
    std::cout << cell.key() << ": " << 100.0 * agg.mean << "%\n";
    all.insert(all.end(), cell.runs.begin(), cell.runs.end());
  }
  write_results_jsonl(all, fs::path(c.out) / "results.jsonl");
  return failed ? kRuntime : kOk;
}

int cmd_compare(const std::vector<std::string>& files, const std::string& out) {
  if (files.size() < 2) throw ConfigError("compare needs a reference results file and at least one other");
  const auto reference = read_results_jsonl(files[0]);
  std::vector<std::vector<RunResult>> others;
  for (std::size_t i = 1; i < files.size(); ++i) others.push_back(read_results_jsonl(files[i]));
  const auto reports = compare_runs(reference, others);
  std::ostringstream csv;
  csv << "method_a,method_b,mean_difference,raw_p,adjusted_p,degenerate\n";
  for (const auto& r : reports) {
    double mean = 0.0;
    for (double d : r.differences) mean += d;
    mean /= static_cast<double>(r.differences.size());
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s,%s,%.6f,%.6g,%.6g,%s\n", r.method_a.c_str(), r.method_b.c_str(), mean,
                  r.raw_p, r.adjusted_p, r.degenerate ? "true" : "false");
    csv << buf;
  }
  std::cout << csv.str();
  if (!out.empty()) {
    std::ofstream f(out, std::ios::binary);
    if (!f) throw LoadError("cannot write " + out);
    f << csv.str();
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-modal contrastive distillation experiments"};
  app.require_subcommand(1);
  app.footer(keys_help());

  std::string preset = "seedv-like", gen_out;
  std::uint64_t gen_seed = 0;
  auto* gen = app.add_subcommand("generate", "write a synthetic dataset (manifest + CSVs)");
  gen->add_option("--preset", preset, "seed-like | seediv-like | seedv-like | bench")->capture_default_str();
  gen->add_option("--seed", gen_seed, "generator seed")->capture_default_str();
  gen->add_option("--out", gen_out, "output directory (fallback: $CMCRD_OUT_DIR)");

  CommonOptions run_opts;
  bool with_fusion = false;
  auto* run = app.add_subcommand("run", "train teachers and students over every fold and seed");
  add_common(run, run_opts);
  run->add_option("--method", run_opts.method, "method, or comma list of methods sharing teachers");
  run->add_flag("--fusion", with_fusion, "also evaluate EM + EEG decision fusion");
  run->footer(keys_help());

  CommonOptions ablate_opts;
  auto* ablate = app.add_subcommand("ablate", "the 8-cell (MCC, US, IEW) grid of the guided method");
  add_common(ablate, ablate_opts);
  ablate->footer(keys_help());

  std::vector<std::string> files;
  std::string compare_out;
  auto* compare = app.add_subcommand("compare", "paired t-tests of a reference result file against others");
  compare->add_option("files", files, "reference results.jsonl followed by the others")->required();
  compare->add_option("--out", compare_out, "also write the table to this CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_generate(preset, gen_seed, gen_out);
    if (*run) return cmd_run(run_opts, with_fusion);
    if (*ablate) return cmd_ablate(ablate_opts);
    if (*compare) return cmd_compare(files, compare_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
