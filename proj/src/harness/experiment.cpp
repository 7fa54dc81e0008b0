#include "cmcrd/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "cmcrd/errors.hpp"
#include "cmcrd/hash.hpp"
#include "cmcrd/serialize.hpp"

namespace cmcrd {

using nlohmann::json;

const char* to_string(Direction d) { return d == Direction::EmToEeg ? "em2eeg" : "eeg2em"; }

Direction parse_direction(const std::string& s) {
  if (s == "em2eeg") return Direction::EmToEeg;
  if (s == "eeg2em") return Direction::EegToEm;
  throw ConfigError("unknown direction '" + s + "' (expected em2eeg|eeg2em)");
}

Modality teacher_modality(Direction d) { return d == Direction::EmToEeg ? Modality::Em : Modality::Eeg; }
Modality student_modality(Direction d) { return d == Direction::EmToEeg ? Modality::Eeg : Modality::Em; }

namespace {

std::string trim(std::string s) {
  auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
  return s;
}

[[noreturn]] void bad_value(const std::string& key, const json& v, const char* want) {
  throw ConfigError("config key '" + key + "': expected " + want + ", got " + v.dump());
}

double as_double(const std::string& key, const json& v) {
  if (v.is_number()) return v.get<double>();
  bad_value(key, v, "a number");
}

std::size_t as_size(const std::string& key, const json& v) {
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::size_t>();
  bad_value(key, v, "a non-negative integer");
}

bool as_bool(const std::string& key, const json& v) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_number_integer() && (v == 0 || v == 1)) return v == 1;
  bad_value(key, v, "a boolean");
}

std::string as_string(const std::string& key, const json& v) {
  if (v.is_string()) return v.get<std::string>();
  bad_value(key, v, "a string");
}

template <typename T>
std::vector<T> as_list(const std::string& key, const json& v) {
  json arr = v;
  if (v.is_number_integer()) arr = json::array({v});
  if (!arr.is_array()) bad_value(key, v, "a list of non-negative integers");
  std::vector<T> out;
  for (const auto& e : arr) out.push_back(static_cast<T>(as_size(key, e)));
  return out;
}

template <typename Parse>
auto enum_value(const std::string& key, const json& v, Parse parse) {
  return parse(as_string(key, v));
}

ConfigKey key(std::string name, std::string help, std::function<json(const ExperimentConfig&)> get,
              std::function<void(ExperimentConfig&, const json&)> set) {
  return ConfigKey{std::move(name), std::move(help), std::move(get), std::move(set)};
}

#define CMCRD_NUM_KEY(NAME, HELP, FIELD)                                                   \
  key(NAME, HELP, [](const ExperimentConfig& c) -> json { return c.FIELD; },               \
      [](ExperimentConfig& c, const json& v) { c.FIELD = as_double(NAME, v); })
#define CMCRD_SIZE_KEY(NAME, HELP, FIELD)                                                  \
  key(NAME, HELP, [](const ExperimentConfig& c) -> json { return c.FIELD; },               \
      [](ExperimentConfig& c, const json& v) { c.FIELD = as_size(NAME, v); })
#define CMCRD_BOOL_KEY(NAME, HELP, FIELD)                                                  \
  key(NAME, HELP, [](const ExperimentConfig& c) -> json { return c.FIELD; },               \
      [](ExperimentConfig& c, const json& v) { c.FIELD = as_bool(NAME, v); })

std::vector<ConfigKey> build_keys() {
  std::vector<ConfigKey> k;
  k.push_back(key("dataset", "dataset manifest path; empty uses the synthetic preset",
                  [](const ExperimentConfig& c) -> json { return c.dataset; },
                  [](ExperimentConfig& c, const json& v) { c.dataset = as_string("dataset", v); }));
  k.push_back(key("preset", "synthetic preset when no dataset is given",
                  [](const ExperimentConfig& c) -> json { return c.preset; },
                  [](ExperimentConfig& c, const json& v) { c.preset = as_string("preset", v); }));
  k.push_back(CMCRD_SIZE_KEY("data_seed", "seed of the synthetic generator", data_seed));
  k.push_back(key("protocol", "within | cross",
                  [](const ExperimentConfig& c) -> json { return to_string(c.protocol); },
                  [](ExperimentConfig& c, const json& v) { c.protocol = enum_value("protocol", v, parse_protocol); }));
  k.push_back(key("direction", "em2eeg | eeg2em (guiding -> student modality)",
                  [](const ExperimentConfig& c) -> json { return to_string(c.direction); },
                  [](ExperimentConfig& c, const json& v) { c.direction = enum_value("direction", v, parse_direction); }));
  k.push_back(key("arch", "student architecture: dnn | dgcnn",
                  [](const ExperimentConfig& c) -> json { return to_string(c.arch); },
                  [](ExperimentConfig& c, const json& v) { c.arch = enum_value("arch", v, parse_family); }));
  k.push_back(key("teacher_arch", "teacher architecture: dnn | dgcnn",
                  [](const ExperimentConfig& c) -> json { return to_string(c.teacher_arch); },
                  [](ExperimentConfig& c, const json& v) { c.teacher_arch = enum_value("teacher_arch", v, parse_family); }));
  k.push_back(key("hidden", "DNN hidden widths before the feature layer",
                  [](const ExperimentConfig& c) -> json { return c.hidden; },
                  [](ExperimentConfig& c, const json& v) { c.hidden = as_list<std::size_t>("hidden", v); }));
  k.push_back(CMCRD_SIZE_KEY("feature_dim", "width of the extracted feature h", feature_dim));
  k.push_back(CMCRD_SIZE_KEY("dgcnn_filters", "graph-convolution filters per channel", dgcnn_filters));
  k.push_back(CMCRD_NUM_KEY("l2", "L2 regularisation coefficient", l2));
  k.push_back(key("method", "cmcrd | crd | kd | fitnet | nst | sp | rkd | pkt | none",
                  [](const ExperimentConfig& c) -> json { return to_string(c.distill.method); },
                  [](ExperimentConfig& c, const json& v) { c.distill.method = enum_value("method", v, parse_distill_method); }));
  k.push_back(key("form", "CMCRD loss form: literal | surrogate",
                  [](const ExperimentConfig& c) -> json { return to_string(c.distill.form); },
                  [](ExperimentConfig& c, const json& v) { c.distill.form = enum_value("form", v, parse_cmcrd_form); }));
  k.push_back(key("mcc", "train the CMCRD teacher with the class-confusion term",
                  [](const ExperimentConfig& c) -> json { return c.teacher.lambda1 > 0.0; },
                  [](ExperimentConfig& c, const json& v) {
                    if (!as_bool("mcc", v)) c.teacher.lambda1 = 0.0;
                    else if (c.teacher.lambda1 == 0.0) c.teacher.lambda1 = TeacherConfig{}.lambda1;
                  }));
  k.push_back(CMCRD_BOOL_KEY("us", "split each batch by teacher correctness", distill.us_enabled));
  k.push_back(CMCRD_BOOL_KEY("iew", "weight samples by teacher certainty", distill.iew_enabled));
  k.push_back(CMCRD_NUM_KEY("lambda1", "weight of the class-confusion term in teacher training", teacher.lambda1));
  k.push_back(CMCRD_NUM_KEY("lambda2", "weight of the distillation term in student training", distill.lambda2));
  k.push_back(CMCRD_NUM_KEY("teacher_temperature", "softening temperature of the class-confusion term", teacher.temperature));
  k.push_back(CMCRD_NUM_KEY("tau", "critic temperature", distill.tau));
  k.push_back(CMCRD_SIZE_KEY("negatives", "negatives per anchor (clamped to the class pools)", distill.negatives));
  k.push_back(CMCRD_NUM_KEY("bank_momentum", "memory bank momentum", distill.bank_momentum));
  k.push_back(CMCRD_SIZE_KEY("embed_dim", "critic embedding width", teacher.embed_dim));
  k.push_back(CMCRD_NUM_KEY("kd_temperature", "KD softening temperature", distill.kd_temperature));
  k.push_back(key("hint_layer", "extractor layer for FitNet/NST/SP; -1 = feature layer",
                  [](const ExperimentConfig& c) -> json { return c.distill.hint_layer; },
                  [](ExperimentConfig& c, const json& v) {
                    if (!v.is_number_integer()) bad_value("hint_layer", v, "an integer");
                    c.distill.hint_layer = v.get<int>();
                  }));
  k.push_back(CMCRD_NUM_KEY("rkd_distance_weight", "RKD distance term weight", distill.rkd_distance_weight));
  k.push_back(CMCRD_NUM_KEY("rkd_angle_weight", "RKD angle term weight", distill.rkd_angle_weight));
  k.push_back(key("optimizer", "sgd | sgd-momentum | adam (teacher and student)",
                  [](const ExperimentConfig& c) -> json { return to_string(c.student.optimizer.rule); },
                  [](ExperimentConfig& c, const json& v) {
                    c.student.optimizer.rule = c.teacher.optimizer.rule = enum_value("optimizer", v, parse_opt_rule);
                  }));
  k.push_back(key("lr", "learning rate (teacher and student)",
                  [](const ExperimentConfig& c) -> json { return c.student.optimizer.learning_rate; },
                  [](ExperimentConfig& c, const json& v) {
                    c.student.optimizer.learning_rate = c.teacher.optimizer.learning_rate = as_double("lr", v);
                  }));
  k.push_back(key("batch", "mini-batch size (teacher and student)",
                  [](const ExperimentConfig& c) -> json { return c.student.batch_size; },
                  [](ExperimentConfig& c, const json& v) {
                    c.student.batch_size = c.teacher.batch_size = as_size("batch", v);
                  }));
  k.push_back(CMCRD_SIZE_KEY("epochs", "student training epochs", student.epochs));
  k.push_back(CMCRD_SIZE_KEY("teacher_epochs", "teacher training epochs", teacher.epochs));
  k.push_back(key("seeds", "comma-separated run seeds",
                  [](const ExperimentConfig& c) -> json { return c.seeds; },
                  [](ExperimentConfig& c, const json& v) { c.seeds = as_list<std::uint64_t>("seeds", v); }));
  k.push_back(CMCRD_SIZE_KEY("jobs", "parallel fold workers; 0 = all cores", jobs));
  k.push_back(CMCRD_NUM_KEY("val_fraction", "cross-subject validation fraction", val_fraction));
  k.push_back(CMCRD_SIZE_KEY("train_trials", "within-subject training trials; 0 = 9/16/10 by class count", train_trials));
  k.push_back(CMCRD_BOOL_KEY("trial_vote", "score accuracy by per-trial vote instead of per sample", trial_vote));
  k.push_back(CMCRD_BOOL_KEY("standardize", "z-score features with training statistics", standardize));
  k.push_back(CMCRD_BOOL_KEY("traces", "write per-fold student training traces under <out>/traces", traces));
  k.push_back(key("out", "output directory (fallback: $CMCRD_OUT_DIR)",
                  [](const ExperimentConfig& c) -> json { return c.out; },
                  [](ExperimentConfig& c, const json& v) { c.out = as_string("out", v); }));
  return k;
}

#undef CMCRD_NUM_KEY
#undef CMCRD_SIZE_KEY
#undef CMCRD_BOOL_KEY

const ConfigKey* find_key(const std::string& name) {
  for (const auto& k : config_keys())
    if (k.name == name) return &k;
  return nullptr;
}

// Textual value -> JSON value of the kind the key expects.
json parse_text(const ConfigKey& k, const std::string& raw, const ExperimentConfig& reference) {
  const std::string text = trim(raw);
  const json current = k.get(reference);
  if (current.is_string()) return text;
  if (current.is_boolean()) {
    std::string lower = text;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "true" || lower == "1" || lower == "yes" || lower == "on") return true;
    if (lower == "false" || lower == "0" || lower == "no" || lower == "off") return false;
    throw ConfigError("config key '" + k.name + "': expected a boolean, got '" + text + "'");
  }
  if (current.is_array()) {
    json arr = json::array();
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      json v = json::parse(item, nullptr, false);
      if (v.is_discarded()) throw ConfigError("config key '" + k.name + "': bad list item '" + item + "'");
      arr.push_back(v);
    }
    return arr;
  }
  json v = json::parse(text, nullptr, false);
  if (v.is_discarded()) throw ConfigError("config key '" + k.name + "': cannot parse '" + text + "'");
  return v;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

json to_json(const ExperimentConfig& c) {
  json j = json::object();
  for (const auto& k : config_keys()) j[k.name] = k.get(c);
  return j;
}

void apply_json(ExperimentConfig& c, const json& obj) {
  if (!obj.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [name, value] : obj.items()) {
    const ConfigKey* k = find_key(name);
    if (!k) throw ConfigError("unknown config key '" + name + "'");
    k->set(c, value);
  }
}

void apply_setting(ExperimentConfig& c, const std::string& name, const std::string& value) {
  const ConfigKey* k = find_key(trim(name));
  if (!k) throw ConfigError("unknown config key '" + trim(name) + "'");
  k->set(c, parse_text(*k, value, c));
}

void apply_config_file(ExperimentConfig& c, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const std::string lead = trim(text);
  if (!lead.empty() && lead.front() == '{') {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ConfigError(path.string() + ": malformed JSON");
    apply_json(c, j);
    return;
  }
  std::stringstream lines(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    try {
      apply_setting(c, line.substr(0, eq), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void validate(const ExperimentConfig& c) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (c.dataset.empty() && !synth_preset(c.preset)) fail("unknown preset '" + c.preset + "'");
  if (c.teacher.lambda1 < 0.0) fail("lambda1 must be >= 0");
  if (c.distill.lambda2 < 0.0) fail("lambda2 must be >= 0");
  if (!(c.distill.tau > 0.0)) fail("tau must be > 0");
  if (!(c.teacher.temperature > 0.0)) fail("teacher_temperature must be > 0");
  if (!(c.distill.kd_temperature > 0.0)) fail("kd_temperature must be > 0");
  if (c.distill.negatives == 0) fail("negatives must be >= 1");
  if (!(c.distill.bank_momentum >= 0.0 && c.distill.bank_momentum < 1.0)) fail("bank_momentum must lie in [0, 1)");
  if (c.teacher.embed_dim == 0) fail("embed_dim must be >= 1");
  if (!(c.student.optimizer.learning_rate > 0.0)) fail("lr must be > 0");
  if (c.student.batch_size == 0) fail("batch must be >= 1");
  if (c.l2 < 0.0) fail("l2 must be >= 0");
  if (c.feature_dim == 0) fail("feature_dim must be >= 1");
  if (c.seeds.empty()) fail("seeds must list at least one seed");
  if (!(c.val_fraction >= 0.0 && c.val_fraction < 1.0)) fail("val_fraction must lie in [0, 1)");
  if (c.arch == Family::Dgcnn && student_modality(c.direction) != Modality::Eeg)
    fail("arch=dgcnn requires an EEG student (direction em2eeg)");
  if (c.teacher_arch == Family::Dgcnn && teacher_modality(c.direction) != Modality::Eeg)
    fail("teacher_arch=dgcnn requires an EEG teacher (direction eeg2em)");
}

std::string config_hash(const ExperimentConfig& c) {
  json j = to_json(c);
  j.erase("out");
  j.erase("jobs");
  j.erase("traces");
  return hex64(hash_string(j.dump()));
}

Dataset load_experiment_dataset(const ExperimentConfig& c) {
  if (!c.dataset.empty()) {
    std::filesystem::path p = c.dataset;
    if (std::filesystem::is_directory(p)) p /= "manifest.json";
    return load_dataset(p);
  }
  auto spec = synth_preset(c.preset);
  if (!spec) throw ConfigError("unknown preset '" + c.preset + "'");
  spec->seed = c.data_seed;
  return generate_synthetic(*spec);
}

namespace {

NetworkSpec make_spec(Family family, Modality m, const ExperimentConfig& c, const Dataset& d) {
  const std::size_t dim = m == Modality::Eeg ? d.eeg_dim : d.em_dim;
  NetworkSpec s;
  if (family == Family::Dgcnn) {
    constexpr std::size_t bands = 5;
    if (dim % bands != 0) throw ConfigError("dgcnn needs an EEG width divisible by 5 bands");
    s = NetworkSpec::dgcnn(dim / bands, bands, static_cast<std::size_t>(d.num_classes));
    s.hidden = {c.dgcnn_filters};
  } else {
    s = NetworkSpec::dnn(dim, static_cast<std::size_t>(d.num_classes));
    s.hidden = c.hidden;
  }
  s.feature_dim = c.feature_dim;
  s.l2_coefficient = c.l2;
  validate(s);
  return s;
}

}  // namespace

NetworkSpec teacher_spec(const ExperimentConfig& c, const Dataset& d) {
  return make_spec(c.teacher_arch, teacher_modality(c.direction), c, d);
}

NetworkSpec student_spec(const ExperimentConfig& c, const Dataset& d) {
  return make_spec(c.arch, student_modality(c.direction), c, d);
}

}  // namespace cmcrd
