#include "cmcrd/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "cmcrd/errors.hpp"
#include "cmcrd/hash.hpp"
#include "cmcrd/kernels.hpp"
#include "cmcrd/mcc.hpp"
#include "cmcrd/serialize.hpp"
#include "cmcrd/training.hpp"

namespace cmcrd {

namespace {

std::string provenance(std::size_t epoch, std::size_t batch) {
  return "teacher epoch " + std::to_string(epoch) + " batch " + std::to_string(batch);
}

}  // namespace

std::string teacher_config_hash(const NetworkSpec& spec, const TeacherConfig& c, Modality m) {
  nlohmann::json j{{"spec", to_json(spec)},
                   {"lambda1", c.lambda1},
                   {"temperature", c.temperature},
                   {"epochs", c.epochs},
                   {"batch_size", c.batch_size},
                   {"embed_dim", c.embed_dim},
                   {"optimizer", to_json(c.optimizer)},
                   {"modality", to_string(m)}};
  return hex64(hash_string(j.dump()));
}

TeacherModel train_teacher(const SplitData& train, const SplitData& validation, Modality modality,
                           const NetworkSpec& spec, const TeacherConfig& config, std::uint64_t seed) {
  validate(spec);
  if (train.size() == 0) throw TrainingError("teacher: empty training split");
  const Matrix& x = train.features(modality);
  if (x.cols() != spec.input_dim)
    throw ShapeError("teacher: " + std::string(to_string(modality)) + " features have " +
                     std::to_string(x.cols()) + " columns, network expects " +
                     std::to_string(spec.input_dim));

  TeacherModel t;
  t.modality = modality;
  t.spec = spec;
  t.lambda1 = config.lambda1;
  t.temperature = config.temperature;
  t.seed = seed;
  t.config_hash = teacher_config_hash(spec, config, modality);
  t.params = init_params(spec, derive_seed(seed, "teacher-init"));
  // Seeded projection; its bias is fitted to centre the training features
  // once the extractor is final, then frozen with the teacher.
  t.embed = init_linear(spec.feature_dim, config.embed_dim, derive_seed(seed, "teacher-embed"), "embed");

  OptimizerConfig opt = config.optimizer;
  opt.weight_decay = spec.l2_coefficient;
  OptimizerState state = make_optimizer(opt, t.params);
  std::mt19937_64 shuffle(derive_seed(seed, "teacher-shuffle"));

  const bool use_validation = validation.size() > 0;
  ParamSet best = t.params;
  double best_val = -1.0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t hits = 0;
    const auto batches = make_batches(train.size(), config.batch_size, shuffle);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& idx = batches[b];
      const std::vector<int> labels = gather(train.labels, idx);
      const ForwardResult fr = forward(spec, t.params, x.gather_rows(idx));
      OutputGrads up;
      const TeacherLoss loss = teacher_loss(fr.logits, labels, config.lambda1, config.temperature, &up.logits);
      if (!std::isfinite(loss.total)) throw TrainingError("non-finite loss at " + provenance(epoch, b));
      const auto pred = argmax_rows(fr.probs);
      for (std::size_t i = 0; i < idx.size(); ++i) hits += pred[i] == labels[i];
      rec.ce_loss += loss.cross_entropy * static_cast<double>(idx.size());
      rec.aux_loss += loss.mcc * static_cast<double>(idx.size());
      const ParamSet grads = backward(spec, t.params, fr, up);
      opt_step(state, t.params, grads, provenance(epoch, b));
    }
    const auto n = static_cast<double>(train.size());
    rec.ce_loss /= n;
    rec.aux_loss /= n;
    rec.train_acc = static_cast<double>(hits) / n;
    if (use_validation) {
      rec.val_acc = accuracy(predict_probs(spec, t.params, validation.features(modality)), validation.labels);
      if (rec.val_acc > best_val) {
        best_val = rec.val_acc;
        best = t.params;
      }
    }
    t.trace.push_back(rec);
  }
  if (use_validation) t.params = std::move(best);
  center_embedding(t, x);
  return t;
}

void center_embedding(TeacherModel& t, const Matrix& x) {
  const Matrix h = extract_features(t.spec, t.params, x);
  Matrix mean(1, h.cols());
  for (std::size_t i = 0; i < h.rows(); ++i)
    for (std::size_t c = 0; c < h.cols(); ++c) mean(0, c) += h(i, c);
  for (std::size_t c = 0; c < h.cols(); ++c) mean(0, c) /= static_cast<double>(std::max<std::size_t>(1, h.rows()));
  const Matrix shift = kernels::matmul(mean, t.embed.at("embed.weight"));
  Matrix& bias = t.embed.at("embed.bias");
  for (std::size_t c = 0; c < bias.cols(); ++c) bias(0, c) = -shift(0, c);
}

void save_teacher(const TeacherModel& t, const std::filesystem::path& stem) {
  ParamSet all = t.params;
  all.append(t.embed, "critic.");
  save_params(all, stem.string() + ".params.json");
  nlohmann::json side{{"format", "cmcrd-teacher"},
                      {"version", 1},
                      {"modality", to_string(t.modality)},
                      {"spec", to_json(t.spec)},
                      {"lambda1", t.lambda1},
                      {"temperature", t.temperature},
                      {"seed", t.seed},
                      {"config_hash", t.config_hash},
                      {"dataset_fingerprint", hex64(t.dataset_fingerprint)}};
  std::ofstream out(stem.string() + ".teacher.json", std::ios::binary);
  if (!out) throw LoadError("cannot write teacher sidecar: " + stem.string() + ".teacher.json");
  out << side.dump(2) << '\n';
}

TeacherModel load_teacher(const std::filesystem::path& stem) {
  const std::string side_path = stem.string() + ".teacher.json";
  std::ifstream in(side_path);
  if (!in) throw LoadError("cannot open teacher sidecar: " + side_path);
  TeacherModel t;
  try {
    nlohmann::json side;
    in >> side;
    if (side.at("format") != "cmcrd-teacher") throw SchemaError(side_path + ": not a teacher sidecar");
    t.modality = side.at("modality") == "eeg" ? Modality::Eeg : Modality::Em;
    t.spec = network_spec_from_json(side.at("spec"));
    t.lambda1 = side.at("lambda1").get<double>();
    t.temperature = side.at("temperature").get<double>();
    t.seed = side.at("seed").get<std::uint64_t>();
    t.config_hash = side.at("config_hash").get<std::string>();
    t.dataset_fingerprint = std::stoull(side.at("dataset_fingerprint").get<std::string>(), nullptr, 16);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(side_path + ": " + e.what());
  }
  const ParamSet all = load_params(stem.string() + ".params.json");
  t.embed = all.extract("critic.");
  for (const auto& p : all)
    if (p.name.rfind("critic.", 0) != 0) t.params.add(p.name, p.value);
  return t;
}

}  // namespace cmcrd
