#include "cmcrd/student.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>
#include <random>

#include <json.hpp>

#include "cmcrd/critic.hpp"
#include "cmcrd/errors.hpp"
#include "cmcrd/hash.hpp"
#include "cmcrd/kernels.hpp"
#include "cmcrd/mcc.hpp"
#include "cmcrd/training.hpp"

namespace cmcrd {

namespace {

constexpr std::pair<DistillMethod, const char*> kMethodNames[] = {
    {DistillMethod::Cmcrd, "cmcrd"}, {DistillMethod::Crd, "crd"}, {DistillMethod::Kd, "kd"},
    {DistillMethod::FitNet, "fitnet"}, {DistillMethod::Nst, "nst"}, {DistillMethod::Sp, "sp"},
    {DistillMethod::Rkd, "rkd"}, {DistillMethod::Pkt, "pkt"}, {DistillMethod::None, "none"},
};

bool is_contrastive(DistillMethod m) { return m == DistillMethod::Cmcrd || m == DistillMethod::Crd; }
bool uses_hint(DistillMethod m) {
  return m == DistillMethod::FitNet || m == DistillMethod::Nst || m == DistillMethod::Sp;
}

std::size_t hint_index(const NetworkSpec& spec, int requested) {
  const std::size_t last = spec.extractor_layers() - 1;
  return requested < 0 ? last : std::min(static_cast<std::size_t>(requested), last);
}

void add_scaled(Matrix& dst, const Matrix& src, double scale) {
  auto d = dst.flat();
  auto s = src.flat();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += scale * s[i];
}

// Teacher outputs for every training sample, computed once.
struct TeacherView {
  Matrix logits;
  Matrix soft_probs;  // softmax(logits / teacher temperature)
  Matrix features;
  Matrix hint;
  Matrix embed;  // unit-norm critic embeddings
};

TeacherView teacher_view(const TeacherModel& t, const Matrix& x, std::size_t hint) {
  TeacherView v;
  v.logits = Matrix(x.rows(), t.spec.num_classes);
  v.features = Matrix(x.rows(), t.spec.feature_dim);
  v.hint = Matrix(x.rows(), t.spec.layer_width(hint));
  constexpr std::size_t chunk = 256;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < x.rows(); start += chunk) {
    const std::size_t end = std::min(x.rows(), start + chunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const ForwardResult r = forward(t.spec, t.params, x.gather_rows(idx));
    std::copy(r.logits.flat().begin(), r.logits.flat().end(), v.logits.row(start).data());
    std::copy(r.features().flat().begin(), r.features().flat().end(), v.features.row(start).data());
    const Matrix& h = r.layer_outputs[hint];
    std::copy(h.flat().begin(), h.flat().end(), v.hint.row(start).data());
  }
  v.soft_probs = kernels::softmax_rows(v.logits, t.temperature);
  if (!t.embed.contains("embed.weight")) throw ShapeError("teacher has no critic map");
  v.embed = normalize_rows(linear_forward(t.embed, "embed", v.features));
  return v;
}

}  // namespace

const char* to_string(DistillMethod m) {
  for (const auto& [k, name] : kMethodNames)
    if (k == m) return name;
  return "?";
}

DistillMethod parse_distill_method(const std::string& s) {
  for (const auto& [k, name] : kMethodNames)
    if (s == name) return k;
  throw ConfigError("unknown method '" + s + "' (expected cmcrd|crd|kd|fitnet|nst|sp|rkd|pkt|none)");
}

std::vector<std::string> distill_method_names() {
  std::vector<std::string> out;
  for (const auto& [k, name] : kMethodNames) out.emplace_back(name);
  return out;
}

StudentRun train_student(const SplitData& train, const SplitData& validation, Modality modality,
                         const TeacherModel& teacher, const NetworkSpec& spec, const DistillConfig& dc,
                         const StudentConfig& config, std::uint64_t seed) {
  validate(spec);
  if (train.size() == 0) throw TrainingError("student: empty training split");
  const Matrix& x = train.features(modality);
  if (x.cols() != spec.input_dim)
    throw ShapeError("student: " + std::string(to_string(modality)) + " features have " +
                     std::to_string(x.cols()) + " columns, network expects " +
                     std::to_string(spec.input_dim));
  if (dc.lambda2 < 0.0) throw ConfigError("lambda2 must be >= 0");
  const DistillMethod method = dc.lambda2 == 0.0 ? DistillMethod::None : dc.method;
  const double lambda2 = dc.lambda2;

  StudentRun run;
  StudentModel& m = run.model;
  m.modality = modality;
  m.spec = spec;
  m.params = init_params(spec, derive_seed(seed, "student-init"));

  const std::size_t s_hint = hint_index(spec, dc.hint_layer);
  const std::size_t t_hint = hint_index(teacher.spec, dc.hint_layer);
  TeacherView tv;
  if (method != DistillMethod::None) tv = teacher_view(teacher, train.features(teacher.modality), t_hint);

  if (is_contrastive(method)) {
    m.distiller = init_linear(spec.feature_dim, tv.embed.cols(), derive_seed(seed, "student-embed"), "embed");
  } else if (method == DistillMethod::FitNet) {
    m.distiller = init_linear(spec.layer_width(s_hint), teacher.spec.layer_width(t_hint),
                              derive_seed(seed, "student-regressor"), "fitnet");
  }

  std::unique_ptr<MemoryBank> bank;
  CriticScale scale;
  if (is_contrastive(method)) {
    const Matrix s_init =
        linear_forward(m.distiller, "embed", extract_features(spec, m.params, x));
    bank = std::make_unique<MemoryBank>(tv.embed, s_init, train.labels, dc.bank_momentum);
    const std::size_t cap = bank->max_negatives();
    if (cap == 0) throw SamplingError("memory bank holds a single class; no negatives available");
    run.negatives_used = std::min(dc.negatives, cap);
    run.negatives_clamped = run.negatives_used < dc.negatives;
    scale = CriticScale{dc.tau, run.negatives_used, bank->size()};
  }

  OptimizerConfig opt = config.optimizer;
  opt.weight_decay = spec.l2_coefficient;
  OptimizerState state = make_optimizer(opt, m.params);
  OptimizerState distiller_state = make_optimizer(opt, m.distiller);
  std::mt19937_64 shuffle(derive_seed(seed, "student-shuffle"));
  std::mt19937_64 neg_rng(derive_seed(seed, "student-negatives"));

  const bool use_validation = validation.size() > 0;
  ParamSet best = m.params, best_distiller = m.distiller;
  double best_val = -1.0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    StudentEpoch rec;
    rec.epoch = epoch;
    std::size_t hits = 0, batches_seen = 0;
    const auto batches = make_batches(train.size(), config.batch_size, shuffle);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& idx = batches[b];
      const std::size_t n = idx.size();
      const std::string where = "student epoch " + std::to_string(epoch) + " batch " + std::to_string(b);
      const std::vector<int> labels = gather(train.labels, idx);
      const ForwardResult fr = forward(spec, m.params, x.gather_rows(idx));
      OutputGrads up = OutputGrads::for_result(fr);
      const double ce = cross_entropy(fr.logits, labels, &up.logits);
      double dl = 0.0;
      ParamSet dgrads = m.distiller.zeros_like();

      if (is_contrastive(method)) {
        std::vector<double> norms;
        const Matrix& h = fr.features();
        const Matrix s_emb = normalize_rows(linear_forward(m.distiller, "embed", h), &norms);
        const Matrix t_emb = tv.embed.gather_rows(idx);
        std::vector<std::vector<std::size_t>> negs(n);
        for (std::size_t i = 0; i < n; ++i)
          negs[i] = bank->sample_negatives(labels[i], run.negatives_used, neg_rng);
        const ContrastTerms terms = contrast_objective(t_emb, s_emb, *bank, negs, scale);
        rec.mi_bound += terms.bound;
        std::vector<double> upstream(n);
        // CRD is the guided loss with every sample positive, unit weights and
        // the linear form.
        const bool crd = method == DistillMethod::Crd;
        const std::vector<double> w = !crd && dc.iew_enabled ? mcc_weights(tv.soft_probs.gather_rows(idx))
                                                             : std::vector<double>(n, 1.0);
        const GuidanceSets sets =
            !crd && dc.us_enabled ? build_guidance_sets(tv.logits.gather_rows(idx), labels) : all_positive(n);
        const CmcrdResult res =
            cmcrd_loss(terms.per_sample, w, sets, dc.tau, crd ? CmcrdForm::Surrogate : dc.form);
        dl = res.loss;
        rec.positive_only += res.positive_only;
        rec.negative_only += res.negative_only;
        for (std::size_t i = 0; i < n; ++i) upstream[i] = lambda2 * res.d_per_sample[i];
        const Matrix ds = contrast_backward(t_emb, *bank, negs, terms, scale, upstream);
        const Matrix dh = linear_backward(m.distiller, "embed", h,
                                          normalize_rows_backward(s_emb, norms, ds), dgrads);
        add_scaled(up.features(), dh, 1.0);
        bank->update(idx, t_emb, s_emb);
      } else if (method == DistillMethod::Kd) {
        Matrix dz;
        dl = kd_loss(tv.logits.gather_rows(idx), fr.logits, dc.kd_temperature, &dz);
        add_scaled(up.logits, dz, lambda2);
      } else if (uses_hint(method)) {
        const Matrix th = tv.hint.gather_rows(idx);
        const Matrix& sh = fr.layer_outputs[s_hint];
        Matrix dh;
        if (method == DistillMethod::FitNet) {
          dl = fitnet_loss(th, sh, m.distiller, &dh, &dgrads);
          for (auto& g : dgrads)
            for (double& v : g.value.flat()) v *= lambda2;
        } else if (method == DistillMethod::Nst) {
          dl = nst_loss(th, sh, &dh);
        } else {
          dl = sp_loss(th, sh, &dh);
        }
        add_scaled(up.layers[s_hint], dh, lambda2);
      } else if (method == DistillMethod::Rkd || method == DistillMethod::Pkt) {
        const Matrix tf = tv.features.gather_rows(idx);
        Matrix dh;
        dl = method == DistillMethod::Rkd
                 ? rkd_loss(tf, fr.features(), dc.rkd_distance_weight, dc.rkd_angle_weight, &dh)
                 : pkt_loss(tf, fr.features(), &dh);
        add_scaled(up.features(), dh, lambda2);
      }

      if (!std::isfinite(ce + lambda2 * dl)) throw TrainingError("non-finite loss at " + where);
      const auto pred = argmax_rows(fr.probs);
      for (std::size_t i = 0; i < n; ++i) hits += pred[i] == labels[i];
      rec.ce_loss += ce * static_cast<double>(n);
      rec.distill_loss += dl * static_cast<double>(n);
      ++batches_seen;

      const ParamSet grads = backward(spec, m.params, fr, up);
      opt_step(state, m.params, grads, where);
      if (m.distiller.size()) opt_step(distiller_state, m.distiller, dgrads, where);
    }
    const auto total = static_cast<double>(train.size());
    rec.ce_loss /= total;
    rec.distill_loss /= total;
    rec.train_acc = static_cast<double>(hits) / total;
    if (batches_seen) rec.mi_bound /= static_cast<double>(batches_seen);
    if (use_validation) {
      rec.val_acc = accuracy(predict_probs(spec, m.params, validation.features(modality)), validation.labels);
      if (rec.val_acc > best_val) {
        best_val = rec.val_acc;
        best = m.params;
        best_distiller = m.distiller;
      }
    }
    run.trace.push_back(rec);
  }
  if (use_validation) {
    m.params = std::move(best);
    m.distiller = std::move(best_distiller);
  }
  return run;
}

void write_trace_jsonl(const std::vector<StudentEpoch>& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write trace: " + path.string());
  for (const auto& r : trace) {
    nlohmann::json j{{"epoch", r.epoch},
                     {"ce_loss", r.ce_loss},
                     {"distill_loss", r.distill_loss},
                     {"fallback_counts", {{"positive_only", r.positive_only}, {"negative_only", r.negative_only}}},
                     {"train_acc", r.train_acc},
                     {"mi_bound", r.mi_bound}};
    if (r.val_acc >= 0.0) j["val_acc"] = r.val_acc;
    out << j.dump() << '\n';
  }
}

}  // namespace cmcrd
