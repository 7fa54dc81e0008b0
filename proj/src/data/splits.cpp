#include "cmcrd/splits.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "cmcrd/errors.hpp"

namespace cmcrd {

const char* to_string(Protocol p) {
  return p == Protocol::WithinSubject ? "within" : "cross";
}

Protocol parse_protocol(const std::string& s) {
  if (s == "within" || s == "within-subject") return Protocol::WithinSubject;
  if (s == "cross" || s == "cross-subject" || s == "loso") return Protocol::CrossSubject;
  throw ConfigError("unknown protocol '" + s + "' (expected within|cross)");
}

std::optional<std::size_t> default_within_train_trials(int num_classes) {
  switch (num_classes) {
    case 3: return 9;
    case 4: return 16;
    case 5: return 10;
    default: return std::nullopt;
  }
}

SplitPlan make_within_subject_splits(const Dataset& d, std::optional<std::size_t> train_trials) {
  const auto k = train_trials ? train_trials : default_within_train_trials(d.num_classes);
  if (!k) throw ProtocolError("no default within-subject training trial count for " +
                              std::to_string(d.num_classes) + " classes; set it explicitly");
  if (*k == 0 || *k >= d.trials_per_session)
    throw ProtocolError("within-subject protocol needs more than " + std::to_string(*k) +
                        " trials per session, dataset has " +
                        std::to_string(d.trials_per_session));

  SplitPlan plan;
  plan.protocol = Protocol::WithinSubject;
  const auto subjects = d.subject_ids();
  std::map<int, std::size_t> fold_of;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    Fold f;
    f.fold_id = static_cast<int>(i);
    f.subject_id = subjects[i];
    plan.folds.push_back(f);
    fold_of[subjects[i]] = i;
  }
  std::size_t row = 0;
  for (const auto& s : d.sessions) {
    Fold& f = plan.folds[fold_of.at(s.subject_id)];
    for (std::size_t t = 0; t < s.trials.size(); ++t) {
      auto& target = t < *k ? f.train : f.test;
      for (std::size_t r = 0; r < s.trials[t].sample_count(); ++r) target.push_back(row++);
    }
  }
  return plan;
}

SplitPlan make_cross_subject_splits(const Dataset& d, double val_fraction, std::uint64_t seed) {
  const auto subjects = d.subject_ids();
  if (subjects.size() < 2) throw ProtocolError("cross-subject protocol needs at least 2 subjects");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0))
    throw ConfigError("val_fraction must lie in [0, 1)");

  std::vector<int> subject_of_row;
  subject_of_row.reserve(d.sample_count());
  for (const auto& s : d.sessions)
    for (const auto& t : s.trials) subject_of_row.insert(subject_of_row.end(), t.sample_count(), s.subject_id);

  SplitPlan plan;
  plan.protocol = Protocol::CrossSubject;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    Fold f;
    f.fold_id = static_cast<int>(i);
    f.subject_id = subjects[i];
    std::vector<std::size_t> pool;
    for (std::size_t r = 0; r < subject_of_row.size(); ++r)
      (subject_of_row[r] == subjects[i] ? f.test : pool).push_back(r);
    std::mt19937_64 rng(seed + 0x9e3779b97f4a7c15ULL * (i + 1));
    std::shuffle(pool.begin(), pool.end(), rng);
    const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(pool.size())));
    f.validation.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_val));
    f.train.assign(pool.begin() + static_cast<std::ptrdiff_t>(n_val), pool.end());
    std::sort(f.validation.begin(), f.validation.end());
    std::sort(f.train.begin(), f.train.end());
    plan.folds.push_back(std::move(f));
  }
  return plan;
}

SplitPlan make_splits(const Dataset& d, Protocol p, double val_fraction, std::uint64_t seed,
                      std::optional<std::size_t> train_trials) {
  return p == Protocol::WithinSubject ? make_within_subject_splits(d, train_trials)
                                      : make_cross_subject_splits(d, val_fraction, seed);
}

// ---------------------------------------------------------------------------

Standardizer Standardizer::fit(const Matrix& x, const std::vector<std::size_t>& rows) {
  Standardizer s;
  const std::size_t n = x.cols();
  s.mean.assign(n, 0.0);
  s.scale.assign(n, 0.0);
  if (rows.empty()) return s;
  for (std::size_t r : rows)
    for (std::size_t c = 0; c < n; ++c) s.mean[c] += x(r, c);
  for (double& m : s.mean) m /= static_cast<double>(rows.size());
  std::vector<double> var(n, 0.0);
  for (std::size_t r : rows)
    for (std::size_t c = 0; c < n; ++c) {
      const double d = x(r, c) - s.mean[c];
      var[c] += d * d;
    }
  for (std::size_t c = 0; c < n; ++c) {
    const double sd = std::sqrt(var[c] / static_cast<double>(rows.size()));
    s.scale[c] = sd > 1e-12 * (1.0 + std::abs(s.mean[c])) ? 1.0 / sd : 0.0;
  }
  return s;
}

Matrix Standardizer::apply(const Matrix& x) const {
  if (x.cols() != mean.size()) throw ShapeError("Standardizer::apply: width mismatch");
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = (x(r, c) - mean[c]) * scale[c];
  return out;
}

namespace {

SplitData make_split(const FlatData& data, const std::vector<std::size_t>& rows,
                     const Standardizer* eeg_stats, const Standardizer* em_stats) {
  SplitData s;
  s.sample_ids = rows;
  Matrix eeg = data.eeg.gather_rows(rows);
  Matrix em = data.em.gather_rows(rows);
  s.eeg = eeg_stats ? eeg_stats->apply(eeg) : std::move(eeg);
  s.em = em_stats ? em_stats->apply(em) : std::move(em);
  s.labels.reserve(rows.size());
  s.trial_keys.reserve(rows.size());
  for (std::size_t r : rows) {
    s.labels.push_back(data.labels[r]);
    s.trial_keys.push_back((data.subject[r] * 16 + data.session[r]) * 4096 + data.trial[r]);
  }
  return s;
}

}  // namespace

FoldData normalize_features(const FlatData& data, const Fold& fold, bool standardize) {
  FoldData out;
  out.fold_id = fold.fold_id;
  out.num_classes = data.num_classes;
  if (standardize) {
    out.eeg_stats = Standardizer::fit(data.eeg, fold.train);
    out.em_stats = Standardizer::fit(data.em, fold.train);
  }
  const Standardizer* es = standardize ? &out.eeg_stats : nullptr;
  const Standardizer* ms = standardize ? &out.em_stats : nullptr;
  out.train = make_split(data, fold.train, es, ms);
  out.validation = make_split(data, fold.validation, es, ms);
  out.test = make_split(data, fold.test, es, ms);
  return out;
}

}  // namespace cmcrd
