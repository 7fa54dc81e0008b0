#include <cmath>
#include <random>

#include "cmcrd/data.hpp"
#include "cmcrd/errors.hpp"

namespace cmcrd {

void validate(const SynthSpec& s) {
  if (s.num_subjects == 0 || s.sessions_per_subject == 0 || s.trials_per_session == 0 ||
      s.samples_per_trial == 0 || s.eeg_dim == 0 || s.em_dim == 0 || s.latent_dim == 0)
    throw ConfigError("synthetic spec: all counts must be positive");
  if (s.num_classes < 2) throw ConfigError("synthetic spec: num_classes must be >= 2");
  if (!(s.cross_modal_coupling >= 0.0 && s.cross_modal_coupling <= 1.0))
    throw ConfigError("synthetic spec: coupling must lie in [0, 1]");
  if (!(s.class_separation >= 0.0) || !(s.subject_shift_scale >= 0.0) || !(s.noise_scale >= 0.0) ||
      !(s.em_noise_scale >= 0.0))
    throw ConfigError("synthetic spec: scales must be non-negative");
  if (!(s.expression_rate >= 0.0 && s.expression_rate <= 1.0))
    throw ConfigError("synthetic spec: expression_rate must lie in [0, 1]");
}

Dataset generate_synthetic(const SynthSpec& spec) {
  validate(spec);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution expressed(spec.expression_rate);
  const std::size_t latent = spec.latent_dim;
  const auto c = static_cast<std::size_t>(spec.num_classes);

  auto random_matrix = [&](std::size_t rows, std::size_t cols, double scale) {
    Matrix m(rows, cols);
    for (double& v : m.flat()) v = scale * normal(rng);
    return m;
  };

  // Fixed by seed: mixing maps and class centroids. Centroid norms are
  // separation/sqrt(2) so nearly-orthogonal centroids sit ~separation apart.
  const double mix_scale = 1.0 / std::sqrt(static_cast<double>(latent));
  const Matrix mix_eeg = random_matrix(spec.eeg_dim, latent, mix_scale);
  const Matrix mix_em = random_matrix(spec.em_dim, latent, mix_scale);
  Matrix centroids = random_matrix(c, latent, 1.0);
  for (std::size_t k = 0; k < c; ++k) {
    double norm = 0.0;
    for (double v : centroids.row(k)) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : centroids.row(k)) v *= spec.class_separation / std::sqrt(2.0) / norm;
  }

  Dataset d;
  d.name = spec.name;
  d.num_classes = spec.num_classes;
  d.eeg_dim = spec.eeg_dim;
  d.em_dim = spec.em_dim;
  d.trials_per_session = spec.trials_per_session;

  const double rho = spec.cross_modal_coupling;
  std::vector<double> z(latent), z_other(latent), em_latent(latent);
  for (std::size_t subj = 0; subj < spec.num_subjects; ++subj) {
    const Matrix offset_eeg = random_matrix(1, spec.eeg_dim, spec.subject_shift_scale);
    const Matrix offset_em = random_matrix(1, spec.em_dim, spec.subject_shift_scale);
    for (std::size_t sess = 0; sess < spec.sessions_per_subject; ++sess) {
      SessionRecord record;
      record.subject_id = static_cast<int>(subj) + 1;
      record.session_id = static_cast<int>(sess) + 1;
      for (std::size_t t = 0; t < spec.trials_per_session; ++t) {
        Trial trial;
        trial.trial_id = static_cast<int>(t) + 1;
        // Balanced, interleaved labels so every prefix of trials covers all classes.
        trial.label = static_cast<int>(t % c);
        const auto mu = centroids.row(static_cast<std::size_t>(trial.label));
        trial.eeg = Matrix(spec.samples_per_trial, spec.eeg_dim);
        trial.em = Matrix(spec.samples_per_trial, spec.em_dim);
        for (std::size_t r = 0; r < spec.samples_per_trial; ++r) {
          // A non-expressive sample keeps its trial label but no class signal.
          const double gain = spec.expression_rate >= 1.0 || expressed(rng) ? 1.0 : 0.0;
          for (std::size_t j = 0; j < latent; ++j) z[j] = gain * mu[j] + normal(rng);
          for (std::size_t j = 0; j < latent; ++j) z_other[j] = gain * mu[j] + normal(rng);
          for (std::size_t j = 0; j < latent; ++j)
            em_latent[j] = rho * z[j] + (1.0 - rho) * z_other[j];
          for (std::size_t f = 0; f < spec.eeg_dim; ++f) {
            double v = offset_eeg(0, f) + spec.noise_scale * normal(rng);
            for (std::size_t j = 0; j < latent; ++j) v += mix_eeg(f, j) * z[j];
            trial.eeg(r, f) = v;
          }
          for (std::size_t f = 0; f < spec.em_dim; ++f) {
            double v = offset_em(0, f) + spec.em_noise_scale * normal(rng);
            for (std::size_t j = 0; j < latent; ++j) v += mix_em(f, j) * em_latent[j];
            trial.em(r, f) = v;
          }
        }
        record.trials.push_back(std::move(trial));
      }
      d.sessions.push_back(std::move(record));
    }
  }
  validate(d);
  return d;
}

std::optional<SynthSpec> synth_preset(const std::string& name) {
  SynthSpec s;
  if (name == "seed-like") {
    s.num_subjects = 15;
    s.num_classes = 3;
    s.trials_per_session = 15;
    s.em_dim = 33;
  } else if (name == "seediv-like") {
    s.num_subjects = 15;
    s.num_classes = 4;
    s.trials_per_session = 24;
    s.em_dim = 31;
  } else if (name == "seedv-like") {
    // defaults already mirror this geometry
  } else if (name == "bench") {
    s.num_subjects = 6;
    s.samples_per_trial = 4;
    s.em_noise_scale = 0.25;
  } else {
    return std::nullopt;
  }
  s.name = name;
  return s;
}

std::vector<std::string> synth_preset_names() {
  return {"seed-like", "seediv-like", "seedv-like", "bench"};
}

}  // namespace cmcrd
