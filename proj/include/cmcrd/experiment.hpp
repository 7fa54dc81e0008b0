#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmcrd/data.hpp"
#include "cmcrd/splits.hpp"
#include "cmcrd/student.hpp"
#include "cmcrd/teacher.hpp"

namespace cmcrd {

/// Guiding modality -> student modality.
enum class Direction { EmToEeg, EegToEm };

const char* to_string(Direction d);
Direction parse_direction(const std::string& s);
Modality teacher_modality(Direction d);
Modality student_modality(Direction d);

struct ExperimentConfig {
  std::string dataset;  // manifest path; empty selects the synthetic preset
  std::string preset = "seedv-like";
  std::uint64_t data_seed = 0;
  Protocol protocol = Protocol::WithinSubject;
  Direction direction = Direction::EmToEeg;
  Family arch = Family::Dnn;          // student
  Family teacher_arch = Family::Dnn;  // DGCNN only valid on EEG
  std::vector<std::size_t> hidden = {256, 128, 64, 64, 32};
  std::size_t feature_dim = 32;
  std::size_t dgcnn_filters = 16;
  double l2 = 1e-4;
  TeacherConfig teacher;
  StudentConfig student;
  DistillConfig distill;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::size_t jobs = 0;  // 0 = one per available core
  double val_fraction = 0.1;
  std::size_t train_trials = 0;  // within-subject; 0 = 9/16/10 by class count
  bool trial_vote = false;
  bool standardize = true;
  bool traces = false;  // per-fold student traces under <out>/traces
  std::string out;  // output directory
};

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<nlohmann::json(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const nlohmann::json&)> set;
};

/// Every settable key, in documentation order.
const std::vector<ConfigKey>& config_keys();

nlohmann::json to_json(const ExperimentConfig& config);
/// Applies every member of `object`; throws ConfigError on an unknown key or
/// a value of the wrong kind.
void apply_json(ExperimentConfig& config, const nlohmann::json& object);
/// Applies one textual key=value setting (numbers, booleans, comma lists).
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value);
/// Reads a JSON object or key=value lines ('#' starts a comment).
void apply_config_file(ExperimentConfig& config, const std::filesystem::path& path);

/// Throws ConfigError on any out-of-range value.
void validate(const ExperimentConfig& config);

/// Hash of every key that influences results (excludes out and jobs).
std::string config_hash(const ExperimentConfig& config);

Dataset load_experiment_dataset(const ExperimentConfig& config);
NetworkSpec teacher_spec(const ExperimentConfig& config, const Dataset& dataset);
NetworkSpec student_spec(const ExperimentConfig& config, const Dataset& dataset);

}  // namespace cmcrd
