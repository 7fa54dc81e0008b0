#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <string_view>

#include <json.hpp>

#include "cmcrd/data.hpp"
#include "cmcrd/errors.hpp"
#include "cmcrd/hash.hpp"

namespace cmcrd {
namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(Modality m) { return m == Modality::Eeg ? "eeg" : "em"; }

std::size_t Dataset::sample_count() const {
  std::size_t n = 0;
  for (const auto& s : sessions)
    for (const auto& t : s.trials) n += t.sample_count();
  return n;
}

std::vector<int> Dataset::subject_ids() const {
  std::set<int> ids;
  for (const auto& s : sessions) ids.insert(s.subject_id);
  return {ids.begin(), ids.end()};
}

namespace {

std::string where(const SessionRecord& s, const Trial& t) {
  return "subject " + std::to_string(s.subject_id) + " session " + std::to_string(s.session_id) +
         " trial " + std::to_string(t.trial_id);
}

}  // namespace

void validate(const Dataset& d) {
  if (d.num_classes < 2) throw SchemaError("dataset '" + d.name + "': num_classes must be >= 2");
  if (d.eeg_dim == 0 || d.em_dim == 0) throw SchemaError("dataset '" + d.name + "': zero feature dim");
  if (d.sessions.empty()) throw SchemaError("dataset '" + d.name + "': no sessions");
  for (const auto& s : d.sessions) {
    if (s.trials.size() != d.trials_per_session) {
      throw SchemaError("subject " + std::to_string(s.subject_id) + " session " +
                        std::to_string(s.session_id) + ": has " + std::to_string(s.trials.size()) +
                        " trials, expected " + std::to_string(d.trials_per_session));
    }
    int prev = -1;
    bool first = true;
    for (const auto& t : s.trials) {
      if (!first && t.trial_id <= prev)
        throw SchemaError(where(s, t) + ": trial ids must be strictly increasing");
      first = false;
      prev = t.trial_id;
      if (t.label < 0 || t.label >= d.num_classes)
        throw SchemaError(where(s, t) + ": label " + std::to_string(t.label) + " outside [0, " +
                          std::to_string(d.num_classes) + ")");
      if (t.eeg.rows() != t.em.rows())
        throw PairingError(where(s, t) + ": " + std::to_string(t.eeg.rows()) + " EEG rows vs " +
                           std::to_string(t.em.rows()) + " EM rows");
      if (t.eeg.rows() == 0) throw SchemaError(where(s, t) + ": empty trial");
      if (t.eeg.cols() != d.eeg_dim || t.em.cols() != d.em_dim)
        throw SchemaError(where(s, t) + ": feature width does not match dataset dims");
      if (!t.eeg.all_finite() || !t.em.all_finite())
        throw SchemaError(where(s, t) + ": non-finite feature value");
    }
  }
}

FlatData flatten(const Dataset& d) {
  const std::size_t n = d.sample_count();
  FlatData out;
  out.num_classes = d.num_classes;
  out.eeg = Matrix(n, d.eeg_dim);
  out.em = Matrix(n, d.em_dim);
  out.labels.reserve(n);
  out.subject.reserve(n);
  out.session.reserve(n);
  out.trial.reserve(n);
  std::size_t row = 0;
  for (const auto& s : d.sessions) {
    for (const auto& t : s.trials) {
      for (std::size_t r = 0; r < t.sample_count(); ++r, ++row) {
        std::copy_n(t.eeg.row(r).data(), d.eeg_dim, out.eeg.row(row).data());
        std::copy_n(t.em.row(r).data(), d.em_dim, out.em.row(row).data());
        out.labels.push_back(t.label);
        out.subject.push_back(s.subject_id);
        out.session.push_back(s.session_id);
        out.trial.push_back(t.trial_id);
      }
    }
  }
  return out;
}

std::uint64_t fingerprint(const Dataset& d) {
  Fnv1a h;
  h.add(d.name);
  h.add_value(d.num_classes);
  h.add_value(d.eeg_dim);
  h.add_value(d.em_dim);
  for (const auto& s : d.sessions) {
    h.add_value(s.subject_id);
    h.add_value(s.session_id);
    for (const auto& t : s.trials) {
      h.add_value(t.trial_id);
      h.add_value(t.label);
      h.add_bytes(t.eeg.data(), t.eeg.size() * sizeof(double));
      h.add_bytes(t.em.data(), t.em.size() * sizeof(double));
    }
  }
  return h.value();
}

// ---------------------------------------------------------------------------
// CSV I/O

namespace {

std::ifstream open_input(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw LoadError("cannot open file: " + p.string());
  return in;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    auto field = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
      field.remove_suffix(1);
    out.push_back(field);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view field, const fs::path& file, std::size_t line_no) {
  T value{};
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw LoadError(file.string() + ":" + std::to_string(line_no) + ": cannot parse '" +
                    std::string(field) + "'");
  }
  return value;
}

Matrix read_feature_csv(const fs::path& p, std::size_t expected_cols) {
  auto in = open_input(p);
  std::vector<double> values;
  std::string line;
  std::size_t rows = 0;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_fields(line);
    if (fields.size() != expected_cols) {
      throw SchemaError(p.string() + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(expected_cols) + " columns, found " +
                        std::to_string(fields.size()));
    }
    for (auto f : fields) values.push_back(parse_number<double>(f, p, line_no));
    ++rows;
  }
  Matrix m(rows, expected_cols);
  std::copy(values.begin(), values.end(), m.data());
  return m;
}

struct LabelRow {
  int trial_id;
  int label;
  std::size_t count;
};

std::vector<LabelRow> read_label_csv(const fs::path& p) {
  auto in = open_input(p);
  std::vector<LabelRow> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    if (line_no == 1 && line.rfind("trial_id", 0) == 0) continue;
    auto fields = split_fields(line);
    if (fields.size() != 3)
      throw SchemaError(p.string() + ":" + std::to_string(line_no) +
                        ": expected trial_id,label,sample_count");
    out.push_back({parse_number<int>(fields[0], p, line_no), parse_number<int>(fields[1], p, line_no),
                   parse_number<std::size_t>(fields[2], p, line_no)});
  }
  return out;
}

void write_number(std::ostream& os, double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 9);
  os.write(buf, ptr - buf);
}

void write_feature_csv(const fs::path& p, const std::vector<const Matrix*>& blocks) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw LoadError("cannot write file: " + p.string());
  for (const Matrix* m : blocks) {
    for (std::size_t r = 0; r < m->rows(); ++r) {
      for (std::size_t c = 0; c < m->cols(); ++c) {
        if (c) out.put(',');
        write_number(out, (*m)(r, c));
      }
      out.put('\n');
    }
  }
  if (!out) throw LoadError("write failed: " + p.string());
}

std::string session_file(const char* prefix, int subj, int sess) {
  return std::string(prefix) + "_" + std::to_string(subj) + "_" + std::to_string(sess) + ".csv";
}

}  // namespace

Dataset load_dataset(const fs::path& manifest_path) {
  auto in = open_input(manifest_path);
  json m;
  try {
    in >> m;
  } catch (const json::exception& e) {
    throw LoadError(manifest_path.string() + ": invalid JSON: " + e.what());
  }
  const fs::path root = manifest_path.parent_path();
  Dataset d;
  try {
    d.name = m.value("name", std::string("dataset"));
    d.num_classes = m.at("num_classes").get<int>();
    d.eeg_dim = m.at("eeg_dim").get<std::size_t>();
    d.em_dim = m.at("em_dim").get<std::size_t>();
    d.trials_per_session = m.at("trials_per_session").get<std::size_t>();
    for (const auto& entry : m.at("sessions")) {
      SessionRecord s;
      s.subject_id = entry.at("subject").get<int>();
      s.session_id = entry.at("session").get<int>();
      const fs::path eeg_path = root / entry.at("eeg").get<std::string>();
      const fs::path em_path = root / entry.at("em").get<std::string>();
      const fs::path label_path = root / entry.at("labels").get<std::string>();
      const auto labels = read_label_csv(label_path);
      const Matrix eeg = read_feature_csv(eeg_path, d.eeg_dim);
      const Matrix em = read_feature_csv(em_path, d.em_dim);

      std::size_t offset = 0;
      for (const auto& lr : labels) {
        const std::string loc = "subject " + std::to_string(s.subject_id) + " session " +
                                std::to_string(s.session_id) + " trial " +
                                std::to_string(lr.trial_id);
        if (lr.label < 0 || lr.label >= d.num_classes)
          throw SchemaError(loc + ": label " + std::to_string(lr.label) + " outside [0, " +
                            std::to_string(d.num_classes) + ")");
        const std::size_t end = offset + lr.count;
        if (end > eeg.rows() || end > em.rows()) {
          throw PairingError(loc + ": declares " + std::to_string(lr.count) + " samples but " +
                             std::to_string(std::min(eeg.rows(), end) - std::min(eeg.rows(), offset)) +
                             " EEG rows and " +
                             std::to_string(std::min(em.rows(), end) - std::min(em.rows(), offset)) +
                             " EM rows remain");
        }
        Trial t;
        t.trial_id = lr.trial_id;
        t.label = lr.label;
        std::vector<std::size_t> idx(lr.count);
        for (std::size_t i = 0; i < lr.count; ++i) idx[i] = offset + i;
        t.eeg = eeg.gather_rows(idx);
        t.em = em.gather_rows(idx);
        s.trials.push_back(std::move(t));
        offset = end;
      }
      if (offset != eeg.rows() || offset != em.rows()) {
        throw PairingError("subject " + std::to_string(s.subject_id) + " session " +
                           std::to_string(s.session_id) + " trial " +
                           std::to_string(labels.empty() ? 0 : labels.back().trial_id) +
                           ": labels declare " + std::to_string(offset) + " samples, files hold " +
                           std::to_string(eeg.rows()) + " EEG rows and " +
                           std::to_string(em.rows()) + " EM rows");
      }
      d.sessions.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw SchemaError(manifest_path.string() + ": " + e.what());
  }
  validate(d);
  return d;
}

void save_dataset(const Dataset& d, const fs::path& root) {
  validate(d);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw LoadError("cannot create directory " + root.string() + ": " + ec.message());

  json m;
  m["format_version"] = 1;
  m["name"] = d.name;
  m["num_classes"] = d.num_classes;
  m["eeg_dim"] = d.eeg_dim;
  m["em_dim"] = d.em_dim;
  m["trials_per_session"] = d.trials_per_session;
  json sessions = json::array();
  for (const auto& s : d.sessions) {
    const auto eeg_name = session_file("eeg", s.subject_id, s.session_id);
    const auto em_name = session_file("em", s.subject_id, s.session_id);
    const auto label_name = session_file("labels", s.subject_id, s.session_id);
    std::vector<const Matrix*> eeg_blocks, em_blocks;
    std::ofstream labels(root / label_name, std::ios::binary);
    if (!labels) throw LoadError("cannot write file: " + (root / label_name).string());
    labels << "trial_id,label,sample_count\n";
    for (const auto& t : s.trials) {
      eeg_blocks.push_back(&t.eeg);
      em_blocks.push_back(&t.em);
      labels << t.trial_id << ',' << t.label << ',' << t.sample_count() << '\n';
    }
    write_feature_csv(root / eeg_name, eeg_blocks);
    write_feature_csv(root / em_name, em_blocks);
    sessions.push_back({{"subject", s.subject_id},
                        {"session", s.session_id},
                        {"eeg", eeg_name},
                        {"em", em_name},
                        {"labels", label_name}});
  }
  m["sessions"] = std::move(sessions);
  std::ofstream out(root / "manifest.json", std::ios::binary);
  if (!out) throw LoadError("cannot write file: " + (root / "manifest.json").string());
  out << m.dump(2) << '\n';
}

}  // namespace cmcrd
