#include "cogload/dataset.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cogload/binio.hpp"
#include "cogload/error.hpp"

namespace fs = std::filesystem;

namespace cogload {

namespace binio {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(Errc::Io, "read failed for " + path);
  return bytes;
}

void write_file(const std::string& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::Io, "write failed for " + path);
}

}  // namespace binio

namespace {

constexpr char kTrialMagic[4] = {'C', 'L', 'T', '1'};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  return s.substr(i);
}

double parse_double(const std::string& s, const std::string& file, std::uint64_t line) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw format_error(file, line, "bad number '" + s + "'");
  return v;
}

int parse_int(const std::string& s, const std::string& file, std::uint64_t line) {
  int v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw format_error(file, line, "bad integer '" + s + "'");
  return v;
}

char parse_cohort(const std::string& s, const std::string& file, std::uint64_t line) {
  if (s.size() != 1 || !valid_cohort(s[0])) {
    throw format_error(file, line, "cohort must be one of A..E, got '" + s + "'");
  }
  return s[0];
}

// Reads a CSV file and checks its header. Returns rows with their 1-based
// line numbers.
std::vector<std::pair<std::uint64_t, std::vector<std::string>>> read_csv(
    const std::string& path, const std::vector<std::string>& header) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw format_error(path, 1, "missing header");
  auto cols = split_csv_line(trim(line));
  for (auto& c : cols) c = trim(c);
  if (!cols.empty() && cols[0].rfind("\xEF\xBB\xBF", 0) == 0) cols[0] = cols[0].substr(3);
  if (cols != header) throw format_error(path, 1, "unexpected header");
  std::vector<std::pair<std::uint64_t, std::vector<std::string>>> rows;
  std::uint64_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    for (auto& f : fields) f = trim(f);
    if (fields.size() != header.size()) {
      throw format_error(path, lineno, "expected " + std::to_string(header.size()) + " fields");
    }
    rows.emplace_back(lineno, std::move(fields));
  }
  return rows;
}

std::string trial_file_name(const TrialKey& k) {
  return k.participant + "_d" + std::to_string(k.day) + "_t" + std::to_string(k.trial_index) +
         ".clt1";
}

}  // namespace

std::string TrialKey::str() const {
  return participant + "/" + std::to_string(day) + "/" + std::to_string(trial_index);
}

bool valid_cohort(char c) { return c >= 'A' && c <= 'E'; }

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

void Trial::validate() const {
  const std::string who = "trial " + key.str();
  if (key.participant.empty()) throw Error(Errc::Consistency, who + ": empty participant id");
  if (key.participant.find_first_of("/,\n") != std::string::npos) {
    throw Error(Errc::Consistency, who + ": participant id contains a reserved character");
  }
  if (!valid_cohort(cohort)) throw Error(Errc::Consistency, who + ": cohort must be A..E");
  if (key.day < 1 || key.day > 5) throw Error(Errc::Consistency, who + ": day must be 1..5");
  if (key.trial_index < 0) throw Error(Errc::Consistency, who + ": negative trial index");
  if (!(fs > 0.0) || !std::isfinite(fs)) throw Error(Errc::Consistency, who + ": fs must be > 0");
  if (n_samples < 1) throw Error(Errc::Consistency, who + ": no samples");
  if (samples.size() != n_channels * n_samples) {
    throw Error(Errc::Consistency, who + ": sample buffer does not match shape");
  }
  for (float v : samples) {
    if (!std::isfinite(v)) throw Error(Errc::Consistency, who + ": non-finite sample");
  }
}

double TrialSet::score(const TrialKey& key) const {
  const auto* rec = find_label(key);
  if (rec == nullptr) throw Error(Errc::Consistency, "no label for trial " + key.str());
  return rec->score;
}

const LabelRecord* TrialSet::find_label(const TrialKey& key) const {
  for (const auto& l : labels) {
    if (l.key == key) return &l;
  }
  return nullptr;
}

std::map<std::string, char> TrialSet::participants() const {
  std::map<std::string, char> out;
  for (const auto& t : trials) out.emplace(t.key.participant, t.cohort);
  return out;
}

void TrialSet::validate() const {
  std::map<TrialKey, const LabelRecord*> by_key;
  for (const auto& l : labels) {
    if (!std::isfinite(l.score)) {
      throw Error(Errc::Consistency, "non-finite score for " + l.key.str());
    }
    if (!by_key.emplace(l.key, &l).second) {
      throw Error(Errc::Consistency, "duplicate label for " + l.key.str());
    }
  }
  std::set<TrialKey> trial_keys;
  for (const auto& t : trials) {
    t.validate();
    if (t.n_channels != montage.size()) {
      throw Error(Errc::Consistency, "trial " + t.key.str() + " has " +
                                         std::to_string(t.n_channels) + " channels but montage " +
                                         montage.name() + " has " +
                                         std::to_string(montage.size()));
    }
    if (!trial_keys.insert(t.key).second) {
      throw Error(Errc::Consistency, "duplicate trial " + t.key.str());
    }
    auto it = by_key.find(t.key);
    if (it == by_key.end()) throw Error(Errc::Consistency, "no label for trial " + t.key.str());
    if (it->second->cohort != t.cohort) {
      throw Error(Errc::Consistency, "cohort mismatch between label and trial " + t.key.str());
    }
  }
  for (const auto& [key, rec] : by_key) {
    if (trial_keys.count(key) == 0) {
      throw Error(Errc::Consistency, "label " + key.str() + " has no matching trial");
    }
  }
}

std::vector<unsigned char> encode_trial(const Trial& trial) {
  binio::Writer w;
  w.put_bytes(std::string_view(kTrialMagic, 4));
  w.put(static_cast<std::uint32_t>(trial.n_channels));
  w.put(static_cast<std::uint64_t>(trial.n_samples));
  w.put(static_cast<float>(trial.fs));
  w.put_span(std::span<const float>(trial.samples));
  return std::move(w.bytes());
}

void write_trial_file(const Trial& trial, const std::string& path) {
  binio::write_file(path, encode_trial(trial));
}

Trial read_trial_file(const std::string& path) {
  const auto bytes = binio::read_file(path);
  binio::Reader r(bytes);
  std::string magic;
  if (!r.get_bytes(4, magic) || magic != std::string_view(kTrialMagic, 4)) {
    throw format_error(path, 0, "bad magic, expected CLT1");
  }
  std::uint32_t channels = 0;
  std::uint64_t count = 0;
  float rate = 0.0f;
  if (!r.get(channels)) throw format_error(path, r.offset(), "truncated channel count");
  if (!r.get(count)) throw format_error(path, r.offset(), "truncated sample count");
  if (!r.get(rate)) throw format_error(path, r.offset(), "truncated sampling rate");
  if (channels == 0) throw format_error(path, 4, "zero channels");
  if (count == 0) throw format_error(path, 8, "zero samples");
  if (!(rate > 0.0f) || !std::isfinite(rate)) throw format_error(path, 16, "bad sampling rate");
  const std::uint64_t expected = std::uint64_t{channels} * count * sizeof(float);
  if (r.remaining() != expected) {
    throw format_error(path, r.offset(),
                       "payload is " + std::to_string(r.remaining()) + " bytes, header implies " +
                           std::to_string(expected));
  }
  Trial t;
  t.fs = rate;
  t.n_channels = channels;
  t.n_samples = count;
  t.samples.resize(channels * count);
  r.get_span(std::span<float>(t.samples));
  for (std::size_t i = 0; i < t.samples.size(); ++i) {
    if (!std::isfinite(t.samples[i])) {
      throw format_error(path, 20 + i * sizeof(float), "non-finite sample");
    }
  }
  return t;
}

std::vector<LabelRecord> read_labels_csv(const std::string& path) {
  std::vector<LabelRecord> out;
  for (auto& [line, f] : read_csv(path, {"participant", "cohort", "day", "trial_index", "score"})) {
    LabelRecord rec;
    rec.key.participant = f[0];
    rec.cohort = parse_cohort(f[1], path, line);
    rec.key.day = parse_int(f[2], path, line);
    rec.key.trial_index = parse_int(f[3], path, line);
    rec.score = parse_double(f[4], path, line);
    if (!std::isfinite(rec.score)) throw format_error(path, line, "score must be finite");
    out.push_back(std::move(rec));
  }
  return out;
}

void write_labels_csv(const std::vector<LabelRecord>& labels, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot write " + path);
  out << "participant,cohort,day,trial_index,score\n";
  for (const auto& l : labels) {
    out << l.key.participant << ',' << l.cohort << ',' << l.key.day << ',' << l.key.trial_index
        << ',' << format_double(l.score) << '\n';
  }
  if (!out) throw Error(Errc::Io, "write failed for " + path);
}

BehavioralMetrics read_behavioral_csv(const std::string& path) {
  BehavioralMetrics out;
  for (auto& [line, f] : read_csv(path, {"participant", "day", "metric", "value"})) {
    const double v = parse_double(f[3], path, line);
    out[{f[0], parse_int(f[1], path, line)}][f[2]] = v;
  }
  return out;
}

void write_behavioral_csv(const BehavioralMetrics& metrics, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot write " + path);
  out << "participant,day,metric,value\n";
  for (const auto& [pd, values] : metrics) {
    for (const auto& [name, v] : values) {
      out << pd.first << ',' << pd.second << ',' << name << ',' << format_double(v) << '\n';
    }
  }
  if (!out) throw Error(Errc::Io, "write failed for " + path);
}

TrialSet load_trialset(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw Error(Errc::Io, "cannot open manifest " + manifest_path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw format_error(manifest_path, e.byte, e.what());
  }
  const fs::path base = fs::path(manifest_path).parent_path();
  auto resolve = [&](const std::string& rel) { return (base / rel).string(); };

  TrialSet ts;
  try {
    ts.montage = load_montage(resolve(doc.at("montage").get<std::string>()));
    ts.labels = read_labels_csv(resolve(doc.at("labels").get<std::string>()));
    if (doc.contains("behavioral") && !doc["behavioral"].is_null()) {
      ts.behavioral = read_behavioral_csv(resolve(doc["behavioral"].get<std::string>()));
    }
    for (const auto& entry : doc.at("trials")) {
      const std::string file = resolve(entry.at("file").get<std::string>());
      Trial t = read_trial_file(file);
      t.key.participant = entry.at("participant").get<std::string>();
      t.key.day = entry.at("day").get<int>();
      t.key.trial_index = entry.at("trial_index").get<int>();
      const auto cohort = entry.at("cohort").get<std::string>();
      if (cohort.size() != 1 || !valid_cohort(cohort[0])) {
        throw format_error(manifest_path, 0, "bad cohort '" + cohort + "' for " + file);
      }
      t.cohort = cohort[0];
      ts.trials.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw format_error(manifest_path, 0, e.what());
  }
  ts.validate();
  return ts;
}

std::string write_trialset(const TrialSet& ts, const std::string& dir) {
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root / "trials", ec);
  if (ec) throw Error(Errc::Io, "cannot create " + (root / "trials").string() + ": " + ec.message());

  save_montage(ts.montage, (root / "montage.json").string());
  write_labels_csv(ts.labels, (root / "labels.csv").string());
  nlohmann::ordered_json doc;
  doc["montage"] = "montage.json";
  doc["labels"] = "labels.csv";
  if (!ts.behavioral.empty()) {
    write_behavioral_csv(ts.behavioral, (root / "behavioral.csv").string());
    doc["behavioral"] = "behavioral.csv";
  }
  doc["trials"] = nlohmann::ordered_json::array();
  for (const auto& t : ts.trials) {
    const std::string rel = "trials/" + trial_file_name(t.key);
    write_trial_file(t, (root / rel).string());
    doc["trials"].push_back({{"participant", t.key.participant},
                             {"cohort", std::string(1, t.cohort)},
                             {"day", t.key.day},
                             {"trial_index", t.key.trial_index},
                             {"file", rel}});
  }
  const std::string manifest = (root / "manifest.json").string();
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot write " + manifest);
  out << doc.dump(2) << '\n';
  if (!out) throw Error(Errc::Io, "write failed for " + manifest);
  return manifest;
}

}  // namespace cogload
