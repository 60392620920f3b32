#include "cogload/montage.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>

#include <json.hpp>

#include "cogload/error.hpp"

namespace cogload {

namespace {

struct Vec3 {
  double x, y, z;
};

Vec3 from_spherical(double polar_deg, double azimuth_deg) {
  // azimuth 0 = nose, positive towards the right ear
  const double th = polar_deg * std::numbers::pi / 180.0;
  const double ph = azimuth_deg * std::numbers::pi / 180.0;
  return {std::sin(th) * std::sin(ph), std::sin(th) * std::cos(ph), std::cos(th)};
}

Vec3 slerp(const Vec3& a, const Vec3& b, double t) {
  const double dot = std::clamp(a.x * b.x + a.y * b.y + a.z * b.z, -1.0, 1.0);
  const double omega = std::acos(dot);
  if (omega < 1e-12) return a;
  const double s = std::sin(omega);
  const double wa = std::sin((1.0 - t) * omega) / s;
  const double wb = std::sin(t * omega) / s;
  return {wa * a.x + wb * b.x, wa * a.y + wb * b.y, wa * a.z + wb * b.z};
}

// Azimuthal equidistant projection: radius 1 at 90 degrees from the vertex.
Vec2 project(const Vec3& p) {
  const double polar = std::acos(std::clamp(p.z, -1.0, 1.0));
  const double r = polar / (std::numbers::pi / 2.0);
  const double planar = std::hypot(p.x, p.y);
  if (planar < 1e-12) return {0.0, 0.0};
  // round away float noise so that the JSON files are stable
  auto tidy = [](double v) { return std::round(v * 1e9) / 1e9 + 0.0; };
  return {tidy(r * p.x / planar), tidy(r * p.y / planar)};
}

struct SiteRow {
  const char* prefix;        // e.g. "F"
  const char* left_end;      // label at the lateral end of the arc (index 7)
  const char* right_end;     // (index 8)
  double mid_polar;          // polar angle of the midline site
  bool front;                // midline site in front of the vertex
  double end_azimuth;        // |azimuth| of the lateral ends on the equator
  const char* left_ext;      // site below the equator (index 9) or nullptr
  const char* right_ext;
};

// Coronal rows of the 10-10 system. Each row is an arc from the left
// equatorial site through the midline site to the right equatorial site,
// split in eight equal steps (7,5,3,1,z,2,4,6,8).
constexpr SiteRow kRows[] = {
    {"AF", "AF7", "AF8", 72.0, true, 36.0, nullptr, nullptr},
    {"F", "F7", "F8", 54.0, true, 54.0, "F9", "F10"},
    {"FC", "FT7", "FT8", 36.0, true, 72.0, "FT9", "FT10"},
    {"C", "T7", "T8", 0.0, true, 90.0, "T9", "T10"},
    {"CP", "TP7", "TP8", 36.0, false, 108.0, "TP9", "TP10"},
    {"P", "P7", "P8", 54.0, false, 126.0, "P9", "P10"},
    {"PO", "PO7", "PO8", 72.0, false, 144.0, "PO9", "PO10"},
};

struct StandardTable {
  std::vector<std::string> labels;
  std::map<std::string, Vec2, std::less<>> positions;

  void add(const std::string& label, const Vec3& p) {
    labels.push_back(label);
    positions[label] = project(p);
  }
};

StandardTable build_standard_table() {
  StandardTable t;
  t.add("Fp1", from_spherical(90.0, -18.0));
  t.add("Fpz", from_spherical(90.0, 0.0));
  t.add("Fp2", from_spherical(90.0, 18.0));
  for (const auto& row : kRows) {
    const Vec3 left = from_spherical(90.0, -row.end_azimuth);
    const Vec3 right = from_spherical(90.0, row.end_azimuth);
    const Vec3 mid = from_spherical(row.mid_polar, row.front ? 0.0 : 180.0);
    const std::string p = row.prefix;
    if (row.left_ext != nullptr) t.add(row.left_ext, from_spherical(108.0, -row.end_azimuth));
    t.add(row.left_end, left);
    // left half: 5, 3, 1 at steps 1..3 from the left end
    for (int k = 1; k <= 3; ++k) t.add(p + std::to_string(7 - 2 * k), slerp(left, mid, k / 4.0));
    t.add(p + "z", mid);
    for (int k = 1; k <= 3; ++k) t.add(p + std::to_string(2 * k), slerp(mid, right, k / 4.0));
    t.add(row.right_end, right);
    if (row.right_ext != nullptr) t.add(row.right_ext, from_spherical(108.0, row.end_azimuth));
  }
  t.add("O1", from_spherical(90.0, -162.0));
  t.add("Oz", from_spherical(90.0, 180.0));
  t.add("O2", from_spherical(90.0, 162.0));
  t.add("Iz", from_spherical(108.0, 180.0));
  return t;
}

const StandardTable& standard_table() {
  static const StandardTable table = build_standard_table();
  return table;
}

const std::vector<std::string> kCap32 = {
    "Fp1", "Fpz", "Fp2", "F7",  "F3",  "Fz",  "F4",  "F8",  "FC5", "FC1", "FC2",
    "FC6", "T7",  "C3",  "Cz",  "C4",  "T8",  "TP9", "CP1", "CP2", "TP10", "P7",
    "P3",  "Pz",  "P4",  "P8",  "PO3", "POz", "PO4", "O1",  "Oz",  "O2",
};

// Sites kept when building caps with fewer channels: the per-region
// representatives first, then the remaining sites.
const std::vector<std::string> kKeepPriority = {
    "Fpz", "Fz",  "FC1", "Cz",  "T7",  "CP1", "Pz",  "POz", "Oz",  "Fp1", "Fp2",
    "F3",  "F4",  "FC2", "C3",  "C4",  "T8",  "CP2", "P3",  "P4",  "PO3", "PO4",
    "O1",  "O2",  "FC5", "FC6", "TP9", "TP10", "F7", "F8",  "P7",  "P8",
};

}  // namespace

Montage::Montage(std::string name, std::vector<std::pair<std::string, Vec2>> sites)
    : name_(std::move(name)) {
  std::set<std::string, std::less<>> seen;
  electrodes_.reserve(sites.size());
  for (auto& [label, pos] : sites) {
    if (label.empty()) throw Error(Errc::Format, "montage '" + name_ + "': empty electrode name");
    if (!seen.insert(label).second) {
      throw Error(Errc::Format, "montage '" + name_ + "': duplicate electrode " + label);
    }
    if (!std::isfinite(pos.x) || !std::isfinite(pos.y) || std::hypot(pos.x, pos.y) > 1.2 + 1e-9) {
      throw Error(Errc::Format, "montage '" + name_ + "': electrode " + label +
                                    " lies outside radius 1.2");
    }
    electrodes_.push_back({label, pos, assign_region(label)});
  }
  for (std::size_t i = 0; i < electrodes_.size(); ++i) {
    by_region_[index(electrodes_[i].region)].push_back(i);
  }
  for (std::size_t r = 0; r < kNumRegions; ++r) {
    auto& members = by_region_[r];
    if (members.empty()) {
      throw Error(Errc::EmptyRegion, "montage '" + name_ + "' has no electrode in region " +
                                         std::string(region_name(kAllRegions[r])));
    }
    std::sort(members.begin(), members.end(), [this](std::size_t a, std::size_t b) {
      return electrodes_[a].name < electrodes_[b].name;
    });
  }
}

std::optional<std::size_t> Montage::find(std::string_view electrode) const {
  for (std::size_t i = 0; i < electrodes_.size(); ++i) {
    if (electrodes_[i].name == electrode) return i;
  }
  return std::nullopt;
}

bool Montage::standard_channel_count() const {
  const auto n = electrodes_.size();
  return n == 26 || n == 28 || n == 32;
}

const std::vector<std::string>& standard_site_labels() { return standard_table().labels; }

std::optional<Vec2> standard_position(std::string_view label) {
  const auto& pos = standard_table().positions;
  auto it = pos.find(label);
  if (it == pos.end()) return std::nullopt;
  return it->second;
}

Montage builtin_montage(std::size_t n_channels) {
  if (n_channels < kNumRegions || n_channels > kCap32.size()) {
    throw Error(Errc::InvalidArgument,
                "no reference cap with " + std::to_string(n_channels) + " channels (9..32)");
  }
  std::set<std::string> keep(kKeepPriority.begin(), kKeepPriority.begin() + n_channels);
  std::vector<std::pair<std::string, Vec2>> sites;
  for (const auto& label : kCap32) {
    if (keep.count(label) == 0) continue;
    sites.emplace_back(label, *standard_position(label));
  }
  return Montage("cap" + std::to_string(n_channels), std::move(sites));
}

Montage load_montage(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open montage file " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw format_error(path, e.byte, e.what());
  }
  try {
    std::vector<std::pair<std::string, Vec2>> sites;
    for (const auto& e : doc.at("electrodes")) {
      sites.emplace_back(e.at("name").get<std::string>(),
                         Vec2{e.at("x").get<double>(), e.at("y").get<double>()});
    }
    return Montage(doc.at("name").get<std::string>(), std::move(sites));
  } catch (const nlohmann::json::exception& e) {
    throw format_error(path, 0, e.what());
  }
}

void save_montage(const Montage& montage, const std::string& path) {
  nlohmann::ordered_json doc;
  doc["name"] = montage.name();
  doc["electrodes"] = nlohmann::ordered_json::array();
  for (const auto& e : montage.electrodes()) {
    doc["electrodes"].push_back({{"name", e.name}, {"x", e.pos.x}, {"y", e.pos.y}});
  }
  std::ofstream out(path);
  if (!out) throw Error(Errc::Io, "cannot write montage file " + path);
  out << doc.dump(2) << '\n';
  if (!out) throw Error(Errc::Io, "write failed for " + path);
}

}  // namespace cogload
