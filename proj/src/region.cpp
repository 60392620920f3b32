#include "cogload/region.hpp"

#include <algorithm>
#include <cctype>
#include <string>

#include "cogload/error.hpp"

namespace cogload {

namespace {

constexpr std::array<std::string_view, kNumRegions> kNames = {
    "Prefrontal", "Frontal",  "FrontoCentral",    "Central",  "Temporal",
    "CentroParietal", "Parietal", "ParietoOccipital", "Occipital",
};

struct PrefixRule {
  std::string_view prefix;  // upper case
  RegionId region;
};

// Longest prefix wins; "T" only matches when followed by a digit (T7, T8, and
// the legacy T3..T6 / extended T9, T10).
constexpr std::array<PrefixRule, 13> kRules = {{
    {"FP", RegionId::Prefrontal},
    {"AF", RegionId::Prefrontal},
    {"FC", RegionId::FrontoCentral},
    {"FT", RegionId::FrontoCentral},
    {"F", RegionId::Frontal},
    {"CP", RegionId::CentroParietal},
    {"C", RegionId::Central},
    {"TP", RegionId::Temporal},
    {"T", RegionId::Temporal},
    {"PO", RegionId::ParietoOccipital},
    {"P", RegionId::Parietal},
    {"O", RegionId::Occipital},
    {"I", RegionId::Occipital},
}};

bool well_formed(std::string_view label) {
  // letters followed by digits, or letters followed by a single 'z'
  std::size_t i = 0;
  while (i < label.size() && std::isalpha(static_cast<unsigned char>(label[i]))) ++i;
  if (i == 0) return false;
  if (i == label.size()) {
    // all letters: accepted only when the final letter is the midline 'z'
    return label.size() >= 2 && (label.back() == 'z' || label.back() == 'Z');
  }
  for (std::size_t j = i; j < label.size(); ++j) {
    if (!std::isdigit(static_cast<unsigned char>(label[j]))) return false;
  }
  return true;
}

}  // namespace

std::string_view region_name(RegionId r) { return kNames[index(r)]; }

RegionId region_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumRegions; ++i) {
    if (kNames[i] == name) return kAllRegions[i];
  }
  throw Error(Errc::InvalidArgument, "unknown region '" + std::string(name) + "'");
}

RegionId assign_region(std::string_view label) {
  if (!well_formed(label)) {
    throw Error(Errc::UnknownSite, "malformed site label '" + std::string(label) + "'");
  }
  std::string upper(label);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  // strip the site designator (digits or trailing midline Z)
  std::string stem = upper;
  while (!stem.empty() && std::isdigit(static_cast<unsigned char>(stem.back()))) stem.pop_back();
  if (stem.size() == upper.size()) stem.pop_back();  // trailing 'Z'

  const PrefixRule* best = nullptr;
  for (const auto& rule : kRules) {
    if (stem.rfind(rule.prefix, 0) != 0) continue;
    if (rule.prefix == "T" && stem != "T") continue;
    if (rule.prefix == "I" && stem != "I") continue;
    if (best == nullptr || rule.prefix.size() > best->prefix.size()) best = &rule;
  }
  // the stem must be fully consumed by the chosen prefix (rejects e.g. "FX1")
  if (best == nullptr || best->prefix.size() != stem.size()) {
    throw Error(Errc::UnknownSite, "no region for site '" + std::string(label) + "'");
  }
  return best->region;
}

}  // namespace cogload
