#pragma once

#include <array>
#include <cstddef>
#include <string_view>

namespace cogload {

// The nine anatomical scalp regions, in fixed index order 0..8.
enum class RegionId : std::size_t {
  Prefrontal = 0,
  Frontal,
  FrontoCentral,
  Central,
  Temporal,
  CentroParietal,
  Parietal,
  ParietoOccipital,
  Occipital,
};

inline constexpr std::size_t kNumRegions = 9;

inline constexpr std::array<RegionId, kNumRegions> kAllRegions = {
    RegionId::Prefrontal,     RegionId::Frontal,  RegionId::FrontoCentral,
    RegionId::Central,        RegionId::Temporal, RegionId::CentroParietal,
    RegionId::Parietal,       RegionId::ParietoOccipital, RegionId::Occipital,
};

constexpr std::size_t index(RegionId r) { return static_cast<std::size_t>(r); }

std::string_view region_name(RegionId r);
RegionId region_from_name(std::string_view name);  // throws InvalidArgument

// Maps a 10-20 / 10-10 site label onto its region by longest site prefix.
// Case-insensitive. Throws Error(UnknownSite) when no prefix matches.
RegionId assign_region(std::string_view label);

}  // namespace cogload
