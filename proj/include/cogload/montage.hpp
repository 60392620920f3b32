#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cogload/region.hpp"

namespace cogload {

// Scalp position in the top-down projection: x to the right ear, y towards
// the nose. The Fpz-T7-Oz-T8 circumference sits on radius 1.
struct Vec2 {
  double x{0.0};
  double y{0.0};
  bool operator==(const Vec2&) const = default;
};

struct Electrode {
  std::string name;
  Vec2 pos;
  RegionId region{RegionId::Prefrontal};
  bool operator==(const Electrode&) const = default;
};

class Montage {
 public:
  Montage() = default;
  // Validates names (non-empty, unique, known site), positions (|pos| <= 1.2)
  // and region coverage. Regions are always derived from the names.
  Montage(std::string name, std::vector<std::pair<std::string, Vec2>> sites);

  const std::string& name() const { return name_; }
  const std::vector<Electrode>& electrodes() const { return electrodes_; }
  std::size_t size() const { return electrodes_.size(); }
  const Electrode& operator[](std::size_t i) const { return electrodes_[i]; }

  std::optional<std::size_t> find(std::string_view electrode) const;

  // Channel indices per region, each sorted by ascending electrode name.
  const std::array<std::vector<std::size_t>, kNumRegions>& regions() const { return by_region_; }

  // True for the 26/28/32 channel counts of the reference caps.
  bool standard_channel_count() const;

  bool operator==(const Montage& other) const {
    return name_ == other.name_ && electrodes_ == other.electrodes_;
  }

 private:
  std::string name_;
  std::vector<Electrode> electrodes_;
  std::array<std::vector<std::size_t>, kNumRegions> by_region_;
};

// Labels of the extended 10-10 system with derived scalp positions.
const std::vector<std::string>& standard_site_labels();
std::optional<Vec2> standard_position(std::string_view label);

// Reference caps: 32 channels, or any count 9..31 as a subset of the 32-channel
// cap (26 and 28 are the reference subsets). Throws InvalidArgument otherwise.
Montage builtin_montage(std::size_t n_channels);

Montage load_montage(const std::string& path);
void save_montage(const Montage& montage, const std::string& path);

}  // namespace cogload
