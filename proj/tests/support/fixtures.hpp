#pragma once

#include <string>

#include "goat/linkage.hpp"

namespace fixtures {

inline std::string repo_path(const std::string& rel) {
  return std::string(GOAT_SOURCE_DIR) + "/" + rel;
}

inline const goat::linkage::LinkageTopology& topology() {
  static const auto topo =
      goat::linkage::load_topology_file(repo_path("config/goat.topology.json"));
  return topo;
}

// The gripper sizing used throughout the docs; every regression fixture in the
// tests was produced at these lengths.
inline const goat::linkage::LinkLengths& reference_design() {
  static const auto lengths = goat::linkage::expand_symmetric(
      topology(), {{"L1", 0.0},
                   {"L2", 37.52},
                   {"L3", 24.52},
                   {"L4", 50.07},
                   {"L8", 43.26},
                   {"L9", 24.26},
                   {"L10", 10.0},
                   {"L14", 17.2}});
  return lengths;
}

constexpr double kRefPsi = 12.0;
constexpr double kRefOmegaLo = 38.02;
constexpr double kRefOmegaHi = 128.5;

}  // namespace fixtures
