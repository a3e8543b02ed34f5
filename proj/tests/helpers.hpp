#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "octopus/phantom.hpp"

namespace testing_helpers {

/// Reduced-geometry random phantom for fast unit tests.
inline octopus::phantom::PhantomSpec small_spec(std::uint64_t seed, int frames = 8, int alines = 128, int n_r = 700,
                                                double noise = 1.0) {
  octopus::phantom::CorpusOptions o;
  o.n_frames = frames;
  o.n_alines = alines;
  o.n_r = n_r;
  o.noise = noise;
  return octopus::phantom::random_spec(seed, o);
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("octopus_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing_helpers
