#pragma once

#include <filesystem>
#include <string>

#include <unistd.h>

#include "stpasec/util.hpp"

namespace stpasec::testing {

inline std::filesystem::path fixtures() { return STPASEC_FIXTURES; }
inline std::filesystem::path suite_dir() { return fixtures() / "suite"; }

inline std::string read_fixture(const std::filesystem::path& rel) {
  return util::read_file((fixtures() / rel).string());
}

// Fresh empty directory under the system temp dir, private to this process
// so parallel ctest runs do not clobber each other.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() /
             ("stpasec-test-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace stpasec::testing
