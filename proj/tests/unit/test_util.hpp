#pragma once

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "fixtures.hpp"

namespace xmodal::testing {

inline std::string data_path(const std::string& name) { return std::string(XMODAL_TEST_DATA_DIR) + "/" + name; }

// Compares text against a golden file. With XMODAL_UPDATE_GOLDEN=1 the file
// is (re)written instead and the comparison passes.
inline ::testing::AssertionResult matches_golden(const std::string& name, const std::string& text) {
  const std::string path = data_path(name);
  if (const char* u = std::getenv("XMODAL_UPDATE_GOLDEN"); u && std::string(u) == "1") {
    std::ofstream(path) << text;
    return ::testing::AssertionSuccess();
  }
  std::ifstream in(path);
  if (!in) return ::testing::AssertionFailure() << "missing golden file " << path;
  std::stringstream ss;
  ss << in.rdbuf();
  if (ss.str() != text) return ::testing::AssertionFailure() << "output differs from golden " << path;
  return ::testing::AssertionSuccess();
}

}  // namespace xmodal::testing
