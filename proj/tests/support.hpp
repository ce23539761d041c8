#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

namespace support {

namespace fs = std::filesystem;

// Fresh scratch directory under the build tree.
inline fs::path scratch(const std::string& name) {
  const fs::path dir = fs::path(COLCAL_TEST_TMP) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

inline std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

}  // namespace support
