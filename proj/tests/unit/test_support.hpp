#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

namespace kinerec_test {

inline std::string fixture(const std::string& name) {
  return std::string(KINEREC_FIXTURE_DIR) + "/" + name;
}

/// Fresh per-test scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    root_ = std::filesystem::temp_directory_path() /
            ("kinerec_test_" + tag + "_" + std::to_string(counter()++));
    std::filesystem::remove_all(root_);
    std::filesystem::create_directories(root_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(root_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string path(const std::string& name) const { return (root_ / name).string(); }

 private:
  static int& counter() {
    static int value = 0;
    return value;
  }
  std::filesystem::path root_;
};

}  // namespace kinerec_test
