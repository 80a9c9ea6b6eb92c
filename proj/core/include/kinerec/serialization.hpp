#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace kinerec {

/// Formats a double with %.17g: shortest printf form that round-trips IEEE-754
/// binary64 exactly. All persisted floats in the toolkit go through this.
std::string format_double(double value);

/// Streaming JSON writer producing canonical, byte-stable output: no
/// whitespace, keys in insertion order, doubles via format_double. Used for
/// every file the toolkit emits so identical inputs give identical bytes.
class JsonWriter {
 public:
  JsonWriter& begin_object();
  JsonWriter& end_object();
  JsonWriter& begin_array();
  JsonWriter& end_array();
  JsonWriter& key(const std::string& name);
  JsonWriter& value(double v);
  JsonWriter& value(int v);
  JsonWriter& value(std::int64_t v);
  JsonWriter& value(std::uint64_t v);
  JsonWriter& value(bool v);
  JsonWriter& value(const std::string& v);
  JsonWriter& value(const char* v);
  JsonWriter& null();
  JsonWriter& value(const Eigen::VectorXd& v);
  JsonWriter& value(const Eigen::Vector3d& v);

  const std::string& str() const { return out_; }

 private:
  void separate();
  std::string out_;
  std::vector<bool> needs_comma_;
  bool pending_key_ = false;
};

std::string json_escape(const std::string& s);

/// FNV-1a 64-bit hash over a byte string; stable across platforms.
std::uint64_t fnv1a64(const std::string& data);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
std::vector<std::string> read_lines(const std::string& path);

}  // namespace kinerec
