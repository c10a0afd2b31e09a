#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace bnnlv::util {

// Shortest decimal form that parses back to the identical double. Locale-free.
std::string format_double(double v);

// CSV with a fixed header; numeric cells go through format_double so a rerun
// with the same inputs is byte-identical.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns);
  void row(const std::vector<std::string>& cells);
  void row_values(const std::vector<double>& values);
  void close();
  ~CsvWriter();

 private:
  std::string path_;
  std::string buffer_;
  std::size_t n_columns_;
  bool open_ = true;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& contents);

// SHA-1 hex digest; used for manifest content hashes.
std::string sha1_hex(const std::string& data);

// Runs fn(0..n-1) on up to `workers` threads. Exceptions are rethrown on the
// caller; results must be written to per-index slots by the caller's fn.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

double mean_of(const std::vector<double>& v);
// Standard error of the mean (sample stddev / sqrt(n)); NaN for n < 2.
double stderr_of(const std::vector<double>& v);

// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace bnnlv::util
