#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ltsm/types.hpp"

namespace ltsm {

/// A T x d matrix of finite reals with per-variate names. Immutable after
/// construction; the constructor enforces every invariant.
class TimeSeries {
 public:
  TimeSeries(std::string name, std::string frequency, Matrix values,
             std::vector<std::string> variate_names, std::vector<std::string> timestamps = {});

  const std::string& name() const noexcept { return name_; }
  const std::string& frequency() const noexcept { return frequency_; }
  const Matrix& values() const noexcept { return values_; }
  const std::vector<std::string>& variate_names() const noexcept { return variate_names_; }
  /// Metadata only; empty when the source had no timestamp column.
  const std::vector<std::string>& timestamps() const noexcept { return timestamps_; }

  std::size_t length() const noexcept { return static_cast<std::size_t>(values_.rows()); }
  std::size_t channels() const noexcept { return static_cast<std::size_t>(values_.cols()); }

  /// Rows [begin, begin + count) as a new series with the same metadata.
  TimeSeries slice(std::size_t begin, std::size_t count, const std::string& suffix = "") const;

 private:
  std::string name_;
  std::string frequency_;
  Matrix values_;
  std::vector<std::string> variate_names_;
  std::vector<std::string> timestamps_;
};

enum class TimestampColumn { Auto, Present, Absent };

struct CsvOptions {
  std::string name;  // defaults to the file stem
  std::string frequency = "1h";
  TimestampColumn timestamp = TimestampColumn::Auto;
};

/// Reads a comma-separated file with a mandatory header. ParseError rows are
/// 1-based data rows (the header is row 0); columns are 1-based file columns.
TimeSeries load_csv(const std::filesystem::path& path, const CsvOptions& options = {});
TimeSeries parse_csv(const std::string& text, const CsvOptions& options);

void write_csv(const TimeSeries& ts, const std::filesystem::path& path);

struct SplitSpec {
  double train_frac = 0.7;
  double val_frac = 0.1;
  double test_frac = 0.2;

  void validate() const;
};

struct Splits {
  TimeSeries train;
  TimeSeries val;
  TimeSeries test;
};

/// Train gets floor(train_frac*T) rows, val floor(val_frac*T), test the rest.
Splits chronological_split(const TimeSeries& ts, const SplitSpec& spec);

/// Row indices kept by downsample(): 0, rate, 2*rate, ...
std::vector<std::size_t> downsample_indices(std::size_t length, std::size_t rate);
TimeSeries downsample(const TimeSeries& ts, std::size_t rate);

struct Window {
  Matrix lookback;  // E x d
  Matrix target;    // Q x d
  std::size_t source_offset = 0;
};

std::size_t window_count(std::size_t length, std::size_t lookback_len, std::size_t horizon,
                         std::size_t stride);
std::vector<Window> make_windows(const TimeSeries& ts, std::size_t lookback_len,
                                 std::size_t horizon, std::size_t stride = 1);

struct CorpusEntry {
  std::string dataset_id;
  std::size_t window_index = 0;  // position within the dataset's window list
  Window window;
};

class Corpus {
 public:
  Corpus() = default;
  Corpus(std::vector<std::string> dataset_ids, std::vector<CorpusEntry> entries);

  const std::vector<CorpusEntry>& entries() const noexcept { return entries_; }
  const std::vector<std::string>& dataset_ids() const noexcept { return dataset_ids_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::map<std::string, std::size_t> counts() const;

 private:
  std::vector<std::string> dataset_ids_;
  std::vector<CorpusEntry> entries_;
};

using DatasetWindows = std::pair<std::string, std::vector<Window>>;

/// Seeded interleaving of every window of every dataset.
Corpus mix_corpus(const std::vector<DatasetWindows>& datasets, std::uint64_t seed);

nlohmann::json window_to_json(const Window& w);
nlohmann::json corpus_to_json(const Corpus& corpus);

}  // namespace ltsm
