#include "ltsm/series.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "ltsm/error.hpp"
#include "ltsm/rng.hpp"

namespace ltsm {

TimeSeries::TimeSeries(std::string name, std::string frequency, Matrix values,
                       std::vector<std::string> variate_names, std::vector<std::string> timestamps)
    : name_(std::move(name)),
      frequency_(std::move(frequency)),
      values_(std::move(values)),
      variate_names_(std::move(variate_names)),
      timestamps_(std::move(timestamps)) {
  if (values_.rows() < 1) throw Error(Errc::EmptyDataset, "series '" + name_ + "' has no rows");
  if (values_.cols() < 1) throw Error(Errc::InvalidData, "series '" + name_ + "' has no variates");
  if (variate_names_.size() != static_cast<std::size_t>(values_.cols()))
    throw Error(Errc::ShapeError, "variate name count does not match column count");
  if (std::set<std::string>(variate_names_.begin(), variate_names_.end()).size() !=
      variate_names_.size())
    throw Error(Errc::InvalidData, "variate names must be distinct");
  if (!timestamps_.empty() && timestamps_.size() != static_cast<std::size_t>(values_.rows()))
    throw Error(Errc::ShapeError, "timestamp count does not match row count");
  for (Eigen::Index j = 0; j < values_.cols(); ++j)
    for (Eigen::Index i = 0; i < values_.rows(); ++i)
      if (!std::isfinite(values_(i, j)))
        throw Error(Errc::InvalidData, "non-finite value at row " + std::to_string(i) +
                                           ", variate " + variate_names_[j]);
}

TimeSeries TimeSeries::slice(std::size_t begin, std::size_t count, const std::string& suffix) const {
  if (begin + count > length()) throw Error(Errc::ShapeError, "slice out of range");
  std::vector<std::string> ts;
  if (!timestamps_.empty())
    ts.assign(timestamps_.begin() + static_cast<std::ptrdiff_t>(begin),
              timestamps_.begin() + static_cast<std::ptrdiff_t>(begin + count));
  return TimeSeries(name_ + suffix, frequency_,
                    values_.middleRows(static_cast<Eigen::Index>(begin),
                                       static_cast<Eigen::Index>(count)),
                    variate_names_, std::move(ts));
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '"')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '"')) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      cells.push_back(trim(std::string_view(line).substr(start)));
      break;
    }
    cells.push_back(trim(std::string_view(line).substr(start, comma - start)));
    start = comma + 1;
  }
  return cells;
}

bool parse_real(const std::string& cell, double& out) {
  if (cell.empty()) return false;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

TimeSeries parse_csv(const std::string& text, const CsvOptions& options) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::EmptyDataset, "missing header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
  const std::vector<std::string> header = split_line(line);

  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    rows.push_back(split_line(line));
  }
  if (rows.empty()) throw Error(Errc::EmptyDataset, "no data rows");

  bool has_ts = false;
  switch (options.timestamp) {
    case TimestampColumn::Present: has_ts = true; break;
    case TimestampColumn::Absent: has_ts = false; break;
    case TimestampColumn::Auto: {
      double tmp = 0.0;
      has_ts = lower(header.front()) == "date" || !parse_real(rows.front().front(), tmp);
      break;
    }
  }
  const std::size_t first_value = has_ts ? 1 : 0;
  if (header.size() <= first_value) throw ParseError(0, header.size(), "no numeric columns");
  const std::size_t d = header.size() - first_value;

  Matrix values(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  std::vector<std::string> stamps;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    if (cells.size() != header.size())
      throw ParseError(r + 1, cells.size(),
                       "expected " + std::to_string(header.size()) + " cells, found " +
                           std::to_string(cells.size()));
    if (has_ts) stamps.push_back(cells.front());
    for (std::size_t c = first_value; c < cells.size(); ++c) {
      double v = 0.0;
      if (!parse_real(cells[c], v)) throw ParseError(r + 1, c + 1, "non-numeric cell '" + cells[c] + "'");
      if (!std::isfinite(v)) throw ParseError(r + 1, c + 1, "non-finite cell '" + cells[c] + "'");
      values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c - first_value)) = v;
    }
  }
  std::vector<std::string> names(header.begin() + static_cast<std::ptrdiff_t>(first_value), header.end());
  return TimeSeries(options.name.empty() ? "series" : options.name, options.frequency,
                    std::move(values), std::move(names), std::move(stamps));
}

TimeSeries load_csv(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  CsvOptions opts = options;
  if (opts.name.empty()) opts.name = path.stem().string();
  return parse_csv(buf.str(), opts);
}

void write_csv(const TimeSeries& ts, const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  const bool has_ts = !ts.timestamps().empty();
  if (has_ts) out << "date";
  for (std::size_t j = 0; j < ts.channels(); ++j)
    out << ((has_ts || j > 0) ? "," : "") << ts.variate_names()[j];
  out << '\n';
  out << std::setprecision(17);
  for (std::size_t i = 0; i < ts.length(); ++i) {
    if (has_ts) out << ts.timestamps()[i];
    for (std::size_t j = 0; j < ts.channels(); ++j)
      out << ((has_ts || j > 0) ? "," : "")
          << ts.values()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    out << '\n';
  }
}

void SplitSpec::validate() const {
  for (double f : {train_frac, val_frac, test_frac})
    if (!(f > 0.0 && f < 1.0)) throw Error(Errc::InvalidArgument, "split fractions must lie in (0,1)");
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
    throw Error(Errc::InvalidArgument, "split fractions must sum to 1");
}

Splits chronological_split(const TimeSeries& ts, const SplitSpec& spec) {
  spec.validate();
  const std::size_t t = ts.length();
  const auto n_train = static_cast<std::size_t>(std::floor(spec.train_frac * static_cast<double>(t)));
  const auto n_val = static_cast<std::size_t>(std::floor(spec.val_frac * static_cast<double>(t)));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= t)
    throw Error(Errc::SplitTooSmall, "series of length " + std::to_string(t) +
                                         " leaves an empty split");
  const std::size_t n_test = t - n_train - n_val;
  return Splits{ts.slice(0, n_train, ":train"), ts.slice(n_train, n_val, ":val"),
                ts.slice(n_train + n_val, n_test, ":test")};
}

std::vector<std::size_t> downsample_indices(std::size_t length, std::size_t rate) {
  if (rate == 0) throw Error(Errc::InvalidRate, "downsampling rate must be >= 1");
  std::vector<std::size_t> idx;
  idx.reserve(length / rate + 1);
  for (std::size_t i = 0; i < length; i += rate) idx.push_back(i);
  return idx;
}

TimeSeries downsample(const TimeSeries& ts, std::size_t rate) {
  const auto idx = downsample_indices(ts.length(), rate);
  Matrix out(static_cast<Eigen::Index>(idx.size()), ts.values().cols());
  std::vector<std::string> stamps;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    out.row(static_cast<Eigen::Index>(k)) = ts.values().row(static_cast<Eigen::Index>(idx[k]));
    if (!ts.timestamps().empty()) stamps.push_back(ts.timestamps()[idx[k]]);
  }
  return TimeSeries(ts.name(), ts.frequency(), std::move(out), ts.variate_names(), std::move(stamps));
}

std::size_t window_count(std::size_t length, std::size_t lookback_len, std::size_t horizon,
                         std::size_t stride) {
  if (stride == 0 || lookback_len == 0 || horizon == 0)
    throw Error(Errc::InvalidArgument, "lookback, horizon and stride must be >= 1");
  if (length < lookback_len + horizon)
    throw Error(Errc::SeriesTooShort, "length " + std::to_string(length) + " < lookback " +
                                          std::to_string(lookback_len) + " + horizon " +
                                          std::to_string(horizon));
  return (length - lookback_len - horizon) / stride + 1;
}

std::vector<Window> make_windows(const TimeSeries& ts, std::size_t lookback_len,
                                 std::size_t horizon, std::size_t stride) {
  const std::size_t n = window_count(ts.length(), lookback_len, horizon, stride);
  const auto e = static_cast<Eigen::Index>(lookback_len);
  const auto q = static_cast<Eigen::Index>(horizon);
  std::vector<Window> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto off = static_cast<Eigen::Index>(k * stride);
    out.push_back(Window{ts.values().middleRows(off, e), ts.values().middleRows(off + e, q),
                         static_cast<std::size_t>(off)});
  }
  return out;
}

Corpus::Corpus(std::vector<std::string> dataset_ids, std::vector<CorpusEntry> entries)
    : dataset_ids_(std::move(dataset_ids)), entries_(std::move(entries)) {
  const std::set<std::string> known(dataset_ids_.begin(), dataset_ids_.end());
  for (const auto& e : entries_)
    if (!known.count(e.dataset_id))
      throw Error(Errc::InvalidArgument, "corpus entry references unknown dataset " + e.dataset_id);
}

std::map<std::string, std::size_t> Corpus::counts() const {
  std::map<std::string, std::size_t> c;
  for (const auto& id : dataset_ids_) c[id] = 0;
  for (const auto& e : entries_) ++c[e.dataset_id];
  return c;
}

Corpus mix_corpus(const std::vector<DatasetWindows>& datasets, std::uint64_t seed) {
  std::vector<std::string> ids;
  std::vector<CorpusEntry> flat;
  for (const auto& [id, windows] : datasets) {
    ids.push_back(id);
    for (std::size_t k = 0; k < windows.size(); ++k) flat.push_back(CorpusEntry{id, k, windows[k]});
  }
  if (flat.empty()) throw Error(Errc::EmptyCorpus, "no windows to mix");
  const auto perm = seeded_permutation(flat.size(), seed);
  std::vector<CorpusEntry> mixed;
  mixed.reserve(flat.size());
  for (std::size_t i : perm) mixed.push_back(flat[i]);
  return Corpus(std::move(ids), std::move(mixed));
}

namespace {
nlohmann::json matrix_rows(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}
}  // namespace

nlohmann::json window_to_json(const Window& w) {
  return {{"source_offset", w.source_offset},
          {"lookback", matrix_rows(w.lookback)},
          {"target", matrix_rows(w.target)}};
}

nlohmann::json corpus_to_json(const Corpus& corpus) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : corpus.entries()) {
    auto j = window_to_json(e.window);
    j["dataset_id"] = e.dataset_id;
    j["window_index"] = e.window_index;
    entries.push_back(std::move(j));
  }
  return {{"datasets", corpus.dataset_ids()}, {"counts", corpus.counts()}, {"entries", entries}};
}

}  // namespace ltsm
