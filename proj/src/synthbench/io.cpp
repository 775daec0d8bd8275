#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "mosaic/synthbench.hpp"

namespace mosaic::synth {

static_assert(std::endian::native == std::endian::little, "dataset files are little-endian");

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      out.push_back(trim(cell));
      cell.clear();
    } else {
      cell.push_back(ch);
    }
  }
  out.push_back(trim(cell));
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

template <typename T>
void write_array(const fs::path& path, const std::vector<T>& v) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw RuntimeFailure("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
  if (!f) throw RuntimeFailure("write failed: " + path.string());
}

template <typename T>
std::vector<T> read_array(const fs::path& path, std::size_t expected) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw DataError("missing dataset file " + path.string());
  const auto bytes = static_cast<std::size_t>(f.tellg());
  if (bytes != expected * sizeof(T))
    throw DataError(path.string() + ": expected " + std::to_string(expected * sizeof(T)) + " bytes, found " +
                    std::to_string(bytes));
  std::vector<T> v(expected);
  f.seekg(0);
  f.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(bytes));
  return v;
}

}  // namespace

TimeSeriesDataset ingest_csv(const fs::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file (header row required)");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
  const std::vector<std::string> header = split_csv_line(line);

  auto column_index = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  };
  const int regime_col = column_index(schema.regime_column);
  if (regime_col < 0) throw DataError(path.string() + ": missing regime column '" + schema.regime_column + "'");
  std::vector<int> feature_cols;
  std::vector<std::string> names;
  if (schema.feature_columns.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (static_cast<int>(i) != regime_col) feature_cols.push_back(static_cast<int>(i)), names.push_back(header[i]);
  } else {
    std::string missing;
    for (const auto& name : schema.feature_columns) {
      const int c = column_index(name);
      if (c < 0) missing += (missing.empty() ? "" : ", ") + name;
      feature_cols.push_back(c);
      names.push_back(name);
    }
    if (!missing.empty()) throw DataError(path.string() + ": missing feature columns: " + missing);
  }
  if (feature_cols.empty()) throw DataError(path.string() + ": no feature columns");

  FrameSeries frames;
  frames.channels = static_cast<int>(feature_cols.size());
  std::vector<std::string> problems;
  std::int64_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      problems.push_back("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) + " cells, found " +
                         std::to_string(cells.size()));
      continue;
    }
    const std::string& lab = cells[static_cast<std::size_t>(regime_col)];
    std::uint8_t label = 0;
    if (lab.empty()) {
      problems.push_back("row " + std::to_string(row) + ": missing regime label");
    } else if (lab == "0" || lab == "1") {
      label = static_cast<std::uint8_t>(lab[0] - '0');
    } else {
      problems.push_back("row " + std::to_string(row) + ": regime label '" + lab + "' is not 0 or 1");
    }
    for (std::size_t k = 0; k < feature_cols.size(); ++k) {
      double v = 0.0;
      const auto& cell = cells[static_cast<std::size_t>(feature_cols[k])];
      if (!parse_double(cell, v))
        problems.push_back("row " + std::to_string(row) + ", column '" + names[k] + "': non-numeric value '" + cell + "'");
      frames.X.push_back(v);
    }
    frames.labels.push_back(label);
    ++frames.frames;
  }
  if (!problems.empty()) {
    std::string msg = path.string() + ": " + std::to_string(problems.size()) + " problem(s)";
    for (std::size_t i = 0; i < problems.size() && i < 20; ++i) msg += "\n  " + problems[i];
    throw DataError(msg);
  }
  frames.discarded.assign(static_cast<std::size_t>(frames.frames), 0);
  frames.source_frames = frames.frames;
  if (frames.frames < schema.lag + 1)
    throw DataError(path.string() + ": " + std::to_string(frames.frames) + " rows, need at least lag + 1");

  const int D = frames.channels;
  std::vector<double> mean(static_cast<std::size_t>(D), 0.0), sd(static_cast<std::size_t>(D), 1.0);
  if (schema.standardize) {
    for (int i = 0; i < D; ++i) {
      double m = 0.0, v = 0.0;
      for (std::int64_t t = 0; t < frames.frames; ++t) m += frames.x(t, i);
      m /= static_cast<double>(frames.frames);
      for (std::int64_t t = 0; t < frames.frames; ++t) v += (frames.x(t, i) - m) * (frames.x(t, i) - m);
      v = std::sqrt(v / static_cast<double>(frames.frames));
      mean[static_cast<std::size_t>(i)] = m;
      if (v <= 0.0) {
        spdlog::warn("column '{}' is constant; standardized values set to zero", names[static_cast<std::size_t>(i)]);
        v = 0.0;
      }
      sd[static_cast<std::size_t>(i)] = v;
      for (std::int64_t t = 0; t < frames.frames; ++t) {
        double& x = frames.X[static_cast<std::size_t>(t * D + i)];
        x = v > 0.0 ? (x - m) / v : 0.0;
      }
    }
  }

  TimeSeriesDataset ds = window_and_balance(frames, schema.lag, schema.balance, schema.seed);
  ds.channel_names = names;
  ds.metadata["generator"] = "csv";
  ds.metadata["source"] = path.string();
  ds.metadata["regime_column"] = schema.regime_column;
  if (schema.standardize) ds.metadata["standardization"] = {{"columns", names}, {"mean", mean}, {"std", sd}};
  return ds;
}

void export_csv(const FrameSeries& frames, const std::vector<std::string>& names, const std::string& regime_column,
                const fs::path& path) {
  if (static_cast<int>(names.size()) != frames.channels) throw ConfigError("export_csv: channel name count mismatch");
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  for (const auto& n : names) out << n << ',';
  out << regime_column << '\n';
  char buf[64];
  for (std::int64_t t = 0; t < frames.frames; ++t) {
    for (int i = 0; i < frames.channels; ++i) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), frames.x(t, i));
      out.write(buf, ptr - buf);
      out << ',';
    }
    out << static_cast<int>(frames.labels[static_cast<std::size_t>(t)]) << '\n';
  }
}

void save_dataset(const TimeSeriesDataset& ds, const fs::path& dir) {
  fs::create_directories(dir / "data");
  write_array(dir / "data" / "X.f32bin", ds.X);
  write_array(dir / "data" / "C.u8bin", ds.C);
  nlohmann::json files = {{"X", "data/X.f32bin"}, {"C", "data/C.u8bin"}};
  if (ds.has_truth()) {
    write_array(dir / "data" / "Ztrue.f32bin", ds.Ztrue);
    files["Ztrue"] = "data/Ztrue.f32bin";
  }
  if (!ds.C_clean.empty()) {
    write_array(dir / "data" / "Cclean.u8bin", ds.C_clean);
    files["C_clean"] = "data/Cclean.u8bin";
  }
  nlohmann::json meta = {{"format", "mosaic-dataset"},
                         {"version", 1},
                         {"shape", {ds.windows, ds.steps, ds.channels}},
                         {"dtype", "float32"},
                         {"byte_order", "little"},
                         {"lag", ds.lag()},
                         {"latent_dim", ds.has_truth() ? ds.latent_dim : 0},
                         {"files", files},
                         {"channel_names", ds.channel_names},
                         {"metadata", ds.metadata}};
  meta["support_map"] = ds.support ? ds.support->to_json() : nlohmann::json(nullptr);
  std::ofstream out(dir / "meta.json");
  if (!out) throw RuntimeFailure("cannot write " + (dir / "meta.json").string());
  out << meta.dump(2) << '\n';
}

TimeSeriesDataset load_dataset(const fs::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) throw DataError("no dataset at " + dir.string() + " (meta.json missing)");
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw DataError((dir / "meta.json").string() + ": " + e.what());
  }
  TimeSeriesDataset ds;
  try {
    const auto shape = meta.at("shape");
    ds.windows = shape.at(0).get<std::int64_t>();
    ds.steps = shape.at(1).get<int>();
    ds.channels = shape.at(2).get<int>();
    ds.latent_dim = meta.value("latent_dim", 0);
    ds.channel_names = meta.value("channel_names", std::vector<std::string>{});
    ds.metadata = meta.value("metadata", nlohmann::json::object());
    if (meta.contains("support_map") && !meta["support_map"].is_null())
      ds.support = SupportMap::from_json(meta["support_map"]);
    const auto& files = meta.at("files");
    const auto n = static_cast<std::size_t>(ds.windows);
    ds.X = read_array<float>(dir / files.at("X").get<std::string>(), n * static_cast<std::size_t>(ds.steps * ds.channels));
    ds.C = read_array<std::uint8_t>(dir / files.at("C").get<std::string>(), n);
    if (files.contains("Ztrue"))
      ds.Ztrue = read_array<float>(dir / files["Ztrue"].get<std::string>(), n * static_cast<std::size_t>(ds.latent_dim));
    else
      ds.latent_dim = 0;
    if (files.contains("C_clean")) ds.C_clean = read_array<std::uint8_t>(dir / files["C_clean"].get<std::string>(), n);
  } catch (const nlohmann::json::exception& e) {
    throw DataError((dir / "meta.json").string() + ": " + e.what());
  }
  return ds;
}

}  // namespace mosaic::synth
