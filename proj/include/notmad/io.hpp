#pragma once

// On-disk formats: dataset and network CSVs, model/config/truth JSON, run
// manifests, training logs and evaluation reports. Layouts are described in
// docs/formats.md.

#include "notmad/core.hpp"
#include "notmad/eval.hpp"
#include "notmad/mixture.hpp"
#include "notmad/sem.hpp"
#include "notmad/synth.hpp"
#include "notmad/train.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <array>
#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unistd.h>
#include <vector>

namespace notmad {

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr int kModelFormatVersion = 1;
inline constexpr int kNetworkFormatVersion = 1;
inline constexpr int kReportFormatVersion = 1;

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Low-level helpers

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf.data(), end);
}

/// Strict full-field parse. Returns nullopt on any trailing garbage.
inline std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec == std::errc::result_out_of_range) return std::numeric_limits<double>::infinity();
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  for (auto& f : out) {
    while (!f.empty() && (f.back() == '\r' || f.back() == ' ')) f.pop_back();
    while (!f.empty() && f.front() == ' ') f.erase(f.begin());
  }
  return out;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a sibling temporary file, then renames it over `path`.
inline void write_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(tmp.string() + ": cannot open for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw std::runtime_error(tmp.string() + ": write failed");
    }
  }
  std::filesystem::rename(tmp, path);
}

inline std::string sha256_hex(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256: digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

inline std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_text(path)); }

// ---------------------------------------------------------------------------
// Dataset CSV

inline std::string dataset_to_csv(const Dataset& data) {
  data.validate();
  std::string out;
  for (Index j = 0; j < data.features(); ++j) out += (j ? ",x_" : "x_") + std::to_string(j);
  for (Index j = 0; j < data.context_dim(); ++j) out += ",c_" + std::to_string(j);
  if (data.groups) out += ",group";
  out += '\n';
  for (Index i = 0; i < data.rows(); ++i) {
    for (Index j = 0; j < data.features(); ++j) {
      if (j) out += ',';
      out += format_double(data.X(i, j));
    }
    for (Index j = 0; j < data.context_dim(); ++j) out += ',' + format_double(data.C(i, j));
    if (data.groups) out += ',' + std::to_string((*data.groups)[static_cast<std::size_t>(i)]);
    out += '\n';
  }
  return out;
}

/// Parses the dataset layout. Rows are numbered from 1 after the header.
inline Dataset dataset_from_csv(const std::string& text, const std::string& source = "<dataset>") {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(source + ": empty file");
  const std::vector<std::string> header = split_csv_line(line);

  Index p = 0;
  Index m = 0;
  bool has_group = false;
  for (std::size_t k = 0; k < header.size(); ++k) {
    const std::string& h = header[k];
    const std::string expect_x = "x_" + std::to_string(p);
    const std::string expect_c = "c_" + std::to_string(m);
    if (m == 0 && !has_group && h == expect_x) {
      ++p;
    } else if (p > 0 && !has_group && h == expect_c) {
      ++m;
    } else if (p > 0 && m > 0 && !has_group && h == "group" && k + 1 == header.size()) {
      has_group = true;
    } else {
      throw ParseError(source + ": malformed header at column " + std::to_string(k + 1) + " ('" + h +
                       "'); expected x_0..x_{p-1}, c_0..c_{m-1}[, group]");
    }
  }
  if (p == 0 || m == 0) throw ParseError(source + ": header needs at least one x_ and one c_ column");

  const std::size_t width = header.size();
  std::vector<std::vector<double>> values;
  std::vector<int> groups;
  long row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != width)
      throw ParseError(source + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                       " fields, expected " + std::to_string(width));
    std::vector<double> r(static_cast<std::size_t>(p + m));
    for (std::size_t k = 0; k < static_cast<std::size_t>(p + m); ++k) {
      const std::string location = source + ": row " + std::to_string(row) + ", column " + header[k];
      const std::optional<double> v = parse_double(cells[k]);
      if (!v) throw ParseError(location + ": not a number ('" + cells[k] + "')");
      if (!std::isfinite(*v)) throw ParseError(location + ": non-finite value ('" + cells[k] + "')");
      r[k] = *v;
    }
    if (has_group) {
      const std::string& g = cells.back();
      int label = 0;
      const auto [ptr, ec] = std::from_chars(g.data(), g.data() + g.size(), label);
      if (ec != std::errc() || ptr != g.data() + g.size())
        throw ParseError(source + ": row " + std::to_string(row) + ", column group: not an integer ('" + g + "')");
      groups.push_back(label);
    }
    values.push_back(std::move(r));
  }
  if (values.empty()) throw ParseError(source + ": no data rows");

  Dataset data;
  const Index n = static_cast<Index>(values.size());
  data.X.resize(n, p);
  data.C.resize(n, m);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) data.X(i, j) = values[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    for (Index j = 0; j < m; ++j) data.C(i, j) = values[static_cast<std::size_t>(i)][static_cast<std::size_t>(p + j)];
  }
  if (has_group) data.groups = std::move(groups);
  return data;
}

inline Dataset load_dataset(const std::filesystem::path& path) { return dataset_from_csv(read_text(path), path.string()); }

inline void save_dataset(const std::filesystem::path& path, const Dataset& data) {
  write_atomic(path, dataset_to_csv(data));
}

// ---------------------------------------------------------------------------
// Network CSV

inline std::string network_to_csv(const Matrix& w) {
  require_square(w, "network_to_csv");
  std::string out = "# notmad-network v" + std::to_string(kNetworkFormatVersion) + " p=" + std::to_string(w.rows()) + "\n";
  for (Index i = 0; i < w.rows(); ++i) {
    for (Index j = 0; j < w.cols(); ++j) {
      if (j) out += ',';
      out += format_double(w(i, j));
    }
    out += '\n';
  }
  return out;
}

inline Matrix network_from_csv(const std::string& text, const std::string& source = "<network>") {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(source + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::string prefix = "# notmad-network v";
  if (line.rfind(prefix, 0) != 0) throw ParseError(source + ": missing '# notmad-network' header");
  int version = 0;
  long p = 0;
  if (std::sscanf(line.c_str() + prefix.size(), "%d p=%ld", &version, &p) != 2 || p < 1)
    throw ParseError(source + ": malformed header '" + line + "'");
  if (version != kNetworkFormatVersion) throw ParseError(source + ": unsupported network format v" + std::to_string(version));
  Matrix w(p, p);
  long row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    if (row >= p) throw ParseError(source + ": more than p=" + std::to_string(p) + " rows");
    const std::vector<std::string> cells = split_csv_line(line);
    if (static_cast<long>(cells.size()) != p)
      throw ParseError(source + ": row " + std::to_string(row + 1) + " has " + std::to_string(cells.size()) +
                       " fields, expected " + std::to_string(p));
    for (long j = 0; j < p; ++j) {
      const std::optional<double> v = parse_double(cells[static_cast<std::size_t>(j)]);
      if (!v || !std::isfinite(*v))
        throw ParseError(source + ": row " + std::to_string(row + 1) + ", column " + std::to_string(j + 1) +
                         ": invalid value ('" + cells[static_cast<std::size_t>(j)] + "')");
      w(row, j) = *v;
    }
    ++row;
  }
  if (row != p) throw ParseError(source + ": expected " + std::to_string(p) + " rows, found " + std::to_string(row));
  return w;
}

inline Matrix load_network(const std::filesystem::path& path) { return network_from_csv(read_text(path), path.string()); }

inline void save_network(const std::filesystem::path& path, const Matrix& w) { write_atomic(path, network_to_csv(w)); }

// ---------------------------------------------------------------------------
// JSON conversions

inline Json matrix_to_json(const Matrix& a) {
  Json rows = Json::array();
  for (Index i = 0; i < a.rows(); ++i) {
    Json r = Json::array();
    for (Index j = 0; j < a.cols(); ++j) r.push_back(a(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

inline Matrix matrix_from_json(const Json& j, const std::string& what) {
  if (!j.is_array()) throw ParseError(what + ": expected an array of rows");
  const Index rows = static_cast<Index>(j.size());
  if (rows == 0) return Matrix(0, 0);
  if (!j[0].is_array()) throw ParseError(what + ": expected an array of rows");
  const Index cols = static_cast<Index>(j[0].size());
  Matrix a(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const Json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols)
      throw ParseError(what + ": row " + std::to_string(r + 1) + " has the wrong length");
    for (Index c = 0; c < cols; ++c) {
      const Json& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number()) throw ParseError(what + ": non-numeric entry at row " + std::to_string(r + 1));
      a(r, c) = v.get<double>();
    }
  }
  return a;
}

namespace detail {

// Copies j[key] into out when present; rejects keys not listed.
class JsonFields {
 public:
  JsonFields(const Json& j, std::string what) : j_(j), what_(std::move(what)) {
    if (!j_.is_object()) throw ParseError(what_ + ": expected a JSON object");
  }

  template <class T>
  void get(const char* key, T& out) {
    known_.push_back(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(what_ + ": field '" + key + "': " + e.what());
    }
  }

  void get_string(const char* key, std::string& out) { get(key, out); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (std::find(known_.begin(), known_.end(), it.key()) == known_.end())
        throw ParseError(what_ + ": unknown field '" + it.key() + "'");
  }

 private:
  const Json& j_;
  std::string what_;
  std::vector<std::string> known_;
};

}  // namespace detail

inline Json to_json(const TrainConfig& c) {
  return Json{{"alpha", c.alpha},
              {"beta", c.beta},
              {"gamma", c.gamma},
              {"dag_weight_growth", c.dag_weight_growth},
              {"dag_weight_max", c.dag_weight_max},
              {"archetypes", c.archetypes},
              {"learning_rate", c.learning_rate},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"seed", c.seed},
              {"encoder", to_string(c.encoder)},
              {"hidden", c.hidden},
              {"eval_threshold", c.eval_threshold},
              {"project_predictions", c.project_predictions}};
}

/// Missing fields take their defaults; unknown fields are an error.
inline TrainConfig train_config_from_json(const Json& j) {
  TrainConfig c;
  detail::JsonFields f(j, "train config");
  f.get("alpha", c.alpha);
  f.get("beta", c.beta);
  f.get("gamma", c.gamma);
  f.get("dag_weight_growth", c.dag_weight_growth);
  f.get("dag_weight_max", c.dag_weight_max);
  f.get("archetypes", c.archetypes);
  f.get("learning_rate", c.learning_rate);
  f.get("epochs", c.epochs);
  f.get("batch_size", c.batch_size);
  f.get("seed", c.seed);
  std::string encoder = to_string(c.encoder);
  f.get_string("encoder", encoder);
  f.get("hidden", c.hidden);
  f.get("eval_threshold", c.eval_threshold);
  f.get("project_predictions", c.project_predictions);
  f.finish();
  try {
    c.encoder = encoder_kind_from_string(encoder);
    c.validate();
  } catch (const InvalidInput& e) {
    throw ParseError(std::string("train config: ") + e.what());
  }
  return c;
}

inline Json to_json(const SynthSpec& s) {
  return Json{{"p", s.p},
              {"m", s.m},
              {"k_true", s.k_true},
              {"n_train", s.n_train},
              {"n_test", s.n_test},
              {"edge_density", s.edge_density},
              {"weight_low", s.weight_low},
              {"weight_high", s.weight_high},
              {"noise_scale", s.noise_scale},
              {"mixing", to_string(s.mixing)},
              {"mixing_scale", s.mixing_scale},
              {"seed", s.seed}};
}

inline SynthSpec synth_spec_from_json(const Json& j) {
  SynthSpec s;
  detail::JsonFields f(j, "synth spec");
  f.get("p", s.p);
  f.get("m", s.m);
  f.get("k_true", s.k_true);
  f.get("n_train", s.n_train);
  f.get("n_test", s.n_test);
  f.get("edge_density", s.edge_density);
  f.get("weight_low", s.weight_low);
  f.get("weight_high", s.weight_high);
  f.get("noise_scale", s.noise_scale);
  std::string mixing = to_string(s.mixing);
  f.get_string("mixing", mixing);
  f.get("mixing_scale", s.mixing_scale);
  f.get("seed", s.seed);
  f.finish();
  try {
    s.mixing = mixing_kind_from_string(mixing);
    s.validate();
  } catch (const InvalidInput& e) {
    throw ParseError(std::string("synth spec: ") + e.what());
  }
  return s;
}

inline Json parse_json(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(source + ": " + e.what());
  }
}

inline Json load_json(const std::filesystem::path& path) { return parse_json(read_text(path), path.string()); }

inline std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

inline void save_json(const std::filesystem::path& path, const Json& j) { write_atomic(path, dump_json(j)); }

// ---------------------------------------------------------------------------
// Model JSON

inline Json model_to_json(const MixtureModel& model, const TrainConfig& config) {
  model.validate();
  Json archetypes = Json::array();
  for (const auto& w : model.dict.archetypes) archetypes.push_back(matrix_to_json(w));
  Json params = Json::array();
  for (const auto& block : model.encoder.parameters()) params.push_back(matrix_to_json(block));
  return Json{{"format_version", kModelFormatVersion},
              {"p", model.nodes()},
              {"m", model.context_dim()},
              {"K", model.archetype_count()},
              {"encoder",
               {{"kind", to_string(model.encoder.kind())},
                {"hidden", model.encoder.hidden_width()},
                {"parameters", std::move(params)}}},
              {"archetypes", std::move(archetypes)},
              {"config", to_json(config)}};
}

struct LoadedModel {
  MixtureModel model;
  TrainConfig config;
};

inline LoadedModel model_from_json(const Json& j) {
  try {
    if (!j.is_object()) throw ParseError("model: expected a JSON object");
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion) throw ParseError("model: unsupported format_version " + std::to_string(version));
    const Index p = j.at("p").get<Index>();
    const Index m = j.at("m").get<Index>();
    const Index k = j.at("K").get<Index>();
    const Json& enc = j.at("encoder");
    const EncoderKind kind = encoder_kind_from_string(enc.at("kind").get<std::string>());
    const Index hidden = enc.at("hidden").get<Index>();

    LoadedModel out;
    out.config = train_config_from_json(j.at("config"));
    out.model.encoder = ContextEncoder::make(kind, m, k, kind == EncoderKind::linear ? 1 : hidden);
    auto& params = out.model.encoder.parameters();
    const Json& jp = enc.at("parameters");
    if (!jp.is_array() || jp.size() != params.size()) throw ParseError("model: wrong number of encoder parameter blocks");
    for (std::size_t b = 0; b < params.size(); ++b) {
      Matrix block = matrix_from_json(jp[b], "model encoder block " + std::to_string(b));
      if (block.rows() != params[b].rows() || block.cols() != params[b].cols())
        throw ParseError("model: encoder block " + std::to_string(b) + " has the wrong shape");
      params[b] = std::move(block);
    }
    const Json& ja = j.at("archetypes");
    if (!ja.is_array() || static_cast<Index>(ja.size()) != k) throw ParseError("model: expected K archetypes");
    for (std::size_t a = 0; a < ja.size(); ++a) {
      Matrix w = matrix_from_json(ja[a], "model archetype " + std::to_string(a));
      if (w.rows() != p || w.cols() != p) throw ParseError("model: archetype " + std::to_string(a) + " is not p x p");
      out.model.dict.archetypes.push_back(std::move(w));
    }
    out.model.validate();
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model: ") + e.what());
  } catch (const InvalidInput& e) {
    throw ParseError(std::string("model: ") + e.what());
  }
}

inline void save_model(const std::filesystem::path& path, const MixtureModel& model, const TrainConfig& config) {
  save_json(path, model_to_json(model, config));
}

inline LoadedModel load_model(const std::filesystem::path& path) { return model_from_json(load_json(path)); }

// ---------------------------------------------------------------------------
// Ground truth

inline Json truth_to_json(const SynthSpec& spec, const SynthTruth& truth) {
  Json archetypes = Json::array();
  for (const auto& w : truth.archetypes.archetypes) archetypes.push_back(matrix_to_json(w));
  Json order = Json::array();
  for (Index v : truth.order) order.push_back(v);
  return Json{{"format_version", 1},
              {"spec", to_json(spec)},
              {"order", std::move(order)},
              {"mixing", matrix_to_json(truth.mixing)},
              {"archetypes", std::move(archetypes)}};
}

struct LoadedTruth {
  SynthSpec spec;
  ArchetypeDictionary archetypes;
  Matrix mixing;
};

inline LoadedTruth truth_from_json(const Json& j) {
  try {
    LoadedTruth t;
    t.spec = synth_spec_from_json(j.at("spec"));
    t.mixing = matrix_from_json(j.at("mixing"), "truth mixing");
    for (const auto& a : j.at("archetypes")) t.archetypes.archetypes.push_back(matrix_from_json(a, "truth archetype"));
    t.archetypes.validate();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("truth: ") + e.what());
  } catch (const InvalidInput& e) {
    throw ParseError(std::string("truth: ") + e.what());
  }
}

/// True network of each context under a loaded ground truth.
inline std::vector<Matrix> truth_networks(const LoadedTruth& t, const Matrix& contexts) {
  require(contexts.cols() == t.mixing.cols(), "truth_networks: context dimension mismatch");
  std::vector<Matrix> out;
  for (Index i = 0; i < contexts.rows(); ++i)
    out.push_back(generate_graph(t.archetypes, true_subtype_weights(t.mixing, contexts.row(i).transpose(), t.spec.mixing)));
  return out;
}

// ---------------------------------------------------------------------------
// Training log

inline std::string training_log_csv(const std::vector<EpochRecord>& log) {
  std::string out = "epoch,pred_loss,mean_h,arch_l1,arch_h\n";
  for (const auto& r : log)
    out += std::to_string(r.epoch) + ',' + format_double(r.pred_loss) + ',' + format_double(r.mean_h) + ',' +
           format_double(r.arch_l1) + ',' + format_double(r.arch_h) + '\n';
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation report

struct MethodReport {
  std::string method;
  MseSummary mse;                           // bootstrap summary, or one value
  std::map<int, double> per_group;          // held-out MSE by group label
  std::optional<StructureSweep> structure;  // when ground truth is available
  std::optional<double> archetype_recovery;
};

struct EvalReport {
  std::vector<MethodReport> methods;
  std::vector<AblationRow> ablation;
};

inline Json report_to_json(const EvalReport& r) {
  Json methods = Json::array();
  for (const auto& m : r.methods) {
    Json jm{{"method", m.method}, {"mse_mean", m.mse.mean}, {"mse_variance", m.mse.variance}, {"mse_values", m.mse.values}};
    Json groups = Json::object();
    for (const auto& [g, v] : m.per_group) groups[std::to_string(g)] = v;
    jm["per_group_mse"] = std::move(groups);
    if (m.structure) {
      Json points = Json::array();
      for (const auto& p : m.structure->points)
        points.push_back({{"threshold", p.threshold},
                          {"shd", p.mean_shd},
                          {"precision", p.precision},
                          {"recall", p.recall},
                          {"f1", p.f1}});
      jm["structure"] = {{"sweep", std::move(points)}, {"best_threshold", m.structure->best.threshold},
                         {"best_f1", m.structure->best.f1}};
    }
    if (m.archetype_recovery) jm["archetype_recovery"] = *m.archetype_recovery;
    methods.push_back(std::move(jm));
  }
  Json ablation = Json::array();
  for (const auto& a : r.ablation) {
    Json groups = Json::object();
    for (const auto& [g, v] : a.per_group) groups[std::to_string(g)] = v;
    ablation.push_back({{"variant", a.variant}, {"mse", a.mse}, {"standard_error", a.standard_error},
                        {"per_group_mse", std::move(groups)}});
  }
  return Json{{"format_version", kReportFormatVersion}, {"methods", std::move(methods)}, {"ablation", std::move(ablation)}};
}

/// Long-format CSV: kind,method,threshold,group,metric,value. Empty cells
/// mean "not applicable".
inline std::string report_to_csv(const EvalReport& r) {
  std::string out = "kind,method,threshold,group,metric,value\n";
  auto line = [&](const std::string& kind, const std::string& method, const std::string& threshold,
                  const std::string& group, const std::string& metric, double value) {
    out += kind + ',' + method + ',' + threshold + ',' + group + ',' + metric + ',' + format_double(value) + '\n';
  };
  for (const auto& m : r.methods) {
    line("mse", m.method, "", "", "mean", m.mse.mean);
    line("mse", m.method, "", "", "variance", m.mse.variance);
    for (const auto& [g, v] : m.per_group) line("group_mse", m.method, "", std::to_string(g), "mse", v);
    if (m.structure) {
      for (const auto& p : m.structure->points) {
        const std::string t = format_double(p.threshold);
        line("structure", m.method, t, "", "shd", p.mean_shd);
        line("structure", m.method, t, "", "precision", p.precision);
        line("structure", m.method, t, "", "recall", p.recall);
        line("structure", m.method, t, "", "f1", p.f1);
      }
    }
    if (m.archetype_recovery) line("archetype_recovery", m.method, "", "", "f1", *m.archetype_recovery);
  }
  for (const auto& a : r.ablation) {
    line("ablation", a.variant, "", "", "mse", a.mse);
    line("ablation", a.variant, "", "", "standard_error", a.standard_error);
    for (const auto& [g, v] : a.per_group) line("ablation_group_mse", a.variant, "", std::to_string(g), "mse", v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run manifest

struct FileDigest {
  std::string path;
  std::string sha256;
};

/// Record of one CLI run. Contains no timestamps or host details, so
/// identical runs produce identical manifests.
struct RunManifest {
  std::string command;
  Json config = Json::object();
  std::uint64_t seed = 0;
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> outputs;
  std::string tool_version = kToolVersion;

  void add_input(const std::filesystem::path& p) { inputs.push_back({p.generic_string(), sha256_file(p)}); }
  void add_output(const std::filesystem::path& p) { outputs.push_back({p.generic_string(), sha256_file(p)}); }

  Json to_json() const {
    auto files = [](const std::vector<FileDigest>& v) {
      Json a = Json::array();
      for (const auto& f : v) a.push_back({{"path", f.path}, {"sha256", f.sha256}});
      return a;
    };
    return Json{{"command", command}, {"tool_version", tool_version}, {"seed", seed},
                {"config", config},   {"inputs", files(inputs)},      {"outputs", files(outputs)}};
  }
};

}  // namespace notmad
