// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lanm/error.hpp"
#include "lanm/io.hpp"
#include "lanm/mixing.hpp"
#include "lanm/rng.hpp"
#include "lanm/scm.hpp"
#include "lanm/tensor.hpp"

namespace lanm::data {

namespace fs = std::filesystem;
using io::json;

struct NoiseConfig {
  std::size_t segments = 50;
  std::size_t samples_per_segment = 1000;
  scm::NoiseRanges ranges;
  // Appends a segment with every edge coefficient set to zero.
  bool certification_segment = false;
};

struct MixingConfig {
  std::size_t dim = 0;  // 0 means "same as ell"
  bool identity = false;
  double slope = 0.2;
  double max_condition = mixing::kMaxCondition;
  // Ends the mixing with a per-column standardizing affine layer.
  bool standardize = true;
};

struct GenConfig {
  scm::ScmSpec spec;
  NoiseConfig noise;
  MixingConfig mixing;
  std::uint64_t seed = 1;
  std::uint64_t mixing_seed = 0;  // 0 = derived from `seed`
  std::optional<std::string> fmri_path;  // when set, latents come from the recording

  std::uint64_t effective_mixing_seed() const {
    return mixing_seed != 0 ? mixing_seed : derive_seed(seed, "mixing");
  }
};

enum class DatasetKind { synthetic, fmri };

struct Dataset {
  DatasetKind kind = DatasetKind::synthetic;
  std::size_t ell = 0;
  std::size_t segments = 0;
  std::size_t samples_per_segment = 0;  // 0 when segments are unbalanced
  Tensor x;
  Tensor z;                    // latents fed to the mixing (after any violation rule)
  std::optional<Tensor> zbar;  // post-nonlinear latents
  std::optional<Tensor> n;     // noise; absent for recorded data
  std::vector<std::size_t> labels;
  std::optional<scm::ScmSpec> spec;
  std::optional<scm::SegmentNoiseParams> noise_params;
  std::optional<scm::EdgeCoeffs> coeffs;
  bool certification_segment = false;
  mixing::MixingMlp mixing;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;

  std::size_t rows() const { return x.rows(); }
  std::size_t dim() const { return x.cols(); }

  Tensor one_hot() const {
    Tensor u(labels.size(), segments);
    for (std::size_t r = 0; r < labels.size(); ++r) u(r, labels[r]) = 1.0;
    return u;
  }

  /// Latents before the violation rule, recomputed from noise and coefficients.
  Tensor raw_latents() const {
    if (!spec || !n || !coeffs) throw ConfigError("dataset has no ground-truth generator");
    return scm::gen_latents(*spec, *n, labels, *coeffs);
  }

  void validate() const {
    const std::size_t rows = x.rows();
    if (z.rows() != rows || labels.size() != rows || (n && n->rows() != rows) || (zbar && zbar->rows() != rows)) {
      throw ShapeError("dataset: row counts of x, z, n, u differ");
    }
    for (auto l : labels)
      if (l >= segments) throw DomainError("dataset: segment label out of range");
  }
};

inline Dataset gen_synthetic(const GenConfig& cfg) {
  const auto& spec = cfg.spec;
  spec.validate();
  const std::size_t total_segments = cfg.noise.segments + (cfg.noise.certification_segment ? 1 : 0);
  auto params = scm::sample_segment_params(spec.ell, total_segments, derive_seed(cfg.seed, "params"),
                                           cfg.noise.ranges);
  auto coeffs = scm::sample_edge_coeffs(spec, cfg.noise.segments, derive_seed(cfg.seed, "coeffs"));
  if (cfg.noise.certification_segment) coeffs = scm::with_certification_segment(coeffs);
  auto noise = scm::sample_noise(params, cfg.noise.samples_per_segment, derive_seed(cfg.seed, "noise"));

  Dataset d;
  d.kind = DatasetKind::synthetic;
  d.ell = spec.ell;
  d.segments = total_segments;
  d.samples_per_segment = cfg.noise.samples_per_segment;
  d.z = scm::gen_latents(spec, noise.n, noise.labels, coeffs);
  if (!spec.violation_nodes.empty()) d.z = scm::apply_violation(spec, d.z);
  if (spec.distortions) d.zbar = scm::apply_pnl(spec, d.z);
  const std::size_t dim = cfg.mixing.dim == 0 ? spec.ell : cfg.mixing.dim;
  if (cfg.mixing.identity) {
    if (dim != spec.ell) throw ConfigError("identity mixing requires D == ell");
    d.mixing = mixing::identity_mixing(spec.ell);
  } else {
    d.mixing = mixing::make_mixing(spec.ell, dim, cfg.effective_mixing_seed(), cfg.mixing.slope,
                                   cfg.mixing.max_condition);
  }
  if (!cfg.mixing.identity && cfg.mixing.standardize) d.mixing.standardize_on(d.zbar ? *d.zbar : d.z);
  d.x = d.mixing.forward(d.zbar ? *d.zbar : d.z);
  d.n = std::move(noise.n);
  d.labels = std::move(noise.labels);
  d.spec = spec;
  d.noise_params = std::move(params);
  d.coeffs = std::move(coeffs);
  d.certification_segment = cfg.noise.certification_segment;
  d.seed = cfg.seed;
  d.validate();
  return d;
}

// --- recorded hippocampus signals -----------------------------------------

inline const std::vector<std::string>& fmri_columns() {
  static const std::vector<std::string> cols{"day", "PRC", "PHC", "ERC", "Sub", "CA1", "DG"};
  return cols;
}

inline constexpr std::size_t kFmriDays = 84;

struct FmriTable {
  Tensor z;                          // rows x 6, standardized over the whole table
  std::vector<std::size_t> labels;   // compact segment index per row
  std::vector<std::size_t> days;     // original day value per segment index
  std::vector<std::string> warnings;
};

namespace detail {
inline std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && (s[b] == ' ' || s[b] == '\t')) ++b;
  return s.substr(b);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline double parse_number(const std::string& s, std::size_t line, const std::string& col) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ConfigError("fmri: row " + std::to_string(line) + " column " + col + ": '" + s + "' is not a number");
  }
  return v;
}
}  // namespace detail

/// Parses `day,PRC,PHC,ERC,Sub,CA1,DG` rows. Days are compacted to segment
/// indices in ascending order; signals are standardized over the full table.
inline FmriTable parse_fmri_csv(const std::string& text) {
  std::vector<std::string> lines;
  {
    std::string cur;
    for (char c : text) {
      if (c == '\n') {
        lines.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    if (!cur.empty()) lines.push_back(cur);
  }
  while (!lines.empty() && detail::trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw ConfigError("fmri: empty file");
  const auto header = detail::split_csv(lines[0]);
  const auto& want = fmri_columns();
  if (header.size() != want.size()) {
    throw ConfigError("fmri: header must have " + std::to_string(want.size()) + " columns, got " +
                      std::to_string(header.size()));
  }
  for (std::size_t c = 0; c < want.size(); ++c) {
    if (header[c] != want[c]) throw ConfigError("fmri: missing column '" + want[c] + "' (found '" + header[c] + "')");
  }

  std::vector<std::size_t> raw_days;
  std::vector<std::array<double, 6>> rows;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::size_t line_no = li + 1;
    const auto cells = detail::split_csv(lines[li]);
    if (cells.size() != want.size()) {
      throw ConfigError("fmri: row " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                        " columns, expected " + std::to_string(want.size()));
    }
    const double day = detail::parse_number(cells[0], line_no, "day");
    if (day != std::floor(day) || day < 0.0 || day >= static_cast<double>(kFmriDays)) {
      throw ConfigError("fmri: row " + std::to_string(line_no) + ": day " + cells[0] + " outside [0, 84)");
    }
    raw_days.push_back(static_cast<std::size_t>(day));
    std::array<double, 6> v{};
    for (std::size_t c = 0; c < 6; ++c) v[c] = detail::parse_number(cells[c + 1], line_no, want[c + 1]);
    rows.push_back(v);
  }
  if (rows.empty()) throw ConfigError("fmri: no data rows");

  FmriTable t;
  std::map<std::size_t, std::size_t> index;
  for (auto d : raw_days) index.emplace(d, 0);
  for (auto& [day, idx] : index) {
    idx = t.days.size();
    t.days.push_back(day);
  }
  // Stable grouping by day keeps the within-day order of the file.
  std::vector<std::size_t> order(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return raw_days[a] < raw_days[b]; });

  t.z = Tensor(rows.size(), 6);
  for (std::size_t r = 0; r < order.size(); ++r) {
    for (std::size_t c = 0; c < 6; ++c) t.z(r, c) = rows[order[r]][c];
    t.labels.push_back(index.at(raw_days[order[r]]));
  }
  for (std::size_t c = 0; c < 6; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < t.z.rows(); ++r) mean += t.z(r, c);
    mean /= static_cast<double>(t.z.rows());
    double var = 0.0;
    for (std::size_t r = 0; r < t.z.rows(); ++r) var += (t.z(r, c) - mean) * (t.z(r, c) - mean);
    var /= static_cast<double>(t.z.rows());
    const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
    if (!(var > 0.0)) t.warnings.push_back("column " + want[c + 1] + " is constant; centred only");
    for (std::size_t r = 0; r < t.z.rows(); ++r) t.z(r, c) = (t.z(r, c) - mean) / sd;
  }
  if (t.days.size() < 2 * 6 + 1) {
    t.warnings.push_back("only " + std::to_string(t.days.size()) +
                         " distinct days; the natural-parameter rank check needs at least 13 and will fail");
  }
  return t;
}

inline FmriTable ingest_fmri(const fs::path& path) { return parse_fmri_csv(io::read_file(path)); }

inline Dataset gen_fmri(const GenConfig& cfg) {
  auto table = ingest_fmri(*cfg.fmri_path);
  Dataset d;
  d.kind = DatasetKind::fmri;
  d.ell = 6;
  d.segments = table.days.size();
  d.z = std::move(table.z);
  d.labels = std::move(table.labels);
  const std::size_t dim = cfg.mixing.dim == 0 ? d.ell : cfg.mixing.dim;
  d.mixing = cfg.mixing.identity ? mixing::identity_mixing(d.ell)
                                 : mixing::make_mixing(d.ell, dim, cfg.effective_mixing_seed(),
                                                       cfg.mixing.slope, cfg.mixing.max_condition);
  if (!cfg.mixing.identity && cfg.mixing.standardize) d.mixing.standardize_on(d.z);
  d.x = d.mixing.forward(d.z);
  d.seed = cfg.seed;
  d.warnings = std::move(table.warnings);
  d.validate();
  return d;
}

inline Dataset gen_dataset(const GenConfig& cfg) { return cfg.fmri_path ? gen_fmri(cfg) : gen_synthetic(cfg); }

// --- persistence -------------------------------------------------------------

inline json spec_to_json(const scm::ScmSpec& s) {
  json j;
  j["ell"] = s.ell;
  j["adjacency"] = s.adjacency;
  json eq = json::array();
  for (auto e : s.equations) eq.push_back(std::string(scm::to_string(e)));
  j["equations"] = eq;
  j["lambda_range"] = {s.lambda_range.first, s.lambda_range.second};
  json v = json::array();
  for (auto n : s.violation_nodes) v.push_back(n + 1);
  j["violation_nodes"] = v;
  if (s.distortions) {
    json p = json::array();
    for (auto d : *s.distortions) p.push_back(std::string(scm::to_string(d)));
    j["pnl"] = p;
  } else {
    j["pnl"] = nullptr;
  }
  return j;
}

inline scm::ScmSpec spec_from_json(const json& j) {
  scm::ScmSpec s;
  s.ell = j.at("ell").get<std::size_t>();
  s.adjacency = j.at("adjacency").get<std::vector<std::vector<int>>>();
  for (const auto& e : j.at("equations")) s.equations.push_back(scm::parse_equation(e.get<std::string>()));
  s.lambda_range = {j.at("lambda_range")[0].get<double>(), j.at("lambda_range")[1].get<double>()};
  for (const auto& v : j.at("violation_nodes")) s.violation_nodes.push_back(v.get<std::size_t>() - 1);
  if (j.contains("pnl") && !j["pnl"].is_null()) {
    std::vector<scm::Distortion> d;
    for (const auto& p : j["pnl"]) d.push_back(scm::parse_distortion(p.get<std::string>()));
    s.distortions = std::move(d);
  }
  s.validate();
  return s;
}

inline json dataset_manifest(const Dataset& d, const std::vector<std::string>& files) {
  json m;
  m["format"] = "lanm-dataset";
  m["format_version"] = io::kFormatVersion;
  m["kind"] = d.kind == DatasetKind::synthetic ? "synthetic" : "fmri";
  m["ell"] = d.ell;
  m["D"] = d.dim();
  m["M"] = d.segments;
  m["N"] = d.rows();
  m["samples_per_segment"] = d.samples_per_segment;
  m["certification_segment"] = d.certification_segment;
  m["seed"] = d.seed;
  if (d.spec) {
    m["adjacency"] = d.spec->adjacency;
    m["scm"] = spec_to_json(*d.spec);
  } else {
    m["adjacency"] = nullptr;
    m["scm"] = nullptr;
  }
  m["mixing"] = {{"identity", d.mixing.identity},
                 {"slope", d.mixing.slope},
                 {"embedded", d.mixing.embed.has_value()},
                 {"condition_numbers", d.mixing.conditions}};
  m["warnings"] = d.warnings;
  m["files"] = files;
  return m;
}

inline void save_dataset(const Dataset& d, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<std::string> files;
  auto put = [&](const std::string& name, const Tensor& t) {
    io::write_tensor(dir / name, t);
    files.push_back(name);
  };
  put("x.bin", d.x);
  put("z.bin", d.z);
  put("u.bin", d.one_hot());
  if (d.zbar) put("zbar.bin", *d.zbar);
  if (d.n) put("n.bin", *d.n);
  if (d.noise_params) {
    put("alpha.bin", d.noise_params->alpha);
    put("beta.bin", d.noise_params->beta);
  }
  if (d.coeffs) put("lambda.bin", d.coeffs->table);
  if (!d.mixing.identity) {
    for (std::size_t k = 0; k < d.mixing.weights.size(); ++k) put("mixing_w" + std::to_string(k) + ".bin", d.mixing.weights[k]);
    if (d.mixing.embed) put("mixing_embed.bin", *d.mixing.embed);
    if (d.mixing.out_shift) {
      put("mixing_shift.bin", *d.mixing.out_shift);
      put("mixing_scale.bin", *d.mixing.out_scale);
    }
  }
  io::write_json(dir / "manifest.json", dataset_manifest(d, files));
}

inline Dataset load_dataset(const fs::path& dir) {
  const json m = io::read_json(dir / "manifest.json");
  if (m.value("format", "") != "lanm-dataset") throw IoError(dir.string() + ": not a dataset directory");
  Dataset d;
  d.kind = m.at("kind") == "fmri" ? DatasetKind::fmri : DatasetKind::synthetic;
  d.ell = m.at("ell").get<std::size_t>();
  d.segments = m.at("M").get<std::size_t>();
  d.samples_per_segment = m.at("samples_per_segment").get<std::size_t>();
  d.certification_segment = m.at("certification_segment").get<bool>();
  d.seed = m.at("seed").get<std::uint64_t>();
  d.warnings = m.at("warnings").get<std::vector<std::string>>();
  const auto files = m.at("files").get<std::vector<std::string>>();
  auto has = [&](const std::string& f) { return std::find(files.begin(), files.end(), f) != files.end(); };
  d.x = io::read_tensor(dir / "x.bin");
  d.z = io::read_tensor(dir / "z.bin");
  const Tensor u = io::read_tensor(dir / "u.bin");
  if (u.cols() != d.segments) throw IoError("u.bin width does not match M");
  for (std::size_t r = 0; r < u.rows(); ++r) {
    std::size_t label = d.segments;
    for (std::size_t c = 0; c < u.cols(); ++c)
      if (u(r, c) == 1.0) label = c;
    if (label == d.segments) throw IoError("u.bin row " + std::to_string(r) + " is not one-hot");
    d.labels.push_back(label);
  }
  if (has("zbar.bin")) d.zbar = io::read_tensor(dir / "zbar.bin");
  if (has("n.bin")) d.n = io::read_tensor(dir / "n.bin");
  if (!m.at("scm").is_null()) d.spec = spec_from_json(m.at("scm"));
  if (has("alpha.bin")) {
    scm::SegmentNoiseParams p;
    p.alpha = io::read_tensor(dir / "alpha.bin");
    p.beta = io::read_tensor(dir / "beta.bin");
    p.segments = p.alpha.rows();
    p.ell = p.alpha.cols();
    d.noise_params = std::move(p);
  }
  if (has("lambda.bin")) {
    Tensor t = io::read_tensor(dir / "lambda.bin");
    d.coeffs = scm::EdgeCoeffs{t.rows(), d.ell, std::move(t)};
  }
  const auto& mix = m.at("mixing");
  if (mix.at("identity").get<bool>()) {
    d.mixing = mixing::identity_mixing(d.ell);
  } else {
    d.mixing.ell = d.ell;
    d.mixing.dim = d.x.cols();
    d.mixing.slope = mix.at("slope").get<double>();
    for (std::size_t k = 0; k < d.mixing.weights.size(); ++k) {
      d.mixing.weights[k] = io::read_tensor(dir / ("mixing_w" + std::to_string(k) + ".bin"));
      d.mixing.conditions[k] = mix.at("condition_numbers")[k].get<double>();
    }
    if (has("mixing_embed.bin")) d.mixing.embed = io::read_tensor(dir / "mixing_embed.bin");
    if (has("mixing_shift.bin")) {
      d.mixing.out_shift = io::read_tensor(dir / "mixing_shift.bin");
      d.mixing.out_scale = io::read_tensor(dir / "mixing_scale.bin");
    }
  }
  d.validate();
  return d;
}

}  // namespace lanm::data
