// Experiment artifact emission: CSV tables, a manifest JSON with content
// hashes, and minimal SVG line plots (one path per trajectory).
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dlrlock/matrix.hpp"
#include "dlrlock/trajectory.hpp"

namespace dlrlock {

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row) {
    if (row.size() != columns.size()) throw ValueError("CsvTable: column count mismatch");
    rows.push_back(std::move(row));
  }
  std::string to_string() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < columns.size(); ++i)
      os << columns[i] << (i + 1 < columns.size() ? "," : "");
    os << "\n";
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i)
        os << r[i] << (i + 1 < r.size() ? "," : "");
      os << "\n";
    }
    return os.str();
  }
};

// Collects emitted files so a manifest can be written and partial output
// removed if a run fails.
class ArtifactWriter {
 public:
  explicit ArtifactWriter(std::string out_dir) : dir_(std::move(out_dir)) {
    std::filesystem::create_directories(dir_);
  }

  const std::string& dir() const { return dir_; }

  std::string write_text(const std::string& name, const std::string& content) {
    const std::string path = dir_ + "/" + name;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("ArtifactWriter: cannot open " + path);
    os << content;
    os.close();
    files_.push_back({name, content.size(), fnv1a64(content)});
    return path;
  }

  std::string write_csv(const std::string& name, const CsvTable& t) {
    return write_text(name, t.to_string());
  }

  std::string write_json(const std::string& name, const nlohmann::json& j) {
    return write_text(name, j.dump(2) + "\n");
  }

  void note_binary(const std::string& name) {
    const std::string path = dir_ + "/" + name;
    std::ifstream is(path, std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    files_.push_back({name, content.size(), fnv1a64(content)});
  }

  // Manifest with config hash, seed, version and the emitted file list.
  std::string write_manifest(const std::string& config_text, std::uint64_t seed,
                             const std::string& version = "dlrlock-0.1.0") {
    nlohmann::json j;
    j["version"] = version;
    j["seed"] = seed;
    char hex[32];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(config_text)));
    j["config_hash"] = std::string(hex);
    nlohmann::json files = nlohmann::json::array();
    for (const auto& f : files_) {
      nlohmann::json fj;
      fj["name"] = f.name;
      fj["bytes"] = f.bytes;
      std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(f.hash));
      fj["fnv1a64"] = std::string(hex);
      files.push_back(fj);
    }
    j["files"] = files;
    return write_text("manifest.json", j.dump(2) + "\n");
  }

  // Removes everything written so far (failure cleanup).
  void remove_all() {
    for (const auto& f : files_) std::filesystem::remove(dir_ + "/" + f.name);
    files_.clear();
  }

  std::size_t file_count() const { return files_.size(); }

 private:
  struct Entry {
    std::string name;
    std::size_t bytes;
    std::uint64_t hash;
  };
  std::string dir_;
  std::vector<Entry> files_;
};

// ---------------------------------------------------------------------------
// SVG line plots

struct SvgSeries {
  std::string label;
  std::vector<double> x, y;
};

// Minimal SVG 1.1 line plot; log10 on y when all values are positive and the
// range spans more than two decades. One <path> per series.
inline std::string svg_line_plot(const std::vector<SvgSeries>& series, const std::string& title,
                                 const std::string& x_label, const std::string& y_label) {
  const double W = 720, H = 420, ML = 70, MR = 20, MT = 40, MB = 50;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  bool ypos = true;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
      if (s.y[i] <= 0.0) ypos = false;
    }
  if (xmin > xmax) {
    xmin = 0;
    xmax = 1;
    ymin = 0;
    ymax = 1;
  }
  const bool logy = ypos && ymin > 0.0 && ymax / ymin > 100.0;
  auto ty = [&](double v) {
    double lo = logy ? std::log10(ymin) : ymin, hi = logy ? std::log10(ymax) : ymax;
    if (hi <= lo) hi = lo + 1;
    const double t = ((logy ? std::log10(v) : v) - lo) / (hi - lo);
    return H - MB - t * (H - MT - MB);
  };
  auto tx = [&](double v) {
    double lo = xmin, hi = xmax;
    if (hi <= lo) hi = lo + 1;
    return ML + (v - lo) / (hi - lo) * (W - ML - MR);
  };
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << W
     << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title
     << "</text>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
     << x_label << "</text>\n";
  os << "<text x=\"16\" y=\"" << H / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
     << H / 2 << ")\">" << y_label << (logy ? " (log)" : "") << "</text>\n";
  os << "<line x1=\"" << ML << "\" y1=\"" << H - MB << "\" x2=\"" << W - MR << "\" y2=\"" << H - MB
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << ML << "\" y1=\"" << MT << "\" x2=\"" << ML << "\" y2=\"" << H - MB
     << "\" stroke=\"black\"/>\n";
  std::size_t ci = 0;
  for (const auto& s : series) {
    os << "<path fill=\"none\" stroke=\"" << palette[ci++ % 8] << "\" stroke-width=\"1.2\" d=\"";
    bool first = true;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]) || (logy && s.y[i] <= 0)) continue;
      os << (first ? "M" : "L") << tx(s.x[i]) << " " << ty(s.y[i]) << " ";
      first = false;
    }
    os << "\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

// Loss-vs-tokens and loss-vs-wallclock panels for a set of trajectories.
inline std::string trajectories_to_svg(const std::vector<TrajectoryRecord>& trajs,
                                       const std::string& title, bool vs_wallclock) {
  std::vector<SvgSeries> series;
  for (const auto& tr : trajs) {
    SvgSeries s;
    s.label = tr.config_id;
    for (const auto& p : tr.series) {
      s.x.push_back(vs_wallclock ? p.wallclock_s : (p.tokens > 0 ? p.tokens : double(p.step)));
      s.y.push_back(p.loss);
    }
    series.push_back(std::move(s));
  }
  return svg_line_plot(series, title, vs_wallclock ? "wall-clock (s)" : "tokens", "loss");
}

inline CsvTable trajectories_to_csv(const std::vector<TrajectoryRecord>& trajs) {
  CsvTable t;
  t.columns = {"config_id", "step", "rel_error_geomean", "omega_rel",
               "grad_norm", "wallclock_s", "diverged"};
  for (const auto& tr : trajs)
    for (const auto& p : tr.series)
      t.add_row({tr.config_id, std::to_string(p.step), format_double(p.loss),
                 format_double(p.omega), format_double(p.grad_norm),
                 format_double(p.wallclock_s), tr.diverged ? "1" : "0"});
  return t;
}

// Training-run schema: loss plus cumulative tokens (wallclock flagged as the
// nondeterministic column).
inline CsvTable train_trajectories_to_csv(const std::vector<TrajectoryRecord>& trajs) {
  CsvTable t;
  t.columns = {"config_id", "step", "loss", "grad_norm", "wallclock_s", "tokens", "diverged"};
  for (const auto& tr : trajs)
    for (const auto& p : tr.series)
      t.add_row({tr.config_id, std::to_string(p.step), format_double(p.loss),
                 format_double(p.grad_norm), format_double(p.wallclock_s),
                 format_double(p.tokens), tr.diverged ? "1" : "0"});
  return t;
}

// Reads either trajectory schema back, grouping rows by config_id.
inline std::vector<TrajectoryRecord> parse_trajectories_csv(const std::string& text) {
  std::vector<TrajectoryRecord> out;
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw FormatError("trajectory csv: empty");
  std::vector<std::string> cols;
  {
    std::istringstream hs(line);
    std::string c;
    while (std::getline(hs, c, ',')) cols.push_back(c);
  }
  auto col = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < cols.size(); ++i)
      if (cols[i] == name) return static_cast<int>(i);
    return -1;
  };
  const int ci = col("config_id"), cs = col("step"), cw = col("wallclock_s"),
            cd = col("diverged"), ct = col("tokens"), cg = col("grad_norm");
  int cl = col("loss");
  if (cl < 0) cl = col("rel_error_geomean");
  if (ci < 0 || cs < 0 || cl < 0 || cw < 0)
    throw FormatError("trajectory csv: missing required columns");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string v;
    while (std::getline(ls, v, ',')) f.push_back(v);
    if (out.empty() || out.back().config_id != f[static_cast<std::size_t>(ci)]) {
      out.emplace_back();
      out.back().config_id = f[static_cast<std::size_t>(ci)];
    }
    TrajectoryPoint p;
    p.step = static_cast<std::size_t>(std::stoull(f[static_cast<std::size_t>(cs)]));
    p.loss = std::stod(f[static_cast<std::size_t>(cl)]);
    p.wallclock_s = std::stod(f[static_cast<std::size_t>(cw)]);
    if (ct >= 0) p.tokens = std::stod(f[static_cast<std::size_t>(ct)]);
    if (cg >= 0) p.grad_norm = std::stod(f[static_cast<std::size_t>(cg)]);
    out.back().append(p);
    if (cd >= 0 && f[static_cast<std::size_t>(cd)] == "1") out.back().diverged = true;
  }
  return out;
}

}  // namespace dlrlock
