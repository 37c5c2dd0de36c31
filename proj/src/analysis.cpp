#include "babylab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "babylab/error.hpp"
#include "babylab/svg.hpp"
#include "babylab/sweep.hpp"

namespace fs = std::filesystem;

namespace babylab {

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

std::string run_label(const Hyperparams& hp) {
  return "e" + std::to_string(hp.epochs) + "_p" + std::to_string(hp.num_patterns) + "_b" +
         std::to_string(hp.batch_size);
}

void correlation_svg(const CorrelationMatrix& m, const fs::path& path) {
  const double cell = 44.0, left = 200.0, top = 40.0;
  const std::size_t n = m.labels.size();
  svg::Document doc(left + cell * static_cast<double>(n) + 80.0,
                    top + cell * static_cast<double>(n) + 170.0);
  doc.title("Spearman correlation of task scores across runs");
  for (std::size_t i = 0; i < n; ++i) {
    const double y = top + cell * static_cast<double>(i);
    doc.text(left - 6.0, y + cell / 2 + 4, m.labels[i], 11.0, "end");
    for (std::size_t j = 0; j < n; ++j) {
      const double x = left + cell * static_cast<double>(j);
      const auto& v = m.values[i][j];
      doc.rect(x, y, cell, cell, v ? svg::diverging_color(*v) : "#d9d9d9", "#ffffff");
      if (v) doc.text(x + cell / 2, y + cell / 2 + 4, format4(*v), 9.0, "middle");
    }
  }
  const double label_y = top + cell * static_cast<double>(n) + 8.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double x = left + cell * static_cast<double>(j) + cell / 2;
    doc.text(x, label_y, m.labels[j], 11.0, "end", -60.0);
  }
  doc.save(path.string());
}

void trajectories_svg(const Trajectories& t, const fs::path& path) {
  const double width = 720.0, height = 420.0, left = 60.0, right = 220.0, top = 30.0,
               bottom = 50.0;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  double lo = 1.0, hi = 0.0;
  for (const auto& s : t.series) {
    for (double v : s) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  lo = std::floor(lo * 10.0) / 10.0;
  hi = std::ceil(hi * 10.0) / 10.0;
  if (hi <= lo) hi = lo + 0.1;
  const std::size_t n = t.row_keys.size();
  auto px = [&](std::size_t i) {
    return left + (n > 1 ? plot_w * static_cast<double>(i) / static_cast<double>(n - 1) : 0.0);
  };
  auto py = [&](double v) { return top + plot_h * (1.0 - (v - lo) / (hi - lo)); };

  svg::Document doc(width, height);
  doc.title("Task scores with runs ranked by overall score, ascending");
  doc.line(left, top + plot_h, left + plot_w, top + plot_h, "#000000");
  doc.line(left, top, left, top + plot_h, "#000000");
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    doc.line(left - 4, py(v), left, py(v), "#000000");
    doc.text(left - 6, py(v) + 4, format4(v), 10.0, "end");
  }
  doc.text(left + plot_w / 2, height - 12, "runs ranked by overall (ascending)", 11.0, "middle");
  for (std::size_t c = 0; c < t.series.size(); ++c) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < n; ++i) pts.emplace_back(px(i), py(t.series[c][i]));
    const bool overall = t.labels[c] == kOverallColumn;
    const std::string color = overall ? "#000000" : svg::palette(c);
    doc.polyline(pts, color, overall ? 3.0 : 1.5);
    const double ly = top + 16.0 * static_cast<double>(c);
    doc.line(width - right + 16, ly, width - right + 36, ly, color, overall ? 3.0 : 1.5);
    doc.text(width - right + 42, ly + 4, t.labels[c], 10.0);
  }
  doc.save(path.string());
}

}  // namespace

std::string format4(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", value);
  return buf;
}

std::vector<double> ScoreTable::column(std::size_t c) const {
  std::vector<double> out;
  out.reserve(values.size());
  for (const auto& row : values) out.push_back(row.at(c));
  return out;
}

ScoreTable make_score_table(std::span<const RunRecord> records) {
  ScoreTable table;
  bool first = true;
  for (const auto& r : records) {
    if (!r.ok()) continue;
    std::vector<std::string> tasks;
    for (const auto& [task, acc] : r.eval) tasks.push_back(task);
    if (first) {
      table.columns = tasks;
      table.columns.emplace_back(kOverallColumn);
      first = false;
    } else if (!std::equal(tasks.begin(), tasks.end(), table.columns.begin(),
                           table.columns.end() - 1) ||
               tasks.size() + 1 != table.columns.size()) {
      throw Error("run " + r.hash + " was scored on a different task set");
    }
    std::vector<double> row;
    for (const auto& [task, acc] : r.eval) row.push_back(acc);
    row.push_back(mean_accuracy(r.eval));
    table.row_keys.push_back(r.hash);
    table.values.push_back(std::move(row));
  }
  return table;
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error("spearman inputs differ in length");
  if (x.size() < 2) throw Error("spearman needs at least two observations");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double dx = rx[i] - mx, dy = ry[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw Error("spearman is undefined for a constant sequence");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

CorrelationMatrix correlation_matrix(const ScoreTable& table) {
  if (table.values.size() < 2) throw Error("correlation matrix needs at least two runs");
  CorrelationMatrix m;
  m.labels = table.columns;
  const std::size_t n = table.columns.size();
  std::vector<std::vector<double>> cols;
  for (std::size_t c = 0; c < n; ++c) cols.push_back(table.column(c));
  m.values.assign(n, std::vector<std::optional<double>>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      std::optional<double> v;
      try {
        v = spearman(cols[i], cols[j]);
        if (i == j) v = 1.0;
      } catch (const Error&) {
        v.reset();  // constant column: undefined, never zero
      }
      m.values[i][j] = v;
      m.values[j][i] = v;
    }
  }
  return m;
}

Trajectories rank_trajectories(const ScoreTable& table) {
  if (table.values.size() < 2) throw Error("rank trajectories need at least two runs");
  const std::size_t overall = table.columns.size() - 1;
  std::vector<std::size_t> order(table.values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double va = table.values[a][overall], vb = table.values[b][overall];
    if (va != vb) return va < vb;
    return table.row_keys[a] < table.row_keys[b];
  });
  Trajectories t;
  t.labels.emplace_back(kOverallColumn);
  for (std::size_t c = 0; c < overall; ++c) t.labels.push_back(table.columns[c]);
  t.series.resize(t.labels.size());
  for (std::size_t idx : order) {
    t.row_keys.push_back(table.row_keys[idx]);
    t.series[0].push_back(table.values[idx][overall]);
    for (std::size_t c = 0; c < overall; ++c) t.series[c + 1].push_back(table.values[idx][c]);
  }
  return t;
}

void emit_report(std::span<const RunRecord> records, const std::string& out_dir) {
  std::vector<RunRecord> ok;
  for (const auto& r : records) {
    if (r.ok()) ok.push_back(r);
  }
  if (ok.empty()) throw Error("no successful runs to report");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw Error("cannot create report directory " + out_dir);
  const fs::path dir(out_dir);

  const ScoreTable table = make_score_table(ok);
  {
    std::ostringstream csv;
    csv << "run,epochs,num_patterns,batch_size";
    for (const auto& c : table.columns) csv << ',' << csv_field(c);
    csv << "\r\n";
    for (std::size_t r = 0; r < table.values.size(); ++r) {
      const auto& hp = ok[r].hyperparams;
      csv << csv_field(table.row_keys[r]) << ',' << hp.epochs << ',' << hp.num_patterns << ','
          << hp.batch_size;
      for (double v : table.values[r]) csv << ',' << format4(v);
      csv << "\r\n";
    }
    write_text(dir / "scores.csv", csv.str());
  }

  // Correlations and trajectories need two runs; with one, the files are
  // still written with headers only.
  CorrelationMatrix corr;
  Trajectories traj;
  if (table.values.size() >= 2) {
    corr = correlation_matrix(table);
    traj = rank_trajectories(table);
  } else {
    corr.labels = table.columns;
    corr.values.assign(corr.labels.size(),
                        std::vector<std::optional<double>>(corr.labels.size()));
    traj.labels.emplace_back(kOverallColumn);
    traj.series.assign(1, {table.values[0].back()});
    traj.row_keys = table.row_keys;
  }
  {
    std::ostringstream csv;
    csv << "task";
    for (const auto& l : corr.labels) csv << ',' << csv_field(l);
    csv << "\r\n";
    for (std::size_t i = 0; i < corr.labels.size(); ++i) {
      csv << csv_field(corr.labels[i]);
      for (const auto& v : corr.values[i]) {
        csv << ',';
        if (v) csv << format4(*v);
      }
      csv << "\r\n";
    }
    write_text(dir / "correlation.csv", csv.str());
  }
  correlation_svg(corr, dir / "correlation.svg");
  trajectories_svg(traj, dir / "trajectories.svg");

  std::vector<const RunRecord*> ranked;
  for (const auto& r : ok) ranked.push_back(&r);
  std::sort(ranked.begin(), ranked.end(),
            [](const RunRecord* a, const RunRecord* b) { return ranks_above(*a, *b); });
  std::ostringstream md;
  md << "# Leaderboard\n\n| rank | run | config |";
  for (const auto& c : table.columns) md << ' ' << c << " |";
  md << "\n|---|---|---|";
  for (std::size_t c = 0; c < table.columns.size(); ++c) md << "---|";
  md << '\n';
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const auto& r = *ranked[i];
    md << "| " << i + 1 << " | " << r.hash << " | " << run_label(r.hyperparams) << " |";
    for (const auto& [task, acc] : r.eval) md << ' ' << format4(acc) << " |";
    md << ' ' << format4(r.overall) << " |\n";
  }
  write_text(dir / "leaderboard.md", md.str());
}

}  // namespace babylab
