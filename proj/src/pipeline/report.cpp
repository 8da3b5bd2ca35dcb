// SPDX-License-Identifier: Apache-2.0
#include "ctkd/pipeline/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace ctkd::pipeline {
namespace {

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string pm(const MeanStd& m, std::size_t n) {
  return n > 1 ? fixed2(m.mean) + " ± " + fixed2(m.stdev) : fixed2(m.mean);
}

std::string comp_cell(const std::optional<CompressionPercent>& c) { return c ? std::to_string(c->rounded) : "-"; }

// Display width in code points.
std::size_t width(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xc0) != 0x80;
  return n;
}

}  // namespace

MeanStd mean_stdev(const std::vector<double>& v) {
  MeanStd r;
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.stdev = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return r;
}

std::vector<AggregateRow> aggregate(const std::vector<StageReport>& reports) {
  std::vector<AggregateRow> rows;
  std::map<std::pair<std::size_t, std::string>, std::vector<const StageReport*>> groups;
  for (const auto& r : reports) {
    auto key = std::make_pair(r.stage_id, r.role);
    if (!groups.count(key)) {
      AggregateRow row;
      row.stage_id = r.stage_id;
      row.role = r.role;
      row.description = r.description;
      row.kind = r.kind;
      row.params = r.params;
      row.comp_teacher = r.comp_teacher;
      row.comp_original = r.comp_original;
      for (const auto& m : r.metrics) row.sets.push_back(m.set);
      rows.push_back(row);
    }
    groups[key].push_back(&r);
  }
  for (auto& row : rows) {
    const auto& members = groups[{row.stage_id, row.role}];
    row.seeds = members.size();
    for (std::size_t s = 0; s < row.sets.size(); ++s) {
      std::vector<double> w, e;
      for (const auto* r : members) {
        if (s < r->metrics.size()) {
          w.push_back(r->metrics[s].wer);
          e.push_back(r->metrics[s].ser);
        }
      }
      row.wer.push_back(mean_stdev(w));
      row.ser.push_back(mean_stdev(e));
    }
  }
  return rows;
}

std::string render_table(const std::vector<AggregateRow>& rows, const std::string& title) {
  std::vector<std::string> header{"Stage", "Model", "Params", "% Comp w.r.t. teacher", "% Comp w.r.t. T1"};
  std::vector<std::string> sets = rows.empty() ? std::vector<std::string>{} : rows.front().sets;
  for (const auto& s : sets) {
    header.push_back(s + " WER");
    header.push_back(s + " SER");
  }
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows) {
    std::vector<std::string> line{"Stage " + std::to_string(r.stage_id),
                                  r.description.empty() ? r.role : r.role + " (" + r.description + ")",
                                  std::to_string(r.params), comp_cell(r.comp_teacher), comp_cell(r.comp_original)};
    for (std::size_t s = 0; s < sets.size(); ++s) {
      line.push_back(s < r.wer.size() ? pm(r.wer[s], r.seeds) : "");
      line.push_back(s < r.ser.size() ? pm(r.ser[s], r.seeds) : "");
    }
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> w(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    w[c] = width(header[c]);
    for (const auto& line : cells) w[c] = std::max(w[c], width(line[c]));
  }
  auto emit = [&](std::ostringstream& os, const std::vector<std::string>& line) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c) os << " | ";
      os << line[c] << std::string(w[c] - width(line[c]), ' ');
    }
    os << '\n';
  };
  std::ostringstream os;
  if (!title.empty()) os << title << '\n';
  emit(os, header);
  std::size_t total = 0;
  for (std::size_t c = 0; c < w.size(); ++c) total += w[c] + (c ? 3 : 0);
  os << std::string(total, '-') << '\n';
  std::size_t last_stage = rows.empty() ? 0 : rows.front().stage_id;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].stage_id != last_stage) {
      os << std::string(total, '-') << '\n';
      last_stage = rows[i].stage_id;
    }
    emit(os, cells[i]);
  }
  return os.str();
}

std::string render_tsv(const std::vector<AggregateRow>& rows) {
  std::ostringstream os;
  os << "stage\trole\tdescription\tparams\tcomp_teacher\tcomp_teacher_exact\tcomp_t1\tcomp_t1_exact\tseeds";
  const std::vector<std::string> sets = rows.empty() ? std::vector<std::string>{} : rows.front().sets;
  for (const auto& s : sets) os << '\t' << s << "_wer_mean\t" << s << "_wer_std\t" << s << "_ser_mean\t" << s << "_ser_std";
  os << '\n';
  auto exact = [](const std::optional<CompressionPercent>& c) {
    char buf[32];
    if (!c) return std::string("-");
    std::snprintf(buf, sizeof buf, "%.4f", c->exact);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    os << r.stage_id << '\t' << r.role << '\t' << r.description << '\t' << r.params << '\t' << comp_cell(r.comp_teacher)
       << '\t' << exact(r.comp_teacher) << '\t' << comp_cell(r.comp_original) << '\t' << exact(r.comp_original) << '\t'
       << r.seeds;
    for (std::size_t s = 0; s < r.wer.size(); ++s) {
      os << '\t' << fixed2(r.wer[s].mean) << '\t' << fixed2(r.wer[s].stdev) << '\t' << fixed2(r.ser[s].mean) << '\t'
         << fixed2(r.ser[s].stdev);
    }
    os << '\n';
  }
  return os.str();
}

std::string render_runs_tsv(const std::vector<StageReport>& reports) {
  std::ostringstream os;
  os << "seed\tstage\trole\tparams\tcomp_teacher\tcomp_t1\tset\twer\tser\tcheckpoint\n";
  for (const auto& r : reports) {
    for (const auto& m : r.metrics) {
      os << r.seed << '\t' << r.stage_id << '\t' << r.role << '\t' << r.params << '\t' << comp_cell(r.comp_teacher)
         << '\t' << comp_cell(r.comp_original) << '\t' << m.set << '\t' << fixed2(m.wer) << '\t' << fixed2(m.ser)
         << '\t' << r.checkpoint << '\n';
    }
  }
  return os.str();
}

}  // namespace ctkd::pipeline
