#pragma once

// Experiment harness: config files, sweeps over the figure axes, CSV
// results normalized to a no-fast-memory baseline, and SVG plots.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "hatric/engine.hpp"
#include "hatric/trace.hpp"

namespace hatric {

struct Experiment {
  std::string name = "experiment";
  SimConfig base;
  WorkloadSpec workload;
  std::string trace_path;  // empty: generate from `workload`

  std::vector<CoherenceMode> modes{CoherenceMode::hatric};
  std::vector<unsigned> vcpus{16};
  std::vector<unsigned> tstruct_mults{1};
  std::vector<unsigned> cotag_bytes{2};
  std::vector<PagingPolicy> policies{PagingPolicy{}};
  // Adds a paging-disabled cell per vCPU count to normalize against.
  bool add_baseline = true;

  std::size_t max_cells = 512;
  unsigned threads = 0;  // 0: hardware concurrency
  std::string out_dir;
  bool emit_plots = false;
  bool debug_events = false;

  void validate() const;
};

// Applies one key=value setting (flag names, '-' or '_'). List-valued
// axes take comma lists; the policy axis separates policies with '|'.
void apply_setting(Experiment& exp, const std::string& key, const std::string& value);
Experiment parse_experiment(std::istream& in);
Experiment load_experiment(const std::string& path);

struct Cell {
  std::string name;
  SimConfig config;
  bool baseline = false;
};
std::vector<Cell> expand_cells(const Experiment& exp);

std::string config_key_value(const SimConfig& cfg, const WorkloadSpec& workload);
std::uint64_t fnv1a(const std::string& text);

class ResultTable {
 public:
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;  // throws ConfigError
  std::vector<std::string> strings(const std::string& name) const;
  std::vector<double> numbers(const std::string& name) const;
  std::string to_csv() const;
  static ResultTable from_csv(std::istream& in);
};

struct RunOutput {
  ResultTable table;
  std::vector<Stats> stats;  // parallel to table.rows
  std::string events;        // concatenated per-cell logs when enabled
};

RunOutput run_experiment(const Experiment& exp);
// Writes results.csv (and events.log / plots when enabled) to exp.out_dir.
void write_outputs(const Experiment& exp, const RunOutput& out);

struct FigureSpec {
  enum class Kind { bars, scatter };
  Kind kind = Kind::bars;
  std::string title;
  std::string x;       // bars: category column; scatter: x value column
  std::string series;  // bars: one bar per distinct value; scatter: point label
  std::string y;
  std::string filter_column;  // optional: keep rows where column == value
  std::string filter_value;
};

std::string render_svg(const ResultTable& table, const FigureSpec& spec);
// Default figure set; returns the files written.
std::vector<std::string> plot(const ResultTable& table, const std::string& out_dir);

}  // namespace hatric
