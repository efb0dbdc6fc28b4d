#include "hatric/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <thread>

namespace hatric {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("bad boolean '" + v + "'");
}

unsigned parse_unsigned(const std::string& v) {
  std::size_t used = 0;
  const unsigned long x = std::stoul(v, &used);
  if (used != v.size()) throw ConfigError("bad number '" + v + "'");
  return static_cast<unsigned>(x);
}

std::uint64_t parse_u64(const std::string& v) {
  std::size_t used = 0;
  const unsigned long long x = std::stoull(v, &used);
  if (used != v.size()) throw ConfigError("bad number '" + v + "'");
  return x;
}

template <class T, class F>
std::vector<T> parse_list(const std::string& v, F&& f, char sep = ',') {
  std::vector<T> out;
  for (const auto& item : split(v, sep)) out.push_back(f(item));
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

std::string policy_label(const PagingPolicy& p) {
  std::string s = p.to_string();
  std::replace(s.begin(), s.end(), ',', '+');
  return s;
}

std::string fmt(double v, int prec = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void Experiment::validate() const {
  if (modes.empty() || vcpus.empty() || tstruct_mults.empty() || cotag_bytes.empty() || policies.empty()) {
    throw ConfigError("sweep axes must be non-empty");
  }
  for (unsigned b : cotag_bytes) {
    if (b < 1 || b > 3) throw ConfigError("co-tag bytes must be 1, 2 or 3");
  }
  const auto cells = expand_cells(*this);
  if (cells.size() > max_cells) {
    throw ConfigError("sweep has " + std::to_string(cells.size()) + " cells, cap is " +
                      std::to_string(max_cells));
  }
  for (const auto& c : cells) c.config.validate();
}

void apply_setting(Experiment& exp, const std::string& raw_key, const std::string& raw_value) {
  std::string key = trim(raw_key);
  std::replace(key.begin(), key.end(), '-', '_');
  const std::string v = trim(raw_value);
  SimConfig& b = exp.base;
  WorkloadSpec& w = exp.workload;
  try {
    if (key == "name") exp.name = v;
    else if (key == "trace") exp.trace_path = v;
    else if (key == "mode" || key == "modes") exp.modes = parse_list<CoherenceMode>(v, parse_mode);
    else if (key == "vcpus") exp.vcpus = parse_list<unsigned>(v, parse_unsigned);
    else if (key == "cotag_bytes") exp.cotag_bytes = parse_list<unsigned>(v, parse_unsigned);
    else if (key == "tstruct_mult") exp.tstruct_mults = parse_list<unsigned>(v, parse_unsigned);
    else if (key == "policy" || key == "policies") {
      exp.policies = parse_list<PagingPolicy>(v, [](const std::string& s) { return PagingPolicy::parse(s); }, '|');
    } else if (key == "seed") {
      b.seed = parse_u64(v);
      w.seed = b.seed;
    } else if (key == "out") exp.out_dir = v;
    else if (key == "emit_plots") exp.emit_plots = parse_bool(v);
    else if (key == "debug_events") exp.debug_events = parse_bool(v);
    else if (key == "baseline") exp.add_baseline = parse_bool(v);
    else if (key == "max_cells") exp.max_cells = parse_u64(v);
    else if (key == "threads") exp.threads = parse_unsigned(v);
    else if (key == "cpus") b.cpus = parse_unsigned(v);
    else if (key == "vms") b.vms = parse_unsigned(v);
    else if (key == "virtualized") b.virtualized = parse_bool(v);
    else if (key == "fast" || key == "fast_bytes") b.memory.fast_bytes = parse_size(v);
    else if (key == "slow" || key == "slow_bytes") b.memory.slow_bytes = parse_size(v);
    else if (key == "tables_in_fast") b.memory.tables_in_fast = parse_bool(v);
    else if (key == "table_reserve_pages") b.memory.table_reserve_pages = parse_u64(v);
    else if (key == "ipi_cost") b.cost.ipi_cost = parse_u64(v);
    else if (key == "vm_exit_cost") b.cost.vm_exit_cost = parse_u64(v);
    else if (key == "interrupt_cost") b.cost.interrupt_cost = parse_u64(v);
    else if (key == "per_inv_cost") b.cost.per_inv_cost = parse_u64(v);
    else if (key == "guest_fault_cost") b.guest_fault_cost = parse_u64(v);
    else if (key == "prefetch_degree") b.policy.prefetch_degree = parse_unsigned(v);
    else if (key == "low_watermark") b.policy.low_watermark = parse_u64(v);
    else if (key == "high_watermark") b.policy.high_watermark = parse_u64(v);
    else if (key == "infinite_directory") b.caches.infinite_directory = parse_bool(v);
    else if (key == "background_remap_rate") w.background_remap_rate = std::stod(v);
    else if (key == "archetype") w.archetype = parse_archetype(v);
    else if (key == "footprint") w.footprint_bytes = parse_size(v);
    else if (key == "records") w.records = parse_u64(v);
    else if (key == "processes") w.processes = parse_unsigned(v);
    else if (key == "store_fraction") w.store_fraction = std::stod(v);
    else if (key == "zipf_theta") w.zipf_theta = std::stod(v);
    else throw ConfigError("unknown setting '" + raw_key + "'");
  } catch (const std::logic_error&) {
    throw ConfigError("bad value for " + raw_key + ": '" + v + "'");
  }
}

Experiment parse_experiment(std::istream& in) {
  Experiment exp;
  std::string line;
  unsigned n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(n) + ": expected key=value");
    apply_setting(exp, line.substr(0, eq), line.substr(eq + 1));
  }
  return exp;
}

Experiment load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return parse_experiment(in);
}

std::vector<Cell> expand_cells(const Experiment& exp) {
  std::vector<Cell> cells;
  auto make = [&](CoherenceMode mode, unsigned vc, unsigned mult, unsigned cotag, PagingPolicy policy) {
    Cell c;
    c.config = exp.base;
    c.config.mode = mode;
    c.config.vcpus_per_vm = vc;
    c.config.tstruct.size_multiplier = mult;
    c.config.tstruct.cotag_bits = cotag * 8;
    policy.prefetch_degree = exp.base.policy.prefetch_degree;
    policy.low_watermark = exp.base.policy.low_watermark;
    policy.high_watermark = exp.base.policy.high_watermark;
    c.config.policy = policy;
    c.config.background_remap_rate = exp.workload.background_remap_rate;
    c.baseline = !policy.enabled();
    c.name = std::string("mode=") + to_string(mode) + "/vcpus=" + std::to_string(vc) +
             "/mult=" + std::to_string(mult) + "/cotag=" + std::to_string(cotag) +
             "/policy=" + policy_label(policy);
    return c;
  };
  for (unsigned vc : exp.vcpus) {
    const std::size_t first = cells.size();
    for (auto mode : exp.modes) {
      for (unsigned mult : exp.tstruct_mults) {
        for (unsigned cotag : exp.cotag_bytes) {
          for (const auto& policy : exp.policies) cells.push_back(make(mode, vc, mult, cotag, policy));
        }
      }
    }
    const bool has_baseline =
        std::any_of(cells.begin() + static_cast<std::ptrdiff_t>(first), cells.end(),
                    [](const Cell& c) { return c.baseline; });
    if (exp.add_baseline && !has_baseline) {
      cells.push_back(make(exp.modes.front(), vc, exp.tstruct_mults.front(), exp.cotag_bytes.front(),
                           PagingPolicy::disabled()));
    }
  }
  return cells;
}

std::string config_key_value(const SimConfig& c, const WorkloadSpec& w) {
  std::ostringstream o;
  o << "cpus=" << c.cpus << "\nvms=" << c.vms << "\nvcpus=" << c.vcpus_per_vm
    << "\nvirtualized=" << c.virtualized << "\nmode=" << to_string(c.mode)
    << "\nl1_tlb=" << c.tstruct.l1_tlb_entries << "/" << c.tstruct.l1_tlb_ways
    << "\nl2_tlb=" << c.tstruct.l2_tlb_entries << "/" << c.tstruct.l2_tlb_ways
    << "\nntlb=" << c.tstruct.ntlb_entries << "/" << c.tstruct.ntlb_ways
    << "\nmmu_cache=" << c.tstruct.mmu_cache_entries << "/" << c.tstruct.mmu_cache_ways
    << "\ntstruct_mult=" << c.tstruct.size_multiplier << "\ncotag_bits=" << c.tstruct.cotag_bits
    << "\nl1=" << c.caches.l1_sets << "x" << c.caches.l1_ways << "\nl2=" << c.caches.l2_sets << "x"
    << c.caches.l2_ways << "\nllc=" << c.caches.llc_sets << "x" << c.caches.llc_ways
    << "\ndirectory=" << c.caches.dir_entries << "/" << c.caches.dir_ways << "/"
    << c.caches.infinite_directory << "\nlatency=" << c.latency.l1 << "," << c.latency.l2 << ","
    << c.latency.llc << "," << c.latency.fast_dram << "," << c.latency.slow_dram << ","
    << c.latency.remote_forward << "," << c.latency.inv_roundtrip << ","
    << fmt(c.latency.fast_bytes_per_cycle) << "," << fmt(c.latency.slow_bytes_per_cycle) << ","
    << c.latency.max_queue_delay << "\nfast_bytes=" << c.memory.fast_bytes
    << "\nslow_bytes=" << c.memory.slow_bytes << "\ntable_reserve_pages=" << c.memory.table_reserve_pages
    << "\ntables_in_fast=" << c.memory.tables_in_fast << "\nipi_cost=" << c.cost.ipi_cost
    << "\nvm_exit_cost=" << c.cost.vm_exit_cost << "\ninterrupt_cost=" << c.cost.interrupt_cost
    << "\nper_inv_cost=" << c.cost.per_inv_cost << "\npolicy=" << c.policy.to_string()
    << "\nprefetch_degree=" << c.policy.prefetch_degree << "\nwatermarks=" << c.policy.low_watermark
    << "," << c.policy.high_watermark << "\nseed=" << c.seed << "\nguest_fault_cost=" << c.guest_fault_cost
    << "\nl2_tlb_latency=" << c.l2_tlb_latency << "\nbackground_remap_rate=" << fmt(c.background_remap_rate)
    << '\n'
    << format_workload(w);
  return o.str();
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// ---------------------------------------------------------------- table

std::size_t ResultTable::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ConfigError("unknown column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

std::vector<std::string> ResultTable::strings(const std::string& name) const {
  const std::size_t c = column(name);
  std::vector<std::string> out;
  for (const auto& r : rows) out.push_back(r.at(c));
  return out;
}

std::vector<double> ResultTable::numbers(const std::string& name) const {
  std::vector<double> out;
  for (const auto& s : strings(name)) {
    try {
      out.push_back(std::stod(s));
    } catch (const std::logic_error&) {
      throw ConfigError("column '" + name + "' is not numeric");
    }
  }
  return out;
}

std::string ResultTable::to_csv() const {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out;
}

ResultTable ResultTable::from_csv(std::istream& in) {
  ResultTable t;
  std::string line;
  auto cells = [](const std::string& l) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream s(l);
    while (std::getline(s, cur, ',')) out.push_back(cur);
    if (!l.empty() && l.back() == ',') out.emplace_back();
    return out;
  };
  if (!std::getline(in, line)) throw ConfigError("empty results table");
  t.header = cells(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto r = cells(line);
    if (r.size() != t.header.size()) throw ConfigError("ragged results row");
    t.rows.push_back(std::move(r));
  }
  return t;
}

// ------------------------------------------------------------ execution

RunOutput run_experiment(const Experiment& exp) {
  exp.validate();
  const std::vector<Cell> cells = expand_cells(exp);
  std::vector<Stats> stats(cells.size());
  std::vector<std::string> events(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());

  auto run_cell = [&](std::size_t i) {
    try {
      const Cell& c = cells[i];
      WorkloadSpec w = exp.workload;
      w.vcpus = c.config.vcpus_per_vm;
      Simulator sim(c.config);
      std::ostringstream log;
      if (exp.debug_events) sim.set_event_log(&log);
      std::unique_ptr<TraceSource> src;
      if (exp.trace_path.empty()) {
        w.validate(c.config.memory.fast_bytes + c.config.memory.slow_bytes);
        src = std::make_unique<Generator>(w);
      } else {
        src = std::make_unique<FileSource>(exp.trace_path, c.config.vcpus_per_vm);
      }
      stats[i] = sim.run(*src);
      if (exp.debug_events) events[i] = "# " + c.name + "\n" + log.str();
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };

  unsigned threads = exp.threads != 0 ? exp.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, cells.size()));
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < cells.size(); i = next++) run_cell(i);
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  RunOutput out;
  out.table.header = {"name",       "cell",        "config_hash", "mode",
                      "vcpus",      "tstruct_mult", "cotag_bytes", "policy",
                      "baseline",   "normalized_runtime", "normalized_energy",
                      "invalidations_per_remap"};
  for (const auto& [k, v] : Stats{}.fields()) out.table.header.push_back(k);

  for (std::size_t i = 0; i < cells.size(); ++i) {
    const Cell& c = cells[i];
    const Stats* base = nullptr;
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (cells[j].baseline && cells[j].config.vcpus_per_vm == c.config.vcpus_per_vm) {
        base = &stats[j];
        break;
      }
    }
    if (base == nullptr) {
      throw ConfigError("no baseline cell for vcpus=" + std::to_string(c.config.vcpus_per_vm));
    }
    const Stats& s = stats[i];
    WorkloadSpec w = exp.workload;
    w.vcpus = c.config.vcpus_per_vm;
    std::string cfg_text = config_key_value(c.config, w);
    if (!exp.trace_path.empty()) cfg_text += "trace=" + exp.trace_path + "\n";
    char hash[24];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(cfg_text)));
    const double norm = base->cycles == 0 ? 0.0 : static_cast<double>(s.cycles) / static_cast<double>(base->cycles);
    const double enorm = base->energy.total() == 0 ? 0.0 : s.energy.total() / base->energy.total();
    const double per_remap =
        s.coherence.remaps == 0
            ? 0.0
            : static_cast<double>(s.coherence.selective_invalidations + s.coherence.flushed_entries) /
                  static_cast<double>(s.coherence.remaps);
    std::vector<std::string> row = {exp.name,
                                    c.name,
                                    hash,
                                    to_string(c.config.mode),
                                    std::to_string(c.config.vcpus_per_vm),
                                    std::to_string(c.config.tstruct.size_multiplier),
                                    std::to_string(c.config.tstruct.cotag_bits / 8),
                                    policy_label(c.config.policy),
                                    c.baseline ? "1" : "0",
                                    fmt(norm),
                                    fmt(enorm),
                                    fmt(per_remap)};
    for (const auto& [k, v] : s.fields()) row.push_back(v);
    out.table.rows.push_back(std::move(row));
    out.stats.push_back(s);
    out.events += events[i];
  }
  return out;
}

void write_outputs(const Experiment& exp, const RunOutput& out) {
  namespace fs = std::filesystem;
  const fs::path dir = exp.out_dir.empty() ? fs::path(".") : fs::path(exp.out_dir);
  fs::create_directories(dir);
  {
    std::ofstream csv(dir / "results.csv");
    if (!csv) throw SimError("cannot write " + (dir / "results.csv").string());
    csv << out.table.to_csv();
  }
  if (exp.debug_events) {
    std::ofstream log(dir / "events.log");
    log << out.events;
  }
  if (exp.emit_plots) plot(out.table, dir.string());
}

// ---------------------------------------------------------------- plots

std::string render_svg(const ResultTable& table, const FigureSpec& spec) {
  if (spec.x.empty() || spec.y.empty()) throw ConfigError("figure needs x and y columns");
  const std::size_t xc = table.column(spec.x);
  const std::size_t yc = table.column(spec.y);
  const std::size_t sc = spec.series.empty() ? xc : table.column(spec.series);
  std::vector<const std::vector<std::string>*> rows;
  const std::size_t fc = spec.filter_column.empty() ? 0 : table.column(spec.filter_column);
  for (const auto& r : table.rows) {
    if (!spec.filter_column.empty() && r[fc] != spec.filter_value) continue;
    rows.push_back(&r);
  }
  if (rows.empty()) throw ConfigError("figure selects no rows");
  auto value = [](const std::string& s) {
    try {
      return std::stod(s);
    } catch (const std::logic_error&) {
      throw ConfigError("non-numeric value '" + s + "' in plotted column");
    }
  };

  constexpr double W = 720, H = 420, L = 70, R = 170, T = 40, B = 60;
  const double pw = W - L - R, ph = H - T - B;
  static const char* kColors[] = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2",
                                  "#59a14f", "#edc948", "#b07aa1", "#9c755f"};
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << xml_escape(spec.title) << "</text>\n";
  svg << "<line x1=\"" << L << "\" y1=\"" << T + ph << "\" x2=\"" << L + pw << "\" y2=\"" << T + ph
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << T + ph
      << "\" stroke=\"black\"/>\n";

  auto distinct = [&](std::size_t col) {
    std::vector<std::string> out;
    for (auto* r : rows) {
      if (std::find(out.begin(), out.end(), (*r)[col]) == out.end()) out.push_back((*r)[col]);
    }
    return out;
  };
  double ymax = 0;
  for (auto* r : rows) ymax = std::max(ymax, value((*r)[yc]));
  if (ymax <= 0) ymax = 1;
  ymax *= 1.1;
  for (int t = 0; t <= 4; ++t) {
    const double v = ymax * t / 4, y = T + ph - ph * t / 4;
    svg << "<text x=\"" << L - 6 << "\" y=\"" << fmt(y + 4, 1) << "\" text-anchor=\"end\">" << fmt(v, 2)
        << "</text>\n";
  }
  svg << "<text x=\"16\" y=\"" << T + ph / 2 << "\" transform=\"rotate(-90 16 " << T + ph / 2
      << ")\" text-anchor=\"middle\">" << xml_escape(spec.y) << "</text>\n";
  svg << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 14 << "\" text-anchor=\"middle\">"
      << xml_escape(spec.x) << "</text>\n";

  const auto series = distinct(sc);
  if (spec.kind == FigureSpec::Kind::bars) {
    const auto cats = distinct(xc);
    const double gw = pw / static_cast<double>(cats.size());
    const double bw = gw * 0.8 / static_cast<double>(series.size());
    for (std::size_t ci = 0; ci < cats.size(); ++ci) {
      const double gx = L + gw * static_cast<double>(ci) + gw * 0.1;
      svg << "<text x=\"" << fmt(L + gw * (static_cast<double>(ci) + 0.5), 1) << "\" y=\"" << T + ph + 18
          << "\" text-anchor=\"middle\">" << xml_escape(cats[ci]) << "</text>\n";
      for (std::size_t si = 0; si < series.size(); ++si) {
        for (auto* r : rows) {
          if ((*r)[xc] != cats[ci] || (*r)[sc] != series[si]) continue;
          const double h = ph * value((*r)[yc]) / ymax;
          svg << "<rect x=\"" << fmt(gx + bw * static_cast<double>(si), 1) << "\" y=\""
              << fmt(T + ph - h, 1) << "\" width=\"" << fmt(bw, 1) << "\" height=\"" << fmt(h, 1)
              << "\" fill=\"" << kColors[si % 8] << "\"/>\n";
          break;
        }
      }
    }
  } else {
    double xmax = 0;
    for (auto* r : rows) xmax = std::max(xmax, value((*r)[xc]));
    if (xmax <= 0) xmax = 1;
    xmax *= 1.1;
    for (int t = 0; t <= 4; ++t) {
      svg << "<text x=\"" << fmt(L + pw * t / 4, 1) << "\" y=\"" << T + ph + 18
          << "\" text-anchor=\"middle\">" << fmt(xmax * t / 4, 2) << "</text>\n";
    }
    for (auto* r : rows) {
      const std::size_t si =
          static_cast<std::size_t>(std::find(series.begin(), series.end(), (*r)[sc]) - series.begin());
      svg << "<circle cx=\"" << fmt(L + pw * value((*r)[xc]) / xmax, 1) << "\" cy=\""
          << fmt(T + ph - ph * value((*r)[yc]) / ymax, 1) << "\" r=\"5\" fill=\"" << kColors[si % 8]
          << "\"/>\n";
    }
  }
  for (std::size_t si = 0; si < series.size(); ++si) {
    const double y = T + 14 + 18 * static_cast<double>(si);
    svg << "<rect x=\"" << L + pw + 16 << "\" y=\"" << y - 10 << "\" width=\"12\" height=\"12\" fill=\""
        << kColors[si % 8] << "\"/>\n";
    svg << "<text x=\"" << L + pw + 34 << "\" y=\"" << y << "\">" << xml_escape(series[si]) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::vector<std::string> plot(const ResultTable& table, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::vector<std::pair<std::string, FigureSpec>> figs = {
      {"runtime.svg",
       {FigureSpec::Kind::bars, "Runtime normalized to no fast memory", "vcpus", "mode",
        "normalized_runtime", "baseline", "0"}},
      {"runtime_energy.svg",
       {FigureSpec::Kind::scatter, "Runtime vs energy (normalized)", "normalized_runtime", "mode",
        "normalized_energy", "baseline", "0"}},
      {"invalidations.svg",
       {FigureSpec::Kind::bars, "Invalidated entries per remap", "cotag_bytes", "mode",
        "invalidations_per_remap", "baseline", "0"}},
  };
  std::vector<std::string> written;
  for (const auto& [file, spec] : figs) {
    std::string svg;
    try {
      svg = render_svg(table, spec);
    } catch (const ConfigError&) {
      continue;  // e.g. a table holding only baseline rows
    }
    const fs::path path = fs::path(out_dir) / file;
    std::ofstream out(path);
    if (!out) throw SimError("cannot write " + path.string());
    out << svg;
    written.push_back(path.string());
  }
  return written;
}

}  // namespace hatric
