// hatric-sim: run / sweep / gen / plot

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "hatric/experiment.hpp"

using namespace hatric;

namespace {

struct CommonFlags {
  std::string config, trace, mode, vcpus, cotag_bytes, tstruct_mult, policy, out;
  std::optional<std::uint64_t> seed;
  std::string archetype, footprint, records, processes;
  bool emit_plots = false, debug_events = false;
  std::vector<std::string> sets;
};

void add_common(CLI::App* app, CommonFlags& f, bool sweep) {
  const char* list_note = sweep ? " (comma list)" : "";
  app->add_option("--config", f.config, "key=value config file");
  app->add_option("--trace", f.trace, "trace file (text or binary); generated when omitted");
  app->add_option("--mode", f.mode, std::string("sw, hatric, tlb-only or ideal") + list_note);
  app->add_option("--vcpus", f.vcpus, std::string("vCPUs per VM") + list_note);
  app->add_option("--cotag-bytes", f.cotag_bytes, std::string("co-tag width 1..3") + list_note);
  app->add_option("--tstruct-mult", f.tstruct_mult, std::string("structure size multiplier 1,2,4") + list_note);
  app->add_option("--policy", f.policy,
                  sweep ? "paging policies separated by '|', e.g. lru|lru,daemon"
                        : "paging policy: none or lru[,daemon][,prefetch]");
  app->add_option("--seed", f.seed, "random seed");
  app->add_option("--out", f.out, "output directory");
  app->add_option("--archetype", f.archetype, "streaming, pseudo-random, zipfian, small-footprint");
  app->add_option("--footprint", f.footprint, "workload footprint, e.g. 512M");
  app->add_option("--records", f.records, "trace records to generate");
  app->add_option("--processes", f.processes, "processes in the VM");
  app->add_flag("--emit-plots", f.emit_plots, "write SVG figures");
  app->add_flag("--debug-events", f.debug_events, "write events.log");
  app->add_option("--set", f.sets, "extra key=value setting (repeatable)");
}

Experiment build_experiment(const CommonFlags& f, bool sweep) {
  Experiment exp = f.config.empty() ? Experiment{} : load_experiment(f.config);
  auto set = [&](const char* key, const std::string& v) {
    if (!v.empty()) apply_setting(exp, key, v);
  };
  set("trace", f.trace);
  set("mode", f.mode);
  set("vcpus", f.vcpus);
  set("cotag_bytes", f.cotag_bytes);
  set("tstruct_mult", f.tstruct_mult);
  set("policy", f.policy);
  set("out", f.out);
  set("archetype", f.archetype);
  set("footprint", f.footprint);
  set("records", f.records);
  set("processes", f.processes);
  if (f.seed) apply_setting(exp, "seed", std::to_string(*f.seed));
  if (f.emit_plots) exp.emit_plots = true;
  if (f.debug_events) exp.debug_events = true;
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_setting(exp, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!sweep && (exp.modes.size() > 1 || exp.vcpus.size() > 1 || exp.cotag_bytes.size() > 1 ||
                 exp.tstruct_mults.size() > 1 || exp.policies.size() > 1)) {
    throw ConfigError("run takes a single value per axis; use sweep for lists");
  }
  return exp;
}

int execute(const Experiment& exp) {
  const RunOutput out = run_experiment(exp);
  write_outputs(exp, out);
  const std::size_t name = out.table.column("cell");
  const std::size_t cycles = out.table.column("cycles");
  const std::size_t norm = out.table.column("normalized_runtime");
  for (const auto& row : out.table.rows) {
    std::cout << row[name] << "  cycles=" << row[cycles] << "  normalized=" << row[norm] << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Virtualized translation-coherence simulator"};
  app.require_subcommand(1);

  CommonFlags run_flags, sweep_flags;
  auto* run = app.add_subcommand("run", "simulate one configuration (plus its baseline)");
  add_common(run, run_flags, false);
  auto* sweep = app.add_subcommand("sweep", "simulate the cross product of the given axes");
  add_common(sweep, sweep_flags, true);

  auto* gen = app.add_subcommand("gen", "write a synthetic trace");
  std::string gen_out, gen_spec, gen_format = "auto";
  WorkloadSpec ws;
  std::string gen_archetype, gen_footprint;
  gen->add_option("--out", gen_out, "trace file to write")->required();
  gen->add_option("--config", gen_spec, "workload spec file (key=value)");
  gen->add_option("--archetype", gen_archetype, "workload archetype");
  gen->add_option("--footprint", gen_footprint, "footprint, e.g. 64M");
  gen->add_option("--records", ws.records, "record count");
  gen->add_option("--processes", ws.processes, "process count");
  gen->add_option("--vcpus", ws.vcpus, "vCPUs");
  gen->add_option("--seed", ws.seed, "random seed");
  gen->add_option("--format", gen_format, "text, binary or auto (by .bin extension)");

  auto* plt = app.add_subcommand("plot", "render SVG figures from results.csv");
  std::string plot_in, plot_out = ".";
  plt->add_option("--results", plot_in, "results.csv")->required();
  plt->add_option("--out", plot_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return execute(build_experiment(run_flags, false));
    if (sweep->parsed()) return execute(build_experiment(sweep_flags, true));
    if (gen->parsed()) {
      WorkloadSpec spec = ws;
      if (!gen_spec.empty()) {
        std::ifstream in(gen_spec);
        if (!in) throw ConfigError("cannot open " + gen_spec);
        spec = parse_workload(in);
        // explicit flags win over the file
        if (gen->count("--records")) spec.records = ws.records;
        if (gen->count("--processes")) spec.processes = ws.processes;
        if (gen->count("--vcpus")) spec.vcpus = ws.vcpus;
        if (gen->count("--seed")) spec.seed = ws.seed;
      }
      if (!gen_archetype.empty()) spec.archetype = parse_archetype(gen_archetype);
      if (!gen_footprint.empty()) spec.footprint_bytes = parse_size(gen_footprint);
      spec.validate(MemoryGeometry{}.total_pages() << kPageShift);
      Generator g(spec);
      const auto records = g.all();
      const bool binary = gen_format == "binary" ||
                          (gen_format == "auto" && std::filesystem::path(gen_out).extension() == ".bin");
      if (const auto dir = std::filesystem::path(gen_out).parent_path(); !dir.empty()) {
        std::filesystem::create_directories(dir);
      }
      if (binary) {
        write_binary(gen_out, records);
      } else {
        write_text(gen_out, records);
      }
      std::cout << "wrote " << records.size() << " records to " << gen_out << '\n';
      return 0;
    }
    if (plt->parsed()) {
      std::ifstream in(plot_in);
      if (!in) throw ConfigError("cannot open " + plot_in);
      for (const auto& f : plot(ResultTable::from_csv(in), plot_out)) std::cout << "wrote " << f << '\n';
      return 0;
    }
  } catch (const SimError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
