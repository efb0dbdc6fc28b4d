#pragma once

// Trace records, text/binary readers and writers, and the synthetic
// workload generator.
//
// Text format, one record per line:   cpu vm op gvp [pid]
//   op is L or S, gvp is hex (0x prefix optional). '#' starts a comment.
// Binary format: "HTRC", u32 version, u64 count, then 16-byte records
//   (u64 gvp, u16 vm, u16 pid, u16 cpu, u8 op, u8 zero), little endian.

#include <cstdint>
#include <fstream>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "hatric/addr.hpp"
#include "hatric/tstruct.hpp"

namespace hatric {

enum class Op : std::uint8_t { load, store };

struct TraceRecord {
  std::uint32_t cpu = 0;  // vCPU index within the VM
  VmId vm = 0;
  Op op = Op::load;
  Gvp gvp;
  Pid pid = 0;
  bool operator==(const TraceRecord&) const = default;
};

std::string format_record(const TraceRecord& r);
// `index` is reported in errors (line number for text traces).
TraceRecord parse_record(std::string_view line, std::uint64_t index);

class TraceSource {
 public:
  virtual ~TraceSource() = default;
  virtual std::optional<TraceRecord> next() = 0;
};

class VectorSource : public TraceSource {
 public:
  explicit VectorSource(std::vector<TraceRecord> records) : records_(std::move(records)) {}
  std::optional<TraceRecord> next() override {
    if (pos_ == records_.size()) return std::nullopt;
    return records_[pos_++];
  }

 private:
  std::vector<TraceRecord> records_;
  std::size_t pos_ = 0;
};

// Streams a trace file (text or binary, detected by magic). Records with
// cpu >= `max_cpus` are rejected.
class FileSource : public TraceSource {
 public:
  explicit FileSource(const std::string& path, std::uint32_t max_cpus = UINT32_MAX);
  std::optional<TraceRecord> next() override;

 private:
  std::ifstream in_;
  bool binary_ = false;
  std::uint64_t remaining_ = 0;
  std::uint64_t index_ = 0;
  std::uint32_t max_cpus_;
};

std::vector<TraceRecord> read_trace(const std::string& path, std::uint32_t max_cpus = UINT32_MAX);
void write_text(const std::string& path, const std::vector<TraceRecord>& records);
void write_binary(const std::string& path, const std::vector<TraceRecord>& records);

enum class Archetype : std::uint8_t { streaming, pseudo_random, zipfian, small_footprint };
const char* to_string(Archetype a);
Archetype parse_archetype(std::string_view text);

struct WorkloadSpec {
  Archetype archetype = Archetype::zipfian;
  std::uint64_t footprint_bytes = 64ull << 20;
  std::uint64_t records = 1000000;
  unsigned processes = 1;
  unsigned vcpus = 16;
  VmId vm = 0;
  double store_fraction = 0.3;
  double zipf_theta = 0.99;
  double background_remap_rate = 0.0;  // remaps per million records
  std::uint64_t seed = 1;

  std::uint64_t footprint_pages() const { return footprint_bytes >> kPageShift; }
  // Throws when the footprint cannot fit in `addressable_bytes`.
  void validate(std::uint64_t addressable_bytes) const;
};

// key=value lines; unknown keys are errors.
WorkloadSpec parse_workload(std::istream& in);
std::string format_workload(const WorkloadSpec& spec);

// Byte count with optional K/M/G suffix (binary units).
std::uint64_t parse_size(std::string_view text);

// Zipf sampler over [0, n) (Gray et al.), ranks scrambled by a hash.
class ZipfSampler {
 public:
  ZipfSampler(std::uint64_t n, double theta);
  std::uint64_t rank(double u) const;
  std::uint64_t sample(double u) const;
  std::uint64_t n() const { return n_; }

 private:
  std::uint64_t n_;
  double theta_, alpha_, zetan_, eta_, half_pow_theta_;
};

// Uniform double in [0, 1) from 53 random bits.
inline double unit_double(std::uint64_t x) { return static_cast<double>(x >> 11) * 0x1.0p-53; }

// Base GVP of process `pid`'s address range.
constexpr std::uint64_t process_gvp_base(Pid pid) { return std::uint64_t{pid} << 28; }

class Generator : public TraceSource {
 public:
  explicit Generator(const WorkloadSpec& spec);
  std::optional<TraceRecord> next() override;
  std::vector<TraceRecord> all();

 private:
  WorkloadSpec spec_;
  std::mt19937_64 rng_;
  std::uint64_t produced_ = 0;
  std::uint64_t pages_per_process_ = 0;
  std::vector<std::uint64_t> per_process_;
  std::unique_ptr<ZipfSampler> zipf_;
};

}  // namespace hatric
