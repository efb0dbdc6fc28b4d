#include "hatric/trace.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <sstream>

#include "hatric/error.hpp"

namespace hatric {

namespace {

constexpr std::array<char, 4> kMagic = {'H', 'T', 'R', 'C'};
constexpr std::uint32_t kVersion = 1;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> fields(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

template <class T>
T parse_uint(std::string_view s, int base, std::uint64_t index, const char* what) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) {
    throw ParseError(index, std::string("bad ") + what + " '" + std::string(s) + "'");
  }
  return v;
}

void put_le(char* out, std::uint64_t v, unsigned bytes) {
  for (unsigned i = 0; i < bytes; ++i) out[i] = static_cast<char>((v >> (8 * i)) & 0xff);
}

std::uint64_t get_le(const char* in, unsigned bytes) {
  std::uint64_t v = 0;
  for (unsigned i = 0; i < bytes; ++i) v |= std::uint64_t{static_cast<unsigned char>(in[i])} << (8 * i);
  return v;
}

void check_cpu(const TraceRecord& r, std::uint32_t max_cpus, std::uint64_t index) {
  if (r.cpu >= max_cpus) throw ParseError(index, "cpu " + std::to_string(r.cpu) + " out of range");
}

std::uint64_t fnv1a(std::uint64_t x) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (int i = 0; i < 8; ++i) {
    h ^= x & 0xff;
    h *= 0x100000001b3ull;
    x >>= 8;
  }
  return h;
}

}  // namespace

std::string format_record(const TraceRecord& r) {
  char buf[80];
  int n = std::snprintf(buf, sizeof buf, "%u %u %c 0x%llx", r.cpu, unsigned{r.vm},
                        r.op == Op::load ? 'L' : 'S', static_cast<unsigned long long>(r.gvp.value));
  if (r.pid != 0) std::snprintf(buf + n, sizeof buf - n, " %u", unsigned{r.pid});
  return buf;
}

TraceRecord parse_record(std::string_view line, std::uint64_t index) {
  const auto f = fields(line);
  if (f.size() != 4 && f.size() != 5) throw ParseError(index, "expected 'cpu vm op gvp [pid]'");
  TraceRecord r;
  r.cpu = parse_uint<std::uint32_t>(f[0], 10, index, "cpu");
  const auto vm = parse_uint<std::uint32_t>(f[1], 10, index, "vm");
  if (vm >= kMaxVms) throw ParseError(index, "vm out of range");
  r.vm = static_cast<VmId>(vm);
  if (f[2] == "L" || f[2] == "l") {
    r.op = Op::load;
  } else if (f[2] == "S" || f[2] == "s") {
    r.op = Op::store;
  } else {
    throw ParseError(index, "op must be L or S");
  }
  std::string_view g = f[3];
  if (g.size() > 2 && g[0] == '0' && (g[1] == 'x' || g[1] == 'X')) g.remove_prefix(2);
  r.gvp = Gvp{parse_uint<std::uint64_t>(g, 16, index, "gvp")};
  if (r.gvp.value >= kMaxPageNumber) throw ParseError(index, "gvp beyond 48-bit address space");
  if (f.size() == 5) {
    const auto pid = parse_uint<std::uint32_t>(f[4], 10, index, "pid");
    if (pid >= kMaxPids) throw ParseError(index, "pid out of range");
    r.pid = static_cast<Pid>(pid);
  }
  return r;
}

FileSource::FileSource(const std::string& path, std::uint32_t max_cpus)
    : in_(path, std::ios::binary), max_cpus_(max_cpus) {
  if (!in_) throw SimError("cannot open trace '" + path + "'");
  std::array<char, 4> head{};
  in_.read(head.data(), 4);
  if (in_.gcount() == 4 && head == kMagic) {
    char rest[12];
    in_.read(rest, 12);
    if (in_.gcount() != 12) throw ParseError(0, "truncated binary header");
    if (get_le(rest, 4) != kVersion) throw ParseError(0, "unsupported binary trace version");
    remaining_ = get_le(rest + 4, 8);
    binary_ = true;
  } else {
    in_.clear();
    in_.seekg(0);
  }
}

std::optional<TraceRecord> FileSource::next() {
  if (binary_) {
    if (remaining_ == 0) return std::nullopt;
    char buf[16];
    in_.read(buf, 16);
    if (in_.gcount() != 16) throw ParseError(index_, "truncated binary record");
    TraceRecord r;
    r.gvp = Gvp{get_le(buf, 8)};
    r.vm = static_cast<VmId>(get_le(buf + 8, 2));
    r.pid = static_cast<Pid>(get_le(buf + 10, 2));
    r.cpu = static_cast<std::uint32_t>(get_le(buf + 12, 2));
    const auto op = static_cast<unsigned char>(buf[14]);
    if (op > 1) throw ParseError(index_, "bad op byte");
    r.op = op == 0 ? Op::load : Op::store;
    if (r.gvp.value >= kMaxPageNumber) throw ParseError(index_, "gvp beyond 48-bit address space");
    check_cpu(r, max_cpus_, index_);
    ++index_;
    --remaining_;
    return r;
  }
  std::string line;
  while (std::getline(in_, line)) {
    ++index_;
    std::string_view s = line;
    if (auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    TraceRecord r = parse_record(s, index_);
    check_cpu(r, max_cpus_, index_);
    return r;
  }
  return std::nullopt;
}

std::vector<TraceRecord> read_trace(const std::string& path, std::uint32_t max_cpus) {
  FileSource src(path, max_cpus);
  std::vector<TraceRecord> out;
  while (auto r = src.next()) out.push_back(*r);
  return out;
}

void write_text(const std::string& path, const std::vector<TraceRecord>& records) {
  std::ofstream out(path);
  if (!out) throw SimError("cannot write trace '" + path + "'");
  for (const auto& r : records) out << format_record(r) << '\n';
}

void write_binary(const std::string& path, const std::vector<TraceRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SimError("cannot write trace '" + path + "'");
  char head[16];
  std::memcpy(head, kMagic.data(), 4);
  put_le(head + 4, kVersion, 4);
  put_le(head + 8, records.size(), 8);
  out.write(head, 16);
  for (const auto& r : records) {
    if (r.cpu > 0xffff) throw SimError("cpu too large for binary trace");
    char buf[16] = {};
    put_le(buf, r.gvp.value, 8);
    put_le(buf + 8, r.vm, 2);
    put_le(buf + 10, r.pid, 2);
    put_le(buf + 12, r.cpu, 2);
    buf[14] = r.op == Op::load ? 0 : 1;
    out.write(buf, 16);
  }
}

const char* to_string(Archetype a) {
  switch (a) {
    case Archetype::streaming: return "streaming";
    case Archetype::pseudo_random: return "pseudo-random";
    case Archetype::zipfian: return "zipfian";
    case Archetype::small_footprint: return "small-footprint";
  }
  return "?";
}

Archetype parse_archetype(std::string_view text) {
  if (text == "streaming") return Archetype::streaming;
  if (text == "pseudo-random" || text == "random" || text == "graph") return Archetype::pseudo_random;
  if (text == "zipfian" || text == "zipf") return Archetype::zipfian;
  if (text == "small-footprint" || text == "small") return Archetype::small_footprint;
  throw ConfigError("unknown archetype '" + std::string(text) + "'");
}

void WorkloadSpec::validate(std::uint64_t addressable_bytes) const {
  if (footprint_pages() == 0) throw ConfigError("footprint must be at least one page");
  if (footprint_bytes > addressable_bytes) throw ConfigError("footprint exceeds memory");
  if (processes == 0 || vcpus == 0) throw ConfigError("processes and vcpus must be positive");
  if (processes > vcpus) throw ConfigError("each process needs at least one vcpu");
  if (footprint_pages() / processes > (1ull << 28)) throw ConfigError("per-process footprint too large");
  if (store_fraction < 0 || store_fraction > 1) throw ConfigError("store fraction must be in [0,1]");
  if (zipf_theta <= 0 || zipf_theta >= 1) throw ConfigError("zipf theta must be in (0,1)");
  if (background_remap_rate < 0) throw ConfigError("background remap rate must be non-negative");
}

std::uint64_t parse_size(std::string_view text) {
  text = trim(text);
  std::uint64_t mult = 1;
  if (!text.empty()) {
    switch (text.back()) {
      case 'K': case 'k': mult = 1ull << 10; break;
      case 'M': case 'm': mult = 1ull << 20; break;
      case 'G': case 'g': mult = 1ull << 30; break;
      default: break;
    }
    if (mult != 1) text.remove_suffix(1);
  }
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size() || text.empty()) {
    throw ConfigError("bad size '" + std::string(text) + "'");
  }
  return v * mult;
}

WorkloadSpec parse_workload(std::istream& in) {
  WorkloadSpec s;
  std::string line;
  unsigned n = 0;
  while (std::getline(in, line)) {
    ++n;
    std::string_view v = line;
    if (auto hash = v.find('#'); hash != std::string_view::npos) v = v.substr(0, hash);
    v = trim(v);
    if (v.empty()) continue;
    const auto eq = v.find('=');
    if (eq == std::string_view::npos) throw ConfigError("line " + std::to_string(n) + ": expected key=value");
    const std::string key(trim(v.substr(0, eq)));
    const std::string val(trim(v.substr(eq + 1)));
    try {
      if (key == "archetype") s.archetype = parse_archetype(val);
      else if (key == "footprint") s.footprint_bytes = parse_size(val);
      else if (key == "records") s.records = std::stoull(val);
      else if (key == "processes") s.processes = static_cast<unsigned>(std::stoul(val));
      else if (key == "vcpus") s.vcpus = static_cast<unsigned>(std::stoul(val));
      else if (key == "vm") s.vm = static_cast<VmId>(std::stoul(val));
      else if (key == "store_fraction") s.store_fraction = std::stod(val);
      else if (key == "zipf_theta") s.zipf_theta = std::stod(val);
      else if (key == "background_remap_rate") s.background_remap_rate = std::stod(val);
      else if (key == "seed") s.seed = std::stoull(val);
      else throw ConfigError("unknown workload key '" + key + "'");
    } catch (const std::logic_error&) {
      throw ConfigError("line " + std::to_string(n) + ": bad value for " + key);
    }
  }
  return s;
}

std::string format_workload(const WorkloadSpec& s) {
  std::ostringstream out;
  out << "archetype=" << to_string(s.archetype) << '\n'
      << "footprint=" << s.footprint_bytes << '\n'
      << "records=" << s.records << '\n'
      << "processes=" << s.processes << '\n'
      << "vcpus=" << s.vcpus << '\n'
      << "vm=" << s.vm << '\n'
      << "store_fraction=" << s.store_fraction << '\n'
      << "zipf_theta=" << s.zipf_theta << '\n'
      << "background_remap_rate=" << s.background_remap_rate << '\n'
      << "seed=" << s.seed << '\n';
  return out.str();
}

ZipfSampler::ZipfSampler(std::uint64_t n, double theta) : n_(n), theta_(theta) {
  if (n == 0) throw ConfigError("zipf over an empty range");
  zetan_ = 0;
  for (std::uint64_t i = 1; i <= n; ++i) zetan_ += 1.0 / std::pow(static_cast<double>(i), theta);
  const double zeta2 = 1.0 + 1.0 / std::pow(2.0, theta);
  alpha_ = 1.0 / (1.0 - theta);
  eta_ = n < 2 ? 1.0 : (1.0 - std::pow(2.0 / static_cast<double>(n), 1.0 - theta)) / (1.0 - zeta2 / zetan_);
  half_pow_theta_ = 1.0 + std::pow(0.5, theta);
}

std::uint64_t ZipfSampler::rank(double u) const {
  const double uz = u * zetan_;
  if (uz < 1.0 || n_ == 1) return 0;
  if (uz < half_pow_theta_) return 1;
  const auto r = static_cast<std::uint64_t>(static_cast<double>(n_) * std::pow(eta_ * u - eta_ + 1.0, alpha_));
  return std::min(r, n_ - 1);
}

std::uint64_t ZipfSampler::sample(double u) const { return fnv1a(rank(u)) % n_; }

Generator::Generator(const WorkloadSpec& spec) : spec_(spec), rng_(spec.seed) {
  if (spec.processes == 0 || spec.vcpus == 0 || spec.processes > spec.vcpus) {
    throw ConfigError("each process needs at least one vcpu");
  }
  pages_per_process_ = std::max<std::uint64_t>(1, spec.footprint_pages() / spec.processes);
  per_process_.assign(spec.processes, 0);
  if (spec.archetype == Archetype::zipfian) {
    zipf_ = std::make_unique<ZipfSampler>(pages_per_process_, spec.zipf_theta);
  }
}

std::optional<TraceRecord> Generator::next() {
  if (produced_ == spec_.records) return std::nullopt;
  const auto pid = static_cast<Pid>(produced_ % spec_.processes);
  const std::uint64_t k = per_process_[pid]++;
  ++produced_;
  const unsigned group = spec_.vcpus / spec_.processes;
  TraceRecord r;
  r.vm = spec_.vm;
  r.pid = pid;
  r.cpu = static_cast<std::uint32_t>(pid * group + k % group);
  std::uint64_t page = 0;
  switch (spec_.archetype) {
    case Archetype::streaming:
      page = k % pages_per_process_;
      break;
    case Archetype::pseudo_random:
    case Archetype::small_footprint:
      page = rng_() % pages_per_process_;
      break;
    case Archetype::zipfian:
      page = zipf_->sample(unit_double(rng_()));
      break;
  }
  r.gvp = Gvp{process_gvp_base(pid) + page};
  r.op = unit_double(rng_()) < spec_.store_fraction ? Op::store : Op::load;
  return r;
}

std::vector<TraceRecord> Generator::all() {
  std::vector<TraceRecord> out;
  out.reserve(spec_.records - produced_);
  while (auto r = next()) out.push_back(*r);
  return out;
}

}  // namespace hatric
