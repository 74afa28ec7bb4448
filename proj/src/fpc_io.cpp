#include "fae/fpc_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little, "little-endian host required");

namespace fae {

namespace {

constexpr char kMagic[4] = {'F', 'P', 'C', 'D'};
constexpr std::uint32_t kVersion = 1;

void put_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}
void put_u32(std::ostream& os, std::uint32_t v) { put_bytes(os, &v, 4); }
void put_u64(std::ostream& os, std::uint64_t v) { put_bytes(os, &v, 8); }
void put_f64(std::ostream& os, double v) { put_bytes(os, &v, 8); }
void put_u8(std::ostream& os, std::uint8_t v) { put_bytes(os, &v, 1); }

void get_bytes(std::istream& is, void* p, std::size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!is) throw std::runtime_error("truncated FPC stream");
}
std::uint32_t get_u32(std::istream& is) { std::uint32_t v; get_bytes(is, &v, 4); return v; }
std::uint64_t get_u64(std::istream& is) { std::uint64_t v; get_bytes(is, &v, 8); return v; }
double get_f64(std::istream& is) { double v; get_bytes(is, &v, 8); return v; }
std::uint8_t get_u8(std::istream& is) { std::uint8_t v; get_bytes(is, &v, 1); return v; }

void check_uniform(const std::vector<PointCloudFunction>& samples) {
  if (samples.empty()) throw std::invalid_argument("no samples to write");
  const Domain& dom = samples.front().domain;
  const int d = samples.front().dim();
  const int m = samples.front().channels();
  for (const PointCloudFunction& s : samples) {
    if (s.dim() != d || s.channels() != m) throw std::invalid_argument("samples disagree on d or m");
    if (s.domain.lo != dom.lo || s.domain.hi != dom.hi || s.domain.periodic != dom.periodic)
      throw std::invalid_argument("samples disagree on domain");
    if (s.points() < 1) throw std::invalid_argument("sample with no points");
  }
}

}  // namespace

void write_fpc(const std::string& path, const std::vector<PointCloudFunction>& samples) {
  check_uniform(samples);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  const PointCloudFunction& first = samples.front();
  const int d = first.dim(), m = first.channels();
  put_bytes(os, kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(d));
  put_u32(os, static_cast<std::uint32_t>(m));
  for (int a = 0; a < d; ++a) {
    put_f64(os, first.domain.lo[a]);
    put_f64(os, first.domain.hi[a]);
  }
  for (int a = 0; a < d; ++a) put_u8(os, first.domain.periodic[static_cast<std::size_t>(a)]);
  put_u64(os, samples.size());
  for (const PointCloudFunction& s : samples) {
    const int I = s.points();
    put_u32(os, static_cast<std::uint32_t>(I));
    for (int i = 0; i < I; ++i)
      for (int a = 0; a < d; ++a) put_f64(os, s.coords(a, i));
    for (int i = 0; i < I; ++i)
      for (int c = 0; c < m; ++c) put_f64(os, s.values(c, i));
  }
  os.flush();
  if (!os) throw std::runtime_error("write to " + path + " failed");
}

std::vector<PointCloudFunction> read_fpc(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[4];
  get_bytes(is, magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error(path + " is not an FPC file");
  const std::uint32_t version = get_u32(is);
  if (version != kVersion) throw std::runtime_error("unsupported FPC version " + std::to_string(version));
  const int d = static_cast<int>(get_u32(is));
  const int m = static_cast<int>(get_u32(is));
  if (d < 1 || m < 1 || d > 16) throw std::runtime_error("FPC header has implausible d or m");
  Domain dom;
  dom.lo.resize(d);
  dom.hi.resize(d);
  dom.periodic.resize(static_cast<std::size_t>(d));
  for (int a = 0; a < d; ++a) {
    dom.lo[a] = get_f64(is);
    dom.hi[a] = get_f64(is);
  }
  for (int a = 0; a < d; ++a) dom.periodic[static_cast<std::size_t>(a)] = get_u8(is);
  const std::uint64_t count = get_u64(is);
  std::vector<PointCloudFunction> out;
  out.reserve(count);
  for (std::uint64_t k = 0; k < count; ++k) {
    PointCloudFunction s;
    s.domain = dom;
    const int I = static_cast<int>(get_u32(is));
    if (I < 1) throw std::runtime_error("FPC sample with no points");
    s.coords.resize(d, I);
    s.values.resize(m, I);
    for (int i = 0; i < I; ++i)
      for (int a = 0; a < d; ++a) s.coords(a, i) = get_f64(is);
    for (int i = 0; i < I; ++i)
      for (int c = 0; c < m; ++c) s.values(c, i) = get_f64(is);
    out.push_back(std::move(s));
  }
  return out;
}

void write_jsonl(const std::string& path, const std::vector<PointCloudFunction>& samples) {
  check_uniform(samples);
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  const PointCloudFunction& first = samples.front();
  nlohmann::json header;
  header["d"] = first.dim();
  header["m"] = first.channels();
  header["lo"] = std::vector<double>(first.domain.lo.data(), first.domain.lo.data() + first.dim());
  header["hi"] = std::vector<double>(first.domain.hi.data(), first.domain.hi.data() + first.dim());
  header["periodic"] = first.domain.periodic;
  os << header.dump() << '\n';
  for (const PointCloudFunction& s : samples) {
    nlohmann::json j;
    auto& jx = j["x"] = nlohmann::json::array();
    auto& ju = j["u"] = nlohmann::json::array();
    for (int i = 0; i < s.points(); ++i) {
      nlohmann::json px = nlohmann::json::array(), pu = nlohmann::json::array();
      for (int a = 0; a < s.dim(); ++a) px.push_back(s.coords(a, i));
      for (int c = 0; c < s.channels(); ++c) pu.push_back(s.values(c, i));
      jx.push_back(std::move(px));
      ju.push_back(std::move(pu));
    }
    os << j.dump() << '\n';
  }
  os.flush();
  if (!os) throw std::runtime_error("write to " + path + " failed");
}

std::vector<PointCloudFunction> read_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error(path + " is empty");
  nlohmann::json header = nlohmann::json::parse(line);
  if (!header.contains("d") || !header.contains("lo"))
    throw std::runtime_error(path + " lacks the JSONL header line");
  const int d = header.at("d").get<int>();
  const int m = header.at("m").get<int>();
  if (d < 1 || m < 1) throw std::runtime_error("JSONL header has implausible d or m");
  Domain dom;
  dom.lo.resize(d);
  dom.hi.resize(d);
  const auto lo = header.at("lo").get<std::vector<double>>();
  const auto hi = header.at("hi").get<std::vector<double>>();
  dom.periodic = header.at("periodic").get<std::vector<std::uint8_t>>();
  if (static_cast<int>(lo.size()) != d || static_cast<int>(hi.size()) != d ||
      static_cast<int>(dom.periodic.size()) != d)
    throw std::runtime_error("JSONL header axis counts disagree");
  for (int a = 0; a < d; ++a) {
    dom.lo[a] = lo[static_cast<std::size_t>(a)];
    dom.hi[a] = hi[static_cast<std::size_t>(a)];
  }
  std::vector<PointCloudFunction> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    const auto& jx = j.at("x");
    const auto& ju = j.at("u");
    if (jx.size() != ju.size()) throw std::runtime_error("JSONL sample x/u point counts disagree");
    const int I = static_cast<int>(jx.size());
    if (I < 1) throw std::runtime_error("JSONL sample with no points");
    PointCloudFunction s;
    s.domain = dom;
    s.coords.resize(d, I);
    s.values.resize(m, I);
    for (int i = 0; i < I; ++i) {
      const auto& px = jx.at(static_cast<std::size_t>(i));
      const auto& pu = ju.at(static_cast<std::size_t>(i));
      if (static_cast<int>(px.size()) != d || static_cast<int>(pu.size()) != m)
        throw std::runtime_error("JSONL sample entry has wrong width");
      for (int a = 0; a < d; ++a) s.coords(a, i) = px.at(static_cast<std::size_t>(a)).get<double>();
      for (int c = 0; c < m; ++c) s.values(c, i) = pu.at(static_cast<std::size_t>(c)).get<double>();
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace fae
