#include "gsure/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gsure/error.hpp"

namespace gsure::io {

namespace {

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

constexpr char kArrayMagic[16] = {'G', 'S', 'U', 'R', 'E', '-', 'A', 'R', 'R', 'A', 'Y', '\0', '\0', '\0', '\0', '\0'};
constexpr char kCheckpointMagic[16] = {'G', 'S', 'U', 'R', 'E', '-', 'C', 'K', 'P', 'T', '\0', '\0', '\0', '\0', '\0', '\0'};

class Writer {
 public:
  void raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  template <typename T>
  void pod(T v) {
    raw(&v, sizeof v);
  }
  void string(std::string_view s) {
    pod<std::uint64_t>(s.size());
    raw(s.data(), s.size());
  }
  void doubles(std::span<const double> v) {
    pod<std::uint64_t>(v.size());
    raw(v.data(), v.size() * sizeof(double));
  }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(std::string_view bytes, const char* what) : in_(bytes), what_(what) {}
  void raw(void* p, std::size_t n) {
    if (in_.size() - pos_ < n) throw FormatError(std::string(what_) + ": truncated file");
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T pod() {
    T v;
    raw(&v, sizeof v);
    return v;
  }
  std::string string() {
    const auto n = pod<std::uint64_t>();
    if (n > in_.size() - pos_) throw FormatError(std::string(what_) + ": truncated string");
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::vector<double> doubles() {
    const auto n = pod<std::uint64_t>();
    if (n > (in_.size() - pos_) / sizeof(double)) throw FormatError(std::string(what_) + ": truncated array");
    std::vector<double> v(n);
    raw(v.data(), n * sizeof(double));
    return v;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::string_view in_;
  const char* what_;
  std::size_t pos_ = 0;
};

void check_header(Reader& r, const char (&magic)[16], std::uint32_t supported, const char* what) {
  char m[16];
  r.raw(m, 16);
  if (std::memcmp(m, magic, 16) != 0) throw FormatError(std::string(what) + ": bad magic");
  const auto version = r.pod<std::uint32_t>();
  if (version > supported) {
    throw FormatError(std::string(what) + ": format version " + std::to_string(version) +
                      " is newer than this build supports (" + std::to_string(supported) + ")");
  }
  if (version == 0) throw FormatError(std::string(what) + ": invalid format version 0");
}

}  // namespace

std::string encode_array(const Tensor& t) {
  Writer w;
  w.raw(kArrayMagic, 16);
  w.pod<std::uint32_t>(kArrayVersion);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(t.shape().size()));
  for (std::size_t e : t.shape()) w.pod<std::uint64_t>(e);
  w.raw(t.data().data(), t.size() * sizeof(double));
  return std::move(w.bytes());
}

Tensor decode_array(std::string_view bytes) {
  Reader r(bytes, "array");
  check_header(r, kArrayMagic, kArrayVersion, "array");
  const auto rank = r.pod<std::uint32_t>();
  if (rank > 8) throw FormatError("array: rank too large");
  Shape shape(rank);
  std::size_t count = 1;
  for (auto& e : shape) {
    e = r.pod<std::uint64_t>();
    count *= e;
  }
  if ((bytes.size() - r.pos()) != count * sizeof(double)) throw FormatError("array: payload size does not match extents");
  std::vector<double> values(count);
  r.raw(values.data(), count * sizeof(double));
  return Tensor(shape, std::move(values));
}

void write_array(const std::filesystem::path& path, const Tensor& t) { write_file(path, encode_array(t)); }

Tensor read_array(const std::filesystem::path& path) { return decode_array(read_file(path)); }

std::string encode_checkpoint(const Checkpoint& c) {
  Writer w;
  w.raw(kCheckpointMagic, 16);
  w.pod<std::uint32_t>(kCheckpointVersion);
  w.pod<std::uint64_t>(c.config_digest);
  w.pod<std::uint64_t>(c.schedule_digest);
  w.pod<std::int64_t>(c.step);
  w.string(c.model_kind);
  w.pod<std::uint64_t>(c.model.dim);
  w.pod<std::uint64_t>(c.model.hidden.size());
  for (std::size_t h : c.model.hidden) w.pod<std::uint64_t>(h);
  w.pod<std::uint64_t>(c.model.embedding_dim);
  w.string(to_string(c.model.mean_type));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(c.model.activation));
  w.pod<double>(c.model.ema_decay);
  w.doubles(c.params);
  w.doubles(c.ema);
  w.pod<std::uint64_t>(fnv1a64(w.bytes()));
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < 8) throw FormatError("checkpoint: truncated file");
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  const std::string_view body = bytes.substr(0, bytes.size() - 8);
  Reader r(body, "checkpoint");
  check_header(r, kCheckpointMagic, kCheckpointVersion, "checkpoint");
  if (fnv1a64(body) != stored) throw FormatError("checkpoint: content digest mismatch (file is corrupt)");
  Checkpoint c;
  c.config_digest = r.pod<std::uint64_t>();
  c.schedule_digest = r.pod<std::uint64_t>();
  c.step = r.pod<std::int64_t>();
  c.model_kind = r.string();
  c.model.dim = r.pod<std::uint64_t>();
  const auto layers = r.pod<std::uint64_t>();
  if (layers > 1024) throw FormatError("checkpoint: implausible layer count");
  c.model.hidden.resize(layers);
  for (auto& h : c.model.hidden) h = r.pod<std::uint64_t>();
  c.model.embedding_dim = r.pod<std::uint64_t>();
  c.model.mean_type = mean_type_from_string(r.string());
  c.model.activation = static_cast<ad::Activation>(r.pod<std::uint32_t>());
  c.model.ema_decay = r.pod<double>();
  c.params = r.doubles();
  c.ema = r.doubles();
  if (!r.done()) throw FormatError("checkpoint: trailing bytes");
  return c;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c) { write_file(path, encode_checkpoint(c)); }

Checkpoint read_checkpoint(const std::filesystem::path& path, std::optional<std::uint64_t> expected_config_digest,
                           std::optional<std::uint64_t> expected_schedule_digest) {
  Checkpoint c = decode_checkpoint(read_file(path));
  if (expected_config_digest && *expected_config_digest != c.config_digest) {
    throw FormatError("checkpoint: config digest " + hex64(c.config_digest) + " does not match expected " +
                      hex64(*expected_config_digest));
  }
  if (expected_schedule_digest && *expected_schedule_digest != c.schedule_digest) {
    throw FormatError("checkpoint: schedule digest " + hex64(c.schedule_digest) + " does not match expected " +
                      hex64(*expected_schedule_digest));
  }
  return c;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  std::string out = "step,loss,divergence_term,grad_norm,wall_ms\n";
  for (const auto& r : rows) {
    out += std::to_string(r.step) + "," + format_double(r.loss) + "," + format_double(r.divergence_term) + "," +
           format_double(r.grad_norm) + "," + format_double(r.wall_ms) + "\n";
  }
  write_file(path, out);
}

void write_pgm(const std::filesystem::path& path, std::span<const double> image, std::size_t height, std::size_t width,
               double lo, double hi) {
  if (image.size() != height * width) throw ShapeError("pgm: image size does not match height x width");
  if (!(hi > lo)) throw DomainError("pgm: empty intensity range");
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  for (double v : image) {
    const double u = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * u))));
  }
  write_file(path, out);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write to '" + tmp.string() + "' failed");
  }
  std::filesystem::rename(tmp, path);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  const auto res = std::to_chars(buf, buf + 16, v, 16);
  std::string s(buf, res.ptr);
  return std::string(16 - s.size(), '0') + s;
}

std::uint64_t parse_hex64(const std::string& s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v, 16);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) throw FormatError("invalid hex digest '" + s + "'");
  return v;
}

}  // namespace gsure::io
