#include "gfpn/pipeline/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

#include "gfpn/errors.hpp"

namespace gfpn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

template <class T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_section(std::string& out, const char (&tag)[5], const std::string& payload) {
  out.append(tag, 4);
  put<std::uint64_t>(out, payload.size());
  out += payload;
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)).data(), sizeof(T));
    return value;
  }
  std::string_view take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw FormatError("checkpoint: truncated");
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::string params_payload(const ModelParams& params) {
  std::string out;
  std::uint64_t count = 0;
  for_each_param(params, [&](const std::string&, const Tensor&) { ++count; });
  put(out, count);
  for_each_param(params, [&](const std::string& name, const Tensor& t) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint64_t>(out, d);
    for (double x : t.data()) put(out, x);
  });
  return out;
}

void read_params(std::string_view payload, ModelParams& params) {
  Reader r(payload);
  std::uint64_t expected = 0;
  for_each_param(params, [&](const std::string&, const Tensor&) { ++expected; });
  if (r.get<std::uint64_t>() != expected) throw FormatError("checkpoint: parameter count mismatch");
  for_each_param(params, [&](const std::string& name, Tensor& t) {
    const auto len = r.get<std::uint32_t>();
    if (r.take(len) != name) throw FormatError("checkpoint: expected parameter " + name);
    const auto rank = r.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint64_t>();
    if (shape != t.shape()) {
      throw FormatError("checkpoint: " + name + " has shape " + shape_string(shape) + ", config implies " +
                        shape_string(t.shape()));
    }
    std::vector<double> data(shape_numel(shape));
    for (auto& x : data) x = r.get<double>();
    t = Tensor(std::move(shape), std::move(data), true);
  });
  if (!r.done()) throw FormatError("checkpoint: trailing bytes in PARM");
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  std::string out = "GFPN";
  put(out, kCheckpointVersion);
  put_section(out, "CONF", config_to_json(c.config));
  put_section(out, "PARM", params_payload(c.params));
  put_section(out, "RNG_", c.rng_state);
  return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(4) != "GFPN") throw FormatError("checkpoint: bad magic");
  if (const auto v = r.get<std::uint32_t>(); v != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(v));
  }
  Checkpoint c;
  bool have_conf = false;
  bool have_params = false;
  while (!r.done()) {
    const std::string_view tag = r.take(4);
    const std::string_view payload = r.take(r.get<std::uint64_t>());
    if (tag == "CONF") {
      c.config = config_from_json(payload);
      have_conf = true;
    } else if (tag == "PARM") {
      if (!have_conf) throw FormatError("checkpoint: PARM before CONF");
      Rng scratch(0);
      c.params = init_model(c.config, scratch);
      read_params(payload, c.params);
      have_params = true;
    } else if (tag == "RNG_") {
      c.rng_state = std::string(payload);
    } else {
      throw FormatError("checkpoint: unknown section '" + std::string(tag) + "'");
    }
  }
  if (!have_conf || !have_params) throw FormatError("checkpoint: missing CONF or PARM section");
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  const std::string bytes = serialize_checkpoint(checkpoint);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

}  // namespace gfpn
