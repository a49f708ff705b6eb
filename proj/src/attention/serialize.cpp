#include "capeskit/attention/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstring>

#include "capeskit/error.hpp"
#include "capeskit/io.hpp"

namespace capeskit::attention {

static_assert(std::endian::native == std::endian::little, "TLA1 I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'T', 'L', 'A', '1'};

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

struct Reader {
  std::string_view bytes;
  std::size_t pos = 0;

  template <class T>
  T get() {
    if (pos + sizeof(T) > bytes.size()) throw ParseError("TLA1: truncated container", 0);
    T v;
    std::memcpy(&v, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string_view take(std::size_t n) {
    if (n > bytes.size() - pos) throw ParseError("TLA1: truncated container", 0);
    auto s = bytes.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

std::string encode_model(const AttentionConfig& cfg, const ModelParams& params) {
  check_shapes(params, cfg);
  std::string out(kMagic, 4);
  KeyValueConfig kv;
  put_attention_config(cfg, kv);
  const std::string text = kv.to_text();
  put<std::uint64_t>(out, text.size());
  out += text;
  const auto ts = tensors(params);
  put<std::uint64_t>(out, ts.size());
  for (const auto& t : ts) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put<std::uint32_t>(out, 2);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(t.tensor->rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(t.tensor->cols()));
    out.append(reinterpret_cast<const char*>(t.tensor->data()), static_cast<std::size_t>(t.tensor->size()) * sizeof(double));
  }
  return out;
}

SavedModel decode_model(std::string_view bytes) {
  Reader r{bytes};
  if (r.take(4) != std::string_view(kMagic, 4)) throw ParseError("TLA1: bad magic", 0);
  const auto cfg_len = r.get<std::uint64_t>();
  const KeyValueConfig kv = KeyValueConfig::parse(r.take(cfg_len));
  kv.require_only(attention_config_keys());
  SavedModel m;
  m.config = attention_config_from(kv);
  m.config.validate();
  m.params = ModelParams::init(m.config, 0);

  auto slots = tensors(m.params);
  const auto count = r.get<std::uint64_t>();
  if (count != slots.size()) throw ParseError("TLA1: tensor count does not match the config", 0);
  for (auto& slot : slots) {
    const auto name_len = r.get<std::uint32_t>();
    const std::string name(r.take(name_len));
    if (name != slot.name) throw ParseError("TLA1: expected tensor '" + slot.name + "', found '" + name + "'", 0);
    if (r.get<std::uint32_t>() != 2) throw ParseError("TLA1: tensor '" + name + "' must have rank 2", 0);
    const auto rows = r.get<std::uint64_t>(), cols = r.get<std::uint64_t>();
    if (rows != static_cast<std::uint64_t>(slot.tensor->rows()) || cols != static_cast<std::uint64_t>(slot.tensor->cols()))
      throw ParseError("TLA1: tensor '" + name + "' has the wrong shape", 0);
    const auto raw = r.take(rows * cols * sizeof(double));
    std::memcpy(slot.tensor->data(), raw.data(), raw.size());
  }
  if (r.pos != bytes.size()) throw ParseError("TLA1: trailing bytes", 0);
  return m;
}

void save_model(const std::filesystem::path& path, const AttentionConfig& cfg, const ModelParams& params) {
  atomic_write(path, encode_model(cfg, params));
}

SavedModel load_model(const std::filesystem::path& path) { return decode_model(read_text(path)); }

}  // namespace capeskit::attention
