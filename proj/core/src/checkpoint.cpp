#include "mohn/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "mohn/error.hpp"

namespace mohn {

namespace {

constexpr char kMagic[4] = {'M', 'O', 'H', 'N'};
constexpr std::uint8_t kVersion = 1;

enum SectionId : std::uint8_t {
  kConfig = 1,
  kQueryParams = 2,
  kKeyParams = 3,
  kVelocity = 4,
  kBank = 5,
  kRngState = 6,
  kProgress = 7,
  kStats = 8,
};
constexpr std::uint8_t kSectionCount = 8;

using Bytes = std::vector<unsigned char>;

void put_u8(Bytes& out, std::uint8_t v) { out.push_back(v); }

void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_u64(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_f64(Bytes& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint32_t payload_crc(const Bytes& payload) {
  auto crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, payload.data(), static_cast<uInt>(payload.size()));
  return static_cast<std::uint32_t>(crc);
}

struct Cursor {
  const Bytes& bytes;
  std::size_t pos = 0;

  bool done() const { return pos >= bytes.size(); }

  void need(std::size_t n) const {
    if (n > bytes.size() - pos)
      throw Error(ErrorKind::corrupt_checkpoint, "truncated checkpoint");
  }
  std::uint8_t u8() {
    need(1);
    return bytes[pos++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(bytes[pos + static_cast<std::size_t>(i)])
           << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(bytes[pos + static_cast<std::size_t>(i)])
           << (8 * i);
    pos += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
};

void encode_layers(Bytes& out, const std::vector<LayerParams>& layers) {
  put_u64(out, layers.size());
  for (const auto& layer : layers) {
    put_u64(out, layer.weight.rows);
    put_u64(out, layer.weight.cols);
    for (double v : layer.weight.values) put_f64(out, v);
    put_u64(out, layer.bias.size());
    for (double v : layer.bias) put_f64(out, v);
  }
}

std::vector<LayerParams> decode_layers(Cursor& in) {
  const std::uint64_t count = in.u64();
  std::vector<LayerParams> layers;
  layers.reserve(count);
  for (std::uint64_t l = 0; l < count; ++l) {
    LayerParams layer;
    const std::uint64_t rows = in.u64();
    const std::uint64_t cols = in.u64();
    if (rows == 0 || cols == 0 || rows > (1u << 24) || cols > (1u << 24))
      throw Error(ErrorKind::corrupt_checkpoint, "implausible layer shape");
    layer.weight = Matrix(rows, cols);
    for (auto& v : layer.weight.values) v = in.f64();
    const std::uint64_t bias_len = in.u64();
    if (bias_len != rows)
      throw Error(ErrorKind::corrupt_checkpoint, "bias length mismatch");
    layer.bias.resize(bias_len);
    for (auto& v : layer.bias) v = in.f64();
    layers.push_back(std::move(layer));
  }
  return layers;
}

void append_section(Bytes& out, std::uint8_t id, const Bytes& payload) {
  put_u8(out, id);
  put_u64(out, payload.size());
  out.insert(out.end(), payload.begin(), payload.end());
  put_u32(out, payload_crc(payload));
}

void check_spec_layers(const EncoderSpec& spec,
                       const std::vector<LayerParams>& layers) {
  if (layers.size() != spec.layer_count())
    throw Error(ErrorKind::corrupt_checkpoint,
                "layer count disagrees with the stored config");
  for (std::size_t l = 0; l < layers.size(); ++l)
    if (layers[l].weight.rows != spec.layer_dims[l + 1] ||
        layers[l].weight.cols != spec.layer_dims[l])
      throw Error(ErrorKind::corrupt_checkpoint,
                  "layer shape disagrees with the stored config");
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  Bytes out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u8(out, kVersion);

  {
    Bytes payload;
    const std::string text = serialize_train_config(ckpt.config);
    payload.assign(text.begin(), text.end());
    append_section(out, kConfig, payload);
  }
  {
    Bytes payload;
    encode_layers(payload, ckpt.query.layers);
    append_section(out, kQueryParams, payload);
  }
  {
    Bytes payload;
    encode_layers(payload, ckpt.key.layers);
    append_section(out, kKeyParams, payload);
  }
  {
    Bytes payload;
    encode_layers(payload, ckpt.velocity);
    append_section(out, kVelocity, payload);
  }
  {
    Bytes payload;
    put_u64(payload, ckpt.bank.capacity);
    put_u64(payload, ckpt.bank.dim);
    put_u64(payload, ckpt.bank.write_ptr);
    put_u64(payload, ckpt.bank.filled);
    for (double v : ckpt.bank.storage.values) put_f64(payload, v);
    append_section(out, kBank, payload);
  }
  {
    Bytes payload;
    for (std::uint64_t word : ckpt.rng_state) put_u64(payload, word);
    append_section(out, kRngState, payload);
  }
  {
    Bytes payload;
    put_u64(payload, ckpt.step);
    put_u64(payload, ckpt.epoch);
    put_u64(payload, ckpt.epoch_pos);
    put_u64(payload, ckpt.permutation.size());
    for (std::uint64_t idx : ckpt.permutation) put_u64(payload, idx);
    append_section(out, kProgress, payload);
  }
  {
    Bytes payload;
    put_u8(payload, ckpt.vector_mode);
    if (ckpt.feature_mean.size() != ckpt.feature_std.size())
      throw Error(ErrorKind::shape_mismatch,
                  "feature_mean and feature_std lengths differ");
    put_u64(payload, ckpt.feature_mean.size());
    for (double v : ckpt.feature_mean) put_f64(payload, v);
    for (double v : ckpt.feature_std) put_f64(payload, v);
    append_section(out, kStats, payload);
  }

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file)
    throw Error(ErrorKind::io_failure, "cannot open for writing: " + path.string());
  file.write(reinterpret_cast<const char*>(out.data()),
             static_cast<std::streamsize>(out.size()));
  file.flush();
  if (!file)
    throw Error(ErrorKind::io_failure, "write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file)
    throw Error(ErrorKind::missing_file, "cannot open: " + path.string());
  Bytes bytes{std::istreambuf_iterator<char>(file),
              std::istreambuf_iterator<char>()};
  if (file.bad())
    throw Error(ErrorKind::io_failure, "read failed: " + path.string());

  Cursor in{bytes};
  in.need(5);
  if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw Error(ErrorKind::corrupt_checkpoint, "bad magic bytes");
  in.pos = 4;
  const std::uint8_t version = in.u8();
  if (version != kVersion)
    throw Error(ErrorKind::version_mismatch,
                "checkpoint format version " + std::to_string(version) +
                    ", expected " + std::to_string(kVersion));

  Checkpoint ckpt;
  bool seen[kSectionCount + 1] = {};
  while (!in.done()) {
    const std::uint8_t id = in.u8();
    const std::uint64_t len = in.u64();
    in.need(len);
    Bytes payload(bytes.begin() + static_cast<std::ptrdiff_t>(in.pos),
                  bytes.begin() + static_cast<std::ptrdiff_t>(in.pos + len));
    in.pos += len;
    const std::uint32_t stored_crc = in.u32();
    if (stored_crc != payload_crc(payload))
      throw Error(ErrorKind::corrupt_checkpoint,
                  "checksum failure in section " + std::to_string(id));
    if (id < 1 || id > kSectionCount)
      throw Error(ErrorKind::corrupt_checkpoint,
                  "unknown section id " + std::to_string(id));
    if (seen[id])
      throw Error(ErrorKind::corrupt_checkpoint,
                  "duplicate section id " + std::to_string(id));
    seen[id] = true;

    Cursor body{payload};
    switch (id) {
      case kConfig: {
        const std::string text(payload.begin(), payload.end());
        try {
          ckpt.config = parse_train_config_text(text);
        } catch (const Error& e) {
          throw Error(ErrorKind::corrupt_checkpoint,
                      std::string("embedded config rejected: ") + e.what());
        }
        body.pos = payload.size();
        break;
      }
      case kQueryParams:
        ckpt.query.layers = decode_layers(body);
        break;
      case kKeyParams:
        ckpt.key.layers = decode_layers(body);
        break;
      case kVelocity:
        ckpt.velocity = decode_layers(body);
        break;
      case kBank: {
        const std::uint64_t capacity = body.u64();
        const std::uint64_t dim = body.u64();
        ckpt.bank.write_ptr = body.u64();
        ckpt.bank.filled = body.u64();
        if (capacity == 0 || dim == 0 || capacity > (1u << 28) ||
            dim > (1u << 24) || ckpt.bank.write_ptr >= capacity ||
            ckpt.bank.filled > capacity)
          throw Error(ErrorKind::corrupt_checkpoint, "implausible bank header");
        ckpt.bank.capacity = capacity;
        ckpt.bank.dim = dim;
        ckpt.bank.storage = Matrix(capacity, dim);
        for (auto& v : ckpt.bank.storage.values) v = body.f64();
        break;
      }
      case kRngState:
        for (auto& word : ckpt.rng_state) word = body.u64();
        break;
      case kProgress: {
        ckpt.step = body.u64();
        ckpt.epoch = body.u64();
        ckpt.epoch_pos = body.u64();
        const std::uint64_t perm_len = body.u64();
        if (perm_len > (1u << 28))
          throw Error(ErrorKind::corrupt_checkpoint, "implausible permutation");
        ckpt.permutation.resize(perm_len);
        for (auto& idx : ckpt.permutation) idx = body.u64();
        break;
      }
      case kStats: {
        ckpt.vector_mode = body.u8();
        const std::uint64_t len = body.u64();
        if (len > (1u << 24))
          throw Error(ErrorKind::corrupt_checkpoint, "implausible stats length");
        ckpt.feature_mean.resize(len);
        for (auto& v : ckpt.feature_mean) v = body.f64();
        ckpt.feature_std.resize(len);
        for (auto& v : ckpt.feature_std) v = body.f64();
        break;
      }
      default:
        break;
    }
    if (!body.done())
      throw Error(ErrorKind::corrupt_checkpoint,
                  "trailing bytes in section " + std::to_string(id));
  }

  for (std::uint8_t id = 1; id <= kSectionCount; ++id)
    if (!seen[id])
      throw Error(ErrorKind::corrupt_checkpoint,
                  "missing section id " + std::to_string(id));

  ckpt.query.spec = ckpt.config.encoder;
  ckpt.key.spec = ckpt.config.encoder;
  check_spec_layers(ckpt.query.spec, ckpt.query.layers);
  check_spec_layers(ckpt.key.spec, ckpt.key.layers);
  check_spec_layers(ckpt.query.spec, ckpt.velocity);
  if (ckpt.bank.dim != ckpt.config.encoder.embedding_dim())
    throw Error(ErrorKind::corrupt_checkpoint,
                "bank dimension disagrees with the stored config");
  return ckpt;
}

}  // namespace mohn
