#include "tscl/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "tscl/error.hpp"

namespace tscl {

void ModelConfig::validate() const {
  encoder.validate();
  TSCL_REQUIRE(projection_hidden >= 1 && projection_dim >= 1 && predictor_hidden >= 1,
               ArgumentError, "model: head widths must be >= 1");
}

nlohmann::json to_json(const ModelConfig& cfg) {
  return {{"in_channels", cfg.encoder.in_channels},
          {"block_filters", cfg.encoder.block_filters},
          {"kernel_sizes", cfg.encoder.kernel_sizes},
          {"bn_momentum", cfg.encoder.bn_momentum},
          {"bn_eps", cfg.encoder.bn_eps},
          {"projection_hidden", cfg.projection_hidden},
          {"projection_dim", cfg.projection_dim},
          {"predictor_hidden", cfg.predictor_hidden}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig cfg;
    cfg.encoder.in_channels = j.at("in_channels").get<nn::Index>();
    cfg.encoder.block_filters = j.at("block_filters").get<std::vector<nn::Index>>();
    cfg.encoder.kernel_sizes = j.at("kernel_sizes").get<std::vector<nn::Index>>();
    cfg.encoder.bn_momentum = j.at("bn_momentum").get<double>();
    cfg.encoder.bn_eps = j.at("bn_eps").get<double>();
    cfg.projection_hidden = j.at("projection_hidden").get<nn::Index>();
    cfg.projection_dim = j.at("projection_dim").get<nn::Index>();
    cfg.predictor_hidden = j.at("predictor_hidden").get<nn::Index>();
    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model config: ") + e.what());
  }
}

const NamedBlob* Checkpoint::find(const std::string& name) const {
  for (const auto& b : blobs)
    if (b.name == name) return &b;
  return nullptr;
}

namespace {

constexpr char kMagic[4] = {'T', 'S', 'C', 'K'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}
  std::uint32_t u32() {
    need(4);
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += 4;
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CorruptionError("checkpoint: truncated");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

void put_blob(std::vector<std::uint8_t>& out, const std::string& name,
              const nn::Matrix<float>& value) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.insert(out.end(), name.begin(), name.end());
  put_u32(out, 2);
  put_u32(out, static_cast<std::uint32_t>(value.rows()));
  put_u32(out, static_cast<std::uint32_t>(value.cols()));
  for (nn::Index i = 0; i < value.size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(value.data()[i]));
}

void copy_into(const NamedBlob& blob, nn::Matrix<float>& dst) {
  if (blob.shape.size() != 2 || static_cast<nn::Index>(blob.shape[0]) != dst.rows() ||
      static_cast<nn::Index>(blob.shape[1]) != dst.cols())
    throw ValidationError("checkpoint: shape mismatch for '" + blob.name + "'");
  std::copy(blob.data.begin(), blob.data.end(), dst.data());
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const nlohmann::json& config,
                                            const nn::ConstParamRefs<float>& refs) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kCheckpointVersion);
  const std::string text = config.dump();
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  put_u32(out, static_cast<std::uint32_t>(refs.params.size() + refs.buffers.size()));
  for (const auto* p : refs.params) put_blob(out, p->name, p->value);
  for (const auto* b : refs.buffers) put_blob(out, b->name, b->value);
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError("checkpoint: bad magic (expected \"TSCK\")");
  Reader r(bytes);
  r.str(4);
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint ckpt;
  try {
    ckpt.config = nlohmann::json::parse(r.str(r.u32()));
  } catch (const nlohmann::json::parse_error& e) {
    throw CorruptionError(std::string("checkpoint: config is not valid JSON: ") + e.what());
  }
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedBlob blob;
    blob.name = r.str(r.u32());
    const auto ndim = r.u32();
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      blob.shape.push_back(r.u32());
      n *= blob.shape.back();
    }
    blob.data.resize(n);
    for (auto& v : blob.data) v = std::bit_cast<float>(r.u32());
    ckpt.blobs.push_back(std::move(blob));
  }
  if (!r.done()) throw CorruptionError("checkpoint: trailing bytes");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& config,
                     const nn::ConstParamRefs<float>& refs) {
  const auto bytes = encode_checkpoint(config, refs);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

void assign_checkpoint(const Checkpoint& ckpt, nn::ParamRefs<float>& refs, bool allow_extra) {
  std::size_t used = 0;
  for (auto* p : refs.params) {
    const auto* blob = ckpt.find(p->name);
    if (!blob) throw ValidationError("checkpoint: missing parameter '" + p->name + "'");
    copy_into(*blob, p->value);
    ++used;
  }
  for (auto* b : refs.buffers) {
    const auto* blob = ckpt.find(b->name);
    if (!blob) throw ValidationError("checkpoint: missing buffer '" + b->name + "'");
    copy_into(*blob, b->value);
    ++used;
  }
  if (!allow_extra && used != ckpt.blobs.size())
    throw ValidationError("checkpoint: contains entries not present in the model");
}

SslModel<float> ssl_model_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.config.contains("model")) throw FormatError("checkpoint: config lacks 'model'");
  const auto cfg = model_config_from_json(ckpt.config.at("model"));
  bool with_predictor = false;
  if (ckpt.config.contains("framework"))
    with_predictor = ckpt.config.at("framework").get<std::string>() == "byol";
  RngStream rng(0, 0);
  SslModel<float> model(cfg, with_predictor, rng);
  nn::ParamRefs<float> refs;
  model.collect(refs);
  assign_checkpoint(ckpt, refs, false);
  return model;
}

}  // namespace tscl
