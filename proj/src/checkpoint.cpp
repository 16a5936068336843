#include "token2vec/detail/binary_io.hpp"
#include "token2vec/errors.hpp"
#include "token2vec/model.hpp"

namespace token2vec {

namespace {

constexpr std::uint32_t kFlagFinalLayerNorm = 1u << 0;
constexpr std::uint32_t kFlagStrictEquation = 1u << 1;

}  // namespace

void save_model(const std::string& path, const JointModel& model, std::uint64_t step) {
  const auto& c = model.config();
  const auto params = model.parameters();
  detail::ByteWriter header;
  header.bytes("TV2M");
  header.u32(kModelFileVersion);
  header.u32(static_cast<std::uint32_t>(c.d_model));
  header.u32(static_cast<std::uint32_t>(c.layers));
  header.u32(static_cast<std::uint32_t>(c.heads));
  header.u32(static_cast<std::uint32_t>(c.mlp_dim));
  header.u32(static_cast<std::uint32_t>(c.speech_vocab));
  header.u32(static_cast<std::uint32_t>(c.text_vocab));
  header.u32(static_cast<std::uint32_t>(c.max_len));
  header.f64(c.tau);
  header.f64(c.ln_eps);
  header.f64(c.init_std);
  header.u32((c.final_layer_norm ? kFlagFinalLayerNorm : 0) | (c.strict_equation ? kFlagStrictEquation : 0));
  header.u64(step);
  header.u32(static_cast<std::uint32_t>(params.size()));

  // Index size is known up front, so data offsets can be written in one pass.
  std::size_t index_bytes = 0;
  for (const auto& p : params) index_bytes += 4 + p.name.size() + 4 + 4 * p.value.dim() + 8;
  std::uint64_t offset = header.size() + index_bytes;
  detail::ByteWriter index;
  for (const auto& p : params) {
    index.str(p.name);
    index.u32(static_cast<std::uint32_t>(p.value.dim()));
    for (auto s : p.value.shape()) index.u32(static_cast<std::uint32_t>(s));
    index.u64(offset);
    offset += 4 * p.value.numel();
  }
  detail::ByteWriter data;
  for (const auto& p : params)
    for (double v : p.value.data()) data.f32(static_cast<float>(v));

  std::vector<char> bytes = header.buffer();
  bytes.insert(bytes.end(), index.buffer().begin(), index.buffer().end());
  bytes.insert(bytes.end(), data.buffer().begin(), data.buffer().end());
  detail::write_file_bytes(path, bytes);
}

JointModel load_model(const std::string& path, std::uint64_t* step) {
  const auto bytes = detail::read_file_bytes(path);
  detail::ByteReader in(bytes, "model checkpoint " + path);
  in.expect_magic("TV2M");
  const auto version = in.u32("version");
  if (version != kModelFileVersion) in.fail("unsupported version " + std::to_string(version));
  ModelConfig c;
  c.d_model = in.u32("d_model");
  c.layers = in.u32("layers");
  c.heads = in.u32("heads");
  c.mlp_dim = in.u32("mlp_dim");
  c.speech_vocab = in.u32("speech_vocab");
  c.text_vocab = in.u32("text_vocab");
  c.max_len = in.u32("max_len");
  c.tau = in.f64("tau");
  c.ln_eps = in.f64("ln_eps");
  c.init_std = in.f64("init_std");
  const auto flags = in.u32("flags");
  c.final_layer_norm = (flags & kFlagFinalLayerNorm) != 0;
  c.strict_equation = (flags & kFlagStrictEquation) != 0;
  const auto saved_step = in.u64("step");
  if (step != nullptr) *step = saved_step;
  try {
    c.validate();
  } catch (const ConfigError& e) {
    in.fail(std::string("invalid config block: ") + e.what());
  }
  const auto count = in.u32("parameter count");
  struct Entry {
    std::string name;
    Shape shape;
    std::uint64_t offset;
  };
  std::vector<Entry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    e.name = in.str("parameter name");
    const auto ndim = in.u32("ndim");
    for (std::uint32_t k = 0; k < ndim; ++k) e.shape.push_back(in.u32("dim"));
    e.offset = in.u64("data offset");
    entries.push_back(std::move(e));
  }
  std::vector<NamedParam> params;
  for (const auto& e : entries) {
    in.seek(e.offset);
    std::vector<double> values(shape_numel(e.shape));
    for (auto& v : values) v = in.f32(e.name.c_str());
    params.push_back({e.name, Tensor(e.shape, std::move(values))});
  }
  return model_from_parameters(c, params);
}

}  // namespace token2vec
