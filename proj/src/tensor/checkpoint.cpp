#include "mipilot/tensor/checkpoint.hpp"

#include "mipilot/binary_io.hpp"

namespace mipilot::tensor {

namespace {
constexpr std::string_view kMagic = "MIWT";
constexpr std::uint16_t kVersion = 1;
}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out;
  io::put_bytes(out, kMagic);
  io::put<std::uint16_t>(out, kVersion);
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.config_text.size()));
  io::put_bytes(out, ckpt.config_text);
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    io::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    io::put_bytes(out, t.name);
    io::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) io::put<std::uint64_t>(out, d);
    io::put<std::uint8_t>(out, static_cast<std::uint8_t>(t.dtype));
    std::visit(
        [&](const auto& values) {
          if (values.size() != element_count(t.shape))
            throw ShapeError("checkpoint tensor '" + t.name + "' does not match its shape");
          for (auto v : values) io::put(out, v);
        },
        t.values);
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  io::Reader in(bytes, "checkpoint");
  in.expect_magic(kMagic);
  const auto version = in.get<std::uint16_t>();
  if (version != kVersion)
    in.fail("unsupported version " + std::to_string(version), in.offset() - 2);
  Checkpoint ckpt;
  ckpt.config_text = in.get_string(in.get<std::uint32_t>());
  const auto count = in.get<std::uint32_t>();
  for (std::uint32_t k = 0; k < count; ++k) {
    StoredTensor t;
    t.name = in.get_string(in.get<std::uint32_t>());
    const auto rank = in.get<std::uint32_t>();
    if (rank > 8) in.fail("implausible tensor rank " + std::to_string(rank), in.offset() - 4);
    for (std::uint32_t r = 0; r < rank; ++r) t.shape.push_back(in.get<std::uint64_t>());
    const auto dtype_at = in.offset();
    const auto dtype = in.get<std::uint8_t>();
    const std::size_t n = element_count(t.shape);
    if (dtype == static_cast<std::uint8_t>(DType::f32)) {
      t.dtype = DType::f32;
      in.need(n * sizeof(float), "tensor '" + t.name + "'");
      std::vector<float> v(n);
      for (auto& x : v) x = in.get<float>();
      t.values = std::move(v);
    } else if (dtype == static_cast<std::uint8_t>(DType::f64)) {
      t.dtype = DType::f64;
      in.need(n * sizeof(double), "tensor '" + t.name + "'");
      std::vector<double> v(n);
      for (auto& x : v) x = in.get<double>();
      t.values = std::move(v);
    } else {
      in.fail("unknown dtype byte " + std::to_string(dtype), dtype_at);
    }
    ckpt.tensors.push_back(std::move(t));
  }
  if (in.remaining() != 0) in.fail("trailing bytes", in.offset());
  return ckpt;
}

template <Real S>
Checkpoint snapshot(const ParameterStore<S>& params, std::string config_text) {
  Checkpoint ckpt;
  ckpt.config_text = std::move(config_text);
  for (const auto& p : params) {
    std::vector<S> values(p->value.values().begin(), p->value.values().end());
    ckpt.tensors.push_back({p->name, p->value.shape(), dtype_of<S>, std::move(values)});
  }
  return ckpt;
}

template <Real S>
void restore(ParameterStore<S>& params, const Checkpoint& ckpt) {
  for (auto& p : params) {
    const StoredTensor* found = nullptr;
    for (const auto& t : ckpt.tensors)
      if (t.name == p->name) found = &t;
    if (!found) throw FormatError("checkpoint lacks parameter '" + p->name + "'");
    if (found->shape != p->value.shape())
      throw FormatError("checkpoint parameter '" + p->name + "' has shape " +
                        to_string(found->shape) + ", model expects " +
                        to_string(p->value.shape()));
    std::visit(
        [&](const auto& values) {
          for (std::size_t i = 0; i < values.size(); ++i) p->value[i] = static_cast<S>(values[i]);
        },
        found->values);
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  io::write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(io::read_file(path)); }

template Checkpoint snapshot<float>(const ParameterStore<float>&, std::string);
template Checkpoint snapshot<double>(const ParameterStore<double>&, std::string);
template void restore<float>(ParameterStore<float>&, const Checkpoint&);
template void restore<double>(ParameterStore<double>&, const Checkpoint&);

}  // namespace mipilot::tensor
