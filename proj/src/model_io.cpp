#include "lichw/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "container.hpp"
#include "lichw/error.hpp"

namespace lichw {

namespace detail {

void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

Bytes floats_to_bytes(std::span<const float> values) {
  Bytes out;
  out.reserve(values.size() * 4);
  for (float f : values) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

std::vector<float> bytes_to_floats(const Bytes& bytes, std::size_t expected, const std::string& what) {
  if (bytes.size() != expected * 4) {
    throw MalformedHeaderError(what + ": payload holds " + std::to_string(bytes.size()) +
                               " bytes, header implies " + std::to_string(expected * 4));
  }
  std::vector<float> out(expected);
  for (std::size_t i = 0; i < expected; ++i) out[i] = std::bit_cast<float>(get_u32(&bytes[4 * i]));
  return out;
}

Bytes encode_container(const Container& c) {
  const std::string header = c.header.dump();
  Bytes out(std::begin(kContainerMagic), std::end(kContainerMagic));
  put_u32(out, kModelFormatVersion);
  put_u64(out, header.size());
  out.insert(out.end(), header.begin(), header.end());
  for (const auto& p : c.payloads) {
    put_u64(out, p.size());
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

Container decode_container(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16) throw TruncatedError("model file shorter than its 16-byte preamble");
  if (std::memcmp(bytes.data(), kContainerMagic, 4) != 0) {
    throw MalformedHeaderError("bad magic: not a model container");
  }
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kModelFormatVersion) {
    throw VersionMismatchError("model container version " + std::to_string(version) +
                               ", this build reads version " + std::to_string(kModelFormatVersion));
  }
  const std::uint64_t header_len = get_u64(bytes.data() + 8);
  std::size_t pos = 16;
  if (header_len > bytes.size() - pos) throw TruncatedError("model header truncated");
  Container c;
  try {
    c.header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                     bytes.begin() + static_cast<std::ptrdiff_t>(pos + header_len));
  } catch (const nlohmann::json::exception& e) {
    throw MalformedHeaderError(std::string("model header is not valid JSON: ") + e.what());
  }
  if (!c.header.is_object()) throw MalformedHeaderError("model header is not a JSON object");
  pos += header_len;
  while (pos < bytes.size()) {
    if (bytes.size() - pos < 8) throw TruncatedError("payload length prefix truncated");
    const std::uint64_t len = get_u64(bytes.data() + pos);
    pos += 8;
    if (len > bytes.size() - pos) {
      throw TruncatedError("payload " + std::to_string(c.payloads.size()) + " declares " +
                           std::to_string(len) + " bytes, " + std::to_string(bytes.size() - pos) +
                           " remain");
    }
    c.payloads.emplace_back(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                            bytes.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return c;
}

}  // namespace detail

using detail::field;

Bytes save_model(const ModelSpec& model) {
  model.validate();
  detail::Container c;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : model.layers) {
    nlohmann::json jl = {{"kind", to_string(l.kind)},
                         {"in_channels", l.in_channels},
                         {"out_channels", l.out_channels},
                         {"kernel", l.kernel},
                         {"stride", l.stride},
                         {"padding", l.padding}};
    if (l.is_conv_like()) {
      c.payloads.push_back(detail::floats_to_bytes(l.weights));
      c.payloads.push_back(detail::floats_to_bytes(l.bias));
    } else if (l.is_gdn_like()) {
      jl["alpha"] = l.gdn->alpha;
      c.payloads.push_back(detail::floats_to_bytes(l.gdn->beta));
      c.payloads.push_back(detail::floats_to_bytes(l.gdn->gamma));
    }
    layers.push_back(std::move(jl));
  }
  c.header = {{"format", "lic-model"},
              {"payload", "float32"},
              {"name", model.name},
              {"role", to_string(model.role)},
              {"bit_widths", model.bit_widths},
              {"layers", std::move(layers)}};
  return detail::encode_container(c);
}

ModelSpec load_model(std::span<const std::uint8_t> bytes) {
  detail::Container c = detail::decode_container(bytes);
  if (field<std::string>(c.header, "format") != "lic-model" ||
      field<std::string>(c.header, "payload") != "float32") {
    throw MalformedHeaderError("container does not hold a float model");
  }
  ModelSpec model;
  model.name = field<std::string>(c.header, "name");
  try {
    model.role = parse_model_role(field<std::string>(c.header, "role"));
  } catch (const ParameterError& e) {
    throw MalformedHeaderError(e.what());
  }
  model.bit_widths = field<std::vector<int>>(c.header, "bit_widths");
  const auto layers = field<nlohmann::json>(c.header, "layers");
  if (!layers.is_array()) throw MalformedHeaderError("'layers' is not an array");
  std::size_t next_payload = 0;
  auto take = [&](std::size_t count, const std::string& what) {
    if (next_payload >= c.payloads.size()) {
      throw TruncatedError("missing payload for " + what);
    }
    return detail::bytes_to_floats(c.payloads[next_payload++], count, what);
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& jl = layers[i];
    LayerSpec l;
    try {
      l.kind = parse_layer_kind(field<std::string>(jl, "kind"));
    } catch (const ParameterError& e) {
      throw MalformedHeaderError(e.what());
    }
    l.in_channels = field<std::size_t>(jl, "in_channels");
    l.out_channels = field<std::size_t>(jl, "out_channels");
    l.kernel = field<std::size_t>(jl, "kernel");
    l.stride = field<std::size_t>(jl, "stride");
    l.padding = field<std::size_t>(jl, "padding");
    const std::string what = "layer " + std::to_string(i);
    if (l.is_conv_like()) {
      l.weights = take(l.out_channels * l.in_channels * l.kernel * l.kernel, what + " weights");
      l.bias = take(l.out_channels, what + " bias");
    } else if (l.is_gdn_like()) {
      GdnParams p;
      p.alpha = field<double>(jl, "alpha");
      p.beta = take(l.in_channels, what + " beta");
      p.gamma = take(l.in_channels * l.in_channels, what + " gamma");
      l.gdn = std::move(p);
    }
    model.layers.push_back(std::move(l));
  }
  if (next_payload != c.payloads.size()) {
    throw MalformedHeaderError(std::to_string(c.payloads.size() - next_payload) +
                               " payloads not described by the header");
  }
  try {
    model.validate();
  } catch (const Error& e) {
    throw MalformedHeaderError(std::string("decoded model is invalid: ") + e.what());
  }
  return model;
}

Bytes save_tensor(const Tensor& tensor) {
  const Dims d = tensor.dims();
  Bytes out;
  out.reserve(16 + tensor.size() * 4);
  for (std::size_t e : {d.n, d.c, d.h, d.w}) {
    if (e > 0xffffffffu) throw DimensionError("tensor extent does not fit in 32 bits");
    detail::put_u32(out, static_cast<std::uint32_t>(e));
  }
  for (float f : tensor.data()) detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

Tensor load_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16) throw TruncatedError("tensor file shorter than its 16-byte header");
  const Dims d{detail::get_u32(bytes.data()), detail::get_u32(bytes.data() + 4),
               detail::get_u32(bytes.data() + 8), detail::get_u32(bytes.data() + 12)};
  const unsigned __int128 count = static_cast<unsigned __int128>(d.n) * d.c * d.h * d.w;
  const std::size_t available = (bytes.size() - 16) / 4;
  if ((bytes.size() - 16) % 4 != 0) {
    throw MalformedHeaderError("tensor payload is not a whole number of float32 values");
  }
  if (count > available) {
    throw TruncatedError("tensor " + d.str() + " needs " + std::to_string(static_cast<std::uint64_t>(count)) +
                         " values, file holds " + std::to_string(available));
  }
  if (count < available) throw MalformedHeaderError("trailing bytes after tensor payload");
  std::vector<float> data(d.count());
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = std::bit_cast<float>(detail::get_u32(bytes.data() + 16 + 4 * i));
  }
  return Tensor(d, std::move(data));
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

}  // namespace lichw
