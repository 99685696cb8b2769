#pragma once

// Shared framing for the float and quantized model files.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lichw/error.hpp"
#include "lichw/model_io.hpp"

namespace lichw::detail {

inline constexpr char kContainerMagic[4] = {'L', 'I', 'C', 'M'};

struct Container {
  nlohmann::json header;
  std::vector<Bytes> payloads;
};

Bytes encode_container(const Container& c);
Container decode_container(std::span<const std::uint8_t> bytes);

void put_u32(Bytes& out, std::uint32_t v);
void put_u64(Bytes& out, std::uint64_t v);
std::uint32_t get_u32(const std::uint8_t* p);
std::uint64_t get_u64(const std::uint8_t* p);

Bytes floats_to_bytes(std::span<const float> values);
std::vector<float> bytes_to_floats(const Bytes& bytes, std::size_t expected, const std::string& what);

/// Fetches a required header field, raising MalformedHeaderError when absent or mistyped.
template <typename T>
T field(const nlohmann::json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw MalformedHeaderError(std::string("header missing field '") + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw MalformedHeaderError(std::string("header field '") + key + "' has the wrong type");
  }
}

}  // namespace lichw::detail
