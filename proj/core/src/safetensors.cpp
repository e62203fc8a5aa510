#include "mtl/safetensors.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mtl/error.hpp"

namespace mtl {

namespace {

static_assert(std::endian::native == std::endian::little, "safetensors payloads are little-endian");

double half_to_double(std::uint16_t h) {
  const std::uint32_t sign = (h >> 15) & 1u;
  const std::uint32_t exp = (h >> 10) & 0x1fu;
  const std::uint32_t mant = h & 0x3ffu;
  double v = 0.0;
  if (exp == 0) {
    v = std::ldexp(static_cast<double>(mant), -24);
  } else if (exp == 31) {
    v = mant == 0 ? std::numeric_limits<double>::infinity() : std::numeric_limits<double>::quiet_NaN();
  } else {
    v = std::ldexp(static_cast<double>(mant | 0x400u), static_cast<int>(exp) - 25);
  }
  return sign ? -v : v;
}

double bf16_to_double(std::uint16_t b) {
  const std::uint32_t bits = static_cast<std::uint32_t>(b) << 16;
  return static_cast<double>(std::bit_cast<float>(bits));
}

}  // namespace

std::map<std::string, NamedTensor> read_safetensors(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  require(in.good(), ErrorCode::kIo, "cannot open " + file.string());
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  require(in.good() && header_len < (1ULL << 30), ErrorCode::kParse, "bad safetensors header in " + file.string());
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const auto meta = nlohmann::json::parse(header, nullptr, false);
  require(!meta.is_discarded() && meta.is_object(), ErrorCode::kParse, "safetensors header is not a JSON object");

  std::map<std::string, NamedTensor> out;
  for (const auto& [name, info] : meta.items()) {
    if (name == "__metadata__") continue;
    const std::string dtype = info.at("dtype").get<std::string>();
    const auto shape = info.at("shape").get<std::vector<std::int64_t>>();
    const auto offsets = info.at("data_offsets").get<std::vector<std::uint64_t>>();
    require(offsets.size() == 2 && offsets[0] <= offsets[1] && offsets[1] <= payload.size(), ErrorCode::kParse,
            "tensor " + name + " has invalid data offsets");
    require(shape.size() == 1 || shape.size() == 2, ErrorCode::kParse, "tensor " + name + " is not rank 1 or 2");
    const std::size_t rows = shape.size() == 2 ? static_cast<std::size_t>(shape[0]) : 1;
    const std::size_t cols = static_cast<std::size_t>(shape.back());
    const std::size_t count = rows * cols;
    const char* src = payload.data() + offsets[0];
    const std::size_t bytes = offsets[1] - offsets[0];

    Matrix data(rows, cols);
    auto check = [&](std::size_t width) {
      require(bytes == count * width, ErrorCode::kParse, "tensor " + name + " byte size does not match its shape");
    };
    if (dtype == "F64") {
      check(8);
      std::memcpy(data.values().data(), src, bytes);
    } else if (dtype == "F32") {
      check(4);
      for (std::size_t i = 0; i < count; ++i) {
        float f;
        std::memcpy(&f, src + 4 * i, 4);
        data[i] = f;
      }
    } else if (dtype == "F16" || dtype == "BF16") {
      check(2);
      for (std::size_t i = 0; i < count; ++i) {
        std::uint16_t h;
        std::memcpy(&h, src + 2 * i, 2);
        data[i] = dtype == "F16" ? half_to_double(h) : bf16_to_double(h);
      }
    } else {
      fail(ErrorCode::kParse, "tensor " + name + " has unsupported dtype " + dtype);
    }
    out.emplace(name, NamedTensor{shape, std::move(data)});
  }
  return out;
}

void write_safetensors(const std::filesystem::path& file, const std::map<std::string, NamedTensor>& tensors) {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<char> payload;
  for (const auto& [name, tensor] : tensors) {
    const std::uint64_t begin = payload.size();
    for (double v : tensor.data.values()) {
      const float f = static_cast<float>(v);
      const char* p = reinterpret_cast<const char*>(&f);
      payload.insert(payload.end(), p, p + 4);
    }
    meta[name] = {{"dtype", "F32"}, {"shape", tensor.shape}, {"data_offsets", {begin, payload.size()}}};
  }
  const std::string header = meta.dump();
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::kIo, "cannot write " + file.string());
  const std::uint64_t len = header.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
}

}  // namespace mtl
