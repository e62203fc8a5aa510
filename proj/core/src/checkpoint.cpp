#include "mtl/checkpoint.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <zlib.h>

#include "mtl/error.hpp"
#include "mtl/serialization.hpp"
#include "mtl/training.hpp"

namespace mtl {

namespace {

constexpr char kMagic[8] = {'M', 'T', 'L', 'P', 'A', 'R', 'A', 'M'};
constexpr std::uint32_t kBlobVersion = 1;
constexpr int kManifestVersion = 1;

template <typename T>
void put(std::string& out, T value) {
  out.append(reinterpret_cast<const char*>(&value), sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const char> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    T value;
    need(sizeof(T));
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string get_string(std::size_t n) {
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  void read_doubles(std::span<double> dst) {
    need(dst.size_bytes());
    std::memcpy(dst.data(), bytes_.data() + pos_, dst.size_bytes());
    pos_ += dst.size_bytes();
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    require(pos_ + n <= bytes_.size(), ErrorCode::kParse, "parameter blob is truncated");
  }
  std::span<const char> bytes_;
  std::size_t pos_ = 0;
};

std::string read_all(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  require(in.good(), ErrorCode::kIo, "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_all(const std::filesystem::path& p, std::string_view data) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::kIo, "cannot write " + p.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  require(out.good(), ErrorCode::kIo, "failed writing " + p.string());
}

std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof(buf), "%08x", v);
  return buf;
}

}  // namespace

std::uint32_t crc32_of(std::span<const char> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - offset, 1u << 30));
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + offset), chunk);
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void save_checkpoint(const std::filesystem::path& dir, ModelGraph& model, const CheckpointInfo& info) {
  std::string blob(kMagic, sizeof(kMagic));
  put<std::uint32_t>(blob, kBlobVersion);
  const auto params = model.parameters();
  put<std::uint64_t>(blob, params.size());
  nlohmann::json shapes = nlohmann::json::array();
  for (const Parameter* p : params) {
    put<std::uint32_t>(blob, static_cast<std::uint32_t>(p->name.size()));
    blob += p->name;
    put<std::uint64_t>(blob, p->value.rows());
    put<std::uint64_t>(blob, p->value.cols());
    const auto values = p->value.values();
    blob.append(reinterpret_cast<const char*>(values.data()), values.size_bytes());
    shapes.push_back({{"name", p->name}, {"shape", {p->value.rows(), p->value.cols()}}});
  }
  const std::uint32_t crc = crc32_of(blob);
  put<std::uint32_t>(blob, crc);

  nlohmann::json manifest = {
      {"format_version", kManifestVersion},
      {"run_id", info.run_id},
      {"config_snapshot", info.config_snapshot},
      {"epoch", info.epoch},
      {"model", to_json(model.spec())},
      {"parameter_partition", optimizer_partition(model)},
      {"validation_losses", info.validation_losses},
      {"lineage", model.lineage},
      {"parameters", shapes},
      {"blob", {{"file", kBlobFile}, {"crc32", hex32(crc)}, {"bytes", blob.size()}}},
  };
  for (const auto& [k, v] : info.extra.items()) manifest[k] = v;

  const auto parent = dir.parent_path().empty() ? std::filesystem::path(".") : dir.parent_path();
  std::filesystem::create_directories(parent);
  const auto staging = parent / (dir.filename().string() + ".partial");
  std::filesystem::remove_all(staging);
  std::filesystem::create_directories(staging);
  write_all(staging / kBlobFile, blob);
  write_all(staging / kManifestFile, manifest.dump(2));
  std::filesystem::remove_all(dir);
  std::filesystem::rename(staging, dir);
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto manifest = nlohmann::json::parse(read_all(dir / kManifestFile), nullptr, false);
  require(!manifest.is_discarded(), ErrorCode::kParse, (dir / kManifestFile).string() + " is not valid JSON");
  require(manifest.value("format_version", 0) == kManifestVersion, ErrorCode::kParse,
          "unsupported checkpoint manifest version");
  const std::string blob = read_all(dir / manifest.at("blob").value("file", std::string(kBlobFile)));

  require(blob.size() >= sizeof(kMagic) + 4 + 8 + 4, ErrorCode::kChecksum, "parameter blob is too short");
  const std::span<const char> body(blob.data(), blob.size() - 4);
  std::uint32_t stored = 0;
  std::memcpy(&stored, blob.data() + blob.size() - 4, 4);
  const std::uint32_t actual = crc32_of(body);
  require(actual == stored && hex32(actual) == manifest.at("blob").at("crc32").get<std::string>(),
          ErrorCode::kChecksum, "checksum mismatch in " + (dir / kBlobFile).string() + " (stored " + hex32(stored) +
                                    ", computed " + hex32(actual) + ")");

  Reader reader(body);
  require(reader.get_string(sizeof(kMagic)) == std::string(kMagic, sizeof(kMagic)), ErrorCode::kParse,
          "parameter blob has the wrong magic");
  require(reader.get<std::uint32_t>() == kBlobVersion, ErrorCode::kParse, "unsupported parameter blob version");
  const auto count = reader.get<std::uint64_t>();

  std::map<std::string, Matrix> tensors;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name = reader.get_string(reader.get<std::uint32_t>());
    const auto rows = reader.get<std::uint64_t>();
    const auto cols = reader.get<std::uint64_t>();
    Matrix m(rows, cols);
    reader.read_doubles(m.values());
    require(tensors.emplace(name, std::move(m)).second, ErrorCode::kParse, "duplicate tensor " + name);
  }
  require(reader.remaining() == 0, ErrorCode::kParse, "trailing bytes in parameter blob");

  ModelGraph model(model_spec_from_json(manifest.at("model")), false);
  auto params = model.parameters();
  require(params.size() == tensors.size(), ErrorCode::kShapeMismatch,
          "manifest graph has " + std::to_string(params.size()) + " tensors, blob has " +
              std::to_string(tensors.size()));
  for (Parameter* p : params) {
    auto it = tensors.find(p->name);
    require(it != tensors.end(), ErrorCode::kShapeMismatch, "blob lacks tensor " + p->name);
    require(it->second.same_shape(p->value), ErrorCode::kShapeMismatch,
            "tensor " + p->name + " shape differs between manifest graph and blob");
  }
  for (Parameter* p : params) {
    p->value = std::move(tensors.at(p->name));
    p->zero_grad();
  }
  model.lineage = manifest.value("lineage", std::string{});
  return {manifest, std::move(model)};
}

}  // namespace mtl
