#include "etcon/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>

namespace etcon {

namespace {

std::string encode_le(std::span<const double> values) {
  std::string out(values.size() * 8, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) out[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xffu);
  }
  return out;
}

std::vector<double> decode_le(const std::string& bytes) {
  if (bytes.size() % 8 != 0) throw io::IoError("tensor file size is not a multiple of 8");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i * 8 + b])) << (8 * b);
    }
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

}  // namespace

void save_bundle(const std::filesystem::path& dir, const TensorBundle& bundle) {
  std::filesystem::create_directories(dir);
  io::json manifest;
  manifest["format"] = "etcon-f64-le";
  io::json params = io::json::object();
  for (const auto& [name, t] : bundle.tensors) {
    const std::string file = name + ".bin";
    io::atomic_write(dir / file, encode_le(t.values()));
    params[name] = {{"shape", t.shape()}, {"file", file}, {"target", bundle.target.count(name) > 0}};
  }
  manifest["params"] = params;
  manifest["extra"] = bundle.extra;
  io::atomic_write(dir / "manifest.json", manifest.dump(2));
}

TensorBundle load_bundle(const std::filesystem::path& dir, bool requires_grad) {
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) throw io::IoError("missing " + manifest_path.string());
  const auto manifest = io::json::parse(io::read_file(manifest_path));
  TensorBundle bundle;
  for (const auto& [name, entry] : manifest.at("params").items()) {
    Shape shape = entry.at("shape").get<Shape>();
    auto values = decode_le(io::read_file(dir / entry.at("file").get<std::string>()));
    if (values.size() != numel_of(shape)) throw io::IoError("tensor " + name + " has wrong element count");
    bundle.tensors.emplace(name, Tensor::from(std::move(shape), std::move(values), requires_grad));
    if (entry.at("target").get<bool>()) bundle.target.insert(name);
  }
  if (manifest.contains("extra")) bundle.extra = manifest.at("extra");
  return bundle;
}

}  // namespace etcon
