#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>

#include "etcon/io.hpp"
#include "etcon/tensor.hpp"

namespace etcon {

// On-disk layout: one little-endian row-major f64 file per tensor plus
// manifest.json mapping name -> {shape, file, target}.
struct TensorBundle {
  std::map<std::string, Tensor> tensors;
  std::set<std::string> target;
  io::json extra = io::json::object();
};

void save_bundle(const std::filesystem::path& dir, const TensorBundle& bundle);
TensorBundle load_bundle(const std::filesystem::path& dir, bool requires_grad = true);

}  // namespace etcon
