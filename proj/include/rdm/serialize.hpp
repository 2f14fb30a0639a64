#pragma once

#include <filesystem>

#include "rdm/autodiff.hpp"
#include "rdm/io.hpp"
#include "rdm/tensor.hpp"

namespace rdm {

// Parameter checkpoint, magic RDMW: version u32, count u32, then per-parameter
// records of (length-prefixed name, rank u8, dims u32 x rank, f32 data).
void save_params(const ParamStore& params, const std::filesystem::path& path);
ParamStore load_params(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_params(const ParamStore& params);
ParamStore decode_params(const std::vector<std::uint8_t>& data, const std::string& source);

// Sample batch, magic RDMS: version u32, count u32, rank u8, per-sample dims
// u32 x rank, then count * prod(dims) f32 values.
void save_samples(const std::vector<Tensor>& samples, const std::filesystem::path& path);
std::vector<Tensor> load_samples(const std::filesystem::path& path);

}  // namespace rdm
