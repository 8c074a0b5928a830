#pragma once

// Netpbm image I/O. RGB images are tensors [3, H, W] with values in [0, 1].

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lavse/tensor.hpp"

namespace lavse::image {

// Binary P6, maxval 255.
std::vector<std::uint8_t> encode_ppm(const nn::Tensor& rgb);
nn::Tensor decode_ppm(std::span<const std::uint8_t> bytes);
void write_ppm(const std::filesystem::path& path, const nn::Tensor& rgb);
nn::Tensor read_ppm(const std::filesystem::path& path);

// Binary P5 from a [H, W] tensor in [0, 1].
void write_pgm(const std::filesystem::path& path, const nn::Tensor& gray);

// round(clamp(v, 0, 1) * 255)
std::uint8_t to_byte(double v);

}  // namespace lavse::image
