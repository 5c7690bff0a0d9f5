#pragma once

#include <string>
#include <vector>

#include "druformer/tensor.hpp"

namespace druformer {

// Binary PPM (P6, maxval 255). Tensors are [3 x H x W] in [0,1]; writing
// quantizes to 8 bits, so write-then-read is the canonical pixel value.
void write_ppm(const std::string& path, const Tensor& image);
Tensor read_ppm(const std::string& path);

// Raw interleaved RGB bytes, for caching image sets compactly.
std::vector<uint8_t> read_ppm_raw(const std::string& path, int* h, int* w);
Tensor ppm_raw_to_tensor(const std::vector<uint8_t>& rgb, int h, int w);

// Binary PGM (P5) from a row-major matrix, linearly min-max scaled to 0..255.
void write_pgm_scaled(const std::string& path, const std::vector<double>& values, int rows,
                      int cols);
std::vector<uint8_t> read_pgm(const std::string& path, int* rows, int* cols);

// Matrix CSV with fixed 6-decimal cells; optional leading '#' comment line.
void write_csv_matrix(const std::string& path, const std::vector<double>& values, int rows,
                      int cols, const std::string& comment = "");
std::vector<double> read_csv_matrix(const std::string& path, int* rows, int* cols);

}  // namespace druformer
