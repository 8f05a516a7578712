#pragma once

#include <filesystem>
#include <string>

#include "sdr/tensor.hpp"

namespace sdr::io {

/// Writes bytes to a sibling temp file, then renames it over path.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

/// PFM: "Pf" (H×W) or "PF" (3×H×W, stored interleaved), "W H", scale -1.0
/// (little-endian), float32 rows bottom to top.
std::string encode_pfm(const Tensor<float>& t);
Tensor<float> decode_pfm(const std::string& bytes, const std::string& origin = "<memory>");
void write_pfm(const std::filesystem::path& path, const Tensor<float>& t);
Tensor<float> read_pfm(const std::filesystem::path& path);

/// Sparse depth as "row,col,depth_m" lines sorted by (row, col), with a header.
std::string encode_sparse_csv(const Tensor<float>& sparse);
/// Header line optional; blank lines ignored; errors name the line number.
Tensor<float> decode_sparse_csv(const std::string& text, int H, int W, const std::string& origin = "<memory>");
void write_sparse_csv(const std::filesystem::path& path, const Tensor<float>& sparse);
Tensor<float> read_sparse_csv(const std::filesystem::path& path, int H, int W);

/// 8-bit grayscale PNG of |pred - gt| over gt > 0, scaled so the largest error
/// is white. Pixels without ground truth are black.
std::string encode_error_png(const Tensor<float>& pred, const Tensor<float>& gt);
void write_error_png(const std::filesystem::path& path, const Tensor<float>& pred, const Tensor<float>& gt);

}  // namespace sdr::io
