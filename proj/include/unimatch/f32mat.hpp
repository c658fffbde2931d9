#pragma once

#include "unimatch/types.hpp"

#include <filesystem>
#include <iosfwd>

namespace unimatch {

// F32MAT: "F32M", u32 rows, u32 cols, u32 reserved (all little-endian), then
// rows*cols little-endian float32 values in row-major order. F64M is the same
// layout with float64 payload, used for optimizer state and caches.

Mat read_f32mat(std::istream& in, const std::string& origin = "<stream>");
Mat read_f32mat(const std::filesystem::path& path);
void write_f32mat(std::ostream& out, const Mat& values);
void write_f32mat(const std::filesystem::path& path, const Mat& values);

Mat read_f64mat(std::istream& in, const std::string& origin = "<stream>");
void write_f64mat(std::ostream& out, const Mat& values);

/// Rounds every entry to the nearest float32 (the F32MAT storage precision).
Mat round_to_f32(const Mat& values);

} // namespace unimatch
