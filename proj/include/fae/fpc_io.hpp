#pragma once

#include <string>
#include <vector>

#include "fae/mesh.hpp"

namespace fae {

// Functional Point Cloud container, binary little-endian.
//
//   "FPCD"  u32 version=1  u32 d  u32 m
//   f64 box bounds, per axis lo then hi (2d values)
//   u8 periodic flag per axis (d values)
//   u64 sample count
//   per sample: u32 I, I*d f64 coords (point-major), I*m f64 values (point-major)
//
// All samples in a file share one domain and channel count; point counts vary.
void write_fpc(const std::string& path, const std::vector<PointCloudFunction>& samples);
std::vector<PointCloudFunction> read_fpc(const std::string& path);

// JSON-lines mirror: a header object {"d","m","lo","hi","periodic"} followed by
// one {"x": [[...]], "u": [[...]]} object per sample (point-major, like the
// binary layout). Doubles survive both directions bit-exactly.
void write_jsonl(const std::string& path, const std::vector<PointCloudFunction>& samples);
std::vector<PointCloudFunction> read_jsonl(const std::string& path);

}  // namespace fae
