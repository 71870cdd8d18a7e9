#pragma once

#include <string>

#include "topokd/pointcloud.hpp"

namespace topokd::io {

/// Columnar text: one point per line, "x y z [intensity] [label]".
/// A leading "# fields: ..." comment records which optional columns exist.
void save_cloud_text(const pc::PointCloud& cloud, const std::string& path);
pc::PointCloud load_cloud_text(const std::string& path);

/// Little-endian binary layout. 16-byte header: magic "TKPC", u32 version,
/// u32 N, u32 field mask (bit 0 intensity, bit 1 labels). Body: N*3 f64
/// coords, then N f64 intensities when present, then u32 class count and
/// N u32 labels when present.
void save_cloud_binary(const pc::PointCloud& cloud, const std::string& path);
pc::PointCloud load_cloud_binary(const std::string& path);

}  // namespace topokd::io
