#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ren/geometry.hpp"
#include "ren/nn.hpp"

namespace ren {

// RawDepthFile ---------------------------------------------------------------
//
//   "RDEP" | u16 version | u32 width | u32 height | width*height x u16 depth
//
// All integers little-endian. Depth in mm, 0 = missing.

inline constexpr std::uint16_t kDepthFileVersion = 1;

std::vector<std::uint8_t> encode_depth_file(const DepthFrame& frame);
/// Intrinsics are not stored in the file; the caller supplies them.
DepthFrame decode_depth_file(std::span<const std::uint8_t> bytes, const CameraIntrinsics& intrinsics = {1, 1, 0, 0});
void write_depth_file(const std::filesystem::path& path, const DepthFrame& frame);
DepthFrame read_depth_file(const std::filesystem::path& path, const CameraIntrinsics& intrinsics = {1, 1, 0, 0});

// DatasetManifest ------------------------------------------------------------

/// Per-dataset settings: camera, joint layout and crop box.
struct DatasetConfig {
  CameraIntrinsics intrinsics{1, 1, 0, 0};
  int joints = 16;
  CropExtent extent = CropExtent::hand();
  std::vector<int> fingertips;
  /// mirror[j] = joint that becomes j under a horizontal flip; empty = no flips.
  std::vector<int> mirror;
  double near_mm = 100;
  double far_mm = 1500;

  void validate() const;
  bool operator==(const DatasetConfig&) const = default;
};

struct ManifestEntry {
  std::string depth_path;
  Pose pose;

  bool operator==(const ManifestEntry&) const = default;
};

/// Text manifest: a "key = value" block, then one line per frame holding the
/// depth file path (relative to the manifest) and 3J world-mm coordinates.
struct DatasetManifest {
  DatasetConfig config;
  std::vector<ManifestEntry> entries;

  bool operator==(const DatasetManifest&) const = default;
};

std::string format_manifest(const DatasetManifest& manifest);
DatasetManifest parse_manifest(std::string_view text, std::string_view source = "manifest");
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Frames and poses held in memory, ready for training or evaluation.
struct Dataset {
  DatasetConfig config;
  std::vector<DepthFrame> frames;
  std::vector<Pose> poses;

  std::size_t size() const noexcept { return frames.size(); }
};

/// Reads the manifest and every depth file it references.
Dataset load_dataset(const std::filesystem::path& manifest_path);

/// Writes frames as frames/NNNNNN.rdep plus manifest.txt under `dir`.
std::filesystem::path write_dataset(const std::filesystem::path& dir, const Dataset& dataset);

struct DatasetStats {
  std::size_t frames = 0;
  int joints = 0;
  std::uint16_t depth_min = 0;
  std::uint16_t depth_max = 0;
  Vec3 label_min;
  Vec3 label_max;
};

DatasetStats dataset_stats(const Dataset& dataset);

// Checkpoint -----------------------------------------------------------------
//
//   "RENC" | u32 version | u32 config length | config text ("key = value")
//   | u32 parameter count | per parameter: u32 name length, name, u32 rank,
//   rank x u32 dims, f32 data | u64 FNV-1a checksum of all preceding bytes

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Crop settings a checkpoint needs to interpret its own outputs.
struct CropSettings {
  CropExtent extent = CropExtent::hand();
  double near_mm = 100;
  double far_mm = 1500;

  bool operator==(const CropSettings&) const = default;
};

struct Checkpoint {
  Model<float> model;
  CropSettings crop;
};

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_checkpoint(const Model<float>& model, const CropSettings& crop);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const Model<float>& model, const CropSettings& crop);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace ren
