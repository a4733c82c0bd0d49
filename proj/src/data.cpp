#include "ren/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <sstream>

#include "ren/error.hpp"
#include "ren/text.hpp"

namespace ren {
namespace {

class ByteWriter {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  void magic(const char (&m)[5]) { bytes(m, 4); }
  template <class U>
  void le(U v) {
    using Raw = std::conditional_t<sizeof(U) == 2, std::uint16_t, std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>>;
    Raw raw;
    std::memcpy(&raw, &v, sizeof(U));
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<std::uint8_t>(raw >> (8 * i)));
  }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* field) const {
    if (remaining() < n) {
      throw FormatError(what_ + ": truncated while reading " + field + " (need " + std::to_string(n) + " bytes, have " +
                            std::to_string(remaining()) + ")",
                        pos_);
    }
  }
  void expect_magic(const char (&m)[5]) {
    need(4, "magic");
    if (std::memcmp(bytes_.data() + pos_, m, 4) != 0) throw FormatError(what_ + ": bad magic, expected '" + std::string(m) + "'", pos_);
    pos_ += 4;
  }
  template <class U>
  U le(const char* field) {
    need(sizeof(U), field);
    using Raw = std::conditional_t<sizeof(U) == 2, std::uint16_t, std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>>;
    Raw raw = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) raw |= static_cast<Raw>(static_cast<Raw>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    U v;
    std::memcpy(&v, &raw, sizeof(U));
    return v;
  }
  std::string str(std::size_t n, const char* field) {
    need(n, field);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::vector<int> parse_ints(std::string_view s, std::string_view what) {
  std::vector<int> out;
  if (text::trim(s).empty()) return out;
  for (const auto& part : text::split(s, ',')) out.push_back(static_cast<int>(text::parse_int(part, what)));
  return out;
}

std::string format_extent(const CropExtent& e) {
  return text::format_double(e.x) + "," + text::format_double(e.y) + "," + text::format_double(e.z);
}

CropExtent parse_extent(std::string_view s) {
  s = text::trim(s);
  if (s == "hand") return CropExtent::hand();
  if (s == "human-front") return CropExtent::human_front();
  if (s == "human-top") return CropExtent::human_top();
  const auto parts = text::split(s, ',');
  if (parts.size() != 3) throw InputError("extent must be hand | human-front | human-top | x,y,z");
  CropExtent e{text::parse_double(parts[0], "extent"), text::parse_double(parts[1], "extent"),
               text::parse_double(parts[2], "extent")};
  e.validate();
  return e;
}

}  // namespace

// Depth files ----------------------------------------------------------------

std::vector<std::uint8_t> encode_depth_file(const DepthFrame& frame) {
  if (frame.width <= 0 || frame.height <= 0 || frame.depth.size() != static_cast<std::size_t>(frame.width) * frame.height) {
    throw InputError("cannot encode a depth frame with inconsistent dimensions");
  }
  ByteWriter w;
  w.magic("RDEP");
  w.le<std::uint16_t>(kDepthFileVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(frame.width));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(frame.height));
  for (std::uint16_t d : frame.depth) w.le<std::uint16_t>(d);
  return std::move(w.buffer());
}

DepthFrame decode_depth_file(std::span<const std::uint8_t> bytes, const CameraIntrinsics& intrinsics) {
  ByteReader r(bytes, "depth file");
  r.expect_magic("RDEP");
  const std::size_t version_at = r.offset();
  const auto version = r.le<std::uint16_t>("version");
  if (version != kDepthFileVersion) throw FormatError("depth file: unknown version " + std::to_string(version), version_at);
  const std::size_t dims_at = r.offset();
  const auto width = r.le<std::uint32_t>("width");
  const auto height = r.le<std::uint32_t>("height");
  if (width == 0 || height == 0 || width > (1u << 16) || height > (1u << 16)) {
    throw FormatError("depth file: invalid dimensions " + std::to_string(width) + "x" + std::to_string(height), dims_at);
  }
  const std::size_t count = static_cast<std::size_t>(width) * height;
  r.need(count * 2, "depth payload");
  DepthFrame frame(static_cast<int>(width), static_cast<int>(height), intrinsics);
  for (std::size_t i = 0; i < count; ++i) frame.depth[i] = r.le<std::uint16_t>("depth");
  if (r.remaining() != 0) throw FormatError("depth file: " + std::to_string(r.remaining()) + " trailing bytes", r.offset());
  return frame;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  text::write_file(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

void write_depth_file(const std::filesystem::path& path, const DepthFrame& frame) {
  write_bytes(path, encode_depth_file(frame));
}

DepthFrame read_depth_file(const std::filesystem::path& path, const CameraIntrinsics& intrinsics) {
  return decode_depth_file(read_bytes(path), intrinsics);
}

// Manifest -------------------------------------------------------------------

void DatasetConfig::validate() const {
  intrinsics.validate();
  extent.validate();
  if (joints < 1) throw InputError("dataset joints must be >= 1");
  for (int f : fingertips) {
    if (f < 0 || f >= joints) throw InputError("fingertip index " + std::to_string(f) + " out of range");
  }
  if (!mirror.empty()) {
    if (static_cast<int>(mirror.size()) != joints) throw InputError("mirror map must list every joint");
    for (int m : mirror) {
      if (m < 0 || m >= joints) throw InputError("mirror map index out of range");
    }
  }
  if (!(near_mm < far_mm)) throw InputError("dataset near must be < far");
}

std::string format_manifest(const DatasetManifest& manifest) {
  const auto& c = manifest.config;
  std::map<std::string, std::string> kv{{"fx", text::format_double(c.intrinsics.fx)},
                                        {"fy", text::format_double(c.intrinsics.fy)},
                                        {"cx", text::format_double(c.intrinsics.cx)},
                                        {"cy", text::format_double(c.intrinsics.cy)},
                                        {"joints", std::to_string(c.joints)},
                                        {"extent", format_extent(c.extent)},
                                        {"fingertips", join_ints(c.fingertips)},
                                        {"mirror", join_ints(c.mirror)},
                                        {"near", text::format_double(c.near_mm)},
                                        {"far", text::format_double(c.far_mm)}};
  std::string out = "# depth dataset manifest\n" + text::format_key_values(kv) + "\n";
  for (const auto& e : manifest.entries) {
    out += e.depth_path;
    for (const auto& j : e.pose.joints) {
      out += ' ' + text::format_double(j.x) + ' ' + text::format_double(j.y) + ' ' + text::format_double(j.z);
    }
    out += '\n';
  }
  return out;
}

DatasetManifest parse_manifest(std::string_view content, std::string_view source) {
  DatasetManifest m;
  std::map<std::string, std::string> kv;
  std::istringstream in{std::string(content)};
  std::string line;
  int line_no = 0;
  bool in_entries = false;
  std::vector<std::pair<int, std::vector<std::string>>> entry_lines;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto where = std::string(source) + ":" + std::to_string(line_no);
    if (t.find('=') != std::string_view::npos) {
      if (in_entries) throw InputError(where + ": config lines must precede frame entries");
      const auto eq = t.find('=');
      std::string key(text::trim(t.substr(0, eq)));
      if (!kv.emplace(key, std::string(text::trim(t.substr(eq + 1)))).second) {
        throw InputError(where + ": duplicate key '" + key + "'");
      }
      continue;
    }
    in_entries = true;
    entry_lines.emplace_back(line_no, text::split_ws(t));
  }
  auto& c = m.config;
  for (const auto& [k, v] : kv) {
    if (k == "fx") c.intrinsics.fx = text::parse_double(v, k);
    else if (k == "fy") c.intrinsics.fy = text::parse_double(v, k);
    else if (k == "cx") c.intrinsics.cx = text::parse_double(v, k);
    else if (k == "cy") c.intrinsics.cy = text::parse_double(v, k);
    else if (k == "joints") c.joints = static_cast<int>(text::parse_int(v, k));
    else if (k == "extent") c.extent = parse_extent(v);
    else if (k == "fingertips") c.fingertips = parse_ints(v, k);
    else if (k == "mirror") c.mirror = parse_ints(v, k);
    else if (k == "near") c.near_mm = text::parse_double(v, k);
    else if (k == "far") c.far_mm = text::parse_double(v, k);
    else throw InputError(std::string(source) + ": unknown manifest key '" + k + "'");
  }
  for (const char* required : {"fx", "fy", "cx", "cy", "joints"}) {
    if (!kv.contains(required)) throw InputError(std::string(source) + ": missing required key '" + required + "'");
  }
  c.validate();
  const std::size_t expected = 1 + 3 * static_cast<std::size_t>(c.joints);
  for (const auto& [no, fields] : entry_lines) {
    const auto where = std::string(source) + ":" + std::to_string(no);
    if (fields.size() != expected) {
      throw InputError(where + ": expected a path and " + std::to_string(expected - 1) + " coordinates, got " +
                       std::to_string(fields.size()) + " fields");
    }
    ManifestEntry e;
    e.depth_path = fields[0];
    for (std::size_t i = 1; i < fields.size(); i += 3) {
      Vec3 j{text::parse_double(fields[i], where), text::parse_double(fields[i + 1], where),
             text::parse_double(fields[i + 2], where)};
      if (!std::isfinite(j.x) || !std::isfinite(j.y) || !std::isfinite(j.z)) throw InputError(where + ": non-finite joint");
      e.pose.joints.push_back(j);
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  text::write_file(path, format_manifest(manifest));
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw InputError("manifest '" + path.string() + "' does not exist");
  return parse_manifest(text::read_file(path), path.string());
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  const DatasetManifest manifest = read_manifest(manifest_path);
  Dataset ds;
  ds.config = manifest.config;
  const auto base = manifest_path.parent_path();
  for (const auto& e : manifest.entries) {
    const auto p = base / e.depth_path;
    if (!std::filesystem::exists(p)) throw InputError("manifest references missing file '" + p.string() + "'");
    ds.frames.push_back(read_depth_file(p, manifest.config.intrinsics));
    ds.poses.push_back(e.pose);
  }
  return ds;
}

std::filesystem::path write_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
  DatasetManifest m;
  m.config = dataset.config;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frames/%06zu.rdep", i);
    write_depth_file(dir / name, dataset.frames[i]);
    m.entries.push_back({name, dataset.poses[i]});
  }
  const auto path = dir / "manifest.txt";
  write_manifest(path, m);
  return path;
}

DatasetStats dataset_stats(const Dataset& dataset) {
  DatasetStats s;
  s.frames = dataset.size();
  s.joints = dataset.config.joints;
  constexpr double inf = std::numeric_limits<double>::infinity();
  s.label_min = {inf, inf, inf};
  s.label_max = {-inf, -inf, -inf};
  bool any_depth = false;
  for (const auto& f : dataset.frames) {
    for (std::uint16_t d : f.depth) {
      if (d == 0) continue;
      if (!any_depth) {
        s.depth_min = s.depth_max = d;
        any_depth = true;
      }
      s.depth_min = std::min(s.depth_min, d);
      s.depth_max = std::max(s.depth_max, d);
    }
  }
  for (const auto& p : dataset.poses) {
    for (const auto& j : p.joints) {
      s.label_min = {std::min(s.label_min.x, j.x), std::min(s.label_min.y, j.y), std::min(s.label_min.z, j.z)};
      s.label_max = {std::max(s.label_max.x, j.x), std::max(s.label_max.y, j.y), std::max(s.label_max.z, j.z)};
    }
  }
  if (dataset.poses.empty()) s.label_min = s.label_max = {};
  return s;
}

// Checkpoint -----------------------------------------------------------------

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::uint8_t> encode_checkpoint(const Model<float>& model, const CropSettings& crop) {
  auto kv = model.config().to_map();
  kv["crop_extent"] = format_extent(crop.extent);
  kv["near"] = text::format_double(crop.near_mm);
  kv["far"] = text::format_double(crop.far_mm);
  const std::string config = text::format_key_values(kv);

  ByteWriter w;
  w.magic("RENC");
  w.le<std::uint32_t>(kCheckpointVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(config.size()));
  w.bytes(config.data(), config.size());
  w.le<std::uint32_t>(static_cast<std::uint32_t>(model.parameters().size()));
  for (const auto& p : model.parameters()) {
    w.le<std::uint32_t>(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name.data(), p.name.size());
    w.le<std::uint32_t>(static_cast<std::uint32_t>(p.tensor.rank()));
    for (std::size_t d : p.tensor.shape()) w.le<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (float v : p.tensor.values()) w.le<float>(v);
  }
  w.le<std::uint64_t>(fnv1a64(w.buffer()));
  return std::move(w.buffer());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw FormatError("checkpoint: truncated (no checksum)", bytes.size());
  const auto body = bytes.first(bytes.size() - 8);
  ByteReader tail(bytes.subspan(bytes.size() - 8), "checkpoint");
  const auto stored = tail.le<std::uint64_t>("checksum");

  ByteReader r(body, "checkpoint");
  r.expect_magic("RENC");
  const std::size_t version_at = r.offset();
  const auto version = r.le<std::uint32_t>("version");
  if (version != kCheckpointVersion) throw FormatError("checkpoint: unknown version " + std::to_string(version), version_at);
  if (fnv1a64(body) != stored) throw FormatError("checkpoint: checksum mismatch", body.size());

  const auto config_len = r.le<std::uint32_t>("config length");
  auto kv = text::parse_key_values(r.str(config_len, "config"), "checkpoint config");
  CropSettings crop;
  if (auto it = kv.find("crop_extent"); it != kv.end()) {
    crop.extent = parse_extent(it->second);
    kv.erase(it);
  }
  if (auto it = kv.find("near"); it != kv.end()) {
    crop.near_mm = text::parse_double(it->second, "near");
    kv.erase(it);
  }
  if (auto it = kv.find("far"); it != kv.end()) {
    crop.far_mm = text::parse_double(it->second, "far");
    kv.erase(it);
  }
  const ModelConfig config = ModelConfig::from_map(kv);

  const auto count = r.le<std::uint32_t>("parameter count");
  std::vector<NamedParameter<float>> params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.le<std::uint32_t>("name length");
    std::string name = r.str(name_len, "name");
    const std::size_t rank_at = r.offset();
    const auto rank = r.le<std::uint32_t>("rank");
    if (rank > 4) throw FormatError("checkpoint: parameter '" + name + "' has rank " + std::to_string(rank), rank_at);
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(r.le<std::uint32_t>("dimension"));
    const std::size_t n = shape_numel(shape);
    r.need(n * 4, "parameter data");
    std::vector<float> values(n);
    for (auto& v : values) v = r.le<float>("parameter data");
    params.push_back({std::move(name), Tensor<float>::from(std::move(shape), std::move(values), true)});
  }
  if (r.remaining() != 0) throw FormatError("checkpoint: unexpected trailing bytes", r.offset());
  try {
    return {Model<float>(config, std::move(params)), crop};
  } catch (const ShapeError& e) {
    throw FormatError(std::string("checkpoint: parameters do not match config: ") + e.what(), r.offset());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Model<float>& model, const CropSettings& crop) {
  write_bytes(path, encode_checkpoint(model, crop));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_bytes(path));
}

}  // namespace ren
