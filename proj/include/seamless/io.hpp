#pragma once

// Readers and writers for every on-disk format of the toolkit.
//
//   tag file        "# crs: <string>" header, lines `tag_id easting northing height`
//   poses           CSV image_id,X,Y,Z,omega_deg,phi_deg,kappa_deg
//   observations    CSV image_id,tag_id,u,v
//   sightings       CSV timestamp,tag_id,x_local,y_local,z_local
//   trajectory      CSV timestamp,X,Y,Z,omega_deg,phi_deg,kappa_deg
//   points          CSV point_id,X,Y,Z
//   measurements    CSV image_id,point_id,u,v
//   intrinsics      key=value lines (f_mm, pitch_mm, x0_px, y0_px, width_px, height_px, k0, k1, ...)
//   transform       4x4 row-major homogeneous matrix, '#' comments
//   point clouds    PLY binary_little_endian, double x/y/z, optional uchar red/green/blue[/alpha]
//   disparity       PFM ("Pf", little-endian), INVALID = -1.0
//   images          PGM P5 (8/16 bit), PPM P6 (8 bit)
//
// Floats are written with 17 significant digits.

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "seamless/assess.hpp"
#include "seamless/bba.hpp"
#include "seamless/coregister.hpp"
#include "seamless/error.hpp"
#include "seamless/geocore.hpp"
#include "seamless/markergeoref.hpp"
#include "seamless/pointcloud.hpp"
#include "seamless/raster.hpp"
#include "seamless/sgm.hpp"

namespace seamless::io {

inline constexpr std::string_view kDefaultCrs = "UTM/metric";
inline constexpr std::string_view kTagFileVersion = "seamless tag file v1";

// ---------------------------------------------------------------------------
// Text helpers

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  if (ec != std::errc{}) throw Error(ErrorCode::IoError, "cannot format number");
  return std::string(buf, ptr);
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

class LineError {
 public:
  LineError(std::string source, std::size_t line) : source_(std::move(source)), line_(line) {}
  [[noreturn]] void fail(const std::string& reason) const {
    throw Error(ErrorCode::ParseError, source_ + ":" + std::to_string(line_) + ": " + reason);
  }

 private:
  std::string source_;
  std::size_t line_;
};

inline double parse_double(std::string_view s, const LineError& where) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) where.fail("invalid number '" + std::string(s) + "'");
  if (!std::isfinite(v)) where.fail("number is not finite");
  return v;
}

inline std::int64_t parse_int(std::string_view s, const LineError& where) {
  s = trim(s);
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) where.fail("invalid integer '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t b = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > b) out.push_back(line.substr(b, i - b));
  }
  return out;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw Error(ErrorCode::IoError, "write failed for '" + path.string() + "'");
}

/// Calls fn(fields, where) for every data row of a CSV text; blank lines,
/// '#' comments and a header row equal to `header` are skipped.
inline void for_each_csv_row(std::string_view text, std::string_view source, std::string_view header,
                             std::size_t n_fields,
                             const std::function<void(const std::vector<std::string_view>&, const LineError&)>& fn) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  const auto header_fields = split(header, ',');
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    const std::string_view raw = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    ++line_no;
    start = end == std::string_view::npos ? text.size() + 1 : end + 1;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split(line, ',');
    if (fields == header_fields) continue;
    const LineError where(std::string(source), line_no);
    if (fields.size() != n_fields) {
      where.fail("expected " + std::to_string(n_fields) + " fields, found " + std::to_string(fields.size()));
    }
    fn(fields, where);
  }
}

// ---------------------------------------------------------------------------
// Tag coordinate file

struct TagFile {
  std::string crs = std::string(kDefaultCrs);
  std::vector<TagLandmark> tags;
};

inline std::string format_tag_file(const std::vector<TagLandmark>& tags, std::string_view crs = kDefaultCrs) {
  std::string out = "# " + std::string(kTagFileVersion) + "\n# crs: " + std::string(crs) + "\n";
  out += "# tag_id easting northing height\n";
  for (const auto& t : tags) {
    out += std::to_string(t.tag_id) + " " + format_double(t.position.x()) + " " + format_double(t.position.y()) + " " +
           format_double(t.position.z()) + "\n";
  }
  return out;
}

inline TagFile parse_tag_file(std::string_view text, std::string_view source = "tags") {
  TagFile file;
  std::size_t line_no = 0, start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    const std::string_view raw = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    ++line_no;
    start = end == std::string_view::npos ? text.size() + 1 : end + 1;
    const std::string_view line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '#') {
      const std::string_view body = trim(line.substr(1));
      if (body.starts_with("crs:")) file.crs = std::string(trim(body.substr(4)));
      continue;
    }
    const LineError where(std::string(source), line_no);
    const auto f = split_ws(line);
    if (f.size() != 4) where.fail("expected 'tag_id easting northing height'");
    file.tags.push_back({parse_int(f[0], where), Vec3(parse_double(f[1], where), parse_double(f[2], where),
                                                      parse_double(f[3], where)),
                         0.0, 0});
  }
  return file;
}

// ---------------------------------------------------------------------------
// CSV formats

inline constexpr std::string_view kPoseHeader = "image_id,X,Y,Z,omega_deg,phi_deg,kappa_deg";
inline constexpr std::string_view kObservationHeader = "image_id,tag_id,u,v";
inline constexpr std::string_view kSightingHeader = "timestamp,tag_id,x_local,y_local,z_local";
inline constexpr std::string_view kTrajectoryHeader = "timestamp,X,Y,Z,omega_deg,phi_deg,kappa_deg";
inline constexpr std::string_view kPointHeader = "point_id,X,Y,Z";
inline constexpr std::string_view kMeasurementHeader = "image_id,point_id,u,v";

inline std::string pose_fields(const Pose& p) {
  return format_double(p.t.x()) + "," + format_double(p.t.y()) + "," + format_double(p.t.z()) + "," +
         format_double(rad_to_deg(p.r.x())) + "," + format_double(rad_to_deg(p.r.y())) + "," +
         format_double(rad_to_deg(p.r.z()));
}

inline Pose parse_pose_fields(const std::vector<std::string_view>& f, std::size_t first, const LineError& where) {
  Pose p;
  for (int i = 0; i < 3; ++i) p.t(i) = parse_double(f[first + i], where);
  for (int i = 0; i < 3; ++i) p.r(i) = deg_to_rad(parse_double(f[first + 3 + i], where));
  return p;
}

inline std::string format_poses(const std::map<std::string, Pose>& poses) {
  std::string out = std::string(kPoseHeader) + "\n";
  for (const auto& [id, p] : poses) out += id + "," + pose_fields(p) + "\n";
  return out;
}

inline std::map<std::string, Pose> parse_poses(std::string_view text, std::string_view source = "poses") {
  std::map<std::string, Pose> out;
  for_each_csv_row(text, source, kPoseHeader, 7, [&](const auto& f, const LineError& where) {
    if (f[0].empty()) where.fail("empty image id");
    if (!out.emplace(std::string(f[0]), parse_pose_fields(f, 1, where)).second) where.fail("duplicate image id");
  });
  return out;
}

inline std::string format_observations(const std::vector<TagObservation>& obs) {
  std::string out = std::string(kObservationHeader) + "\n";
  for (const auto& o : obs) {
    out += o.image_id + "," + std::to_string(o.tag_id) + "," + format_double(o.pixel.x()) + "," +
           format_double(o.pixel.y()) + "\n";
  }
  return out;
}

inline std::vector<TagObservation> parse_observations(std::string_view text, std::string_view source = "observations") {
  std::vector<TagObservation> out;
  for_each_csv_row(text, source, kObservationHeader, 4, [&](const auto& f, const LineError& where) {
    if (f[0].empty()) where.fail("empty image id");
    out.push_back({std::string(f[0]), parse_int(f[1], where), Vec2(parse_double(f[2], where), parse_double(f[3], where)),
                   1.0});
  });
  return out;
}

inline std::string format_sightings(const std::vector<LocalTagSighting>& s) {
  std::string out = std::string(kSightingHeader) + "\n";
  for (const auto& x : s) {
    out += format_double(x.timestamp) + "," + std::to_string(x.tag_id) + "," + format_double(x.local_vector.x()) + "," +
           format_double(x.local_vector.y()) + "," + format_double(x.local_vector.z()) + "\n";
  }
  return out;
}

inline std::vector<LocalTagSighting> parse_sightings(std::string_view text, std::string_view source = "sightings") {
  std::vector<LocalTagSighting> out;
  for_each_csv_row(text, source, kSightingHeader, 5, [&](const auto& f, const LineError& where) {
    const double ts = parse_double(f[0], where);
    if (ts < 0.0) where.fail("negative timestamp");
    out.push_back({ts, parse_int(f[1], where),
                   Vec3(parse_double(f[2], where), parse_double(f[3], where), parse_double(f[4], where))});
  });
  return out;
}

inline std::string format_trajectory(const Trajectory& t) {
  std::string out = std::string(kTrajectoryHeader) + "\n";
  for (const auto& s : t.samples()) out += format_double(s.timestamp) + "," + pose_fields(s.pose) + "\n";
  return out;
}

inline Trajectory parse_trajectory(std::string_view text, std::string_view source = "trajectory") {
  std::vector<TrajectorySample> samples;
  for_each_csv_row(text, source, kTrajectoryHeader, 7, [&](const auto& f, const LineError& where) {
    const double ts = parse_double(f[0], where);
    if (!samples.empty() && !(ts > samples.back().timestamp)) where.fail("timestamps must be strictly increasing");
    samples.push_back({ts, parse_pose_fields(f, 1, where)});
  });
  return Trajectory(std::move(samples));
}

inline std::string format_points(const std::map<std::int64_t, Vec3>& points) {
  std::string out = std::string(kPointHeader) + "\n";
  for (const auto& [id, p] : points) {
    out += std::to_string(id) + "," + format_double(p.x()) + "," + format_double(p.y()) + "," + format_double(p.z()) + "\n";
  }
  return out;
}

inline std::map<std::int64_t, Vec3> parse_points(std::string_view text, std::string_view source = "points") {
  std::map<std::int64_t, Vec3> out;
  for_each_csv_row(text, source, kPointHeader, 4, [&](const auto& f, const LineError& where) {
    const Vec3 p(parse_double(f[1], where), parse_double(f[2], where), parse_double(f[3], where));
    if (!out.emplace(parse_int(f[0], where), p).second) where.fail("duplicate point id");
  });
  return out;
}

inline std::string format_measurements(const std::vector<ImageMeasurement>& m) {
  std::string out = std::string(kMeasurementHeader) + "\n";
  for (const auto& x : m) {
    out += x.image_id + "," + std::to_string(x.point_id) + "," + format_double(x.pixel.x()) + "," +
           format_double(x.pixel.y()) + "\n";
  }
  return out;
}

inline std::vector<ImageMeasurement> parse_measurements(std::string_view text, std::string_view source = "measurements") {
  std::vector<ImageMeasurement> out;
  for_each_csv_row(text, source, kMeasurementHeader, 4, [&](const auto& f, const LineError& where) {
    if (f[0].empty()) where.fail("empty image id");
    out.push_back({std::string(f[0]), parse_int(f[1], where), Vec2(parse_double(f[2], where), parse_double(f[3], where))});
  });
  return out;
}

// ---------------------------------------------------------------------------
// Intrinsics

inline std::string format_intrinsics(const CameraIntrinsics& c) {
  std::string out = "# seamless intrinsics v1\n";
  out += "f_mm=" + format_double(c.f_mm) + "\n";
  out += "pitch_mm=" + format_double(c.pixel_pitch_mm) + "\n";
  out += "x0_px=" + format_double(c.x0_px) + "\n";
  out += "y0_px=" + format_double(c.y0_px) + "\n";
  out += "width_px=" + std::to_string(c.width_px) + "\n";
  out += "height_px=" + std::to_string(c.height_px) + "\n";
  for (std::size_t i = 0; i < c.k.size(); ++i) out += "k" + std::to_string(i) + "=" + format_double(c.k[i]) + "\n";
  return out;
}

inline CameraIntrinsics parse_intrinsics(std::string_view text, std::string_view source = "intrinsics") {
  CameraIntrinsics c;
  std::map<std::size_t, double> ks;
  bool have_f = false, have_pitch = false, have_w = false, have_h = false, have_x0 = false, have_y0 = false;
  std::size_t line_no = 0, start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    const std::string_view raw = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    ++line_no;
    start = end == std::string_view::npos ? text.size() + 1 : end + 1;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const LineError where(std::string(source), line_no);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) where.fail("expected key=value");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view val = trim(line.substr(eq + 1));
    if (key == "f_mm") {
      c.f_mm = parse_double(val, where);
      have_f = true;
    } else if (key == "pitch_mm") {
      c.pixel_pitch_mm = parse_double(val, where);
      have_pitch = true;
    } else if (key == "x0_px") {
      c.x0_px = parse_double(val, where);
      have_x0 = true;
    } else if (key == "y0_px") {
      c.y0_px = parse_double(val, where);
      have_y0 = true;
    } else if (key == "width_px") {
      c.width_px = static_cast<int>(parse_int(val, where));
      have_w = true;
    } else if (key == "height_px") {
      c.height_px = static_cast<int>(parse_int(val, where));
      have_h = true;
    } else if (key.size() >= 2 && key.front() == 'k') {
      const auto idx = parse_int(key.substr(1), where);
      if (idx < 0 || idx > 32) where.fail("distortion index out of range");
      ks[static_cast<std::size_t>(idx)] = parse_double(val, where);
    } else {
      where.fail("unknown key '" + std::string(key) + "'");
    }
  }
  if (!have_f || !have_pitch || !have_w || !have_h || !have_x0 || !have_y0) {
    throw Error(ErrorCode::ParseError, std::string(source) +
                                           ": f_mm, pitch_mm, x0_px, y0_px, width_px and height_px are required");
  }
  if (!ks.empty()) {
    c.k.assign(ks.rbegin()->first + 1, 0.0);
    for (const auto& [i, v] : ks) c.k[i] = v;
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Transform file

inline std::string format_transform(const RegistrationResult& reg, const std::vector<Correspondence>& pairs) {
  const Mat4 m = reg.transform.homogeneous();
  std::string out = "# seamless transform v1: local -> world, 4x4 row-major\n";
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) out += (c ? " " : "") + format_double(m(r, c));
    out += "\n";
  }
  out += "# scale: " + format_double(reg.transform.scale) + "\n";
  out += "# rms_residual_m: " + format_double(reg.rms) + "\n";
  for (std::size_t i = 0; i < pairs.size() && i < reg.residuals.size(); ++i) {
    out += "# residual tag " + std::to_string(pairs[i].tag_id) + ": " + format_double(reg.residuals[i]) + "\n";
  }
  for (auto id : reg.dropped_tags) out += "# dropped tag " + std::to_string(id) + "\n";
  return out;
}

inline RigidTransform parse_transform(std::string_view text, std::string_view source = "transform") {
  Mat4 m;
  int row = 0;
  std::size_t line_no = 0, start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    const std::string_view raw = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    ++line_no;
    start = end == std::string_view::npos ? text.size() + 1 : end + 1;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const LineError where(std::string(source), line_no);
    const auto f = split_ws(line);
    if (f.size() != 4 || row >= 4) where.fail("expected four rows of four numbers");
    for (int c = 0; c < 4; ++c) m(row, c) = parse_double(f[c], where);
    ++row;
  }
  if (row != 4) throw Error(ErrorCode::ParseError, std::string(source) + ": expected four rows");
  const Mat3 a = m.topLeftCorner<3, 3>();
  const double det = a.determinant();
  if (!(det > 0.0)) throw Error(ErrorCode::ParseError, std::string(source) + ": transform is not a proper rotation");
  RigidTransform t;
  // A rigid matrix is kept verbatim so that it survives a round trip exactly.
  t.scale = std::abs(det - 1.0) <= 1e-12 ? 1.0 : std::cbrt(det);
  t.rotation = t.scale == 1.0 ? a : Mat3(a / t.scale);
  t.translation = m.topRightCorner<3, 1>();
  return t;
}

// ---------------------------------------------------------------------------
// Binary helpers

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.append(bytes.data(), bytes.size());
}

template <typename T>
T get_bytes(std::string_view data, std::size_t& pos, bool little_endian, std::string_view source) {
  if (pos + sizeof(T) > data.size()) throw Error(ErrorCode::ParseError, std::string(source) + ": truncated data");
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), data.data() + pos, sizeof(T));
  pos += sizeof(T);
  if ((std::endian::native == std::endian::little) != little_endian) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

/// Reads the next whitespace-delimited header token of a Netpbm/PFM file.
inline std::string next_token(std::string_view data, std::size_t& pos, bool allow_comments) {
  while (pos < data.size()) {
    if (allow_comments && data[pos] == '#') {
      while (pos < data.size() && data[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(data[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  const std::size_t b = pos;
  while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
  return std::string(data.substr(b, pos - b));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// PLY

/// Colour properties are written when any point is coloured; a mixed cloud
/// adds `alpha` (0 = no colour) so uncoloured points survive a round trip.
inline std::string format_ply(const PointCloud& cloud) {
  const bool colored = cloud.any_colored();
  const bool mixed = colored && !cloud.all_colored();
  std::string out = "ply\nformat binary_little_endian 1.0\ncomment seamless point cloud\n";
  out += "element vertex " + std::to_string(cloud.size()) + "\n";
  out += "property double x\nproperty double y\nproperty double z\n";
  if (colored) out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  if (mixed) out += "property uchar alpha\n";
  out += "end_header\n";
  for (const auto& p : cloud.points) {
    for (int i = 0; i < 3; ++i) detail::put_le<double>(out, p.position(i));
    if (colored) {
      const Rgb c = p.color.value_or(Rgb{0, 0, 0});
      for (int i = 0; i < 3; ++i) detail::put_le<std::uint8_t>(out, c[i]);
    }
    if (mixed) detail::put_le<std::uint8_t>(out, p.color ? 255 : 0);
  }
  return out;
}

inline PointCloud parse_ply(std::string_view data, std::string_view source = "ply") {
  auto fail = [&](const std::string& why) -> void { throw Error(ErrorCode::ParseError, std::string(source) + ": " + why); };
  std::size_t pos = 0;
  auto next_line = [&]() {
    const auto end = data.find('\n', pos);
    if (end == std::string_view::npos) fail("unterminated header");
    std::string_view line = data.substr(pos, end - pos);
    pos = end + 1;
    return trim(line);
  };
  if (next_line() != "ply") fail("missing 'ply' magic");
  bool little = true, ascii = false, in_vertex = false, seen_format = false;
  std::size_t n_vertices = 0;
  struct Prop {
    std::string name;
    std::string type;
  };
  std::vector<Prop> props;
  while (true) {
    const auto line = next_line();
    if (line == "end_header") break;
    const auto f = split_ws(line);
    if (f.empty() || f[0] == "comment" || f[0] == "obj_info") continue;
    if (f[0] == "format") {
      if (f.size() < 2) fail("bad format line");
      seen_format = true;
      if (f[1] == "binary_little_endian") little = true;
      else if (f[1] == "binary_big_endian") little = false;
      else if (f[1] == "ascii") ascii = true;
      else fail("unknown format");
    } else if (f[0] == "element") {
      if (f.size() != 3) fail("bad element line");
      in_vertex = f[1] == "vertex";
      if (!in_vertex) fail("only vertex elements are supported");
      n_vertices = static_cast<std::size_t>(parse_int(f[2], LineError(std::string(source), 0)));
    } else if (f[0] == "property") {
      if (f.size() != 3 || !in_vertex) fail("unsupported property line");
      props.push_back({std::string(f[2]), std::string(f[1])});
    } else {
      fail("unknown header keyword");
    }
  }
  if (!seen_format) fail("missing format line");
  if (ascii) fail("ascii PLY is not supported");

  auto read_value = [&](const std::string& type) -> double {
    if (type == "double" || type == "float64") return detail::get_bytes<double>(data, pos, little, source);
    if (type == "float" || type == "float32") return detail::get_bytes<float>(data, pos, little, source);
    if (type == "uchar" || type == "uint8") return detail::get_bytes<std::uint8_t>(data, pos, little, source);
    if (type == "char" || type == "int8") return detail::get_bytes<std::int8_t>(data, pos, little, source);
    if (type == "ushort" || type == "uint16") return detail::get_bytes<std::uint16_t>(data, pos, little, source);
    if (type == "short" || type == "int16") return detail::get_bytes<std::int16_t>(data, pos, little, source);
    if (type == "uint" || type == "uint32") return detail::get_bytes<std::uint32_t>(data, pos, little, source);
    if (type == "int" || type == "int32") return detail::get_bytes<std::int32_t>(data, pos, little, source);
    throw Error(ErrorCode::ParseError, std::string(source) + ": unsupported property type '" + type + "'");
  };

  bool has_rgb = false, has_alpha = false;
  for (const auto& p : props) {
    has_rgb |= p.name == "red";
    has_alpha |= p.name == "alpha";
  }
  PointCloud cloud;
  cloud.points.reserve(n_vertices);
  for (std::size_t i = 0; i < n_vertices; ++i) {
    CloudPoint p;
    Rgb c{0, 0, 0};
    double alpha = 255;
    for (const auto& prop : props) {
      const double v = read_value(prop.type);
      if (prop.name == "x") p.position.x() = v;
      else if (prop.name == "y") p.position.y() = v;
      else if (prop.name == "z") p.position.z() = v;
      else if (prop.name == "red") c[0] = static_cast<std::uint8_t>(v);
      else if (prop.name == "green") c[1] = static_cast<std::uint8_t>(v);
      else if (prop.name == "blue") c[2] = static_cast<std::uint8_t>(v);
      else if (prop.name == "alpha") alpha = v;
    }
    if (has_rgb && (!has_alpha || alpha > 0)) p.color = c;
    cloud.points.push_back(p);
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// PFM disparity

inline constexpr float kPfmInvalid = -1.0f;

inline std::string format_pfm(const DisparityMap& disp) {
  std::string out = "Pf\n" + std::to_string(disp.width) + " " + std::to_string(disp.height) + "\n-1.0\n";
  out.reserve(out.size() + disp.value.size() * 4);
  for (int y = disp.height - 1; y >= 0; --y) {  // PFM stores rows bottom-up
    for (int x = 0; x < disp.width; ++x) {
      const float v = disp.at(x, y);
      detail::put_le<float>(out, std::isnan(v) ? kPfmInvalid : v);
    }
  }
  return out;
}

/// Reads a single-channel PFM. -1.0 becomes invalid (NaN); the disparity
/// range of the result is taken from the data.
inline DisparityMap parse_pfm(std::string_view data, std::string_view source = "pfm") {
  std::size_t pos = 0;
  if (detail::next_token(data, pos, false) != "Pf") {
    throw Error(ErrorCode::ParseError, std::string(source) + ": expected single-channel 'Pf' PFM");
  }
  const LineError where(std::string(source), 0);
  const int w = static_cast<int>(parse_int(detail::next_token(data, pos, false), where));
  const int h = static_cast<int>(parse_int(detail::next_token(data, pos, false), where));
  const double scale = parse_double(detail::next_token(data, pos, false), where);
  ++pos;  // single whitespace before the raster
  if (w <= 0 || h <= 0) throw Error(ErrorCode::ParseError, std::string(source) + ": bad dimensions");
  DisparityMap disp(w, h, 0, 0);
  float lo = std::numeric_limits<float>::max(), hi = std::numeric_limits<float>::lowest();
  for (int y = h - 1; y >= 0; --y) {
    for (int x = 0; x < w; ++x) {
      const float v = detail::get_bytes<float>(data, pos, scale < 0.0, source);
      if (v == kPfmInvalid) continue;
      disp.value[disp.index(x, y)] = v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (lo <= hi) {
    disp.d_min = static_cast<int>(std::floor(lo));
    disp.d_max = static_cast<int>(std::ceil(hi));
  }
  return disp;
}

// ---------------------------------------------------------------------------
// PGM / PPM

inline std::string format_pgm(const GrayImage& img) {
  const bool wide = std::any_of(img.data.begin(), img.data.end(), [](std::uint16_t v) { return v > 255; });
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n" +
                    (wide ? "65535" : "255") + "\n";
  for (std::uint16_t v : img.data) {
    if (wide) {
      out.push_back(static_cast<char>(v >> 8));
      out.push_back(static_cast<char>(v & 0xFF));
    } else {
      out.push_back(static_cast<char>(v));
    }
  }
  return out;
}

inline GrayImage parse_pgm(std::string_view data, std::string_view source = "pgm") {
  std::size_t pos = 0;
  if (detail::next_token(data, pos, true) != "P5") {
    throw Error(ErrorCode::ParseError, std::string(source) + ": expected binary PGM (P5)");
  }
  const LineError where(std::string(source), 0);
  const int w = static_cast<int>(parse_int(detail::next_token(data, pos, true), where));
  const int h = static_cast<int>(parse_int(detail::next_token(data, pos, true), where));
  const auto maxval = parse_int(detail::next_token(data, pos, true), where);
  ++pos;
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) {
    throw Error(ErrorCode::ParseError, std::string(source) + ": bad PGM header");
  }
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  if (data.size() < pos + static_cast<std::size_t>(w) * h * bpp) {
    throw Error(ErrorCode::ParseError, std::string(source) + ": truncated raster");
  }
  GrayImage img(w, h, 0);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    if (bpp == 2) {
      img.data[i] = static_cast<std::uint16_t>((static_cast<unsigned char>(data[pos]) << 8) |
                                               static_cast<unsigned char>(data[pos + 1]));
    } else {
      img.data[i] = static_cast<unsigned char>(data[pos]);
    }
    pos += bpp;
  }
  return img;
}

inline std::string format_ppm(const RgbImage& img) {
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  for (const Rgb& c : img.data) out.append(reinterpret_cast<const char*>(c.data()), 3);
  return out;
}

inline RgbImage parse_ppm(std::string_view data, std::string_view source = "ppm") {
  std::size_t pos = 0;
  if (detail::next_token(data, pos, true) != "P6") {
    throw Error(ErrorCode::ParseError, std::string(source) + ": expected binary PPM (P6)");
  }
  const LineError where(std::string(source), 0);
  const int w = static_cast<int>(parse_int(detail::next_token(data, pos, true), where));
  const int h = static_cast<int>(parse_int(detail::next_token(data, pos, true), where));
  const auto maxval = parse_int(detail::next_token(data, pos, true), where);
  ++pos;
  if (w <= 0 || h <= 0 || maxval != 255) throw Error(ErrorCode::ParseError, std::string(source) + ": only 8-bit PPM is supported");
  if (data.size() < pos + static_cast<std::size_t>(w) * h * 3) {
    throw Error(ErrorCode::ParseError, std::string(source) + ": truncated raster");
  }
  RgbImage img(w, h);
  for (auto& c : img.data) {
    for (int i = 0; i < 3; ++i) c[i] = static_cast<std::uint8_t>(data[pos++]);
  }
  return img;
}

// ---------------------------------------------------------------------------
// Accuracy report

/// Summary CSV: metric,x,y,z rows.
inline std::string format_accuracy_csv(const AccuracyReport& r) {
  std::string out = "metric,x,y,z\n";
  auto row = [&](std::string_view name, const Vec3& v) {
    out += std::string(name) + "," + format_double(v.x()) + "," + format_double(v.y()) + "," + format_double(v.z()) + "\n";
  };
  row("absolute_mean_diff", r.absolute_mean_difference);
  row("relative_mean_abs_diff", r.relative_mean_abs_difference);
  return out;
}

/// Per-pair CSV, one row per unordered id pair.
inline std::string format_pairs_csv(const AccuracyReport& r) {
  std::string out =
      "id_a,id_b,sep_est_x,sep_est_y,sep_est_z,sep_true_x,sep_true_y,sep_true_z,abs_diff_x,abs_diff_y,abs_diff_z,"
      "dist_est,dist_true\n";
  for (const auto& p : r.pairs) {
    out += std::to_string(p.id_a) + "," + std::to_string(p.id_b);
    for (const Vec3* v : {&p.separation_estimated, &p.separation_truth, &p.abs_difference}) {
      for (int i = 0; i < 3; ++i) out += "," + format_double((*v)(i));
    }
    out += "," + format_double(p.distance_estimated) + "," + format_double(p.distance_truth) + "\n";
  }
  return out;
}

inline std::string format_accuracy_text(const AccuracyReport& r) {
  auto fixed = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%+.3f", v);
    return std::string(buf);
  };
  std::string out = "Accuracy report\n";
  out += "  points: " + std::to_string(r.n_points) + ", pairs: " + std::to_string(r.n_pairs) + "\n";
  out += "  absolute mean difference [m]:  x " + fixed(r.absolute_mean_difference.x()) + "  y " +
         fixed(r.absolute_mean_difference.y()) + "  z " + fixed(r.absolute_mean_difference.z()) + "\n";
  out += "  relative mean |difference| [m]: x " + fixed(r.relative_mean_abs_difference.x()) + "  y " +
         fixed(r.relative_mean_abs_difference.y()) + "  z " + fixed(r.relative_mean_abs_difference.z()) + "\n";
  out += "  relative mean |distance difference| [m]: " + fixed(r.relative_mean_abs_distance_difference) + "\n";
  for (auto id : r.only_estimated) out += "  note: id " + std::to_string(id) + " only in estimated set\n";
  for (auto id : r.only_truth) out += "  note: id " + std::to_string(id) + " only in truth set\n";
  return out;
}

}  // namespace seamless::io
