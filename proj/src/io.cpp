#include "objmodel/io.hpp"

#include "objmodel/error.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace objmodel::io {

static_assert(std::endian::native == std::endian::little, "cloud files assume a little-endian host");

namespace {

std::ofstream open_out(const fs::path& path, bool binary) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path, bool binary) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw IoError("cannot read " + path.string());
  return in;
}

// Netpbm header tokens, skipping '#' comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  int c = 0;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

int pnm_int(std::istream& in, const fs::path& path) {
  const std::string tok = pnm_token(in);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || v <= 0)
    throw IoError("malformed image header in " + path.string());
  return v;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

std::string strip_comment(const std::string& line) {
  const auto pos = line.find('#');
  return pos == std::string::npos ? line : line.substr(0, pos);
}

template <typename T>
T parse_num(const std::string& tok, const std::string& what) {
  T v{};
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) throw IoError("cannot parse " + what + ": '" + tok + "'");
  return v;
}

}  // namespace

std::string format_number(double v) {
  if (v == 0.0) v = 0.0;  // no "-0"
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Images

void write_color_image(const fs::path& path, int width, int height, const std::vector<Rgb>& color) {
  if (color.size() != static_cast<std::size_t>(width) * height) throw InvalidInput("colour buffer size mismatch");
  auto out = open_out(path, true);
  out << "P6\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(color.data()), static_cast<std::streamsize>(color.size() * 3));
  if (!out) throw IoError("failed writing " + path.string());
}

void write_depth_image(const fs::path& path, int width, int height, const std::vector<std::uint16_t>& depth) {
  if (depth.size() != static_cast<std::size_t>(width) * height) throw InvalidInput("depth buffer size mismatch");
  auto out = open_out(path, true);
  out << "P5\n" << width << ' ' << height << "\n65535\n";
  std::vector<unsigned char> bytes(depth.size() * 2);
  for (std::size_t i = 0; i < depth.size(); ++i) {
    bytes[2 * i] = static_cast<unsigned char>(depth[i] >> 8);
    bytes[2 * i + 1] = static_cast<unsigned char>(depth[i] & 0xff);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<Rgb> read_color_image(const fs::path& path, int& width, int& height) {
  auto in = open_in(path, true);
  if (pnm_token(in) != "P6") throw IoError("not a binary PPM colour image: " + path.string());
  const int w = pnm_int(in, path);
  const int h = pnm_int(in, path);
  if (pnm_int(in, path) != 255) throw IoError("unsupported PPM maxval in " + path.string());
  std::vector<Rgb> px(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size() * 3));
  if (in.gcount() != static_cast<std::streamsize>(px.size() * 3)) throw IoError("truncated image " + path.string());
  width = w;
  height = h;
  return px;
}

std::vector<std::uint16_t> read_depth_image(const fs::path& path, int& width, int& height) {
  auto in = open_in(path, true);
  if (pnm_token(in) != "P5") throw IoError("not a binary PGM depth image: " + path.string());
  const int w = pnm_int(in, path);
  const int h = pnm_int(in, path);
  if (pnm_int(in, path) != 65535) throw IoError("depth image is not 16-bit: " + path.string());
  const std::size_t n = static_cast<std::size_t>(w) * h;
  std::vector<unsigned char> bytes(n * 2);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw IoError("truncated image " + path.string());
  std::vector<std::uint16_t> depth(n);
  for (std::size_t i = 0; i < n; ++i)
    depth[i] = static_cast<std::uint16_t>((bytes[2 * i] << 8) | bytes[2 * i + 1]);
  width = w;
  height = h;
  return depth;
}

// ---------------------------------------------------------------------------
// Manifest / sequence

SequenceManifest read_manifest(const fs::path& path) {
  auto in = open_in(path, false);
  const fs::path base = path.parent_path();
  SequenceManifest m;
  bool have_intrinsics = false;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tok = split_ws(strip_comment(line));
    if (tok.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (!have_intrinsics) {
      if (tok[0] != "intrinsics" || tok.size() != 8) throw IoError(where + ": expected 'intrinsics fx fy cx cy width height depth_scale'");
      m.intrinsics.fx = parse_num<double>(tok[1], where + " fx");
      m.intrinsics.fy = parse_num<double>(tok[2], where + " fy");
      m.intrinsics.cx = parse_num<double>(tok[3], where + " cx");
      m.intrinsics.cy = parse_num<double>(tok[4], where + " cy");
      m.intrinsics.width = parse_num<int>(tok[5], where + " width");
      m.intrinsics.height = parse_num<int>(tok[6], where + " height");
      m.intrinsics.depth_scale = parse_num<double>(tok[7], where + " depth_scale");
      try {
        m.intrinsics.validate();
      } catch (const InvalidInput& e) {
        throw IoError(where + ": " + e.what());
      }
      have_intrinsics = true;
      continue;
    }
    if (tok.size() != 3 && tok.size() != 4) throw IoError(where + ": expected 'frame_id color_path depth_path [timestamp]'");
    FrameRecord r;
    r.frame_id = parse_num<std::int64_t>(tok[0], where + " frame_id");
    r.color_path = fs::path(tok[1]).is_absolute() ? fs::path(tok[1]) : base / tok[1];
    r.depth_path = fs::path(tok[2]).is_absolute() ? fs::path(tok[2]) : base / tok[2];
    if (tok.size() == 4) r.timestamp = parse_num<double>(tok[3], where + " timestamp");
    m.frames.push_back(std::move(r));
  }
  if (!have_intrinsics) throw IoError(path.string() + ": missing intrinsics line");
  std::stable_sort(m.frames.begin(), m.frames.end(),
                   [](const FrameRecord& a, const FrameRecord& b) { return a.frame_id < b.frame_id; });
  for (std::size_t i = 1; i < m.frames.size(); ++i)
    if (m.frames[i].frame_id == m.frames[i - 1].frame_id)
      throw IoError(path.string() + ": duplicate frame_id " + std::to_string(m.frames[i].frame_id));
  return m;
}

void write_manifest(const fs::path& path, const SequenceManifest& m) {
  auto out = open_out(path, false);
  const auto& k = m.intrinsics;
  out << "intrinsics " << format_number(k.fx) << ' ' << format_number(k.fy) << ' ' << format_number(k.cx) << ' '
      << format_number(k.cy) << ' ' << k.width << ' ' << k.height << ' ' << format_number(k.depth_scale) << '\n';
  const fs::path base = path.parent_path();
  for (const auto& r : m.frames) {
    const auto rel = [&](const fs::path& p) { return p.is_absolute() ? p.lexically_relative(base) : p; };
    out << r.frame_id << ' ' << rel(r.color_path).generic_string() << ' ' << rel(r.depth_path).generic_string();
    if (r.timestamp) out << ' ' << format_number(*r.timestamp);
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

SequenceReader::SequenceReader(const fs::path& manifest_path) : manifest_(read_manifest(manifest_path)) {
  for (const auto& r : manifest_.frames) {
    if (!fs::exists(r.color_path))
      throw IoError("frame " + std::to_string(r.frame_id) + ": missing colour file " + r.color_path.string());
    if (!fs::exists(r.depth_path))
      throw IoError("frame " + std::to_string(r.frame_id) + ": missing depth file " + r.depth_path.string());
  }
}

RgbdFrame SequenceReader::load(std::size_t position) const {
  const FrameRecord& r = manifest_.frames.at(position);
  RgbdFrame f;
  f.frame_id = r.frame_id;
  f.timestamp = r.timestamp;
  int cw = 0, ch = 0, dw = 0, dh = 0;
  try {
    f.color = read_color_image(r.color_path, cw, ch);
    f.depth = read_depth_image(r.depth_path, dw, dh);
  } catch (const IoError& e) {
    throw IoError("frame " + std::to_string(r.frame_id) + ": " + e.what());
  }
  if (cw != dw || ch != dh) throw IoError("frame " + std::to_string(r.frame_id) + ": colour and depth sizes differ");
  if (cw != manifest_.intrinsics.width || ch != manifest_.intrinsics.height)
    throw IoError("frame " + std::to_string(r.frame_id) + ": image size does not match intrinsics");
  f.width = cw;
  f.height = ch;
  return f;
}

RgbdFrame SequenceReader::load_id(std::int64_t frame_id) const {
  for (std::size_t i = 0; i < manifest_.frames.size(); ++i)
    if (manifest_.frames[i].frame_id == frame_id) return load(i);
  throw IoError("frame " + std::to_string(frame_id) + " not in manifest");
}

std::optional<RgbdFrame> SequenceReader::next() {
  if (cursor_ >= manifest_.frames.size()) return std::nullopt;
  return load(cursor_++);
}

FrameRecord write_frame(const fs::path& root, const RgbdFrame& frame) {
  char name[32];
  std::snprintf(name, sizeof(name), "%06lld", static_cast<long long>(frame.frame_id));
  FrameRecord r;
  r.frame_id = frame.frame_id;
  r.timestamp = frame.timestamp;
  r.color_path = fs::path("color") / (std::string(name) + ".ppm");
  r.depth_path = fs::path("depth") / (std::string(name) + ".pgm");
  write_color_image(root / r.color_path, frame.width, frame.height, frame.color);
  write_depth_image(root / r.depth_path, frame.width, frame.height, frame.depth);
  return r;
}

// ---------------------------------------------------------------------------
// Clouds

namespace {

constexpr const char* kCloudProperties[] = {
    "property float x",     "property float y",     "property float z",       "property float nx",
    "property float ny",    "property float nz",    "property uchar red",     "property uchar green",
    "property uchar blue",  "property float weight", "property uchar edge_flag"};
constexpr std::size_t kRecordBytes = 6 * 4 + 3 + 4 + 1;

void put_f32(unsigned char*& p, double v) {
  const auto f = static_cast<float>(v);
  std::memcpy(p, &f, 4);
  p += 4;
}

double get_f32(const unsigned char*& p) {
  float f = 0.0f;
  std::memcpy(&f, p, 4);
  p += 4;
  return static_cast<double>(f);
}

}  // namespace

void write_cloud(const ObjectCloud& cloud, const fs::path& path) {
  cloud.check_invariants();
  std::size_t n = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) n += cloud.valid[i] ? 1 : 0;
  auto out = open_out(path, true);
  out << "ply\nformat binary_little_endian 1.0\ncomment objmodel cloud\nelement vertex " << n << '\n';
  for (const char* prop : kCloudProperties) out << prop << '\n';
  out << "end_header\n";
  std::vector<unsigned char> buf(n * kRecordBytes);
  unsigned char* p = buf.data();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!cloud.valid[i]) continue;
    for (int a = 0; a < 3; ++a) put_f32(p, cloud.points[i][a]);
    for (int a = 0; a < 3; ++a) put_f32(p, cloud.normal_valid[i] ? cloud.normals[i][a] : 0.0);
    *p++ = cloud.colors[i].r;
    *p++ = cloud.colors[i].g;
    *p++ = cloud.colors[i].b;
    put_f32(p, cloud.weights[i]);
    *p++ = cloud.edge_flags[i] ? 1 : 0;
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

ObjectCloud read_cloud(const fs::path& path) {
  auto in = open_in(path, true);
  std::string line;
  if (!std::getline(in, line) || line != "ply") throw IoError(path.string() + ": not a PLY file");
  if (!std::getline(in, line) || line != "format binary_little_endian 1.0")
    throw IoError(path.string() + ": unsupported PLY format");
  std::size_t n = 0;
  bool have_count = false;
  std::size_t prop = 0;
  for (;;) {
    if (!std::getline(in, line)) throw IoError(path.string() + ": truncated header");
    if (line == "end_header") break;
    if (line.rfind("comment", 0) == 0) continue;
    if (line.rfind("element vertex ", 0) == 0) {
      n = parse_num<std::size_t>(line.substr(15), path.string() + " vertex count");
      have_count = true;
      continue;
    }
    if (prop >= std::size(kCloudProperties) || line != kCloudProperties[prop])
      throw IoError(path.string() + ": unexpected header line '" + line + "'");
    ++prop;
  }
  if (!have_count || prop != std::size(kCloudProperties)) throw IoError(path.string() + ": incomplete header");

  std::vector<unsigned char> buf(n * kRecordBytes);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) throw IoError(path.string() + ": truncated payload");

  ObjectCloud cloud(n);
  const unsigned char* p = buf.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) cloud.points[i][a] = get_f32(p);
    Eigen::Vector3d nrm;
    for (int a = 0; a < 3; ++a) nrm[a] = get_f32(p);
    const double len = nrm.norm();
    if (len > 0.5) {
      cloud.normals[i] = nrm / len;  // float storage drifts off unit length
      cloud.normal_valid[i] = 1;
    }
    cloud.colors[i] = Rgb{p[0], p[1], p[2]};
    p += 3;
    cloud.weights[i] = std::clamp(get_f32(p), 0.0, 1.0);
    cloud.edge_flags[i] = *p++ ? 1 : 0;
    if (!cloud.points[i].allFinite()) throw IoError(path.string() + ": non-finite point " + std::to_string(i));
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// Trajectory

std::string format_trajectory_line(std::int64_t frame_id, const Pose& pose) {
  const Eigen::Quaterniond q = pose.quaternion();
  std::string s = std::to_string(frame_id);
  for (const double v : {pose.translation.x(), pose.translation.y(), pose.translation.z(), q.x(), q.y(), q.z(), q.w()}) {
    s.push_back(' ');
    s += format_number(v);
  }
  return s;
}

void write_trajectory(const Trajectory& poses, const fs::path& path) {
  auto out = open_out(path, false);
  for (const auto& [id, pose] : poses) out << format_trajectory_line(id, pose) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

Trajectory read_trajectory(const fs::path& path) {
  auto in = open_in(path, false);
  Trajectory traj;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tok = split_ws(strip_comment(line));
    if (tok.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (tok.size() != 8) throw IoError(where + ": expected 'frame_id tx ty tz qx qy qz qw'");
    const auto id = parse_num<std::int64_t>(tok[0], where + " frame_id");
    double v[7];
    for (int i = 0; i < 7; ++i) v[i] = parse_num<double>(tok[static_cast<std::size_t>(i + 1)], where + " value");
    const Eigen::Quaterniond q(v[6], v[3], v[4], v[5]);
    if (std::abs(q.norm() - 1.0) > 1e-3) throw IoError(where + ": quaternion is not unit length");
    traj.emplace_back(id, Pose::from_quaternion(q, Eigen::Vector3d(v[0], v[1], v[2])));
  }
  return traj;
}

void write_intrinsics(const CameraIntrinsics& k, const fs::path& path) {
  auto out = open_out(path, false);
  out << "intrinsics " << format_number(k.fx) << ' ' << format_number(k.fy) << ' ' << format_number(k.cx) << ' '
      << format_number(k.cy) << ' ' << k.width << ' ' << k.height << ' ' << format_number(k.depth_scale) << '\n';
}

CameraIntrinsics read_intrinsics(const fs::path& path) { return read_manifest(path).intrinsics; }

void write_indices(const std::vector<std::int32_t>& indices, const fs::path& path) {
  auto out = open_out(path, false);
  out << indices.size() << '\n';
  for (std::size_t i = 0; i < indices.size(); ++i) out << indices[i] << ((i % 16 == 15) ? '\n' : ' ');
  out << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<std::int32_t> read_indices(const fs::path& path) {
  auto in = open_in(path, false);
  std::size_t n = 0;
  if (!(in >> n)) throw IoError(path.string() + ": missing index count");
  std::vector<std::int32_t> out(n);
  for (auto& v : out)
    if (!(in >> v)) throw IoError(path.string() + ": truncated index list");
  return out;
}

}  // namespace objmodel::io
