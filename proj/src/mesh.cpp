#include "objmodel/mesh.hpp"

#include "objmodel/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

namespace objmodel {

Eigen::Vector3d TriangleMesh::face_normal(std::size_t tri) const {
  const Eigen::Vector3d n = (corner(tri, 1) - corner(tri, 0)).cross(corner(tri, 2) - corner(tri, 0));
  const double len = n.norm();
  return len > 0.0 ? Eigen::Vector3d(n / len) : Eigen::Vector3d::Zero();
}

double TriangleMesh::area(std::size_t tri) const {
  return 0.5 * (corner(tri, 1) - corner(tri, 0)).cross(corner(tri, 2) - corner(tri, 0)).norm();
}

double TriangleMesh::total_area() const {
  double a = 0.0;
  for (std::size_t i = 0; i < triangles.size(); ++i) a += area(i);
  return a;
}

void TriangleMesh::bounds(Eigen::Vector3d& lo, Eigen::Vector3d& hi) const {
  lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  hi = -lo;
  for (const auto& v : vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
}

TriangleMesh transform_mesh(const TriangleMesh& mesh, const Pose& pose) {
  TriangleMesh out = mesh;
  for (auto& v : out.vertices) v = pose * v;
  return out;
}

// ---------------------------------------------------------------------------
// Generators

namespace {

TriangleMesh icosphere_unit(int subdivisions) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriangleMesh m;
  m.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : m.vertices) v.normalize();
  m.triangles = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                 {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                 {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> mid;
    const auto midpoint = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      if (const auto it = mid.find(key); it != mid.end()) return it->second;
      m.vertices.push_back((m.vertices[static_cast<std::size_t>(a)] + m.vertices[static_cast<std::size_t>(b)]).normalized());
      const int id = static_cast<int>(m.vertices.size()) - 1;
      mid.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(m.triangles.size() * 4);
    for (const auto& tri : m.triangles) {
      const int ab = midpoint(tri[0], tri[1]);
      const int bc = midpoint(tri[1], tri[2]);
      const int ca = midpoint(tri[2], tri[0]);
      next.push_back({tri[0], ab, ca});
      next.push_back({tri[1], bc, ab});
      next.push_back({tri[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    m.triangles = std::move(next);
  }
  return m;
}

}  // namespace

TriangleMesh make_sphere(double radius, int subdivisions) {
  TriangleMesh m = icosphere_unit(subdivisions);
  for (auto& v : m.vertices) v *= radius;
  return m;
}

TriangleMesh make_box(double sx, double sy, double sz) {
  TriangleMesh m;
  const double x = sx / 2, y = sy / 2, z = sz / 2;
  m.vertices = {{-x, -y, -z}, {x, -y, -z}, {x, y, -z}, {-x, y, -z}, {-x, -y, z}, {x, -y, z}, {x, y, z}, {-x, y, z}};
  m.triangles = {{0, 2, 1}, {0, 3, 2}, {4, 5, 6}, {4, 6, 7}, {0, 1, 5}, {0, 5, 4},
                 {1, 2, 6}, {1, 6, 5}, {2, 3, 7}, {2, 7, 6}, {3, 0, 4}, {3, 4, 7}};
  return m;
}

TriangleMesh make_pumpkin(double radius, double height, int ribs, double rib_depth, double taper, int slices,
                          int stacks) {
  if (!(radius > 0.0 && height > 0.0) || ribs < 0 || rib_depth < 0.0 || rib_depth >= 1.0 || std::abs(taper) >= 1.0 ||
      slices < 3 || stacks < 1)
    throw InvalidInput("make_pumpkin: invalid shape parameters");
  TriangleMesh m;
  for (int j = 0; j <= stacks; ++j) {
    const double t = static_cast<double>(j) / stacks;
    const double z = t * height - height / 2;
    const double r0 = radius * std::sqrt(1.0 - 0.64 * (2 * t - 1) * (2 * t - 1)) * (1.0 + taper * (0.5 - t));
    for (int i = 0; i < slices; ++i) {
      const double phi = 2.0 * std::numbers::pi * i / slices;
      const double r = r0 * (1.0 - rib_depth * (0.5 - 0.5 * std::cos(ribs * phi)));
      m.vertices.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
    }
  }
  const auto at = [&](int j, int i) { return j * slices + (i % slices); };
  for (int j = 0; j < stacks; ++j)
    for (int i = 0; i < slices; ++i) {
      m.triangles.push_back({at(j, i), at(j, i + 1), at(j + 1, i + 1)});
      m.triangles.push_back({at(j, i), at(j + 1, i + 1), at(j + 1, i)});
    }
  const int bottom = static_cast<int>(m.vertices.size());
  m.vertices.emplace_back(0.0, 0.0, -height / 2);
  const int top = static_cast<int>(m.vertices.size());
  m.vertices.emplace_back(0.0, 0.0, height / 2);
  for (int i = 0; i < slices; ++i) {
    m.triangles.push_back({bottom, at(0, i + 1), at(0, i)});
    m.triangles.push_back({top, at(stacks, i), at(stacks, i + 1)});
  }
  return m;
}

TriangleMesh make_potato(double radius, std::uint64_t seed, int bumps, int subdivisions) {
  TriangleMesh m = icosphere_unit(subdivisions);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> amp(-0.12, 0.22);
  std::uniform_real_distribution<double> width(0.08, 0.3);
  struct Bump {
    Eigen::Vector3d dir;
    double a, w;
  };
  std::vector<Bump> list;
  for (int k = 0; k < bumps; ++k) {
    Eigen::Vector3d d(gauss(rng), gauss(rng), gauss(rng));
    list.push_back({d.normalized(), amp(rng), width(rng)});
  }
  for (auto& v : m.vertices) {
    double r = 1.0;
    for (const auto& b : list) r += b.a * std::exp(-(1.0 - v.dot(b.dir)) / b.w);
    v *= radius * r;
  }
  return m;
}

TriangleMesh make_plane(double half_extent, int cells) {
  TriangleMesh m;
  cells = std::max(cells, 1);
  for (int j = 0; j <= cells; ++j)
    for (int i = 0; i <= cells; ++i)
      m.vertices.emplace_back(-half_extent + 2 * half_extent * i / cells, -half_extent + 2 * half_extent * j / cells, 0.0);
  const auto at = [&](int i, int j) { return j * (cells + 1) + i; };
  for (int j = 0; j < cells; ++j)
    for (int i = 0; i < cells; ++i) {
      m.triangles.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1)});
      m.triangles.push_back({at(i, j), at(i + 1, j + 1), at(i, j + 1)});
    }
  return m;
}

// ---------------------------------------------------------------------------
// OBJ

void write_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

TriangleMesh read_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  TriangleMesh m;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Eigen::Vector3d v;
      if (!(ss >> v.x() >> v.y() >> v.z())) throw IoError(path.string() + ":" + std::to_string(lineno) + ": bad vertex");
      m.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ss >> tok) {
        const int i = std::stoi(tok.substr(0, tok.find('/')));
        idx.push_back(i > 0 ? i - 1 : static_cast<int>(m.vertices.size()) + i);
      }
      if (idx.size() < 3) throw IoError(path.string() + ":" + std::to_string(lineno) + ": face with < 3 vertices");
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) m.triangles.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  for (const auto& t : m.triangles)
    for (const int i : t)
      if (i < 0 || static_cast<std::size_t>(i) >= m.vertices.size())
        throw IoError(path.string() + ": face index out of range");
  return m;
}

// ---------------------------------------------------------------------------
// Primitive queries

Eigen::Vector3d closest_point_on_triangle(const Eigen::Vector3d& p, const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                                          const Eigen::Vector3d& c) {
  const Eigen::Vector3d ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;
  const Eigen::Vector3d bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;
  const Eigen::Vector3d cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

double intersect_triangle(const Eigen::Vector3d& o, const Eigen::Vector3d& d, const Eigen::Vector3d& a,
                          const Eigen::Vector3d& b, const Eigen::Vector3d& c, double tmin) {
  const Eigen::Vector3d e1 = b - a, e2 = c - a;
  const Eigen::Vector3d pvec = d.cross(e2);
  const double det = e1.dot(pvec);
  if (std::abs(det) < 1e-18) return -1.0;
  const double inv = 1.0 / det;
  const Eigen::Vector3d tvec = o - a;
  const double u = tvec.dot(pvec) * inv;
  if (u < 0.0 || u > 1.0) return -1.0;
  const Eigen::Vector3d qvec = tvec.cross(e1);
  const double v = d.dot(qvec) * inv;
  if (v < 0.0 || u + v > 1.0) return -1.0;
  const double t = e2.dot(qvec) * inv;
  return t > tmin ? t : -1.0;
}

double brute_force_sq_distance(const TriangleMesh& mesh, const Eigen::Vector3d& p) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < mesh.size(); ++i)
    best = std::min(best, (closest_point_on_triangle(p, mesh.corner(i, 0), mesh.corner(i, 1), mesh.corner(i, 2)) - p).squaredNorm());
  return best;
}

// ---------------------------------------------------------------------------
// BVH

MeshBvh::MeshBvh(TriangleMesh mesh) : mesh_(std::move(mesh)) {
  order_.resize(mesh_.size());
  std::iota(order_.begin(), order_.end(), 0);
  if (!order_.empty()) build(0, static_cast<int>(order_.size()));
}

int MeshBvh::build(int begin, int end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  Eigen::Vector3d clo = lo, chi = hi;
  for (int i = begin; i < end; ++i) {
    const auto t = static_cast<std::size_t>(order_[static_cast<std::size_t>(i)]);
    Eigen::Vector3d cen = Eigen::Vector3d::Zero();
    for (int c = 0; c < 3; ++c) {
      lo = lo.cwiseMin(mesh_.corner(t, c));
      hi = hi.cwiseMax(mesh_.corner(t, c));
      cen += mesh_.corner(t, c) / 3.0;
    }
    clo = clo.cwiseMin(cen);
    chi = chi.cwiseMax(cen);
  }
  nodes_[static_cast<std::size_t>(id)].lo = lo;
  nodes_[static_cast<std::size_t>(id)].hi = hi;
  nodes_[static_cast<std::size_t>(id)].begin = begin;
  nodes_[static_cast<std::size_t>(id)].end = end;
  if (end - begin <= 4) return id;
  int axis = 0;
  (chi - clo).maxCoeff(&axis);
  const int mid = begin + (end - begin) / 2;
  const auto centroid = [&](int t) {
    const auto s = static_cast<std::size_t>(t);
    return mesh_.corner(s, 0)[axis] + mesh_.corner(s, 1)[axis] + mesh_.corner(s, 2)[axis];
  };
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](int a, int b) {
    const double ca = centroid(a), cb = centroid(b);
    return ca != cb ? ca < cb : a < b;
  });
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[static_cast<std::size_t>(id)].left = left;
  nodes_[static_cast<std::size_t>(id)].right = right;
  return id;
}

namespace {

bool slab(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi, const Eigen::Vector3d& o, const Eigen::Vector3d& inv,
          double tmax) {
  double t0 = 0.0, t1 = tmax;
  for (int a = 0; a < 3; ++a) {
    double tn = (lo[a] - o[a]) * inv[a];
    double tf = (hi[a] - o[a]) * inv[a];
    if (tn > tf) std::swap(tn, tf);
    t0 = std::max(t0, tn);
    t1 = std::min(t1, tf);
    if (t0 > t1) return false;
  }
  return true;
}

double box_sq_distance(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi, const Eigen::Vector3d& p) {
  double d = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double e = p[a] < lo[a] ? lo[a] - p[a] : (p[a] > hi[a] ? p[a] - hi[a] : 0.0);
    d += e * e;
  }
  return d;
}

}  // namespace

MeshBvh::RayHit MeshBvh::raycast(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, double tmax) const {
  RayHit hit;
  if (nodes_.empty()) return hit;
  const Eigen::Vector3d inv(1.0 / dir.x(), 1.0 / dir.y(), 1.0 / dir.z());
  double best = tmax;
  int stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& n = nodes_[static_cast<std::size_t>(stack[--top])];
    if (!slab(n.lo, n.hi, origin, inv, best)) continue;
    if (n.left < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const auto t = static_cast<std::size_t>(order_[static_cast<std::size_t>(i)]);
        const double d = intersect_triangle(origin, dir, mesh_.corner(t, 0), mesh_.corner(t, 1), mesh_.corner(t, 2));
        if (d > 0.0 && d < best) {
          best = d;
          hit = {d, static_cast<int>(t)};
        }
      }
    } else {
      stack[top++] = n.left;
      stack[top++] = n.right;
    }
  }
  return hit;
}

MeshBvh::ClosestHit MeshBvh::closest(const Eigen::Vector3d& p) const {
  ClosestHit best;
  if (!nodes_.empty()) closest_rec(0, p, best);
  return best;
}

void MeshBvh::closest_rec(int id, const Eigen::Vector3d& p, ClosestHit& best) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  // small slack so rounding in the box bound never prunes the true minimum
  if (box_sq_distance(n.lo, n.hi, p) > best.sq_distance * (1.0 + 1e-9) + 1e-300) return;
  if (n.left < 0) {
    for (int i = n.begin; i < n.end; ++i) {
      const auto t = static_cast<std::size_t>(order_[static_cast<std::size_t>(i)]);
      const Eigen::Vector3d q = closest_point_on_triangle(p, mesh_.corner(t, 0), mesh_.corner(t, 1), mesh_.corner(t, 2));
      const double d = (q - p).squaredNorm();
      if (d < best.sq_distance) best = {d, static_cast<int>(t), q};
    }
    return;
  }
  const Node& l = nodes_[static_cast<std::size_t>(n.left)];
  const Node& r = nodes_[static_cast<std::size_t>(n.right)];
  if (box_sq_distance(l.lo, l.hi, p) <= box_sq_distance(r.lo, r.hi, p)) {
    closest_rec(n.left, p, best);
    closest_rec(n.right, p, best);
  } else {
    closest_rec(n.right, p, best);
    closest_rec(n.left, p, best);
  }
}

ObjectCloud sample_mesh(const TriangleMesh& mesh, std::size_t count, std::uint64_t seed) {
  std::vector<double> cdf(mesh.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < mesh.size(); ++i) cdf[i] = (acc += mesh.area(i));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  ObjectCloud out;
  for (std::size_t s = 0; s < count && acc > 0.0; ++s) {
    const double r = u01(rng) * acc;
    const auto tri = static_cast<std::size_t>(std::min<std::ptrdiff_t>(
        std::upper_bound(cdf.begin(), cdf.end(), r) - cdf.begin(), static_cast<std::ptrdiff_t>(mesh.size()) - 1));
    const double a = std::sqrt(u01(rng)), b = u01(rng);
    const Eigen::Vector3d p = (1 - a) * mesh.corner(tri, 0) + a * (1 - b) * mesh.corner(tri, 1) + a * b * mesh.corner(tri, 2);
    const Eigen::Vector3d n = mesh.face_normal(tri);
    out.push_back(p, n, n.squaredNorm() > 0.5, Rgb{200, 200, 200}, false, 1.0);
  }
  return out;
}

}  // namespace objmodel

namespace objmodel {

TriangleMesh convex_hull(const std::vector<Eigen::Vector3d>& points) {
  const std::size_t n = points.size();
  if (n < 4) throw EstimationError("convex_hull: need at least 4 points");
  Eigen::Vector3d lo = points[0], hi = points[0];
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double eps = 1e-9 * std::max((hi - lo).norm(), 1e-12);

  // initial tetrahedron from extreme points
  std::size_t i0 = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (points[i].x() < points[i0].x()) i0 = i;
  std::size_t i1 = i0;
  double best = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (const double d = (points[i] - points[i0]).squaredNorm(); d > best) best = d, i1 = i;
  const Eigen::Vector3d axis = (points[i1] - points[i0]).normalized();
  std::size_t i2 = i0;
  best = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d d = points[i] - points[i0];
    if (const double r = (d - d.dot(axis) * axis).squaredNorm(); r > best) best = r, i2 = i;
  }
  if (best <= eps * eps) throw EstimationError("convex_hull: points are collinear");
  const Eigen::Vector3d base_n = (points[i1] - points[i0]).cross(points[i2] - points[i0]).normalized();
  std::size_t i3 = i0;
  best = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (const double d = std::abs(base_n.dot(points[i] - points[i0])); d > best) best = d, i3 = i;
  if (best <= eps) throw EstimationError("convex_hull: points are coplanar");

  struct Face {
    std::array<int, 3> v;
    Eigen::Vector3d normal;
    double offset;
    bool alive;
  };
  std::vector<Face> faces;
  std::map<std::pair<int, int>, std::size_t> edge_face;  // directed edge -> face
  const auto add_face = [&](int a, int b, int c) {
    Face f{{a, b, c}, Eigen::Vector3d::Zero(), 0.0, true};
    f.normal = (points[static_cast<std::size_t>(b)] - points[static_cast<std::size_t>(a)])
                   .cross(points[static_cast<std::size_t>(c)] - points[static_cast<std::size_t>(a)])
                   .normalized();
    f.offset = f.normal.dot(points[static_cast<std::size_t>(a)]);
    const std::size_t id = faces.size();
    faces.push_back(f);
    edge_face[{a, b}] = id;
    edge_face[{b, c}] = id;
    edge_face[{c, a}] = id;
  };
  {
    int a = static_cast<int>(i0), b = static_cast<int>(i1), c = static_cast<int>(i2), d = static_cast<int>(i3);
    if (base_n.dot(points[i3] - points[i0]) > 0.0) std::swap(b, c);  // base faces away from the apex
    add_face(a, b, c);
    add_face(a, d, b);
    add_face(b, d, c);
    add_face(c, d, a);
  }

  std::vector<std::size_t> visible;
  std::vector<std::pair<int, int>> horizon;
  for (std::size_t pi = 0; pi < n; ++pi) {
    if (pi == i0 || pi == i1 || pi == i2 || pi == i3) continue;
    const Eigen::Vector3d& p = points[pi];
    visible.clear();
    for (std::size_t f = 0; f < faces.size(); ++f)
      if (faces[f].alive && faces[f].normal.dot(p) - faces[f].offset > eps) visible.push_back(f);
    if (visible.empty()) continue;
    horizon.clear();
    for (const auto f : visible) {
      const auto& v = faces[f].v;
      for (int e = 0; e < 3; ++e) {
        const int a = v[static_cast<std::size_t>(e)], b = v[static_cast<std::size_t>((e + 1) % 3)];
        const auto twin = edge_face.at({b, a});
        const Eigen::Vector3d& tn = faces[twin].normal;
        if (!(tn.dot(p) - faces[twin].offset > eps)) horizon.emplace_back(a, b);
      }
    }
    for (const auto f : visible) {
      faces[f].alive = false;
      const auto& v = faces[f].v;
      for (int e = 0; e < 3; ++e) edge_face.erase({v[static_cast<std::size_t>(e)], v[static_cast<std::size_t>((e + 1) % 3)]});
    }
    for (const auto& [a, b] : horizon) add_face(a, b, static_cast<int>(pi));
  }

  TriangleMesh hull;
  std::vector<int> remap(n, -1);
  for (const auto& f : faces) {
    if (!f.alive) continue;
    std::array<int, 3> tri{};
    for (int c = 0; c < 3; ++c) {
      const auto v = static_cast<std::size_t>(f.v[static_cast<std::size_t>(c)]);
      if (remap[v] < 0) {
        remap[v] = static_cast<int>(hull.vertices.size());
        hull.vertices.push_back(points[v]);
      }
      tri[static_cast<std::size_t>(c)] = remap[v];
    }
    hull.triangles.push_back(tri);
  }
  return hull;
}

}  // namespace objmodel
