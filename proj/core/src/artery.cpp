#include "hemomesh/artery.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <unordered_map>

#include <json.hpp>

#include "hemomesh/geodesy.hpp"

namespace hemomesh {

namespace {

// ---------- centerline sampling ------------------------------------------

struct Polyline {
  std::vector<Vec3> points;    // densely sampled
  std::vector<double> arclen;  // cumulative, arclen[0] = 0
  double length() const { return arclen.back(); }

  Vec3 eval(double s) const {
    s = std::clamp(s, 0.0, length());
    const auto it = std::upper_bound(arclen.begin(), arclen.end(), s);
    const auto i = std::min(points.size() - 1,
                            static_cast<std::size_t>(it - arclen.begin()));
    if (i == 0) return points[0];
    const double t = (s - arclen[i - 1]) /
                     std::max(1e-12, arclen[i] - arclen[i - 1]);
    return points[i - 1] + t * (points[i] - points[i - 1]);
  }
  Vec3 tangent(double s) const {
    const double h = std::max(1e-3, length() * 1e-4);
    const Vec3 d = eval(std::min(length(), s + h)) -
                   eval(std::max(0.0, s - h));
    const double n = d.norm();
    if (n <= 1e-12) throw NumericError("degenerate centerline tangent");
    return d / n;
  }
};

Vec3 catmull_rom(const Vec3& p0, const Vec3& p1, const Vec3& p2,
                 const Vec3& p3, double t) {
  const double t2 = t * t, t3 = t2 * t;
  return 0.5 * ((2.0 * p1) + (-p0 + p2) * t +
                (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2 +
                (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t3);
}

Polyline spline_sample(const std::vector<Vec3>& ctrl, double ds) {
  if (ctrl.size() < 2) throw ConfigError("centerline needs >= 2 points");
  std::vector<Vec3> pts;
  for (std::size_t seg = 0; seg + 1 < ctrl.size(); ++seg) {
    const Vec3& p0 = ctrl[seg == 0 ? 0 : seg - 1];
    const Vec3& p1 = ctrl[seg];
    const Vec3& p2 = ctrl[seg + 1];
    const Vec3& p3 = ctrl[std::min(ctrl.size() - 1, seg + 2)];
    const int steps =
        std::max(2, static_cast<int>(std::ceil((p2 - p1).norm() / ds)));
    for (int k = 0; k < steps; ++k)
      pts.push_back(catmull_rom(p0, p1, p2, p3, static_cast<double>(k) / steps));
  }
  pts.push_back(ctrl.back());
  Polyline line;
  line.points = std::move(pts);
  line.arclen.resize(line.points.size());
  line.arclen[0] = 0.0;
  for (std::size_t i = 1; i < line.points.size(); ++i)
    line.arclen[i] =
        line.arclen[i - 1] + (line.points[i] - line.points[i - 1]).norm();
  return line;
}

Polyline straight_line(const Vec3& a, const Vec3& b, double ds) {
  std::vector<Vec3> pts;
  const double len = (b - a).norm();
  const int steps = std::max(2, static_cast<int>(std::ceil(len / ds)));
  for (int k = 0; k <= steps; ++k)
    pts.push_back(a + (static_cast<double>(k) / steps) * (b - a));
  Polyline line;
  line.points = std::move(pts);
  line.arclen.resize(line.points.size());
  for (std::size_t i = 1; i < line.points.size(); ++i)
    line.arclen[i] =
        line.arclen[i - 1] + (line.points[i] - line.points[i - 1]).norm();
  return line;
}

// Rotation-minimizing frames by the double-reflection method.
struct SweepFrame {
  Vec3 u, v;  // orthonormal, both orthogonal to the tangent
};

std::vector<SweepFrame> rmf(const std::vector<Vec3>& centers,
                            const std::vector<Vec3>& tangents) {
  std::vector<SweepFrame> frames(centers.size());
  Vec3 t0 = tangents[0];
  Vec3 pick = std::abs(t0.z()) < 0.9 ? Vec3(0, 0, 1) : Vec3(0, 1, 0);
  Vec3 u = (pick - pick.dot(t0) * t0).normalized();
  frames[0] = {u, t0.cross(u)};
  for (std::size_t i = 0; i + 1 < centers.size(); ++i) {
    const Vec3 v1 = centers[i + 1] - centers[i];
    const double c1 = v1.squaredNorm();
    if (c1 <= 1e-18) {
      frames[i + 1] = frames[i];
      continue;
    }
    const Vec3 rl = frames[i].u - (2.0 / c1) * v1.dot(frames[i].u) * v1;
    const Vec3 tl = tangents[i] - (2.0 / c1) * v1.dot(tangents[i]) * v1;
    const Vec3 v2 = tangents[i + 1] - tl;
    const double c2 = v2.squaredNorm();
    Vec3 un = c2 <= 1e-18 ? rl : rl - (2.0 / c2) * v2.dot(rl) * v2;
    un = (un - un.dot(tangents[i + 1]) * tangents[i + 1]).normalized();
    frames[i + 1] = {un, tangents[i + 1].cross(un)};
  }
  return frames;
}

// ---------- tube lofting ---------------------------------------------------

struct Tube {
  std::vector<Vec3> vertices;      // ring-major
  std::vector<std::array<int, 3>> triangles;
  int ring_size = 0;
  int rings = 0;
};

// radius_fn(s, phi) gives the lumen radius; spacing scales with the local
// effective radius so stenosed segments are refined.
Tube sweep_tube(const Polyline& line, double s_begin, double s_end,
                int ring_size, double edge_length,
                const std::function<double(double, double)>& radius_fn,
                const std::function<double(double)>& eff_radius_fn,
                double base_radius) {
  Tube tube;
  tube.ring_size = ring_size;
  std::vector<double> stations;
  double s = s_begin;
  stations.push_back(s);
  while (true) {
    const double scale =
        std::clamp(eff_radius_fn(s) / base_radius, 0.35, 1.25);
    const double step = edge_length * scale;
    if (s + step >= s_end - 0.45 * step) break;
    s += step;
    stations.push_back(s);
  }
  stations.push_back(s_end);
  if (stations.size() < 3)
    throw MeshError("loft: tube segment too short for two rings");

  std::vector<Vec3> centers, tangents;
  for (double st : stations) {
    centers.push_back(line.eval(st));
    tangents.push_back(line.tangent(st));
  }
  const auto frames = rmf(centers, tangents);
  tube.rings = static_cast<int>(stations.size());
  tube.vertices.reserve(static_cast<std::size_t>(tube.rings) * ring_size);
  for (int i = 0; i < tube.rings; ++i)
    for (int j = 0; j < ring_size; ++j) {
      const double phi = kTwoPi * j / ring_size;
      const double r = radius_fn(stations[i], phi);
      tube.vertices.push_back(centers[i] + r * (std::cos(phi) * frames[i].u +
                                                std::sin(phi) * frames[i].v));
    }
  for (int i = 0; i + 1 < tube.rings; ++i)
    for (int j = 0; j < ring_size; ++j) {
      const int a = i * ring_size + j;
      const int b = i * ring_size + (j + 1) % ring_size;
      const int c = (i + 1) * ring_size + j;
      const int d = (i + 1) * ring_size + (j + 1) % ring_size;
      tube.triangles.push_back({a, b, c});
      tube.triangles.push_back({b, d, c});
    }
  return tube;
}

// ---------- icosphere ------------------------------------------------------

void icosphere(double radius, int subdivisions, std::vector<Vec3>* verts,
               std::vector<std::array<int, 3>>* tris) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, phi, 0}, {1, phi, 0},   {-1, -phi, 0},
                         {1, -phi, 0}, {0, -1, phi},  {0, 1, phi},
                         {0, -1, -phi}, {0, 1, -phi}, {phi, 0, -1},
                         {phi, 0, 1},  {-phi, 0, -1}, {-phi, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<std::array<int, 3>> f = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      v.push_back(((v[a] + v[b]) * 0.5).normalized());
      const int idx = static_cast<int>(v.size()) - 1;
      midpoint[key] = idx;
      return idx;
    };
    std::vector<std::array<int, 3>> nf;
    nf.reserve(f.size() * 4);
    for (const auto& t : f) {
      const int ab = mid(t[0], t[1]);
      const int bc = mid(t[1], t[2]);
      const int ca = mid(t[2], t[0]);
      nf.push_back({t[0], ab, ca});
      nf.push_back({t[1], bc, ab});
      nf.push_back({t[2], ca, bc});
      nf.push_back({ab, bc, ca});
    }
    f = std::move(nf);
  }
  for (auto& p : v) p *= radius;
  *verts = std::move(v);
  *tris = std::move(f);
}

// ---------- loop utilities -------------------------------------------------

double loop_winding(const std::vector<Vec3>& pts, const Vec3& axis) {
  Vec3 c = Vec3::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  double w = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Vec3 a = pts[i] - c;
    const Vec3 b = pts[(i + 1) % pts.size()] - c;
    w += a.cross(b).dot(axis);
  }
  return w;
}

// Stitch two closed loops with a triangle band (arclength-merged zipper).
void zipper(const std::vector<int>& loop_a, const std::vector<Vec3>& pos_a,
            const std::vector<int>& loop_b, const std::vector<Vec3>& pos_b,
            std::vector<std::array<int, 3>>* out) {
  const int na = static_cast<int>(loop_a.size());
  const int nb = static_cast<int>(loop_b.size());
  auto params = [](const std::vector<int>& loop,
                   const std::vector<Vec3>& pos) {
    std::vector<double> t(loop.size() + 1, 0.0);
    for (std::size_t i = 0; i < loop.size(); ++i)
      t[i + 1] = t[i] + (pos[loop[(i + 1) % loop.size()]] - pos[loop[i]]).norm();
    const double total = t.back();
    for (auto& x : t) x /= total;
    return t;
  };
  const auto ta = params(loop_a, pos_a);
  const auto tb = params(loop_b, pos_b);
  int i = 0, j = 0;
  while (i < na || j < nb) {
    const double pa = i < na ? ta[i + 1] : 2.0;
    const double pb = j < nb ? tb[j + 1] : 2.0;
    if (pa <= pb) {
      out->push_back({loop_a[i % na], loop_b[j % nb], loop_a[(i + 1) % na]});
      ++i;
    } else {
      out->push_back({loop_a[i % na], loop_b[j % nb], loop_b[(j + 1) % nb]});
      ++j;
    }
  }
}

// ---------- triangle-triangle intersection (Moller) ------------------------

bool tri_tri_overlap(const Vec3& a0, const Vec3& a1, const Vec3& a2,
                     const Vec3& b0, const Vec3& b1, const Vec3& b2) {
  auto plane_side = [](const Vec3& n, double d, const Vec3& p) {
    return n.dot(p) + d;
  };
  const Vec3 na = (a1 - a0).cross(a2 - a0);
  const double da = -na.dot(a0);
  double db0 = plane_side(na, da, b0), db1 = plane_side(na, da, b1),
         db2 = plane_side(na, da, b2);
  const double eps = 1e-10 * na.norm();
  if ((db0 > eps && db1 > eps && db2 > eps) ||
      (db0 < -eps && db1 < -eps && db2 < -eps))
    return false;
  const Vec3 nb = (b1 - b0).cross(b2 - b0);
  const double db = -nb.dot(b0);
  double da0 = plane_side(nb, db, a0), da1 = plane_side(nb, db, a1),
         da2 = plane_side(nb, db, a2);
  const double epsb = 1e-10 * nb.norm();
  if ((da0 > epsb && da1 > epsb && da2 > epsb) ||
      (da0 < -epsb && da1 < -epsb && da2 < -epsb))
    return false;

  // Interval overlap along the plane-intersection line.
  const Vec3 dline = na.cross(nb);
  auto interval = [&](const Vec3& p0, const Vec3& p1, const Vec3& p2,
                      double d0, double d1, double d2, double* lo,
                      double* hi) -> bool {
    // Project onto the dominant axis of dline.
    int axis = 0;
    Vec3 ad = dline.cwiseAbs();
    if (ad[1] > ad[0]) axis = 1;
    if (ad[2] > ad[axis]) axis = 2;
    const double p[3] = {p0[axis], p1[axis], p2[axis]};
    const double d[3] = {d0, d1, d2};
    std::vector<double> xs;
    for (int e = 0; e < 3; ++e) {
      const int f = (e + 1) % 3;
      if ((d[e] > 0 && d[f] < 0) || (d[e] < 0 && d[f] > 0)) {
        const double t = d[e] / (d[e] - d[f]);
        xs.push_back(p[e] + t * (p[f] - p[e]));
      } else if (d[e] == 0.0) {
        xs.push_back(p[e]);
      }
    }
    if (xs.size() < 2) return false;
    const auto mm = std::minmax_element(xs.begin(), xs.end());
    *lo = *mm.first;
    *hi = *mm.second;
    return true;
  };
  double alo, ahi, blo, bhi;
  if (!interval(a0, a1, a2, da0, da1, da2, &alo, &ahi)) return false;
  if (!interval(b0, b1, b2, db0, db1, db2, &blo, &bhi)) return false;
  return std::max(alo, blo) <= std::min(ahi, bhi);
}

// Broad-phase grid over triangle AABBs + exact narrow phase, skipping
// triangle pairs that share a vertex.
bool mesh_self_intersects(const TriangleMesh& mesh, double cell) {
  struct Box {
    Vec3 lo, hi;
  };
  std::vector<Box> boxes(mesh.triangles.size());
  Vec3 origin = Vec3::Constant(std::numeric_limits<double>::max());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tr = mesh.triangles[t];
    Box b{mesh.positions[tr[0]], mesh.positions[tr[0]]};
    for (int k = 1; k < 3; ++k) {
      b.lo = b.lo.cwiseMin(mesh.positions[tr[k]]);
      b.hi = b.hi.cwiseMax(mesh.positions[tr[k]]);
    }
    boxes[t] = b;
    origin = origin.cwiseMin(b.lo);
  }
  std::unordered_map<std::int64_t, std::vector<int>> grid;
  auto key = [&](int x, int y, int z) {
    return (static_cast<std::int64_t>(x & 0x1fffff) << 42) |
           (static_cast<std::int64_t>(y & 0x1fffff) << 21) |
           static_cast<std::int64_t>(z & 0x1fffff);
  };
  auto cells_of = [&](const Box& b, auto&& fn) {
    const int x0 = static_cast<int>((b.lo.x() - origin.x()) / cell);
    const int y0 = static_cast<int>((b.lo.y() - origin.y()) / cell);
    const int z0 = static_cast<int>((b.lo.z() - origin.z()) / cell);
    const int x1 = static_cast<int>((b.hi.x() - origin.x()) / cell);
    const int y1 = static_cast<int>((b.hi.y() - origin.y()) / cell);
    const int z1 = static_cast<int>((b.hi.z() - origin.z()) / cell);
    for (int x = x0; x <= x1; ++x)
      for (int y = y0; y <= y1; ++y)
        for (int z = z0; z <= z1; ++z) fn(key(x, y, z));
  };
  for (std::size_t t = 0; t < boxes.size(); ++t)
    cells_of(boxes[t], [&](std::int64_t k) {
      grid[k].push_back(static_cast<int>(t));
    });

  auto share_vertex = [&](int s, int t) {
    for (int a : mesh.triangles[s])
      for (int b : mesh.triangles[t])
        if (a == b) return true;
    return false;
  };
  for (std::size_t t = 0; t < boxes.size(); ++t) {
    bool hit = false;
    cells_of(boxes[t], [&](std::int64_t k) {
      if (hit) return;
      for (int s : grid[k]) {
        if (s <= static_cast<int>(t)) continue;
        if ((boxes[t].lo.array() > boxes[s].hi.array()).any() ||
            (boxes[s].lo.array() > boxes[t].hi.array()).any())
          continue;
        if (share_vertex(static_cast<int>(t), s)) continue;
        const auto& ta = mesh.triangles[t];
        const auto& tb = mesh.triangles[s];
        if (tri_tri_overlap(mesh.positions[ta[0]], mesh.positions[ta[1]],
                            mesh.positions[ta[2]], mesh.positions[tb[0]],
                            mesh.positions[tb[1]], mesh.positions[tb[2]])) {
          hit = true;
          return;
        }
      }
    });
    if (hit) return true;
  }
  return false;
}

int ring_count_for(double radius, double edge_length) {
  return std::clamp(
      static_cast<int>(std::lround(kTwoPi * radius / edge_length)), 8, 64);
}

void tag_loops(TriangleMesh* mesh, const Vec3& inlet_probe,
               const std::vector<Vec3>& outlet_probes) {
  const auto loops = trace_boundary_loops(*mesh);
  mesh->boundary_loops.clear();
  for (const auto& loop : loops) {
    Vec3 c = Vec3::Zero();
    for (int v : loop) c += mesh->positions[v];
    c /= static_cast<double>(loop.size());
    BoundaryLoop bl;
    bl.vertices = loop;
    bl.tag = LoopTag::untagged;
    double din = (c - inlet_probe).norm();
    double dout = std::numeric_limits<double>::max();
    for (const auto& probe : outlet_probes)
      dout = std::min(dout, (c - probe).norm());
    bl.tag = din < dout ? LoopTag::inlet : LoopTag::outlet;
    mesh->boundary_loops.push_back(std::move(bl));
  }
}

}  // namespace

// ---------- spec sampling --------------------------------------------------

double default_edge_length(DatasetKind kind) {
  return kind == DatasetKind::single ? 0.4 : 0.2;
}

SingleArterySpec sample_single_artery(std::uint64_t seed) {
  Rng rng(seed);
  SingleArterySpec spec;
  spec.seed = seed;
  const int n_ctrl = 10;
  const double dx = 5.0;
  double y = 0.0;
  for (int i = 0; i < n_ctrl; ++i) {
    spec.control_points.emplace_back(dx * i, y, 0.0);
    y += rng.uniform(-2.5, 2.5);
  }
  spec.radius = rng.uniform(1.25, 2.0);
  const int n_sten = static_cast<int>(rng.uniform_int(3));  // 0, 1 or 2
  const double total_len = dx * (n_ctrl - 1);
  for (int k = 0; k < n_sten; ++k) {
    Stenosis s;
    s.center_arclength = rng.uniform(0.22, 0.78) * total_len;
    s.length = rng.uniform(3.0, 6.0) * spec.radius;
    s.severity = rng.uniform(0.2, 0.5);
    s.eccentricity = rng.uniform(0.0, 0.4);
    s.phase = rng.uniform(0.0, kTwoPi);
    spec.stenoses.push_back(s);
  }
  spec.flow = FlowParams{0.035, 1.05, 20.0, 13.332};
  return spec;
}

BifurcationSpec sample_bifurcation(std::uint64_t seed) {
  Rng rng(seed);
  BifurcationSpec spec;
  spec.seed = seed;
  const int budget = 10000;
  int draws = 0;
  auto next_or_throw = [&]() {
    if (++draws > budget)
      throw NumericError("sample_bifurcation: rejection budget exceeded");
  };
  // Angles from the coronary atlas; extreme tails (< ~1 % mass) are
  // re-drawn because the lofted junction degenerates there.
  do {
    next_or_throw();
    spec.beta = rng.normal(78.9, 23.1);
  } while (spec.beta < 25.0 || spec.beta > 150.0);
  do {
    next_or_throw();
    spec.beta_prime = rng.normal(61.5, 21.5);
  } while (spec.beta_prime < 5.0 || spec.beta_prime > 140.0);
  do {
    next_or_throw();
    spec.gamma_plane = rng.normal(9.5, 21.5);
  } while (std::abs(spec.gamma_plane) > 75.0);
  do {
    next_or_throw();
    spec.r_pmv = rng.normal(1.75, 0.4);
  } while (spec.r_pmv <= 0.5);
  do {
    next_or_throw();
    spec.r_dmv = rng.normal(1.6, 0.35);
  } while (spec.r_dmv <= 0.5);
  do {
    next_or_throw();
    spec.r_sb = rng.normal(1.5, 0.35);
  } while (spec.r_sb <= 0.5);

  spec.ellipse_aspect = rng.uniform(0.85, 1.0);
  spec.ellipse_angle = rng.uniform(0.0, kPi);
  spec.len_pmv = rng.uniform(10.0, 14.0);
  spec.len_dmv = rng.uniform(10.0, 16.0);
  spec.len_sb = rng.uniform(8.0, 14.0);
  spec.taper = rng.uniform(0.10, 0.22);

  // Bifurcation law. Solve the exponent for delta == 0 when the parent
  // dominates; otherwise keep the default exponent and record the residual.
  const double dp = 2.0 * spec.r_pmv, dd = 2.0 * spec.r_dmv,
               ds = 2.0 * spec.r_sb;
  auto residual = [&](double a) {
    return std::pow(dp, a) - std::pow(dd, a) - std::pow(ds, a);
  };
  spec.law_exponent = 2.33;
  spec.law_exact = false;
  if (dp > std::max(dd, ds) && residual(0.5) < 0.0 && residual(20.0) > 0.0) {
    double lo = 0.5, hi = 20.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (residual(mid) < 0.0 ? lo : hi) = mid;
    }
    spec.law_exponent = 0.5 * (lo + hi);
    spec.law_delta = 0.0;
    spec.law_exact = true;
  } else {
    spec.law_delta = residual(2.33);
  }
  spec.flow = FlowParams{0.04, 1.06, 11.8, 13.332};
  return spec;
}

// ---------- single-artery lofting -------------------------------------------

double single_artery_radius(const SingleArterySpec& spec, double s,
                            double phi) {
  double factor = 1.0;
  for (const auto& st : spec.stenoses) {
    const double half = 0.5 * st.length;
    if (std::abs(s - st.center_arclength) >= half) continue;
    const double w = std::cos(kPi * (s - st.center_arclength) / st.length);
    const double depth = st.severity * w * w;
    factor *= 1.0 - depth * (1.0 + st.eccentricity * std::cos(phi - st.phase));
  }
  return std::max(0.05, factor) * spec.radius;
}

double single_artery_effective_radius(const SingleArterySpec& spec,
                                      double s) {
  // sqrt(area / pi) via angular quadrature of r^2.
  const int n = 128;
  double acc = 0.0;
  for (int k = 0; k < n; ++k) {
    const double r = single_artery_radius(spec, s, kTwoPi * k / n);
    acc += r * r;
  }
  return std::sqrt(acc / n);
}

LoftResult loft_single_artery(const SingleArterySpec& spec,
                              double edge_length) {
  const Polyline line = spline_sample(spec.control_points, 0.2);
  const double total = line.length();
  const int m = ring_count_for(spec.radius, edge_length);

  // Centerline clearance pre-check (cheap rejection of kinked centerlines).
  for (std::size_t i = 0; i < line.points.size(); ++i)
    for (std::size_t j = i + 1; j < line.points.size(); ++j) {
      if (std::abs(line.arclen[j] - line.arclen[i]) < 4.0 * spec.radius)
        continue;
      if ((line.points[j] - line.points[i]).norm() < 2.2 * spec.radius)
        throw MeshError("loft: centerline self-clearance violated (seed " +
                        std::to_string(spec.seed) + ")");
    }

  Tube tube = sweep_tube(
      line, 0.0, total, m, edge_length,
      [&](double s, double phi) { return single_artery_radius(spec, s, phi); },
      [&](double s) { return single_artery_effective_radius(spec, s); },
      spec.radius);

  LoftResult result;
  result.mesh.positions = std::move(tube.vertices);
  result.mesh.triangles = std::move(tube.triangles);
  orient_consistently(result.mesh, line.eval(total * 0.5));
  tag_loops(&result.mesh, line.eval(0.0), {line.eval(total)});

  if (mesh_self_intersects(result.mesh, 2.0 * edge_length))
    throw MeshError("loft: surface self-intersection (seed " +
                    std::to_string(spec.seed) + ")");

  // Surrogate flow state along the centerline.
  const double r0 = single_artery_effective_radius(spec, 0.0);
  const double step = std::max(0.25, 0.5 * edge_length);
  for (double s = 0.0; s <= total + 1e-9; s += step) {
    CenterlineSample cs;
    cs.point = line.eval(s);
    cs.tangent = line.tangent(s);
    cs.r_eff_mm = single_artery_effective_radius(spec, s);
    cs.u_mean = spec.flow.u_in * (r0 / cs.r_eff_mm) * (r0 / cs.r_eff_mm);
    result.flow.samples.push_back(cs);
  }
  return result;
}

// ---------- bifurcation lofting ---------------------------------------------

namespace {

struct Branch {
  Polyline line;
  double r_near;  // junction-side radius (max semi-axis)
  std::function<double(double, double)> radius_fn;
  std::function<double(double)> eff_fn;
  Vec3 dir;  // outward from the junction
};

}  // namespace

LoftResult loft_bifurcation(const BifurcationSpec& spec, double edge_length) {
  const double deg = kPi / 180.0;
  // Reference direction +x; children in the xy-plane, PMV tilted by gamma.
  const Vec3 d_sb =
      Vec3(std::cos(spec.beta_prime * deg), std::sin(spec.beta_prime * deg), 0);
  const double dmv_angle = spec.beta_prime - spec.beta;
  const Vec3 d_dmv = Vec3(std::cos(dmv_angle * deg), std::sin(dmv_angle * deg), 0);
  const Vec3 e_in = Vec3(std::cos(spec.gamma_plane * deg), 0,
                         std::sin(spec.gamma_plane * deg));  // PMV flow dir
  const Vec3 inlet_point = -spec.len_pmv * e_in;

  auto taper_radius = [&](double r_ref, double len, double taper) {
    return [r_ref, len, taper](double s) {
      return r_ref * (1.0 + 0.5 * taper - taper * (s / len));
    };
  };
  // PMV radius decreases toward the junction; children decrease outward.
  auto r_pmv = taper_radius(spec.r_pmv, spec.len_pmv, spec.taper);
  auto r_dmv = taper_radius(spec.r_dmv, spec.len_dmv, spec.taper);
  auto r_sb = taper_radius(spec.r_sb, spec.len_sb, spec.taper);

  const double sa = std::sqrt(spec.ellipse_aspect);
  auto make_branch = [&](const Vec3& from, const Vec3& to,
                         std::function<double(double)> r_of_s, Vec3 dir) {
    Branch b;
    b.line = straight_line(from, to, 0.5);
    b.dir = dir;
    const double angle = spec.ellipse_angle;
    b.radius_fn = [r_of_s, sa, angle](double s, double phi) {
      const double r = r_of_s(s);
      const double a = r / sa, bb = r * sa;
      const double c = std::cos(phi - angle), sn = std::sin(phi - angle);
      return a * bb / std::sqrt(bb * bb * c * c + a * a * sn * sn);
    };
    b.eff_fn = r_of_s;  // ellipse keeps area pi r^2
    return b;
  };

  Branch pmv = make_branch(inlet_point, Vec3::Zero(), r_pmv, -e_in);
  Branch dmv = make_branch(Vec3::Zero(), spec.len_dmv * d_dmv, r_dmv, d_dmv);
  Branch sb = make_branch(Vec3::Zero(), spec.len_sb * d_sb, r_sb, d_sb);
  pmv.r_near = r_pmv(spec.len_pmv) / sa;
  dmv.r_near = r_dmv(0.0) / sa;
  sb.r_near = r_sb(0.0) / sa;

  // Junction sphere: branch cones must be disjoint.
  Branch* branches[3] = {&pmv, &dmv, &sb};
  const double rmax =
      std::max({pmv.r_near, dmv.r_near, sb.r_near});
  double rj = 1.35 * rmax;
  const double buffer = 1.2 * edge_length;
  bool ok = false;
  for (int it = 0; it < 64 && !ok; ++it) {
    ok = true;
    for (int i = 0; i < 3 && ok; ++i)
      for (int j = i + 1; j < 3 && ok; ++j) {
        const double ai =
            std::asin(std::min(0.98, branches[i]->r_near / rj)) + buffer / rj;
        const double aj =
            std::asin(std::min(0.98, branches[j]->r_near / rj)) + buffer / rj;
        const double sep = std::acos(
            std::clamp(branches[i]->dir.dot(branches[j]->dir), -1.0, 1.0));
        if (ai + aj >= sep) ok = false;
      }
    if (!ok) rj *= 1.12;
  }
  if (!ok || rj > 8.0 * rmax)
    throw MeshError("loft: junction cones cannot be separated (seed " +
                    std::to_string(spec.seed) + ")");
  for (const Branch* b : branches)
    if (b->line.length() < std::sqrt(rj * rj + b->r_near * b->r_near) + 2.5 * edge_length)
      throw MeshError("loft: branch shorter than junction radius (seed " +
                      std::to_string(spec.seed) + ")");

  // Sphere with the three cones carved out.
  std::vector<Vec3> sp_verts;
  std::vector<std::array<int, 3>> sp_tris;
  const int subdiv = std::clamp(
      static_cast<int>(std::lround(std::log2(1.05 * rj / edge_length))) + 1, 1,
      6);
  icosphere(rj, subdiv, &sp_verts, &sp_tris);
  std::vector<int> owner(sp_verts.size(), -1);  // carving cone per vertex
  for (std::size_t v = 0; v < sp_verts.size(); ++v) {
    const Vec3 dir = sp_verts[v].normalized();
    for (int b = 0; b < 3; ++b) {
      const double alpha =
          std::asin(std::min(0.98, branches[b]->r_near / rj)) +
          0.9 * edge_length / rj;
      if (dir.dot(branches[b]->dir) > std::cos(alpha)) {
        if (owner[v] >= 0)
          throw MeshError("loft: junction cones overlap on the sphere (seed " +
                          std::to_string(spec.seed) + ")");
        owner[v] = b;
      }
    }
  }

  // Tubes trimmed against the sphere.
  const double trim_pad = 0.7 * edge_length;
  auto trim_dist = [&](const Branch& b) {
    return std::sqrt((rj + trim_pad) * (rj + trim_pad) - b.r_near * b.r_near);
  };
  const int ring_pmv = ring_count_for(spec.r_pmv, edge_length);
  const int ring_dmv = ring_count_for(spec.r_dmv, edge_length);
  const int ring_sb = ring_count_for(spec.r_sb, edge_length);
  Tube t_pmv = sweep_tube(pmv.line, 0.0, spec.len_pmv - trim_dist(pmv),
                          ring_pmv, edge_length, pmv.radius_fn, pmv.eff_fn,
                          spec.r_pmv);
  Tube t_dmv = sweep_tube(dmv.line, trim_dist(dmv), spec.len_dmv, ring_dmv,
                          edge_length, dmv.radius_fn, dmv.eff_fn, spec.r_dmv);
  Tube t_sb = sweep_tube(sb.line, trim_dist(sb), spec.len_sb, ring_sb,
                         edge_length, sb.radius_fn, sb.eff_fn, spec.r_sb);

  // Assemble: tubes, then kept sphere vertices.
  TriangleMesh mesh;
  auto append_tube = [&](const Tube& t) {
    const int base = mesh.num_vertices();
    mesh.positions.insert(mesh.positions.end(), t.vertices.begin(),
                          t.vertices.end());
    for (const auto& tr : t.triangles)
      mesh.triangles.push_back({tr[0] + base, tr[1] + base, tr[2] + base});
    return base;
  };
  const int base_pmv = append_tube(t_pmv);
  const int base_dmv = append_tube(t_dmv);
  const int base_sb = append_tube(t_sb);

  std::vector<int> sphere_map(sp_verts.size(), -1);
  for (std::size_t v = 0; v < sp_verts.size(); ++v)
    if (owner[v] < 0) {
      sphere_map[v] = mesh.num_vertices();
      mesh.positions.push_back(sp_verts[v]);
    }
  // Kept sphere triangles (all three corners kept).
  std::vector<std::array<int, 3>> kept;
  for (const auto& tr : sp_tris) {
    if (sphere_map[tr[0]] < 0 || sphere_map[tr[1]] < 0 ||
        sphere_map[tr[2]] < 0)
      continue;
    kept.push_back({sphere_map[tr[0]], sphere_map[tr[1]], sphere_map[tr[2]]});
  }
  const std::size_t sphere_tri_begin = mesh.triangles.size();
  mesh.triangles.insert(mesh.triangles.end(), kept.begin(), kept.end());

  // Hole rings on the carved sphere: boundary loops of the sphere patch.
  TriangleMesh patch;
  patch.positions = mesh.positions;  // indices already final
  patch.triangles.assign(mesh.triangles.begin() + sphere_tri_begin,
                         mesh.triangles.end());
  const auto hole_loops = trace_boundary_loops(patch);
  if (hole_loops.size() != 3)
    throw MeshError("loft: junction sphere patch has " +
                    std::to_string(hole_loops.size()) +
                    " boundary loops, expected 3 (seed " +
                    std::to_string(spec.seed) + ")");

  // Match each hole to its branch by mean direction.
  std::array<int, 3> hole_of_branch{-1, -1, -1};
  for (std::size_t h = 0; h < hole_loops.size(); ++h) {
    Vec3 c = Vec3::Zero();
    for (int v : hole_loops[h]) c += mesh.positions[v];
    c.normalize();
    int best = -1;
    double bd = -2.0;
    for (int b = 0; b < 3; ++b) {
      const double d = c.dot(branches[b]->dir);
      if (d > bd) {
        bd = d;
        best = b;
      }
    }
    if (hole_of_branch[best] >= 0)
      throw MeshError("loft: two junction holes claim one branch (seed " +
                      std::to_string(spec.seed) + ")");
    hole_of_branch[best] = static_cast<int>(h);
  }

  // Zipper each tube rim to its hole ring, both oriented CCW around the
  // outward branch direction.
  auto oriented = [&](std::vector<int> loop, const Vec3& axis) {
    std::vector<Vec3> pts;
    pts.reserve(loop.size());
    for (int v : loop) pts.push_back(mesh.positions[v]);
    if (loop_winding(pts, axis) < 0.0) std::reverse(loop.begin(), loop.end());
    return loop;
  };
  auto rim_ring = [&](const Tube& t, int base, bool junction_at_end) {
    std::vector<int> r;
    const int ring0 = junction_at_end ? t.rings - 1 : 0;
    for (int j = 0; j < t.ring_size; ++j)
      r.push_back(base + ring0 * t.ring_size + j);
    return r;
  };
  struct Stitch {
    std::vector<int> rim, hole;
  };
  std::vector<Stitch> stitches(3);
  stitches[0] = {rim_ring(t_pmv, base_pmv, true),
                 hole_loops[hole_of_branch[0]]};
  stitches[1] = {rim_ring(t_dmv, base_dmv, false),
                 hole_loops[hole_of_branch[1]]};
  stitches[2] = {rim_ring(t_sb, base_sb, false),
                 hole_loops[hole_of_branch[2]]};
  for (int b = 0; b < 3; ++b) {
    auto rim = oriented(stitches[b].rim, branches[b]->dir);
    auto hole = oriented(stitches[b].hole, branches[b]->dir);
    // Align starts.
    double best = std::numeric_limits<double>::max();
    std::size_t rot = 0;
    for (std::size_t k = 0; k < hole.size(); ++k) {
      const double d =
          (mesh.positions[hole[k]] - mesh.positions[rim[0]]).squaredNorm();
      if (d < best) {
        best = d;
        rot = k;
      }
    }
    std::rotate(hole.begin(), hole.begin() + rot, hole.end());
    zipper(rim, mesh.positions, hole, mesh.positions, &mesh.triangles);
  }

  orient_consistently(mesh, Vec3::Zero());
  tag_loops(&mesh, inlet_point,
            {spec.len_dmv * d_dmv, spec.len_sb * d_sb});

  if (mesh_self_intersects(mesh, 2.0 * edge_length))
    throw MeshError("loft: bifurcation self-intersection (seed " +
                    std::to_string(spec.seed) + ")");

  // Flow: Murray split over the atlas diameters.
  LoftResult result;
  result.mesh = std::move(mesh);
  const double qd = std::pow(2.0 * spec.r_dmv, 3.0);
  const double qs = std::pow(2.0 * spec.r_sb, 3.0);
  const double frac_dmv = qd / (qd + qs);
  const double r_in = r_pmv(0.0);
  auto add_samples = [&](const Polyline& line, double from, double to,
                         std::function<double(double)> reff, double flow_frac,
                         bool reverse_tangent) {
    const double step = std::max(0.25, 0.5 * edge_length);
    for (double s = from; s <= to + 1e-9; s += step) {
      CenterlineSample cs;
      cs.point = line.eval(s);
      cs.tangent = line.tangent(s) * (reverse_tangent ? -1.0 : 1.0);
      cs.r_eff_mm = reff(s);
      cs.u_mean = spec.flow.u_in * flow_frac * (r_in / cs.r_eff_mm) *
                  (r_in / cs.r_eff_mm);
      result.flow.samples.push_back(cs);
    }
  };
  add_samples(pmv.line, 0.0, spec.len_pmv, r_pmv, 1.0, false);
  add_samples(dmv.line, 0.0, spec.len_dmv, r_dmv, frac_dmv, false);
  add_samples(sb.line, 0.0, spec.len_sb, r_sb, 1.0 - frac_dmv, false);
  return result;
}

// ---------- dataset generation ----------------------------------------------

namespace {

std::string spec_to_json(const SingleArterySpec& s) {
  nlohmann::json j;
  j["kind"] = "single";
  j["seed"] = s.seed;
  j["radius"] = s.radius;
  std::vector<std::array<double, 3>> cps;
  for (const auto& p : s.control_points) cps.push_back({p.x(), p.y(), p.z()});
  j["control_points"] = cps;
  for (const auto& st : s.stenoses)
    j["stenoses"].push_back({{"center", st.center_arclength},
                             {"length", st.length},
                             {"severity", st.severity},
                             {"eccentricity", st.eccentricity},
                             {"phase", st.phase}});
  if (s.stenoses.empty()) j["stenoses"] = nlohmann::json::array();
  j["flow"] = {{"mu", s.flow.mu},
               {"rho", s.flow.rho},
               {"u_in", s.flow.u_in},
               {"p_out", s.flow.p_out}};
  return j.dump();
}

std::string spec_to_json(const BifurcationSpec& s) {
  nlohmann::json j;
  j["kind"] = "bifurcating";
  j["seed"] = s.seed;
  j["beta"] = s.beta;
  j["beta_prime"] = s.beta_prime;
  j["gamma_plane"] = s.gamma_plane;
  j["r_pmv"] = s.r_pmv;
  j["r_dmv"] = s.r_dmv;
  j["r_sb"] = s.r_sb;
  j["ellipse_aspect"] = s.ellipse_aspect;
  j["ellipse_angle"] = s.ellipse_angle;
  j["law_exponent"] = s.law_exponent;
  j["law_delta"] = s.law_delta;
  j["law_exact"] = s.law_exact;
  j["len_pmv"] = s.len_pmv;
  j["len_dmv"] = s.len_dmv;
  j["len_sb"] = s.len_sb;
  j["taper"] = s.taper;
  j["flow"] = {{"mu", s.flow.mu},
               {"rho", s.flow.rho},
               {"u_in", s.flow.u_in},
               {"p_out", s.flow.p_out}};
  return j.dump();
}

}  // namespace

std::vector<GeneratedSample> generate_samples(const GenerateOptions& opt) {
  if (opt.count <= 0) throw ConfigError("generate: count must be positive");
  const double edge = opt.edge_length > 0.0 ? opt.edge_length
                                            : default_edge_length(opt.kind);
  Rng master(opt.seed);

  std::vector<GeneratedSample> samples;
  samples.reserve(opt.count);
  for (int i = 0; i < opt.count; ++i) {
    bool done = false;
    std::string last_error;
    for (int attempt = 0; attempt < opt.redraw_budget && !done; ++attempt) {
      const std::uint64_t sseed =
          master.derive(static_cast<std::uint64_t>(i) * 1000 + attempt)
              .next_u64();
      try {
        GeneratedSample g;
        LoftResult loft;
        double mu = 0.0;
        if (opt.kind == DatasetKind::single) {
          const auto spec = sample_single_artery(sseed);
          loft = loft_single_artery(spec, edge);
          g.spec_json = spec_to_json(spec);
          mu = spec.flow.mu;
        } else {
          const auto spec = sample_bifurcation(sseed);
          loft = loft_bifurcation(spec, edge);
          g.spec_json = spec_to_json(spec);
          mu = spec.flow.mu;
        }
        const auto report = validate(loft.mesh);
        if (!report.ok)
          throw MeshError("generated mesh failed validation: " +
                          report.summary());
        const auto normals = vertex_normals(loft.mesh);
        g.wss = surrogate_wss_field(loft.mesh, normals, loft.flow, mu);
        g.mesh = std::move(loft.mesh);
        g.seed = sseed;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "sample_%04d", i);
        g.id = buf;
        samples.push_back(std::move(g));
        done = true;
      } catch (const MeshError& e) {
        last_error = e.what();
      } catch (const NumericError& e) {
        last_error = e.what();
      }
    }
    if (!done)
      throw MeshError("generate: sample " + std::to_string(i) +
                      " failed after redraw budget: " + last_error);
  }

  // 80:10:10 split by seeded shuffle.
  std::vector<int> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng = master.derive(0xdeadbeef);
  split_rng.shuffle(order.begin(), order.end());
  const int n = static_cast<int>(samples.size());
  const int n_val = std::max(1, static_cast<int>(std::lround(0.1 * n)));
  const int n_test = std::max(1, static_cast<int>(std::lround(0.1 * n)));
  for (int k = 0; k < n; ++k) {
    const int idx = order[k];
    samples[idx].split =
        k < n - n_val - n_test ? "train" : (k < n - n_test ? "val" : "test");
  }
  return samples;
}

}  // namespace hemomesh
